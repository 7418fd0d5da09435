#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "taml/autodiff/matrix.hpp"
#include "taml/rng.hpp"

namespace taml::tasks {

using ad::Matrix;

/// One K-shot N-way episode. Rows of support_x / query_x are examples;
/// support rows are ordered class by class, K per class.
struct ClassificationTask {
  Matrix support_x;
  std::vector<std::size_t> support_y;
  Matrix query_x;
  std::vector<std::size_t> query_y;
  std::size_t ways = 0;
  std::size_t shots = 0;
  // Cluster stddev this task was drawn with; 0 for file-backed tasks.
  double spread = 0.0;
};

struct DifficultyComponent {
  double spread_multiplier = 1.0;
  double weight = 1.0;

  bool operator==(const DifficultyComponent&) const = default;
};

struct SyntheticSpec {
  std::size_t feature_dim = 16;
  std::size_t ways = 5;
  std::size_t shots = 1;
  std::size_t query = 1;
  double cluster_spread = 0.5;
  std::vector<DifficultyComponent> difficulty_mix{{1.0, 1.0}};

  void validate() const {
    if (feature_dim == 0) throw std::invalid_argument("synthetic: feature_dim must be >= 1");
    if (ways < 2) throw std::invalid_argument("synthetic: ways must be >= 2, got " + std::to_string(ways));
    if (shots == 0) throw std::invalid_argument("synthetic: shots must be >= 1");
    if (query == 0) throw std::invalid_argument("synthetic: query must be >= 1");
    if (!(cluster_spread > 0.0)) throw std::invalid_argument("synthetic: cluster_spread must be > 0");
    if (difficulty_mix.empty()) throw std::invalid_argument("synthetic: difficulty_mix is empty");
    double total = 0.0;
    for (const auto& c : difficulty_mix) {
      if (!(c.spread_multiplier > 0.0)) throw std::invalid_argument("synthetic: spread multipliers must be > 0");
      if (!(c.weight > 0.0)) throw std::invalid_argument("synthetic: mixture weights must be > 0");
      total += c.weight;
    }
    if (std::fabs(total - 1.0) > 1e-9) {
      throw std::invalid_argument("synthetic: mixture weights must sum to 1, got " + std::to_string(total));
    }
  }

  bool operator==(const SyntheticSpec&) const = default;
};

/// Standardizes every feature column with the support set's mean and
/// stddev, applied to support and query alike. Constant columns are centered
/// only.
inline void standardize_by_support(ClassificationTask& t) {
  const std::size_t d = t.support_x.cols();
  const double n = static_cast<double>(t.support_x.rows());
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < t.support_x.rows(); ++i) mean += t.support_x(i, j);
    mean /= n;
    double var = 0.0;
    for (std::size_t i = 0; i < t.support_x.rows(); ++i) {
      const double c = t.support_x(i, j) - mean;
      var += c * c;
    }
    const double sd = std::sqrt(var / n);
    const double inv = sd > 1e-12 ? 1.0 / sd : 1.0;
    for (std::size_t i = 0; i < t.support_x.rows(); ++i) t.support_x(i, j) = (t.support_x(i, j) - mean) * inv;
    for (std::size_t i = 0; i < t.query_x.rows(); ++i) t.query_x(i, j) = (t.query_x(i, j) - mean) * inv;
  }
}

/// Class centers uniform in [-1,1]^dim; each class contributes shots + query
/// points drawn from an isotropic Gaussian whose stddev is cluster_spread
/// times a multiplier picked from difficulty_mix.
inline ClassificationTask synthetic_classification_task(const SyntheticSpec& spec, Rng& rng) {
  spec.validate();
  std::vector<double> weights;
  for (const auto& c : spec.difficulty_mix) weights.push_back(c.weight);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  const double spread = spec.cluster_spread * spec.difficulty_mix[pick(rng)].spread_multiplier;

  std::uniform_real_distribution<double> center(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, spread);
  const std::size_t d = spec.feature_dim;

  ClassificationTask t;
  t.ways = spec.ways;
  t.shots = spec.shots;
  t.spread = spread;
  t.support_x = Matrix(spec.ways * spec.shots, d);
  t.query_x = Matrix(spec.ways * spec.query, d);
  for (std::size_t c = 0; c < spec.ways; ++c) {
    std::vector<double> mu(d);
    for (double& v : mu) v = center(rng);
    for (std::size_t k = 0; k < spec.shots + spec.query; ++k) {
      const bool support = k < spec.shots;
      Matrix& dst = support ? t.support_x : t.query_x;
      const std::size_t row = support ? c * spec.shots + k : c * spec.query + (k - spec.shots);
      for (std::size_t j = 0; j < d; ++j) dst(row, j) = mu[j] + noise(rng);
    }
    for (std::size_t k = 0; k < spec.shots; ++k) t.support_y.push_back(c);
    for (std::size_t k = 0; k < spec.query; ++k) t.query_y.push_back(c);
  }
  standardize_by_support(t);
  return t;
}

}  // namespace taml::tasks
