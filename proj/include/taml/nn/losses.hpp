#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "taml/autodiff.hpp"

namespace taml::nn {

using ad::Matrix;

/// Row-wise log-softmax with the row maximum subtracted first. The maximum
/// is a constant, which leaves the gradient unchanged.
template <class T>
T log_softmax(const T& logits) {
  const std::size_t cols = ad::value_of(logits).cols();
  const T shifted = ad::sub(logits, ad::broadcast_cols(ad::row_max(logits), cols));
  const T lse = ad::log(ad::sum_cols(ad::exp(shifted)));
  return ad::sub(shifted, ad::broadcast_cols(lse, cols));
}

template <class T>
T softmax(const T& logits) {
  return ad::exp(log_softmax(logits));
}

inline Matrix one_hot(std::span<const std::size_t> labels, std::size_t classes) {
  Matrix m(labels.size(), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) {
      throw std::invalid_argument("label " + std::to_string(labels[i]) + " out of range [0, " +
                                  std::to_string(classes) + ")");
    }
    m(i, labels[i]) = 1.0;
  }
  return m;
}

/// Mean over rows of -log softmax(logits)[label].
template <class T>
T cross_entropy_loss(const T& logits, std::span<const std::size_t> labels) {
  const Matrix& z = ad::value_of(logits);
  if (labels.size() != z.rows()) {
    throw std::invalid_argument("cross_entropy_loss: " + std::to_string(labels.size()) + " labels for " +
                                std::to_string(z.rows()) + " rows");
  }
  Matrix target = one_hot(labels, z.cols());
  const T picked = ad::sum(ad::mul(log_softmax(logits), ad::lift(logits, std::move(target))));
  return ad::scale(picked, -1.0 / static_cast<double>(z.rows()));
}

template <class T>
T cross_entropy_loss(const T& logits, std::size_t label) {
  const std::size_t one[] = {label};
  return cross_entropy_loss(logits, std::span<const std::size_t>(one));
}

template <class T>
T mean_squared_error(const T& prediction, const Matrix& target) {
  if (ad::value_of(prediction).shape() != target.shape()) {
    throw std::invalid_argument("mean_squared_error: shape mismatch " + ad::value_of(prediction).shape().str() +
                                " vs " + target.shape().str());
  }
  const T diff = ad::sub(prediction, ad::lift(prediction, target));
  return ad::mean(ad::mul(diff, diff));
}

/// Per-row Gaussian log-density with isotropic `stddev`: rows x dims -> rows x 1.
template <class T>
T gaussian_log_prob_rows(const T& mean, double stddev, const Matrix& action) {
  if (!(stddev > 0.0)) throw std::invalid_argument("gaussian_log_prob: stddev must be > 0");
  const Matrix& mu = ad::value_of(mean);
  if (mu.shape() != action.shape()) {
    throw std::invalid_argument("gaussian_log_prob: shape mismatch " + mu.shape().str() + " vs " +
                                action.shape().str());
  }
  const double dims = static_cast<double>(mu.cols());
  const double norm = -dims * (std::log(stddev) + 0.5 * std::log(2.0 * std::numbers::pi));
  const T z = ad::scale(ad::sub(ad::lift(mean, action), mean), 1.0 / stddev);
  return ad::add_scalar(ad::scale(ad::sum_cols(ad::mul(z, z)), -0.5), norm);
}

/// Summed over rows and action dimensions.
template <class T>
T gaussian_log_prob(const T& mean, double stddev, const Matrix& action) {
  return ad::sum(gaussian_log_prob_rows(mean, stddev, action));
}

inline std::size_t argmax_row(const Matrix& m, std::size_t r) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < m.cols(); ++j) {
    if (m(r, j) > m(r, best)) best = j;
  }
  return best;
}

inline double accuracy(const Matrix& logits, std::span<const std::size_t> labels) {
  if (labels.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += argmax_row(logits, i) == labels[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

}  // namespace taml::nn
