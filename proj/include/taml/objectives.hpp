#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "taml/autodiff.hpp"
#include "taml/inequality.hpp"
#include "taml/nn/losses.hpp"
#include "taml/nn/mlp.hpp"

/// Meta-training objectives over one meta-batch. The scalar type S is either
/// double (reporting) or a 1x1 ad::Variable (training).
namespace taml::objectives {

using ad::Matrix;
using ad::Variable;

/// Mean over rows of the Shannon entropy (nats) of the softmax prediction.
/// Computed from log-probabilities, so a zero probability contributes 0.
template <class T>
T prediction_entropy(const T& logits) {
  const T logp = nn::log_softmax(logits);
  const T plogp = ad::mul(nn::softmax(logits), logp);
  return ad::scale(ad::sum(plogp), -1.0 / static_cast<double>(ad::value_of(logits).rows()));
}

template <class T>
T prediction_entropy(const nn::MlpSpec& spec, std::span<const T> params, const T& samples) {
  if (spec.head != nn::Head::SoftmaxClassifier) {
    throw std::invalid_argument(std::string("prediction_entropy: requires a softmax classifier head, got ") +
                                nn::to_string(spec.head));
  }
  if (ad::value_of(samples).rows() == 0) throw std::invalid_argument("prediction_entropy: no samples");
  return prediction_entropy(nn::forward<T>(spec, params, samples));
}

enum class Kind { Maml, EntropyReduction, EntropyMaxOnly, Inequality };

struct Objective {
  Kind kind = Kind::Maml;
  double lambda = 0.0;
  inequality::Measure measure{};

  static Objective maml() { return {Kind::Maml, 0.0, {}}; }
  static Objective entropy_reduction(double lambda) { return {Kind::EntropyReduction, lambda, {}}; }
  static Objective entropy_max_only(double lambda) { return {Kind::EntropyMaxOnly, lambda, {}}; }
  static Objective inequality(inequality::Measure m, double lambda) { return {Kind::Inequality, lambda, m}; }

  bool uses_entropy() const { return kind == Kind::EntropyReduction || kind == Kind::EntropyMaxOnly; }
  bool uses_post_entropy() const { return kind == Kind::EntropyReduction; }

  void validate() const {
    if (!(lambda >= 0.0)) throw std::invalid_argument("objective: lambda must be >= 0, got " + std::to_string(lambda));
  }

  bool operator==(const Objective&) const = default;
};

/// Per-task components of one meta-batch, in task order. Entropy lists are
/// empty when the objective does not need them.
template <class S>
struct MetaBatchEval {
  std::vector<S> pre_losses;
  std::vector<S> post_losses;
  std::vector<S> pre_entropies;
  std::vector<S> post_entropies;

  std::size_t size() const { return post_losses.size(); }
};

template <class S>
struct ObjectiveValue {
  S total;
  // lambda times the regularizer term; zero for Maml.
  S regularizer;
};

namespace detail {

inline double zero_like(const double&) { return 0.0; }
inline Variable zero_like(const Variable& v) { return v.tape()->constant(Matrix::scalar(0.0)); }

template <class S>
S batch_mean(const std::vector<S>& xs, const char* what) {
  if (xs.empty()) throw std::invalid_argument(std::string("objective: empty ") + what);
  S acc = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) acc = acc + xs[i];
  return acc * (1.0 / static_cast<double>(xs.size()));
}

template <class S>
void require_length(const std::vector<S>& xs, std::size_t m, const char* what) {
  if (xs.size() != m) {
    throw std::invalid_argument(std::string("objective: ") + what + " has " + std::to_string(xs.size()) +
                                " entries, expected " + std::to_string(m));
  }
}

}  // namespace detail

template <class S>
ObjectiveValue<S> maml_objective(const MetaBatchEval<S>& e) {
  const S post = detail::batch_mean(e.post_losses, "post-update losses");
  return {post, detail::zero_like(post)};
}

template <class S>
ObjectiveValue<S> entropy_reduction_objective(const MetaBatchEval<S>& e, double lambda) {
  const std::size_t m = e.size();
  detail::require_length(e.pre_entropies, m, "pre-update entropies");
  detail::require_length(e.post_entropies, m, "post-update entropies");
  const S post = detail::batch_mean(e.post_losses, "post-update losses");
  std::vector<S> reduction;
  reduction.reserve(m);
  for (std::size_t i = 0; i < m; ++i) reduction.push_back(e.post_entropies[i] - e.pre_entropies[i]);
  const S reg = detail::batch_mean(reduction, "entropies") * lambda;
  return {post + reg, reg};
}

template <class S>
ObjectiveValue<S> entropy_max_only_objective(const MetaBatchEval<S>& e, double lambda) {
  detail::require_length(e.pre_entropies, e.size(), "pre-update entropies");
  const S post = detail::batch_mean(e.post_losses, "post-update losses");
  const S reg = detail::batch_mean(e.pre_entropies, "entropies") * (-lambda);
  return {post + reg, reg};
}

template <class S>
ObjectiveValue<S> inequality_objective(const MetaBatchEval<S>& e, const inequality::Measure& m, double lambda) {
  detail::require_length(e.pre_losses, e.size(), "pre-update losses");
  const S post = detail::batch_mean(e.post_losses, "post-update losses");
  const S reg = inequality::measure<S>(m, std::span<const S>(e.pre_losses)) * lambda;
  return {post + reg, reg};
}

template <class S>
ObjectiveValue<S> evaluate(const Objective& o, const MetaBatchEval<S>& e) {
  o.validate();
  switch (o.kind) {
    case Kind::Maml:
      return maml_objective(e);
    case Kind::EntropyReduction:
      return entropy_reduction_objective(e, o.lambda);
    case Kind::EntropyMaxOnly:
      return entropy_max_only_objective(e, o.lambda);
    case Kind::Inequality:
      return inequality_objective(e, o.measure, o.lambda);
  }
  throw std::logic_error("objective: unknown kind");
}

}  // namespace taml::objectives
