#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "taml/autodiff.hpp"
#include "taml/nn/losses.hpp"
#include "taml/nn/mlp.hpp"
#include "taml/objectives.hpp"
#include "taml/rng.hpp"
#include "taml/tasks.hpp"

/// How a model is scored on each task kind: support loss drives inner
/// adaptation, query loss is the post-update term, and the evaluation metric
/// is what meta-test reports.
namespace taml::meta {

using ad::Matrix;
using ad::Variable;

enum class EntropySamples { Support, Query };

struct Learner {
  nn::MlpSpec spec;
  EntropySamples entropy_samples = EntropySamples::Support;
  // Episodes sampled per loss evaluation on navigation tasks.
  std::size_t trajectories = 20;
};

namespace detail {

template <class T>
std::vector<Matrix> params_value(std::span<const T> params) {
  std::vector<Matrix> out;
  out.reserve(params.size());
  for (const T& p : params) out.push_back(ad::value_of(p));
  return out;
}

template <class T>
T classification_loss(const Learner& l, std::span<const T> params, const Matrix& x, std::span<const std::size_t> y) {
  if (x.rows() == 0) throw std::invalid_argument("learner: empty example set");
  return nn::cross_entropy_loss(nn::forward<T>(l.spec, params, ad::lift(params[0], x)), y);
}

template <class T>
T regression_loss(const Learner& l, std::span<const T> params, const Matrix& x, const Matrix& y) {
  if (x.rows() == 0) throw std::invalid_argument("learner: empty example set");
  return nn::mean_squared_error(nn::forward<T>(l.spec, params, ad::lift(params[0], x)), y);
}

template <class T>
T rollout_loss(const Learner& l, std::span<const T> params, const tasks::NavigationTask& t, Rng& rng) {
  const auto trajs = tasks::sample_trajectories(l.spec, params_value(params), t, l.trajectories, rng);
  return tasks::navigation_loss<T>(l.spec, params, trajs);
}

}  // namespace detail

/// Loss on the adaptation data. Navigation tasks draw fresh episodes from
/// `rng` with the current parameter values.
template <class T>
T support_loss(const Learner& l, const tasks::Task& task, std::span<const T> params, Rng& rng) {
  return std::visit(
      [&](const auto& t) -> T {
        using K = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<K, tasks::ClassificationTask>) {
          return detail::classification_loss(l, params, t.support_x, t.support_y);
        } else if constexpr (std::is_same_v<K, tasks::RegressionTask>) {
          return detail::regression_loss(l, params, t.support_x, t.support_y);
        } else {
          return detail::rollout_loss(l, params, t, rng);
        }
      },
      task);
}

template <class T>
T query_loss(const Learner& l, const tasks::Task& task, std::span<const T> params, Rng& rng) {
  return std::visit(
      [&](const auto& t) -> T {
        using K = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<K, tasks::ClassificationTask>) {
          return detail::classification_loss(l, params, t.query_x, t.query_y);
        } else if constexpr (std::is_same_v<K, tasks::RegressionTask>) {
          return detail::regression_loss(l, params, t.query_x, t.query_y);
        } else {
          return detail::rollout_loss(l, params, t, rng);
        }
      },
      task);
}

template <class T>
T task_entropy(const Learner& l, const tasks::Task& task, std::span<const T> params) {
  const auto* t = std::get_if<tasks::ClassificationTask>(&task);
  if (!t) throw std::invalid_argument("entropy objectives need classification tasks");
  const Matrix& x = l.entropy_samples == EntropySamples::Support ? t->support_x : t->query_x;
  return objectives::prediction_entropy<T>(l.spec, params, ad::lift(params[0], x));
}

/// Query accuracy for classification, query MSE for regression, mean
/// episode return for navigation.
inline double evaluation_metric(const Learner& l, const tasks::Task& task, const std::vector<Matrix>& params, Rng& rng) {
  return std::visit(
      [&](const auto& t) -> double {
        using K = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<K, tasks::ClassificationTask>) {
          return nn::accuracy(nn::forward(l.spec, params, t.query_x), t.query_y);
        } else if constexpr (std::is_same_v<K, tasks::RegressionTask>) {
          return nn::mean_squared_error(nn::forward(l.spec, params, t.query_x), t.query_y).item();
        } else {
          return tasks::mean_return(tasks::sample_trajectories(l.spec, params, t, l.trajectories, rng));
        }
      },
      task);
}

inline const char* metric_name(const tasks::Task& task) {
  if (std::holds_alternative<tasks::ClassificationTask>(task)) return "accuracy";
  if (std::holds_alternative<tasks::RegressionTask>(task)) return "mse";
  return "return";
}

}  // namespace taml::meta
