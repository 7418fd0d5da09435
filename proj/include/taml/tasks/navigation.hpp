#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "taml/autodiff.hpp"
#include "taml/nn/losses.hpp"
#include "taml/nn/mlp.hpp"
#include "taml/rng.hpp"

namespace taml::tasks {

using ad::Matrix;
using Point = std::array<double, 2>;

/// Point agent in the plane, starting at the origin, rewarded by the negative
/// distance to a goal it cannot observe.
struct NavigationTask {
  Point goal{0.0, 0.0};
  std::size_t horizon = 100;
  double action_clip = 0.1;
  double goal_radius = 0.01;
};

struct NavigationSpec {
  std::size_t horizon = 100;
  double action_clip = 0.1;
  double goal_radius = 0.01;
  // Episodes per adaptation step and per post-update evaluation.
  std::size_t trajectories = 20;

  void validate() const {
    if (horizon == 0) throw std::invalid_argument("navigation: horizon must be >= 1");
    if (!(action_clip > 0.0)) throw std::invalid_argument("navigation: action_clip must be > 0");
    if (!(goal_radius >= 0.0)) throw std::invalid_argument("navigation: goal_radius must be >= 0");
    if (trajectories == 0) throw std::invalid_argument("navigation: trajectories must be >= 1");
  }

  bool operator==(const NavigationSpec&) const = default;
};

inline NavigationTask navigation_task(const NavigationSpec& spec, Rng& rng) {
  spec.validate();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  NavigationTask t;
  t.goal[0] = u(rng);
  t.goal[1] = u(rng);
  t.horizon = spec.horizon;
  t.action_clip = spec.action_clip;
  t.goal_radius = spec.goal_radius;
  return t;
}

struct StepResult {
  Point next;
  double reward = 0.0;
  bool reached = false;
};

inline StepResult navigation_step(const NavigationTask& task, const Point& state, const Point& action) {
  StepResult r;
  for (int k = 0; k < 2; ++k) r.next[k] = state[k] + std::clamp(action[k], -task.action_clip, task.action_clip);
  const double dist = std::hypot(r.next[0] - task.goal[0], r.next[1] - task.goal[1]);
  r.reward = -dist;
  r.reached = dist <= task.goal_radius;
  return r;
}

/// One episode. Row t of states is the state the action in row t was taken
/// from; actions are the sampled (unclipped) values whose likelihood the
/// policy gradient uses.
struct Trajectory {
  Matrix states;
  Matrix actions;
  std::vector<double> rewards;

  double total_return() const {
    double s = 0.0;
    for (double r : rewards) s += r;
    return s;
  }
};

/// Maps a batch of states (n x 2) to mean actions (n x 2).
using PolicyMean = std::function<Matrix(const Matrix&)>;

/// Runs `count` episodes side by side with Gaussian exploration noise of the
/// given stddev around the policy mean. Episodes end at the horizon or on
/// reaching the goal radius.
inline std::vector<Trajectory> sample_trajectories(const PolicyMean& policy, double stddev, const NavigationTask& task,
                                                   std::size_t count, Rng& rng) {
  if (count == 0) throw std::invalid_argument("sample_trajectories: count must be >= 1");
  if (!(stddev >= 0.0)) throw std::invalid_argument("sample_trajectories: stddev must be >= 0");
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<Point> pos(count, Point{0.0, 0.0});
  std::vector<char> active(count, 1);
  std::vector<std::vector<double>> states(count), actions(count);
  std::vector<Trajectory> out(count);
  std::size_t live = count;
  for (std::size_t step = 0; step < task.horizon && live > 0; ++step) {
    Matrix batch(live, 2);
    std::vector<std::size_t> who;
    for (std::size_t i = 0; i < count; ++i) {
      if (!active[i]) continue;
      batch(who.size(), 0) = pos[i][0];
      batch(who.size(), 1) = pos[i][1];
      who.push_back(i);
    }
    const Matrix mean = policy(batch);
    if (mean.shape() != ad::Shape{live, 2}) {
      throw std::invalid_argument("sample_trajectories: policy must return n x 2 actions, got " + mean.shape().str());
    }
    for (std::size_t r = 0; r < who.size(); ++r) {
      const std::size_t i = who[r];
      const Point a{mean(r, 0) + stddev * noise(rng), mean(r, 1) + stddev * noise(rng)};
      const StepResult s = navigation_step(task, pos[i], a);
      states[i].insert(states[i].end(), pos[i].begin(), pos[i].end());
      actions[i].insert(actions[i].end(), a.begin(), a.end());
      out[i].rewards.push_back(s.reward);
      pos[i] = s.next;
      if (s.reached) {
        active[i] = 0;
        --live;
      }
    }
  }
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t n = out[i].rewards.size();
    out[i].states = Matrix(n, 2, std::move(states[i]));
    out[i].actions = Matrix(n, 2, std::move(actions[i]));
  }
  return out;
}

inline std::vector<Trajectory> sample_trajectories(const nn::MlpSpec& spec, const std::vector<Matrix>& params,
                                                   const NavigationTask& task, std::size_t count, Rng& rng) {
  if (spec.head != nn::Head::GaussianPolicy) throw std::invalid_argument("sample_trajectories: needs a policy head");
  return sample_trajectories([&](const Matrix& s) { return nn::forward(spec, params, s); }, spec.policy_stddev, task,
                             count, rng);
}

/// Moves straight at the goal at full speed.
inline PolicyMean oracle_policy(const NavigationTask& task) {
  return [task](const Matrix& s) {
    Matrix a(s.rows(), 2);
    for (std::size_t r = 0; r < s.rows(); ++r) {
      for (std::size_t k = 0; k < 2; ++k) a(r, k) = std::clamp(task.goal[k] - s(r, k), -task.action_clip, task.action_clip);
    }
    return a;
  };
}

inline double mean_return(std::span<const Trajectory> trajs) {
  double s = 0.0;
  for (const auto& t : trajs) s += t.total_return();
  return s / static_cast<double>(trajs.size());
}

namespace detail {

struct StackedBatch {
  Matrix states;
  Matrix actions;
  // Per-row weight -(R_j - b) / n of the trajectory the row belongs to.
  Matrix weights;
};

inline StackedBatch stack(std::span<const Trajectory> trajs) {
  if (trajs.empty()) throw std::invalid_argument("policy_gradient_loss: no trajectories");
  const double b = mean_return(trajs);
  const double n = static_cast<double>(trajs.size());
  std::size_t rows = 0;
  for (const auto& t : trajs) rows += t.rewards.size();
  StackedBatch s{Matrix(rows, 2), Matrix(rows, 2), Matrix(rows, 1)};
  std::size_t r = 0;
  for (const auto& t : trajs) {
    const double w = -(t.total_return() - b) / n;
    for (std::size_t i = 0; i < t.rewards.size(); ++i, ++r) {
      for (std::size_t k = 0; k < 2; ++k) {
        s.states(r, k) = t.states(i, k);
        s.actions(r, k) = t.actions(i, k);
      }
      s.weights[r] = w;
    }
  }
  return s;
}

}  // namespace detail

/// Likelihood-ratio surrogate: mean over trajectories of
/// -(sum_t log pi(a_t | x_t)) * (R - b), with b the batch-mean return. Its
/// gradient is the vanilla policy gradient of the negative expected return.
template <class T>
T policy_gradient_loss(const nn::MlpSpec& spec, std::span<const T> params, std::span<const Trajectory> trajs) {
  const detail::StackedBatch s = detail::stack(trajs);
  const T mean = nn::forward<T>(spec, params, ad::lift(params[0], s.states));
  const T logp = nn::gaussian_log_prob_rows(mean, spec.policy_stddev, s.actions);
  return ad::sum(ad::mul(logp, ad::lift(params[0], s.weights)));
}

/// Loss whose value is the negative mean return of the batch and whose
/// gradient is the policy-gradient surrogate's.
template <class T>
T navigation_loss(const nn::MlpSpec& spec, std::span<const T> params, std::span<const Trajectory> trajs) {
  const T surrogate = policy_gradient_loss<T>(spec, params, trajs);
  return ad::add_scalar(ad::sub(surrogate, ad::stop_gradient(surrogate)), -mean_return(trajs));
}

}  // namespace taml::tasks
