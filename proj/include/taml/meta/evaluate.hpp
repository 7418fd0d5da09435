#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "taml/autodiff.hpp"
#include "taml/meta/learner.hpp"
#include "taml/meta/trainer.hpp"
#include "taml/tasks.hpp"

namespace taml::meta {

struct MeanCi {
  double mean = 0.0;
  double ci_halfwidth = 0.0;
};

/// Mean and 95% normal-approximation half-width 1.96 * s / sqrt(n), with s
/// the (n-1)-normalized sample standard deviation. Half-width is 0 for n < 2.
inline MeanCi mean_ci95(const std::vector<double>& xs) {
  MeanCi r;
  if (xs.empty()) return r;
  const double n = static_cast<double>(xs.size());
  for (double x : xs) r.mean += x;
  r.mean /= n;
  if (xs.size() < 2) return r;
  double ss = 0.0;
  for (double x : xs) ss += (x - r.mean) * (x - r.mean);
  r.ci_halfwidth = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  return r;
}

struct EvalSummary {
  std::string metric;
  // Entry k: after k adaptation steps, over tasks.
  std::vector<MeanCi> per_step;
  // per_task[k][i]: metric of task i after k steps.
  std::vector<std::vector<double>> per_task;
};

/// Plain (non-recording) gradient-descent adaptation of one task, reporting
/// the evaluation metric before each step and after the last.
inline std::vector<double> adaptation_trace(const Learner& l, const InnerRule& rule, const MetaState& state,
                                            const tasks::Task& task, std::size_t grad_steps, Rng& rng) {
  std::vector<Matrix> params = state.theta;
  std::vector<double> trace;
  trace.push_back(evaluation_metric(l, task, params, rng));
  for (std::size_t s = 0; s < grad_steps; ++s) {
    ad::Tape tape;
    const auto vars = nn::leaves(tape, params);
    const auto g = ad::backward_tensors(support_loss<Variable>(l, task, vars, rng), vars);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Matrix step = state.alphas ? ad::mul((*state.alphas)[i], g[i]) : ad::scale(g[i], rule.alpha);
      params[i] = ad::sub(params[i], step);
    }
    trace.push_back(evaluation_metric(l, task, params, rng));
  }
  return trace;
}

/// Adapts from theta to each test task with `grad_steps` updates and
/// summarizes the metric per step across tasks.
inline EvalSummary evaluate_meta_test(const Learner& l, const InnerRule& rule, const MetaState& state,
                                      const std::vector<tasks::Task>& test_tasks, std::size_t grad_steps,
                                      std::uint64_t seed) {
  EvalSummary out;
  if (test_tasks.empty()) return out;
  out.metric = metric_name(test_tasks.front());
  out.per_task.assign(grad_steps + 1, {});
  for (std::size_t i = 0; i < test_tasks.size(); ++i) {
    Rng rng = make_stream(seed, "meta-test-rollouts", {i});
    const auto trace = adaptation_trace(l, rule, state, test_tasks[i], grad_steps, rng);
    for (std::size_t k = 0; k <= grad_steps; ++k) out.per_task[k].push_back(trace[k]);
  }
  for (const auto& xs : out.per_task) out.per_step.push_back(mean_ci95(xs));
  return out;
}

/// Held-out tasks for meta-test, drawn from their own stream.
inline std::vector<tasks::Task> meta_test_tasks(const tasks::Distribution& dist, std::size_t count,
                                                std::uint64_t seed) {
  Rng rng = make_stream(seed, "meta-test-tasks");
  return tasks::sample_task_batch(dist, count, rng);
}

}  // namespace taml::meta
