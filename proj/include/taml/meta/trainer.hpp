#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "taml/autodiff.hpp"
#include "taml/format.hpp"
#include "taml/inequality.hpp"
#include "taml/meta/learner.hpp"
#include "taml/nn/checkpoint.hpp"
#include "taml/nn/mlp.hpp"
#include "taml/objectives.hpp"
#include "taml/rng.hpp"
#include "taml/tasks.hpp"

namespace taml::meta {

enum class Order { Second, First };

struct InnerRule {
  enum class Kind { FixedStep, MetaSgd };

  Kind kind = Kind::FixedStep;
  // FixedStep step size; also the initial value of every Meta-SGD step size.
  double alpha = 0.01;
  std::size_t steps = 1;
  Order order = Order::Second;
  // Meta-SGD only: keep the learned step sizes fixed at their current values.
  bool freeze_alphas = false;

  void validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
      throw std::invalid_argument("inner rule: alpha must be finite and >= 0, got " + std::to_string(alpha));
    }
    if (steps == 0) throw std::invalid_argument("inner rule: steps must be >= 1");
  }
};

inline constexpr double kMinMetaSgdStep = 1e-6;

struct MetaState {
  std::vector<Matrix> theta;
  std::optional<std::vector<Matrix>> alphas;
  std::int64_t iteration = 0;
  std::uint64_t seed = 0;
};

inline MetaState initial_state(const nn::MlpSpec& spec, const InnerRule& rule, std::uint64_t seed) {
  MetaState s;
  Rng rng = make_stream(seed, "init");
  s.theta = nn::init_params(spec, rng);
  if (rule.kind == InnerRule::Kind::MetaSgd) {
    std::vector<Matrix> a;
    for (const Matrix& t : s.theta) a.emplace_back(t.shape(), rule.alpha);
    s.alphas = std::move(a);
  }
  s.seed = seed;
  return s;
}

inline nn::Checkpoint to_checkpoint(const nn::MlpSpec& spec, const MetaState& s) {
  return {spec, s.theta, s.alphas, s.iteration, s.seed};
}

inline MetaState from_checkpoint(const nn::Checkpoint& ck) { return {ck.theta, ck.alphas, ck.iteration, ck.seed}; }

struct AdaptResult {
  std::vector<Variable> params;
  // Support loss at the starting parameters.
  Variable pre_loss;
};

/// Gradient-descent adaptation on the task's support loss. `alphas` holds
/// Meta-SGD step sizes as tape variables, or is empty for FixedStep. With
/// Order::Second the inner gradients are recorded so the result can be
/// differentiated through; with Order::First they enter as constants.
inline AdaptResult inner_adapt(const Learner& l, const InnerRule& rule, const tasks::Task& task,
                               std::span<const Variable> theta, std::span<const Variable> alphas, Rng& rng) {
  rule.validate();
  const bool meta_sgd = rule.kind == InnerRule::Kind::MetaSgd;
  if (meta_sgd && alphas.size() != theta.size()) {
    throw std::invalid_argument("inner_adapt: Meta-SGD needs one step-size tensor per parameter tensor");
  }
  std::vector<Variable> cur(theta.begin(), theta.end());
  std::optional<Variable> first;
  for (std::size_t s = 0; s < rule.steps; ++s) {
    const Variable loss = support_loss<Variable>(l, task, cur, rng);
    if (!first) first = loss;
    const auto g = ad::grad(loss, cur, rule.order == Order::Second);
    for (std::size_t i = 0; i < cur.size(); ++i) {
      cur[i] = meta_sgd ? ad::sub(cur[i], ad::mul(alphas[i], g[i])) : ad::sub(cur[i], ad::scale(g[i], rule.alpha));
    }
  }
  return {std::move(cur), *first};
}

/// First/second-moment meta-optimizer. Plain gradient descent when kind is Sgd.
struct MetaOptimizer {
  enum class Kind { Sgd, Adam };

  Kind kind = Kind::Sgd;
  double beta = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (!(beta >= 0.0) || !std::isfinite(beta)) {
      throw std::invalid_argument("meta optimizer: beta must be finite and >= 0");
    }
    if (kind == Kind::Adam && !(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0)) {
      throw std::invalid_argument("meta optimizer: adam moments must be in [0,1) and epsilon > 0");
    }
  }
};

class OptimizerState {
 public:
  explicit OptimizerState(MetaOptimizer opt) : opt_(opt) { opt_.validate(); }

  /// In-place update of `values` (flattened parameters) with gradient `g`.
  void apply(std::vector<double>& values, std::span<const double> g) {
    if (opt_.kind == MetaOptimizer::Kind::Sgd) {
      for (std::size_t i = 0; i < values.size(); ++i) values[i] -= opt_.beta * g[i];
      return;
    }
    if (m_.empty()) {
      m_.assign(values.size(), 0.0);
      v_.assign(values.size(), 0.0);
    }
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < values.size(); ++i) {
      m_[i] = opt_.beta1 * m_[i] + (1.0 - opt_.beta1) * g[i];
      v_[i] = opt_.beta2 * v_[i] + (1.0 - opt_.beta2) * g[i] * g[i];
      values[i] -= opt_.beta * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + opt_.epsilon);
    }
  }

 private:
  MetaOptimizer opt_;
  std::vector<double> m_, v_;
  std::int64_t t_ = 0;
};

struct StepMetrics {
  std::int64_t iteration = 0;
  double mean_pre_loss = 0.0;
  double mean_post_loss = 0.0;
  double objective = 0.0;
  double regularizer = 0.0;
  // Theil index of the pre-update losses, logged for every method so paired
  // runs can be compared on the same quantity.
  double pre_loss_theil = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
  std::vector<double> pre_losses;
  std::vector<double> post_losses;
};

class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& what, StepMetrics m) : std::runtime_error(what), metrics(std::move(m)) {}
  StepMetrics metrics;
};

struct StepContext {
  const Learner& learner;
  const objectives::Objective& objective;
  const InnerRule& rule;
};

namespace detail {

inline std::string join(const std::vector<double>& xs) {
  std::string s = "[";
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? ", " : "") + format_double(xs[i]);
  return s + "]";
}

inline double theil_or_zero(const std::vector<double>& losses) {
  if (losses.size() < 2) return 0.0;
  for (double v : losses) {
    if (!std::isfinite(v)) return std::nan("");
  }
  return inequality::theil(losses);
}

}  // namespace detail

/// Meta-gradient of the objective at `state` over one task batch: the value
/// and per-task losses in `metrics`, the flattened gradient (theta, then the
/// Meta-SGD step sizes when present and not frozen) as the return value.
inline std::vector<double> meta_gradient(const StepContext& ctx, const MetaState& state,
                                         const std::vector<tasks::Task>& batch, StepMetrics& metrics) {
  if (batch.empty()) throw std::invalid_argument("meta_step: empty task batch");
  const bool meta_sgd = ctx.rule.kind == InnerRule::Kind::MetaSgd;
  if (meta_sgd != state.alphas.has_value()) {
    throw std::invalid_argument("meta_step: Meta-SGD step sizes must be present exactly when the rule is Meta-SGD");
  }
  ctx.objective.validate();
  ad::Tape tape;
  const auto theta = nn::leaves(tape, state.theta);
  std::vector<Variable> alphas;
  if (meta_sgd) alphas = nn::leaves(tape, *state.alphas, !ctx.rule.freeze_alphas);

  objectives::MetaBatchEval<Variable> eval;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Rng rng = make_stream(state.seed, "rollouts", {static_cast<std::uint64_t>(state.iteration), i});
    const AdaptResult a = inner_adapt(ctx.learner, ctx.rule, batch[i], theta, alphas, rng);
    eval.pre_losses.push_back(a.pre_loss);
    eval.post_losses.push_back(query_loss<Variable>(ctx.learner, batch[i], a.params, rng));
    if (ctx.objective.uses_entropy()) {
      eval.pre_entropies.push_back(task_entropy<Variable>(ctx.learner, batch[i], theta));
      if (ctx.objective.uses_post_entropy()) {
        eval.post_entropies.push_back(task_entropy<Variable>(ctx.learner, batch[i], a.params));
      }
    }
  }
  const auto value = objectives::evaluate(ctx.objective, eval);

  metrics.iteration = state.iteration;
  metrics.pre_losses.clear();
  metrics.post_losses.clear();
  for (const auto& v : eval.pre_losses) metrics.pre_losses.push_back(v.item());
  for (const auto& v : eval.post_losses) metrics.post_losses.push_back(v.item());
  double pre = 0.0, post = 0.0;
  for (double v : metrics.pre_losses) pre += v;
  for (double v : metrics.post_losses) post += v;
  metrics.mean_pre_loss = pre / static_cast<double>(batch.size());
  metrics.mean_post_loss = post / static_cast<double>(batch.size());
  metrics.objective = value.total.item();
  metrics.regularizer = value.regularizer.item();
  metrics.pre_loss_theil = detail::theil_or_zero(metrics.pre_losses);

  std::vector<Variable> wrt = theta;
  if (meta_sgd && !ctx.rule.freeze_alphas) wrt.insert(wrt.end(), alphas.begin(), alphas.end());
  std::vector<double> g = ad::backward(value.total, wrt).values;
  double sq = 0.0;
  for (double v : g) sq += v * v;
  metrics.grad_norm = std::sqrt(sq);
  return g;
}

/// One meta-update: adapt to every task, evaluate the objective, step theta
/// (and the Meta-SGD step sizes) along the meta-gradient. Aborts without
/// touching the state if the objective or its gradient is not finite.
inline StepMetrics meta_step(MetaState& state, const StepContext& ctx, const std::vector<tasks::Task>& batch,
                             OptimizerState& opt) {
  StepMetrics m;
  const std::vector<double> g = meta_gradient(ctx, state, batch, m);
  bool finite = std::isfinite(m.objective) && std::isfinite(m.grad_norm);
  for (double v : g) finite = finite && std::isfinite(v);
  if (!finite) {
    throw NonFiniteError("meta_step: non-finite meta-objective or meta-gradient at iteration " +
                             std::to_string(state.iteration) + "; pre-update losses " +
                             detail::join(m.pre_losses) + ", post-update losses " + detail::join(m.post_losses),
                         m);
  }
  std::vector<double> flat = nn::flatten(state.theta);
  const bool update_alphas = state.alphas && !ctx.rule.freeze_alphas;
  if (update_alphas) {
    const auto a = nn::flatten(*state.alphas);
    flat.insert(flat.end(), a.begin(), a.end());
  }
  opt.apply(flat, g);
  const std::size_t n_theta = nn::flatten(state.theta).size();
  std::vector<ad::Shape> shapes;
  for (const Matrix& t : state.theta) shapes.push_back(t.shape());
  state.theta = nn::unflatten(shapes, std::span<const double>(flat.data(), n_theta));
  if (update_alphas) {
    for (std::size_t i = n_theta; i < flat.size(); ++i) flat[i] = std::max(flat[i], kMinMetaSgdStep);
    state.alphas = nn::unflatten(shapes, std::span<const double>(flat.data() + n_theta, flat.size() - n_theta));
  }
  ++state.iteration;
  return m;
}

/// Tasks for one meta-iteration. Depends only on (seed, iteration), so runs
/// that differ in method but share a seed see the same task stream.
inline std::vector<tasks::Task> iteration_tasks(const tasks::Distribution& dist, std::size_t m, std::uint64_t seed,
                                                std::int64_t iteration) {
  Rng rng = make_stream(seed, "tasks", {static_cast<std::uint64_t>(iteration)});
  return tasks::sample_task_batch(dist, m, rng);
}

struct TrainOptions {
  tasks::Distribution distribution;
  std::size_t meta_batch = 4;
  std::int64_t meta_iterations = 0;
  MetaOptimizer optimizer;
};

using IterationCallback = std::function<void(const MetaState&, const StepMetrics&)>;

/// Runs meta_iterations meta-updates from `state`, reporting every step.
inline MetaState train(MetaState state, const StepContext& ctx, const TrainOptions& opt,
                       const IterationCallback& on_step = {}) {
  if (opt.meta_batch == 0) throw std::invalid_argument("train: meta_batch must be >= 1");
  if (opt.meta_iterations < 0) throw std::invalid_argument("train: meta_iterations must be >= 0");
  if (ctx.objective.kind == objectives::Kind::Inequality && opt.meta_batch < 2) {
    throw std::invalid_argument("train: inequality objectives need meta_batch >= 2");
  }
  OptimizerState os(opt.optimizer);
  const std::int64_t end = state.iteration + opt.meta_iterations;
  while (state.iteration < end) {
    const auto start = std::chrono::steady_clock::now();
    const auto batch = iteration_tasks(opt.distribution, opt.meta_batch, state.seed, state.iteration);
    StepMetrics m = meta_step(state, ctx, batch, os);
    m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (on_step) on_step(state, m);
  }
  return state;
}

}  // namespace taml::meta
