// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
//   taml_acceptance --cli PATH [--only N[,N...]]
//
// PATH is the taml CLI binary, exercised by criterion 9.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "taml/autodiff.hpp"
#include "taml/inequality.hpp"
#include "taml/meta/evaluate.hpp"
#include "taml/meta/trainer.hpp"
#include "taml/nn/losses.hpp"
#include "taml/nn/mlp.hpp"
#include "taml/objectives.hpp"
#include "taml/run/runner.hpp"
#include "test_support.hpp"

using namespace taml;
using ad::Matrix;
using ad::Variable;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double kGradTol = 1e-4;
constexpr double kFdStep = 1e-5;
// Central differences are only an oracle where the stencil stays on one side
// of every leaky-relu corner; draws closer than this are redrawn.
constexpr double kKinkMargin = 1e-3;
// Roundoff of a 64-bit central difference is about ulps * eps * |f| / h; the
// relative-error denominator is floored there so near-zero entries are judged
// against what the oracle can resolve.
constexpr double kRoundoffUlps = 64;
constexpr double kZeroTol = 1e-10;
constexpr double kScaleTol = 1e-10;
constexpr double kGiniBruteTol = 1e-12;
constexpr double kGe1TheilTol = 1e-12;
constexpr double kUniformEntropyTol = 1e-9;
constexpr double kCollapseTol = 1e-12;
constexpr double kFrozenTol = 1e-10;
constexpr double kAccuracyMargin = 0.01;
constexpr double kMeasuresCliTol = 1e-5;

constexpr double kBudget1 = 60, kBudget2 = 30, kBudget4 = 120, kBudget5 = 2 * 15 * 60, kBudget7 = 10 * 60;

struct Outcome {
  bool pass = true;
  std::string detail;
  double budget_s = 0.0;  // 0 when the criterion has no runtime bound
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

double rel(double a, double b) {
  const double m = std::max(std::fabs(a), std::fabs(b));
  return m == 0.0 ? 0.0 : std::fabs(a - b) / m;
}

// ---------------------------------------------------------------- 1

nn::MlpSpec random_spec(std::mt19937_64& rng, bool classifier, std::size_t max_width) {
  std::uniform_int_distribution<std::size_t> width(2, max_width), depth(1, 2), in(1, 4), out(2, 4);
  nn::MlpSpec s;
  s.layer_sizes.push_back(in(rng));
  const std::size_t d = depth(rng);
  for (std::size_t i = 0; i < d; ++i) s.layer_sizes.push_back(width(rng));
  s.layer_sizes.push_back(classifier ? out(rng) : 1);
  s.head = classifier ? nn::Head::SoftmaxClassifier : nn::Head::LinearRegressor;
  return s;
}

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (double& v : m.values()) v = u(rng);
  return m;
}

std::vector<std::size_t> random_labels(std::size_t n, std::size_t classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> u(0, classes - 1);
  std::vector<std::size_t> y(n);
  for (auto& v : y) v = u(rng);
  return y;
}

// Smallest |pre-activation| over every hidden unit and input row.
double kink_margin(const nn::MlpSpec& spec, const std::vector<Matrix>& theta, const Matrix& x) {
  double m = INFINITY;
  Matrix h = x;
  for (std::size_t l = 0; l + 1 < spec.num_layers(); ++l) {
    h = ad::add(ad::matmul(h, theta[2 * l]), ad::broadcast_rows(theta[2 * l + 1], h.rows()));
    for (double v : h.values()) m = std::min(m, std::fabs(v));
    h = ad::leaky_relu(h, spec.hidden_slope());
  }
  return m;
}

struct FdTask {
  Matrix xs, xq, ts, tq;
  std::vector<std::size_t> ys, yq;
};

template <class T>
T task_loss(const nn::MlpSpec& spec, std::span<const T> p, const T& x, const std::vector<std::size_t>& y,
            const Matrix& t) {
  const T out = nn::forward<T>(spec, p, x);
  return spec.head == nn::Head::SoftmaxClassifier ? nn::cross_entropy_loss(out, y) : nn::mean_squared_error(out, t);
}

// Fixed-step inner updates on the support set; returns every visited parameter set.
std::vector<std::vector<Matrix>> inner_path(const nn::MlpSpec& spec, const std::vector<Matrix>& theta, const FdTask& d,
                                            double alpha, std::size_t steps) {
  std::vector<std::vector<Matrix>> path{theta};
  for (std::size_t s = 0; s < steps; ++s) {
    ad::Tape tape;
    const auto p = nn::leaves(tape, path.back());
    const auto g = ad::grad(task_loss<Variable>(spec, p, tape.constant(d.xs), d.ys, d.ts), p, false);
    std::vector<Matrix> next;
    for (std::size_t j = 0; j < p.size(); ++j) next.push_back(ad::sub(path.back()[j], ad::scale(g[j].value(), alpha)));
    path.push_back(std::move(next));
  }
  return path;
}

double oracle_floor(const ad::ScalarBuilder& fn, std::span<const Matrix> theta) {
  ad::Tape tape;
  const auto p = nn::leaves(tape, theta);
  const double f = fn(tape, p).item();
  return kRoundoffUlps * std::numeric_limits<double>::epsilon() * std::max(std::fabs(f), 1.0) / kFdStep / kGradTol;
}

Outcome autodiff_correctness() {
  std::mt19937_64 rng(1001);
  double worst_first = 0.0, worst_meta = 0.0;
  std::size_t max_params = 0, redrawn = 0;
  for (int i = 0; i < 100;) {
    const bool cls = i % 2 == 0;
    const auto spec = random_spec(rng, cls, 16);
    Rng prng(rng());
    const auto theta = nn::init_params(spec, prng);
    const Matrix x = random_matrix(6, spec.input_dim(), rng);
    const auto y = random_labels(6, spec.output_dim(), rng);
    const Matrix t = random_matrix(6, 1, rng);
    if (kink_margin(spec, theta, x) < kKinkMargin) {
      ++redrawn;
      continue;
    }
    max_params = std::max(max_params, spec.parameter_count());
    const ad::ScalarBuilder fn = [&](ad::Tape& tape, std::span<const Variable> p) {
      return task_loss<Variable>(spec, p, tape.constant(x), y, t);
    };
    const auto r = ad::finite_difference_check(fn, theta, kFdStep, oracle_floor(fn, theta));
    if (!r.passed(kGradTol)) {
      return {false, "first-order instance " + std::to_string(i) + " rel err " + fmt(r.max_relative_error) + " at " +
                         std::to_string(r.worst_index) + " analytic " + fmt(r.worst_analytic) + " numeric " +
                         fmt(r.worst_numeric)};
    }
    worst_first = std::max(worst_first, r.max_relative_error);
    ++i;
  }
  // Second-order MAML meta-loss: mean over tasks of the query loss after
  // `steps` differentiated inner steps.
  const double alpha = 0.2;
  for (int i = 0; i < 100;) {
    const bool cls = i % 2 == 0;
    const auto spec = random_spec(rng, cls, 8);
    Rng prng(rng());
    const auto theta = nn::init_params(spec, prng);
    const std::size_t steps = 1 + static_cast<std::size_t>(i % 3 == 0);
    std::vector<FdTask> tasks;
    for (int k = 0; k < 3; ++k) {
      tasks.push_back({random_matrix(4, spec.input_dim(), rng), random_matrix(4, spec.input_dim(), rng),
                       random_matrix(4, 1, rng), random_matrix(4, 1, rng), random_labels(4, spec.output_dim(), rng),
                       random_labels(4, spec.output_dim(), rng)});
    }
    double margin = INFINITY;
    for (const auto& d : tasks) {
      const auto path = inner_path(spec, theta, d, alpha, steps);
      for (std::size_t s = 0; s < steps; ++s) margin = std::min(margin, kink_margin(spec, path[s], d.xs));
      margin = std::min(margin, kink_margin(spec, path.back(), d.xq));
    }
    if (margin < kKinkMargin) {
      ++redrawn;
      continue;
    }
    max_params = std::max(max_params, spec.parameter_count());
    const ad::ScalarBuilder fn = [&](ad::Tape& tape, std::span<const Variable> p) {
          Variable total = tape.constant(Matrix(1, 1, 0.0));
          for (const auto& d : tasks) {
            std::vector<Variable> cur(p.begin(), p.end());
            for (std::size_t s = 0; s < steps; ++s) {
              const auto g = ad::grad(task_loss<Variable>(spec, cur, tape.constant(d.xs), d.ys, d.ts), cur, true);
              for (std::size_t j = 0; j < cur.size(); ++j) cur[j] = ad::sub(cur[j], ad::scale(g[j], alpha));
            }
            total = ad::add(total, task_loss<Variable>(spec, cur, tape.constant(d.xq), d.yq, d.tq));
          }
          return ad::scale(total, 1.0 / static_cast<double>(tasks.size()));
        };
    const auto r = ad::finite_difference_check(fn, theta, kFdStep, oracle_floor(fn, theta));
    if (!r.passed(kGradTol)) {
      return {false, "meta-gradient instance " + std::to_string(i) + " rel err " + fmt(r.max_relative_error) + " at " +
                         std::to_string(r.worst_index) + " analytic " + fmt(r.worst_analytic) + " numeric " +
                         fmt(r.worst_numeric)};
    }
    worst_meta = std::max(worst_meta, r.max_relative_error);
    ++i;
  }
  return {true,
          "100 first-order + 100 second-order meta instances (<= " + std::to_string(max_params) +
              " params, " + std::to_string(redrawn) + " near-kink draws redrawn), worst " + fmt(worst_first) + " / " +
              fmt(worst_meta) + " (tol " + fmt(kGradTol) + ")",
          kBudget1};
}

// ---------------------------------------------------------------- 2

double gini_brute(const std::vector<double>& l) {
  double s = 0.0, mu = 0.0;
  for (double a : l) mu += a;
  mu /= static_cast<double>(l.size());
  for (double a : l)
    for (double b : l) s += std::fabs(a - b);
  return s / (2.0 * static_cast<double>(l.size() * l.size()) * mu);
}

Outcome inequality_suite() {
  using inequality::Measure;
  const std::vector<std::pair<std::string, Measure>> all{{"theil", Measure::theil()},
                                                         {"ge0", Measure::generalized_entropy(0.0)},
                                                         {"ge2", Measure::generalized_entropy(2.0)},
                                                         {"atkinson1", Measure::atkinson(1.0)},
                                                         {"atkinson0.5", Measure::atkinson(0.5)},
                                                         {"gini", Measure::gini()},
                                                         {"vl", Measure::variance_of_logarithms()}};
  const std::set<std::string> transfer{"theil", "ge0", "ge2", "atkinson1", "atkinson0.5", "gini"};
  std::mt19937_64 rng(2002);
  std::uniform_int_distribution<std::size_t> msize(2, 8);
  std::uniform_real_distribution<double> loss(0.05, 5.0), u01(0.0, 1.0);
  double worst_scale = 0.0, worst_brute = 0.0, worst_ge1 = 0.0, worst_equal = 0.0;
  for (int n = 0; n < 1000; ++n) {
    std::vector<double> l(msize(rng));
    for (double& v : l) v = loss(rng);
    if (std::all_of(l.begin(), l.end(), [&](double v) { return v == l[0]; })) continue;
    for (const auto& [name, m] : all) {
      const double v = inequality::measure(m, l);
      if (!(v > 0.0)) return {false, name + " not strictly positive on unequal losses: " + fmt(v)};
      for (double c : {0.5, 2.0, 100.0}) {
        std::vector<double> s = l;
        for (double& x : s) x *= c;
        const double e = std::fabs(inequality::measure(m, s) - v);
        worst_scale = std::max(worst_scale, e);
        if (e > kScaleTol) return {false, name + " scale invariance error " + fmt(e) + " at c=" + fmt(c)};
      }
      // Move mass from a richer (higher-loss) to a poorer element without reordering.
      if (transfer.contains(name)) {
        const auto [lo, hi] = std::minmax_element(l.begin(), l.end());
        std::vector<double> t = l;
        const std::size_t i = static_cast<std::size_t>(hi - l.begin()), j = static_cast<std::size_t>(lo - l.begin());
        const double d = (0.05 + 0.4 * u01(rng)) * (t[i] - t[j]);
        t[i] -= d;
        t[j] += d;
        const double after = inequality::measure(m, t);
        if (!(after < v)) return {false, name + " violates the transfer principle: " + fmt(v) + " -> " + fmt(after)};
      }
    }
    const double g = inequality::gini(l);
    if (!(g >= 0.0 && g < 1.0)) return {false, "gini outside [0,1): " + fmt(g)};
    const double b = std::fabs(g - gini_brute(l));
    worst_brute = std::max(worst_brute, b);
    if (b > kGiniBruteTol) return {false, "gini differs from O(M^2) sum by " + fmt(b)};
    const double ge1 = std::fabs(inequality::generalized_entropy(l, 1.0) - inequality::theil(l));
    worst_ge1 = std::max(worst_ge1, ge1);
    if (ge1 > kGe1TheilTol) return {false, "GE(1) differs from Theil by " + fmt(ge1)};

    const std::vector<double> equal(l.size(), l[0]);
    for (const auto& [name, m] : all) {
      const double z = std::fabs(inequality::measure(m, equal));
      worst_equal = std::max(worst_equal, z);
      if (z > kZeroTol) return {false, name + " nonzero on equal losses: " + fmt(z)};
    }
  }
  return {true,
          "1000 instances x 7 measures; worst |equal| " + fmt(worst_equal) + ", scale " + fmt(worst_scale) +
              ", gini brute " + fmt(worst_brute) + ", |GE(1)-Theil| " + fmt(worst_ge1),
          kBudget2};
}

// ---------------------------------------------------------------- 3

Outcome entropy_bounds() {
  std::mt19937_64 rng(3003);
  std::uniform_int_distribution<std::size_t> classes(2, 10), rows(1, 12), width(2, 20);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  double lo = 1e300, hi_gap = 1e300;
  for (int i = 0; i < 1000; ++i) {
    nn::MlpSpec spec;
    const std::size_t n = classes(rng);
    spec.layer_sizes = {3, width(rng), n};
    Rng prng(static_cast<std::uint64_t>(i) + 7);
    auto theta = nn::init_params(spec, prng);
    const double s = scale(rng);
    for (auto& t : theta)
      for (double& v : t.values()) v *= s;
    const Matrix x = random_matrix(rows(rng), 3, rng, -3.0, 3.0);
    const double h = objectives::prediction_entropy<Matrix>(spec, std::span<const Matrix>(theta), x).item();
    if (!(h >= 0.0 && h <= std::log(static_cast<double>(n)))) {
      return {false, "entropy " + fmt(h) + " outside [0, ln " + std::to_string(n) + "]"};
    }
    lo = std::min(lo, h);
    hi_gap = std::min(hi_gap, std::log(static_cast<double>(n)) - h);
  }
  double worst_uniform = 0.0;
  for (std::size_t n : {2u, 5u, 20u}) {
    nn::MlpSpec spec;
    spec.layer_sizes = {4, 8, 8, n};
    const auto zero = nn::zero_params(spec);
    const double h = objectives::prediction_entropy<Matrix>(spec, std::span<const Matrix>(zero),
                                                            random_matrix(5, 4, rng)).item();
    const double e = std::fabs(h - std::log(static_cast<double>(n)));
    worst_uniform = std::max(worst_uniform, e);
    if (e > kUniformEntropyTol) return {false, "zero network entropy off ln N by " + fmt(e)};
  }
  return {true,
          "1000 networks in bounds (min H " + fmt(lo) + ", min ln N - H " + fmt(hi_gap) + "); zero net |H - ln N| " +
              fmt(worst_uniform)};
}

// ---------------------------------------------------------------- 4, 6

struct Trace {
  std::vector<std::vector<double>> theta;
  std::vector<meta::StepMetrics> metrics;
};

meta::Learner synthetic_learner() {
  meta::Learner l;
  l.spec.layer_sizes = {8, 20, 20, 5};
  return l;
}

tasks::SyntheticSpec heterogeneous_spec(std::size_t dim = 8) {
  tasks::SyntheticSpec s;
  s.feature_dim = dim;
  s.ways = 5;
  s.shots = 1;
  s.query = 1;
  s.difficulty_mix = {{0.5, 0.5}, {3.0, 0.5}};
  return s;
}

Trace trace_run(const meta::Learner& l, const objectives::Objective& obj, const meta::InnerRule& rule,
                std::int64_t iterations, std::uint64_t seed) {
  Trace t;
  meta::TrainOptions opt{heterogeneous_spec(), 8, iterations, {}};
  opt.optimizer.beta = 0.01;
  meta::train(meta::initial_state(l.spec, rule, seed), {l, obj, rule}, opt,
              [&](const meta::MetaState& s, const meta::StepMetrics& m) {
                std::vector<double> flat = nn::flatten(s.theta);
                if (s.alphas) {
                  const auto a = nn::flatten(*s.alphas);
                  flat.insert(flat.end(), a.begin(), a.end());
                }
                t.theta.push_back(std::move(flat));
                t.metrics.push_back(m);
              });
  return t;
}

// Largest relative difference across the theta trajectory and every logged
// metric except wall time.
double trace_gap(const Trace& a, const Trace& b) {
  if (a.theta.size() != b.theta.size()) return INFINITY;
  double g = 0.0;
  for (std::size_t i = 0; i < a.theta.size(); ++i) {
    if (a.theta[i].size() != b.theta[i].size()) return INFINITY;
    for (std::size_t k = 0; k < a.theta[i].size(); ++k) g = std::max(g, rel(a.theta[i][k], b.theta[i][k]));
    const auto& x = a.metrics[i];
    const auto& y = b.metrics[i];
    const std::array<std::pair<double, double>, 6> scalars{{{x.objective, y.objective},
                                                            {x.regularizer, y.regularizer},
                                                            {x.mean_pre_loss, y.mean_pre_loss},
                                                            {x.mean_post_loss, y.mean_post_loss},
                                                            {x.pre_loss_theil, y.pre_loss_theil},
                                                            {x.grad_norm, y.grad_norm}}};
    for (const auto& [p, q] : scalars) g = std::max(g, rel(p, q));
    for (std::size_t k = 0; k < x.pre_losses.size(); ++k) {
      g = std::max({g, rel(x.pre_losses[k], y.pre_losses[k]), rel(x.post_losses[k], y.post_losses[k])});
    }
  }
  return g;
}

Outcome lambda_zero_collapse() {
  const auto l = synthetic_learner();
  const std::vector<std::string> flags{"taml-entropy", "taml-entropy-maxonly", "taml-theil",    "taml-ge(0)",
                                       "taml-ge(2)",   "taml-atkinson(1)",     "taml-gini",     "taml-vl",
                                       "taml-theil+metasgd", "taml-gini+first-order"};
  double worst = 0.0;
  for (const auto& flag : flags) {
    const auto m = run::parse_method(flag);
    meta::InnerRule rule;
    rule.alpha = 0.3;
    rule.kind = m.meta_sgd ? meta::InnerRule::Kind::MetaSgd : meta::InnerRule::Kind::FixedStep;
    rule.order = m.first_order ? meta::Order::First : meta::Order::Second;
    const Trace maml = trace_run(l, objectives::Objective::maml(), rule, 50, 44);
    const Trace taml = trace_run(l, m.objective(0.0), rule, 50, 44);
    const double g = trace_gap(maml, taml);
    worst = std::max(worst, g);
    if (!(g <= kCollapseTol)) return {false, flag + " with lambda=0 departs from MAML by " + fmt(g)};
  }
  return {true, std::to_string(flags.size()) + " method flags x 50 iterations, worst relative gap " + fmt(worst),
          kBudget4};
}

Outcome metasgd_composability(const fs::path& scratch) {
  const auto l = synthetic_learner();
  const auto obj = objectives::Objective::inequality(inequality::Measure::theil(), 0.5);
  meta::InnerRule fixed;
  fixed.alpha = 0.3;
  meta::InnerRule frozen = fixed;
  frozen.kind = meta::InnerRule::Kind::MetaSgd;
  frozen.freeze_alphas = true;
  const Trace a = trace_run(l, obj, fixed, 50, 66);
  const Trace b = trace_run(l, obj, frozen, 50, 66);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.theta.size(); ++i) {
    for (std::size_t k = 0; k < a.theta[i].size(); ++k) worst = std::max(worst, rel(a.theta[i][k], b.theta[i][k]));
    worst = std::max(worst, rel(a.metrics[i].objective, b.metrics[i].objective));
  }
  if (a.theta.size() != 50 || !(worst <= kFrozenTol)) {
    return {false, "frozen Meta-SGD departs from fixed-step by " + fmt(worst)};
  }
  // End to end through the runner with learned step sizes.
  const std::string cfg = "method = taml-theil+metasgd\nN = 5\nK = 1\nM = 8\nhidden = 20,20\nfeature_dim = 8\n"
                          "difficulty_mix = 0.5:0.5,3:0.5\nalpha = 0.3\nbeta = 0.01\nmeta_iterations = 100\n"
                          "test_tasks = 100\ninner_steps_test = 1\nlambda = 0.5\noutput_dir = " +
                          (scratch / "c6").string() + "\n";
  const auto r = run::run_experiment(cfg, std::nullopt, std::cerr);
  if (!r.ok) return {false, "taml-theil+metasgd run failed"};
  const auto ck = nn::load_checkpoint(r.dir / "checkpoints/final.ckpt");
  if (!ck.alphas) return {false, "Meta-SGD run saved no step sizes"};
  const auto learned = nn::flatten(*ck.alphas);
  const bool moved = std::any_of(learned.begin(), learned.end(), [](double v) { return v != 0.3; });
  const double acc = r.summary["meta_test"]["per_step"][1]["mean"].get<double>();
  if (!moved || !std::isfinite(acc)) return {false, "learned step sizes did not update"};
  return {true, "frozen alphas vs fixed step over 50 iterations: worst relative gap " + fmt(worst) +
                    "; end-to-end run 1-step accuracy " + fmt(acc)};
}

// ---------------------------------------------------------------- 5

std::string paired_config(const std::string& method, const fs::path& out) {
  return "method = " + method +
         "\nN = 5\nK = 1\nM = 8\nhidden = 40,40\nlambda = 1\nalpha = 0.1\noptimizer = adam\nbeta = 0.001\n"
         "meta_iterations = 2000\ntest_tasks = 300\ninner_steps_test = 1\ndifficulty_mix = 0.5:0.5,3:0.5\n"
         "output_dir = " +
         out.string() + "\n";
}

Outcome paired_experiment(const fs::path& scratch) {
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  double theil_sum[2] = {0, 0}, acc_sum[2] = {0, 0};
  int lower = 0;
  std::string per_seed;
  for (auto seed : seeds) {
    double theil[2], acc[2];
    const std::array<std::string, 2> methods{"maml", "taml-theil"};
    for (int k = 0; k < 2; ++k) {
      const auto r = run::run_experiment(
          paired_config(methods[k], scratch / ("c5_" + methods[k] + "_" + std::to_string(seed))), seed, std::cerr);
      if (!r.ok) return {false, methods[k] + " seed " + std::to_string(seed) + " failed"};
      std::istringstream in(run::read_file(r.dir / "metrics.jsonl"));
      std::vector<double> t;
      for (std::string line; std::getline(in, line);) t.push_back(nlohmann::json::parse(line)["pre_loss_theil"]);
      double s = 0.0;
      for (std::size_t i = t.size() - 100; i < t.size(); ++i) s += t[i];
      theil[k] = s / 100.0;
      acc[k] = r.summary["meta_test"]["per_step"][1]["mean"].get<double>();
      theil_sum[k] += theil[k];
      acc_sum[k] += acc[k];
    }
    lower += theil[1] < theil[0];
    per_seed += " s" + std::to_string(seed) + ":" + fmt(theil[0]) + "/" + fmt(theil[1]);
  }
  const double n = static_cast<double>(seeds.size());
  const bool a = lower == static_cast<int>(seeds.size());
  const bool b = acc_sum[1] / n >= acc_sum[0] / n - kAccuracyMargin;
  return {a && b,
          "(a) final-100 pre-loss Theil MAML/TAML" + per_seed + " -> TAML lower on " + std::to_string(lower) + "/5; (b) " +
              "1-step accuracy MAML " + fmt(acc_sum[0] / n) + ", TAML " + fmt(acc_sum[1] / n) + " (margin " +
              fmt(kAccuracyMargin) + ")",
          kBudget5};
}

// ---------------------------------------------------------------- 7

Outcome navigation_curves(const fs::path& scratch) {
  std::string detail;
  bool pass = true;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const std::string cfg =
        "task_distribution = navigation\nmethod = maml-first-order\nhidden = 32,32\nM = 10\nalpha = 0.000005\n"
        "optimizer = adam\nbeta = 0.001\nmeta_iterations = 500\ntest_tasks = 40\ninner_steps_test = 3\n"
        "output_dir = " +
        (scratch / ("c7_" + std::to_string(seed))).string() + "\n";
    const auto r = run::run_experiment(cfg, seed, std::cerr);
    if (!r.ok) return {false, "seed " + std::to_string(seed) + " failed"};
    std::vector<double> trained;
    for (const auto& p : r.summary["meta_test"]["per_step"]) trained.push_back(p["mean"].get<double>());
    const std::string random_csv = run::adaptation_curve(r.dir, 3, true);
    const auto last = random_csv.substr(random_csv.rfind("\n3,") + 3);
    const double random3 = *parse_double(last.substr(0, last.find(',')));
    bool monotone = true;
    for (std::size_t k = 1; k < trained.size(); ++k) monotone = monotone && trained[k] >= trained[k - 1];
    const bool beats = trained.size() == 4 && trained[3] > random3;
    pass = pass && monotone && beats;
    detail += " s" + std::to_string(seed) + ": [" + fmt(trained[0]) + ", " + fmt(trained[1]) + ", " + fmt(trained[2]) +
              ", " + fmt(trained[3]) + "] vs random@3 " + fmt(random3) + (monotone && beats ? "" : " (fail)") + ";";
  }
  return {pass, "mean return over 40 tasks, steps 0..3:" + detail, kBudget7};
}

// ---------------------------------------------------------------- 8

Outcome determinism(const fs::path& scratch) {
  const std::vector<std::string> configs{
      "method = taml-theil+metasgd\nN = 5\nM = 6\nhidden = 16\nfeature_dim = 6\nmeta_iterations = 30\ntest_tasks = 10\n"
      "inner_steps_test = 1\nalpha = 0.2\ndifficulty_mix = 0.5:0.5,3:0.5\n",
      "method = taml-entropy\nN = 3\nK = 2\nM = 4\nhidden = 16\nfeature_dim = 6\nmeta_iterations = 30\ntest_tasks = 10\n"
      "inner_steps_test = 1\nalpha = 0.2\noptimizer = adam\n",
      "task_distribution = sinusoid\nmethod = taml-vl\nM = 5\nmeta_iterations = 20\ntest_tasks = 5\ninner_steps_test = 2\n",
      "task_distribution = navigation\nmethod = taml-ge(0)+first-order\nhidden = 16\nM = 3\nhorizon = 30\n"
      "trajectories = 5\nalpha = 0.000005\nmeta_iterations = 5\ntest_tasks = 3\ninner_steps_test = 1\n"};
  for (std::size_t i = 0; i < configs.size(); ++i) {
    std::string bytes[2];
    for (int k = 0; k < 2; ++k) {
      const fs::path out = scratch / ("c8_" + std::to_string(i) + "_" + std::to_string(k));
      const auto r = run::run_experiment(configs[i] + "output_dir = " + out.string() + "\n", 31, std::cerr);
      if (!r.ok) return {false, "config " + std::to_string(i) + " failed"};
      bytes[k] = run::read_file(out / "metrics.jsonl");
    }
    if (bytes[0].empty() || bytes[0] != bytes[1]) {
      return {false, "config " + std::to_string(i) + " metrics.jsonl differs between same-seed runs"};
    }
  }
  return {true, std::to_string(configs.size()) + " configs (synthetic, entropy, sinusoid, navigation) byte-identical"};
}

// ---------------------------------------------------------------- 9

int shell(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome cli_contract(const std::string& cli, const fs::path& scratch) {
  if (cli.empty()) return {false, "no --cli binary given"};
  const fs::path dir = scratch / "c9";
  fs::create_directories(dir);
  run::write_file(dir / "losses.csv", "loss\n1\n3\n");
  if (shell(cli + " measures --input " + (dir / "losses.csv").string() + " > " + (dir / "m.json").string()) != 0) {
    return {false, "measures exited nonzero"};
  }
  const auto j = nlohmann::json::parse(run::read_file(dir / "m.json"));
  if (!taml::testing::measures_json_errors(j).empty()) return {false, "measures JSON fails schema"};
  const double theil = j["theil"].get<double>();
  if (!(std::fabs(theil - 0.13081) <= kMeasuresCliTol)) return {false, "measures theil " + fmt(theil)};

  const std::string base = "N = 3\nM = 4\nhidden = 8\nfeature_dim = 4\nmeta_iterations = 3\ntest_tasks = 10\n"
                           "inner_steps_test = 1\n";
  run::write_file(dir / "a.cfg", base + "output_dir = " + (dir / "a").string() + "\n");
  run::write_file(dir / "b.cfg", base + "cluster_spread = 2\noutput_dir = " + (dir / "b").string() + "\n");
  const int rc = shell(cli + " compare --configs " + (dir / "a.cfg").string() + "," + (dir / "b.cfg").string() +
                       " --out " + (dir / "cmp").string() + " > /dev/null 2>&1");
  if (rc == 0 || fs::exists(dir / "cmp") || fs::exists(dir / "a")) {
    return {false, "compare accepted mismatched distributions (exit " + std::to_string(rc) + ")"};
  }

  if (shell(cli + " run --config " + (dir / "a.cfg").string() + " > /dev/null") != 0) return {false, "run failed"};
  if (shell(cli + " curve --run " + (dir / "a").string() + " --max-steps 4 > " + (dir / "curve.csv").string()) != 0) {
    return {false, "curve exited nonzero"};
  }
  const auto errs = taml::testing::curve_csv_errors(run::read_file(dir / "curve.csv"));
  if (!errs.empty()) return {false, "curve CSV: " + errs.front()};
  return {true, "measures theil " + fmt(theil) + "; compare rejected mismatch (exit " + std::to_string(rc) +
                    "); curve CSV schema-valid"};
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--cli" && i + 1 < argc) {
      cli = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string n; std::getline(ss, n, ',');) only.insert(std::stoi(n));
    } else {
      std::cerr << "usage: taml_acceptance --cli PATH [--only N[,N...]]\n";
      return 2;
    }
  }
  taml::testing::TempDir scratch("acceptance");
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"autodiff correctness", autodiff_correctness},
      {"inequality-measure suite", inequality_suite},
      {"entropy bounds", entropy_bounds},
      {"lambda=0 collapse", lambda_zero_collapse},
      {"paired synthetic experiment", [&] { return paired_experiment(scratch.path()); }},
      {"Meta-SGD composability", [&] { return metasgd_composability(scratch.path()); }},
      {"RL navigation adaptation", [&] { return navigation_curves(scratch.path()); }},
      {"determinism", [&] { return determinism(scratch.path()); }},
      {"CLI contract", [&] { return cli_contract(cli, scratch.path()); }}};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.contains(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (o.budget_s > 0.0 && secs > o.budget_s) {
      o.pass = false;
      o.detail += "; over runtime budget " + fmt(o.budget_s) + " s";
    }
    failed += !o.pass;
    std::printf("ACCEPTANCE %d %s %s: %s [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
