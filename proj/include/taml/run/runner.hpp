#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "taml/format.hpp"
#include "taml/inequality.hpp"
#include "taml/meta/evaluate.hpp"
#include "taml/meta/learner.hpp"
#include "taml/meta/trainer.hpp"
#include "taml/nn/checkpoint.hpp"
#include "taml/run/config.hpp"
#include "taml/tasks.hpp"

namespace taml::run {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

/// Everything a run needs, assembled from a validated config.
struct Experiment {
  ExperimentConfig config;
  Method method;
  meta::Learner learner;
  objectives::Objective objective;
  meta::InnerRule rule;
  meta::TrainOptions train;
  tasks::Distribution test_distribution;
};

inline Experiment build_experiment(const ExperimentConfig& c) {
  Experiment e;
  e.config = c;
  e.method = c.parsed_method();
  e.objective = e.method.objective(c.lambda);

  nn::MlpSpec& spec = e.learner.spec;
  spec.activation = c.activation == "relu" ? nn::Activation::Relu : nn::Activation::LeakyRelu;
  spec.leaky_slope = c.leaky_slope;
  std::size_t in = 0, out = 0;
  if (c.task_distribution == "synthetic") {
    tasks::SyntheticSpec s;
    s.feature_dim = c.feature_dim;
    s.ways = c.ways;
    s.shots = c.shots;
    s.query = c.query;
    s.cluster_spread = c.cluster_spread;
    s.difficulty_mix = c.difficulty_mix;
    s.validate();
    e.train.distribution = s;
    s.query = c.query_test;
    e.test_distribution = s;
    in = c.feature_dim;
    out = c.ways;
    spec.head = nn::Head::SoftmaxClassifier;
  } else if (c.task_distribution == "sinusoid") {
    tasks::SinusoidSpec s;
    s.shots = c.shots;
    s.query = c.query;
    s.amplitude_min = c.amplitude_min;
    s.amplitude_max = c.amplitude_max;
    s.phase_min = c.phase_min;
    s.phase_max = c.phase_max;
    s.x_min = c.x_min;
    s.x_max = c.x_max;
    s.validate();
    e.train.distribution = s;
    s.query = c.query_test;
    e.test_distribution = s;
    in = 1;
    out = 1;
    spec.head = nn::Head::LinearRegressor;
  } else if (c.task_distribution == "navigation") {
    tasks::NavigationSpec s;
    s.horizon = c.horizon;
    s.action_clip = c.action_clip;
    s.goal_radius = c.goal_radius;
    s.trajectories = c.trajectories;
    s.validate();
    e.train.distribution = s;
    e.test_distribution = s;
    in = 2;
    out = 2;
    spec.head = nn::Head::GaussianPolicy;
    spec.policy_stddev = c.policy_stddev;
    e.learner.trajectories = c.trajectories;
  } else {
    tasks::omniglot::Options o;
    o.image_side = c.image_side;
    o.rotations = c.rotations;
    o.seed = c.seed;
    o.train_characters = c.train_characters;
    o.val_characters = c.val_characters;
    auto ds = std::make_shared<const tasks::omniglot::Dataset>(tasks::omniglot::ingest(c.omniglot_root, o));
    e.train.distribution = tasks::OmniglotSource{ds, {c.ways, c.shots, c.query, tasks::omniglot::Split::Train}};
    e.test_distribution = tasks::OmniglotSource{ds, {c.ways, c.shots, c.query_test, tasks::omniglot::Split::Test}};
    in = c.image_side * c.image_side;
    out = c.ways;
    spec.head = nn::Head::SoftmaxClassifier;
  }
  spec.layer_sizes = {in};
  spec.layer_sizes.insert(spec.layer_sizes.end(), c.hidden.begin(), c.hidden.end());
  spec.layer_sizes.push_back(out);
  spec.validate();
  e.learner.entropy_samples =
      c.entropy_samples == "query" ? meta::EntropySamples::Query : meta::EntropySamples::Support;

  e.rule.kind = e.method.meta_sgd ? meta::InnerRule::Kind::MetaSgd : meta::InnerRule::Kind::FixedStep;
  e.rule.alpha = c.alpha;
  e.rule.steps = c.inner_steps_train;
  e.rule.order = e.method.first_order ? meta::Order::First : meta::Order::Second;
  e.rule.validate();

  e.train.meta_batch = c.meta_batch;
  e.train.meta_iterations = c.meta_iterations;
  e.train.optimizer.kind = c.optimizer == "adam" ? meta::MetaOptimizer::Kind::Adam : meta::MetaOptimizer::Kind::Sgd;
  e.train.optimizer.beta = c.beta;
  e.train.optimizer.validate();
  return e;
}

/// Relative output directories are placed under $TAML_OUTPUT_ROOT when set.
inline fs::path output_path(const std::string& dir) {
  fs::path p(dir);
  const char* root = std::getenv("TAML_OUTPUT_ROOT");
  if (root && *root && p.is_relative()) return fs::path(root) / p;
  return p;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& p, std::string_view text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + p.string());
}

inline Json metrics_record(const meta::StepMetrics& m, bool wall_time) {
  Json j;
  j["iteration"] = m.iteration;
  j["objective"] = m.objective;
  j["regularizer"] = m.regularizer;
  j["mean_pre_loss"] = m.mean_pre_loss;
  j["mean_post_loss"] = m.mean_post_loss;
  j["pre_loss_theil"] = m.pre_loss_theil;
  j["grad_norm"] = m.grad_norm;
  j["pre_losses"] = m.pre_losses;
  j["post_losses"] = m.post_losses;
  if (wall_time) j["wall_ms"] = m.wall_ms;
  return j;
}

inline Json meta_test_json(const meta::EvalSummary& s, std::size_t tasks) {
  Json j;
  j["metric"] = s.metric;
  j["tasks"] = tasks;
  Json steps = Json::array();
  for (std::size_t k = 0; k < s.per_step.size(); ++k) {
    steps.push_back({{"gradient_step", k}, {"mean", s.per_step[k].mean}, {"ci_halfwidth", s.per_step[k].ci_halfwidth}});
  }
  j["per_step"] = std::move(steps);
  return j;
}

struct RunResult {
  fs::path dir;
  bool ok = false;
  Json summary;
};

inline std::string checkpoint_name(std::int64_t iteration) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "iter_%08lld.ckpt", static_cast<long long>(iteration));
  return buf;
}

/// Parses `source`, then trains, checkpoints and meta-tests into the output
/// directory. Config errors throw ConfigError before anything is written;
/// later failures keep the partial artifacts and mark the summary failed.
inline RunResult run_experiment(std::string_view source, std::optional<std::uint64_t> seed_override = std::nullopt,
                                std::ostream& log = std::cerr) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string text = seed_override ? override_key(source, "seed", std::to_string(*seed_override))
                                         : std::string(source);
  const ParsedConfig parsed = parse_config(text);
  const ExperimentConfig& c = parsed.config;

  RunResult r;
  r.dir = output_path(c.output_dir);
  fs::create_directories(r.dir / "checkpoints");
  write_file(r.dir / "config.resolved", resolved_text(text, parsed));

  Json& s = r.summary;
  s["status"] = "running";
  s["method"] = c.method;
  s["seed"] = c.seed;
  s["config"] = "config.resolved";
  s["metrics"] = "metrics.jsonl";
  s["iterations_completed"] = 0;
  Json checkpoints = Json::array();
  double train_ms = 0.0, test_ms = 0.0;

  std::ofstream metrics(r.dir / "metrics.jsonl", std::ios::binary | std::ios::trunc);
  try {
    if (!metrics) throw std::runtime_error("cannot write " + (r.dir / "metrics.jsonl").string());
    const Experiment e = build_experiment(c);
    meta::MetaState state = meta::initial_state(e.learner.spec, e.rule, c.seed);
    const auto train_start = std::chrono::steady_clock::now();
    state = meta::train(state, {e.learner, e.objective, e.rule}, e.train,
                        [&](const meta::MetaState& st, const meta::StepMetrics& m) {
                          metrics << metrics_record(m, c.log_wall_time).dump() << '\n';
                          s["iterations_completed"] = st.iteration;
                          if (c.checkpoint_every > 0 && st.iteration % c.checkpoint_every == 0) {
                            const std::string name = "checkpoints/" + checkpoint_name(st.iteration);
                            nn::save_checkpoint(r.dir / name, meta::to_checkpoint(e.learner.spec, st));
                            checkpoints.push_back(name);
                          }
                        });
    metrics.flush();
    train_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - train_start).count();
    nn::save_checkpoint(r.dir / "checkpoints/final.ckpt", meta::to_checkpoint(e.learner.spec, state));
    checkpoints.push_back("checkpoints/final.ckpt");

    const auto test_start = std::chrono::steady_clock::now();
    const auto test_tasks = meta::meta_test_tasks(e.test_distribution, c.test_tasks, c.seed);
    const auto eval = meta::evaluate_meta_test(e.learner, e.rule, state, test_tasks, c.inner_steps_test, c.seed);
    test_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - test_start).count();
    s["status"] = "completed";
    s["meta_test"] = meta_test_json(eval, test_tasks.size());
    r.ok = true;
  } catch (const std::exception& ex) {
    metrics.flush();
    s["status"] = "failed";
    s["error"] = ex.what();
    log << "run failed: " << ex.what() << '\n';
  }
  s["checkpoints"] = std::move(checkpoints);
  s["wall_ms"] = {{"train", train_ms},
                  {"meta_test", test_ms},
                  {"total", std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count()}};
  write_file(r.dir / "summary.json", s.dump(2) + "\n");
  return r;
}

inline RunResult run_config_file(const fs::path& path, std::optional<std::uint64_t> seed_override = std::nullopt,
                                 std::ostream& log = std::cerr) {
  return run_experiment(read_file(path), seed_override, log);
}

/// Distribution-defining keys; configs may differ in method, shots and
/// training hyperparameters but not here.
inline std::string distribution_signature(const ExperimentConfig& c) {
  std::string s = "task_distribution = " + c.task_distribution + "\n";
  for (const auto& f : detail::fields()) {
    if (f.scope.empty() || f.key == "K" || f.key == "Q" || f.key == "query_test" || f.key == "entropy_samples") continue;
    if (applies(f, c)) s += std::string(f.key) + " = " + f.get(c) + "\n";
  }
  return s;
}

struct CompareRow {
  std::string config;
  std::string method;
  std::size_t shots = 0;
  std::uint64_t seed = 0;
  std::string metric;
  std::vector<meta::MeanCi> per_step;
};

inline CompareRow row_from_summary(const std::string& label, const ExperimentConfig& c, const Json& s) {
  CompareRow row{label, c.method, c.shots, c.seed, s.at("meta_test").at("metric").get<std::string>(), {}};
  for (const auto& p : s.at("meta_test").at("per_step")) {
    row.per_step.push_back({p.at("mean").get<double>(), p.at("ci_halfwidth").get<double>()});
  }
  return row;
}

inline std::string compare_csv(const std::vector<CompareRow>& rows) {
  std::string s = "config,method,shots,seed,gradient_step,mean_metric,ci_halfwidth\n";
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < r.per_step.size(); ++k) {
      s += r.config + "," + r.method + "," + std::to_string(r.shots) + "," + std::to_string(r.seed) + "," +
           std::to_string(k) + "," + format_double(r.per_step[k].mean) + "," +
           format_double(r.per_step[k].ci_halfwidth) + "\n";
    }
  }
  return s;
}

inline std::string compare_text(const std::vector<CompareRow>& rows) {
  std::size_t steps = 0, width = 6;
  for (const auto& r : rows) {
    steps = std::max(steps, r.per_step.size());
    width = std::max(width, r.config.size() + r.method.size() + 3);
  }
  std::ostringstream os;
  os << "metric: " << (rows.empty() ? "" : rows.front().metric) << " (mean +- 95% CI over tasks)\n";
  os << std::left << std::setw(static_cast<int>(width)) << "config" << std::setw(7) << "shots" << std::setw(8) << "seed";
  for (std::size_t k = 0; k < steps; ++k) os << std::setw(22) << ("step " + std::to_string(k));
  os << '\n';
  for (const auto& r : rows) {
    os << std::setw(static_cast<int>(width)) << (r.config + " (" + r.method + ")") << std::setw(7) << r.shots
       << std::setw(8) << r.seed;
    for (const auto& p : r.per_step) {
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(4) << p.mean << " +- " << p.ci_halfwidth;
      os << std::setw(22) << cell.str();
    }
    os << '\n';
  }
  return os.str();
}

/// Runs (or reuses completed runs of) each config and writes
/// comparison.txt and comparison.csv to `out_dir`. Returns the text table.
inline std::string compare(const std::vector<fs::path>& config_paths, const fs::path& out_dir,
                           std::ostream& log = std::cerr) {
  if (config_paths.size() < 2) throw std::invalid_argument("compare: need at least 2 configs");
  std::vector<std::string> sources;
  std::vector<ParsedConfig> parsed;
  for (const auto& p : config_paths) {
    sources.push_back(read_file(p));
    try {
      parsed.push_back(parse_config(sources.back()));
    } catch (const ConfigError& e) {
      throw ConfigError({p.string() + ": " + e.what()});
    }
  }
  const std::string sig = distribution_signature(parsed.front().config);
  for (std::size_t i = 1; i < parsed.size(); ++i) {
    if (distribution_signature(parsed[i].config) != sig) {
      throw std::invalid_argument("compare: " + config_paths[i].string() + " samples a different task distribution than " +
                                  config_paths.front().string() + "; rows would not be comparable");
    }
  }
  std::vector<CompareRow> rows;
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    const fs::path dir = output_path(parsed[i].config.output_dir);
    Json summary;
    const bool reusable = fs::exists(dir / "summary.json") && fs::exists(dir / "config.resolved") &&
                          read_file(dir / "config.resolved") == resolved_text(sources[i], parsed[i]);
    if (reusable) summary = Json::parse(read_file(dir / "summary.json"));
    if (!reusable || summary.value("status", "") != "completed") {
      log << "running " << config_paths[i].string() << '\n';
      auto r = run_experiment(sources[i], std::nullopt, log);
      if (!r.ok) throw std::runtime_error("compare: run failed for " + config_paths[i].string());
      summary = std::move(r.summary);
    }
    rows.push_back(row_from_summary(config_paths[i].stem().string(), parsed[i].config, summary));
  }
  fs::create_directories(out_dir);
  const std::string text = compare_text(rows);
  write_file(out_dir / "comparison.txt", text);
  write_file(out_dir / "comparison.csv", compare_csv(rows));
  return text;
}

/// CSV of the meta-test metric after 0..max_steps adaptation steps, from the
/// run's final checkpoint or, with `random_init`, from the untrained
/// initialization of the same seed.
inline std::string adaptation_curve(const fs::path& run_dir, std::size_t max_steps, bool random_init = false) {
  const fs::path cfg_path = run_dir / "config.resolved";
  if (!fs::exists(cfg_path)) throw std::invalid_argument("curve: no config.resolved in " + run_dir.string());
  const ExperimentConfig c = parse_config(read_file(cfg_path)).config;
  const Experiment e = build_experiment(c);
  meta::MetaState state;
  if (random_init) {
    state = meta::initial_state(e.learner.spec, e.rule, c.seed);
  } else {
    const fs::path ck = run_dir / "checkpoints/final.ckpt";
    if (!fs::exists(ck)) throw std::invalid_argument("curve: missing checkpoint " + ck.string());
    const auto loaded = nn::load_checkpoint(ck);
    if (!(loaded.spec == e.learner.spec)) throw std::invalid_argument("curve: checkpoint architecture differs from config");
    state = meta::from_checkpoint(loaded);
  }
  const auto test_tasks = meta::meta_test_tasks(e.test_distribution, c.test_tasks, c.seed);
  const auto eval = meta::evaluate_meta_test(e.learner, e.rule, state, test_tasks, max_steps, c.seed);
  std::string s = "gradient_step,mean_metric,ci_halfwidth\n";
  for (std::size_t k = 0; k < eval.per_step.size(); ++k) {
    s += std::to_string(k) + "," + format_double(eval.per_step[k].mean) + "," +
         format_double(eval.per_step[k].ci_halfwidth) + "\n";
  }
  return s;
}

/// First column of a CSV of losses; a non-numeric first line is a header.
inline std::vector<double> read_loss_column(std::string_view text) {
  std::vector<double> out;
  std::size_t line_no = 0;
  bool first = true;
  for (auto raw : detail::raw_lines(text)) {
    ++line_no;
    const auto line = detail::trim(raw);
    if (line.empty()) continue;
    const auto cell = detail::trim(line.substr(0, line.find(',')));
    const auto v = parse_double(cell);
    const bool header = first;
    first = false;
    if (!v) {
      if (header) continue;
      throw std::invalid_argument("measures: line " + std::to_string(line_no) + ": not a number: '" + std::string(cell) + "'");
    }
    if (!std::isfinite(*v) || *v < 0.0) {
      throw std::invalid_argument("measures: line " + std::to_string(line_no) + ": losses must be finite and >= 0");
    }
    out.push_back(*v);
  }
  return out;
}

inline Json measures_json(const std::vector<double>& losses) {
  if (losses.size() < 2) {
    throw std::invalid_argument("measures: need at least 2 loss values, got " + std::to_string(losses.size()));
  }
  Json j;
  j["theil"] = inequality::theil(losses);
  j["ge0"] = inequality::generalized_entropy(losses, 0.0);
  j["ge1"] = inequality::generalized_entropy(losses, 1.0);
  j["ge2"] = inequality::generalized_entropy(losses, 2.0);
  j["atkinson1"] = inequality::atkinson(losses, 1.0);
  j["gini"] = inequality::gini(losses);
  j["vl"] = inequality::variance_of_logarithms(losses);
  return j;
}

}  // namespace taml::run
