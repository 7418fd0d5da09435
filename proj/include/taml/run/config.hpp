#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "taml/format.hpp"
#include "taml/inequality.hpp"
#include "taml/objectives.hpp"
#include "taml/tasks/classification.hpp"

/// Flat `key = value` experiment configuration. Every key is typed and
/// range-checked; unknown keys, duplicates and keys that belong to another
/// task distribution are rejected with one diagnostic per offending line.
namespace taml::run {

class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::vector<std::string> diags)
      : std::invalid_argument(joined(diags)), diagnostics(std::move(diags)) {}

  std::vector<std::string> diagnostics;

 private:
  static std::string joined(const std::vector<std::string>& d) {
    std::string s = "invalid config:";
    for (const auto& x : d) s += "\n  " + x;
    return s;
  }
};

/// Parsed `method` value: the objective family plus the composable
/// `+metasgd` and `+first-order` modifiers.
struct Method {
  objectives::Kind kind = objectives::Kind::Maml;
  inequality::Measure measure;
  bool meta_sgd = false;
  bool first_order = false;

  objectives::Objective objective(double lambda) const {
    switch (kind) {
      case objectives::Kind::Maml: return objectives::Objective::maml();
      case objectives::Kind::EntropyReduction: return objectives::Objective::entropy_reduction(lambda);
      case objectives::Kind::EntropyMaxOnly: return objectives::Objective::entropy_max_only(lambda);
      case objectives::Kind::Inequality: return objectives::Objective::inequality(measure, lambda);
    }
    throw std::invalid_argument("method: unknown kind");
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parenthesized(std::string_view s, std::string_view prefix) {
  if (!s.starts_with(prefix) || !s.ends_with(")")) return std::nullopt;
  s.remove_prefix(prefix.size());
  s.remove_suffix(1);
  const auto v = parse_double(s);
  if (!v || !std::isfinite(*v)) return std::nullopt;
  return v;
}

}  // namespace detail

/// Throws std::invalid_argument naming the accepted forms.
inline Method parse_method(std::string_view text) {
  Method m;
  std::string_view s = detail::trim(text);
  for (;;) {
    if (s.ends_with("+metasgd")) {
      if (m.meta_sgd) break;
      m.meta_sgd = true;
      s.remove_suffix(8);
    } else if (s.ends_with("+first-order")) {
      if (m.first_order) break;
      m.first_order = true;
      s.remove_suffix(12);
    } else {
      break;
    }
  }
  using objectives::Kind;
  if (s == "maml") {
    m.kind = Kind::Maml;
  } else if (s == "maml-first-order") {
    m.kind = Kind::Maml;
    m.first_order = true;
  } else if (s == "metasgd") {
    m.kind = Kind::Maml;
    m.meta_sgd = true;
  } else if (s == "taml-entropy") {
    m.kind = Kind::EntropyReduction;
  } else if (s == "taml-entropy-maxonly") {
    m.kind = Kind::EntropyMaxOnly;
  } else if (s == "taml-theil") {
    m.kind = Kind::Inequality;
    m.measure = inequality::Measure::theil();
  } else if (s == "taml-gini") {
    m.kind = Kind::Inequality;
    m.measure = inequality::Measure::gini();
  } else if (s == "taml-vl") {
    m.kind = Kind::Inequality;
    m.measure = inequality::Measure::variance_of_logarithms();
  } else if (auto e = detail::parenthesized(s, "taml-ge(")) {
    m.kind = Kind::Inequality;
    m.measure = inequality::Measure::generalized_entropy(*e);
  } else if (auto a = detail::parenthesized(s, "taml-atkinson(")) {
    if (*a < 0.0) throw std::invalid_argument("method: atkinson aversion must be >= 0");
    m.kind = Kind::Inequality;
    m.measure = inequality::Measure::atkinson(*a);
  } else {
    throw std::invalid_argument(
        "method: unknown '" + std::string(text) +
        "'; expected maml | maml-first-order | metasgd | taml-entropy | taml-entropy-maxonly | taml-theil | "
        "taml-ge(x) | taml-atkinson(x) | taml-gini | taml-vl, optionally suffixed +metasgd and/or +first-order");
  }
  return m;
}

struct ExperimentConfig {
  std::string method = "maml";
  std::string task_distribution = "synthetic";
  std::size_t ways = 5;
  std::size_t shots = 1;
  std::size_t query = 1;
  std::size_t query_test = 15;
  std::size_t meta_batch = 32;
  double alpha = 0.01;
  double beta = 0.001;
  std::string optimizer = "sgd";
  double lambda = 0.1;
  std::size_t inner_steps_train = 1;
  std::size_t inner_steps_test = 10;
  std::int64_t meta_iterations = 1000;
  std::size_t test_tasks = 100;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 0;
  std::string output_dir = "runs/run";
  std::vector<std::size_t> hidden{256, 128, 64, 64};
  std::string activation = "leaky_relu";
  double leaky_slope = 0.01;
  std::string entropy_samples = "support";
  bool log_wall_time = false;

  // synthetic
  std::size_t feature_dim = 16;
  double cluster_spread = 0.5;
  std::vector<tasks::DifficultyComponent> difficulty_mix{{1.0, 1.0}};

  // sinusoid
  double amplitude_min = 0.1;
  double amplitude_max = 5.0;
  double phase_min = 0.0;
  double phase_max = 3.141592653589793;
  double x_min = -5.0;
  double x_max = 5.0;

  // navigation
  std::size_t horizon = 100;
  double action_clip = 0.1;
  double goal_radius = 0.01;
  std::size_t trajectories = 20;
  double policy_stddev = 0.1;

  // omniglot
  std::string omniglot_root;
  std::size_t image_side = 28;
  bool rotations = true;
  std::size_t train_characters = 1200;
  std::size_t val_characters = 100;

  bool operator==(const ExperimentConfig&) const = default;

  Method parsed_method() const { return parse_method(method); }
};

namespace detail {

using Setter = std::function<std::optional<std::string>(ExperimentConfig&, std::string_view)>;
using Getter = std::function<std::string(const ExperimentConfig&)>;

struct Field {
  std::string_view key;
  // Space-separated distributions the key applies to; empty for all.
  std::string_view scope;
  Getter get;
  Setter set;
};

template <class Int>
Field integer(std::string_view key, std::string_view scope, Int ExperimentConfig::*p, Int lo, Int hi) {
  return {key, scope, [p](const ExperimentConfig& c) { return std::to_string(c.*p); },
          [p, lo, hi](ExperimentConfig& c, std::string_view v) -> std::optional<std::string> {
            const auto x = parse_int<Int>(v);
            if (!x) return "expected an integer, got '" + std::string(v) + "'";
            if (*x < lo || *x > hi) {
              return "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "], got " + std::to_string(*x);
            }
            c.*p = *x;
            return std::nullopt;
          }};
}

// Finite real in [lo, hi]; `open_lo` excludes lo.
inline Field real(std::string_view key, std::string_view scope, double ExperimentConfig::*p, double lo, double hi,
                  bool open_lo = false) {
  return {key, scope, [p](const ExperimentConfig& c) { return format_double(c.*p); },
          [=](ExperimentConfig& c, std::string_view v) -> std::optional<std::string> {
            const auto x = parse_double(v);
            if (!x || !std::isfinite(*x)) return "expected a finite number, got '" + std::string(v) + "'";
            if ((open_lo ? *x <= lo : *x < lo) || *x > hi) {
              return std::string("must be in ") + (open_lo ? "(" : "[") + format_double(lo) + ", " + format_double(hi) +
                     "], got " + format_double(*x);
            }
            c.*p = *x;
            return std::nullopt;
          }};
}

inline Field choice(std::string_view key, std::string_view scope, std::string ExperimentConfig::*p,
                    std::vector<std::string> allowed) {
  return {key, scope, [p](const ExperimentConfig& c) { return c.*p; },
          [p, allowed](ExperimentConfig& c, std::string_view v) -> std::optional<std::string> {
            for (const auto& a : allowed) {
              if (v == a) {
                c.*p = a;
                return std::nullopt;
              }
            }
            std::string msg = "expected one of";
            for (const auto& a : allowed) msg += " " + a;
            return msg + ", got '" + std::string(v) + "'";
          }};
}

inline Field text(std::string_view key, std::string_view scope, std::string ExperimentConfig::*p) {
  return {key, scope, [p](const ExperimentConfig& c) { return c.*p; },
          [p](ExperimentConfig& c, std::string_view v) -> std::optional<std::string> {
            if (v.empty()) return "must not be empty";
            c.*p = std::string(v);
            return std::nullopt;
          }};
}

inline Field flag(std::string_view key, std::string_view scope, bool ExperimentConfig::*p) {
  return {key, scope, [p](const ExperimentConfig& c) { return std::string(c.*p ? "true" : "false"); },
          [p](ExperimentConfig& c, std::string_view v) -> std::optional<std::string> {
            if (v == "true") {
              c.*p = true;
            } else if (v == "false") {
              c.*p = false;
            } else {
              return "expected true or false, got '" + std::string(v) + "'";
            }
            return std::nullopt;
          }};
}

inline std::vector<std::string_view> raw_lines(std::string_view s) {
  std::vector<std::string_view> out;
  for (;;) {
    const auto pos = s.find('\n');
    out.push_back(s.substr(0, pos));
    if (pos == std::string_view::npos) return out;
    s.remove_prefix(pos + 1);
  }
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  for (;;) {
    const auto pos = s.find(sep);
    out.push_back(trim(s.substr(0, pos)));
    if (pos == std::string_view::npos) return out;
    s.remove_prefix(pos + 1);
  }
}

inline bool in_scope(std::string_view scope, std::string_view dist) {
  if (scope.empty()) return true;
  for (auto s : split(scope, ' ')) {
    if (s == dist) return true;
  }
  return false;
}

inline constexpr std::string_view kClassification = "synthetic omniglot";
inline constexpr std::string_view kSupervised = "synthetic omniglot sinusoid";

inline const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"method", "", [](const C& c) { return c.method; },
                 [](C& c, std::string_view v) -> std::optional<std::string> {
                   try {
                     parse_method(v);
                   } catch (const std::invalid_argument& e) {
                     return std::string(e.what()).substr(8);
                   }
                   c.method = std::string(v);
                   return std::nullopt;
                 }});
    f.push_back(choice("task_distribution", "", &C::task_distribution,
                       {"synthetic", "sinusoid", "navigation", "omniglot"}));
    f.push_back(integer<std::size_t>("N", kClassification, &C::ways, 2, 1000));
    f.push_back(integer<std::size_t>("K", kSupervised, &C::shots, 1, 1000));
    f.push_back(integer<std::size_t>("Q", kSupervised, &C::query, 1, 1000));
    f.push_back(integer<std::size_t>("query_test", kSupervised, &C::query_test, 1, 1000));
    f.push_back(integer<std::size_t>("M", "", &C::meta_batch, 1, 4096));
    f.push_back(real("alpha", "", &C::alpha, 0.0, 100.0));
    f.push_back(real("beta", "", &C::beta, 0.0, 100.0));
    f.push_back(choice("optimizer", "", &C::optimizer, {"sgd", "adam"}));
    f.push_back(real("lambda", "", &C::lambda, 0.0, 1e6));
    f.push_back(integer<std::size_t>("inner_steps_train", "", &C::inner_steps_train, 1, 100));
    f.push_back(integer<std::size_t>("inner_steps_test", "", &C::inner_steps_test, 0, 1000));
    f.push_back(integer<std::int64_t>("meta_iterations", "", &C::meta_iterations, 0, 100000000));
    f.push_back(integer<std::size_t>("test_tasks", "", &C::test_tasks, 1, 1000000));
    f.push_back(integer<std::uint64_t>("seed", "", &C::seed, 0, UINT64_MAX));
    f.push_back(integer<std::int64_t>("checkpoint_every", "", &C::checkpoint_every, 0, 100000000));
    f.push_back(text("output_dir", "", &C::output_dir));
    f.push_back({"hidden", "",
                 [](const C& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.hidden.size(); ++i) s += (i ? "," : "") + std::to_string(c.hidden[i]);
                   return s;
                 },
                 [](C& c, std::string_view v) -> std::optional<std::string> {
                   std::vector<std::size_t> sizes;
                   for (auto part : split(v, ',')) {
                     const auto x = parse_int<std::size_t>(part);
                     if (!x || *x == 0 || *x > 100000) {
                       return "expected comma-separated layer widths >= 1, got '" + std::string(v) + "'";
                     }
                     sizes.push_back(*x);
                   }
                   c.hidden = std::move(sizes);
                   return std::nullopt;
                 }});
    f.push_back(choice("activation", "", &C::activation, {"leaky_relu", "relu"}));
    f.push_back(real("leaky_slope", "", &C::leaky_slope, 0.0, 1.0));
    f.push_back(choice("entropy_samples", kClassification, &C::entropy_samples, {"support", "query"}));
    f.push_back(flag("log_wall_time", "", &C::log_wall_time));

    f.push_back(integer<std::size_t>("feature_dim", "synthetic", &C::feature_dim, 1, 100000));
    f.push_back(real("cluster_spread", "synthetic", &C::cluster_spread, 0.0, 1e6, true));
    f.push_back({"difficulty_mix", "synthetic",
                 [](const C& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.difficulty_mix.size(); ++i) {
                     s += (i ? "," : "") + format_double(c.difficulty_mix[i].spread_multiplier) + ":" +
                          format_double(c.difficulty_mix[i].weight);
                   }
                   return s;
                 },
                 [](C& c, std::string_view v) -> std::optional<std::string> {
                   std::vector<tasks::DifficultyComponent> mix;
                   for (auto part : split(v, ',')) {
                     const auto colon = part.find(':');
                     if (colon == std::string_view::npos) return "expected multiplier:weight pairs, got '" + std::string(part) + "'";
                     const auto m = parse_double(part.substr(0, colon));
                     const auto w = parse_double(part.substr(colon + 1));
                     if (!m || !w || !(*m > 0.0) || !(*w > 0.0) || !std::isfinite(*m) || !std::isfinite(*w)) {
                       return "multiplier and weight must be finite and > 0, got '" + std::string(part) + "'";
                     }
                     mix.push_back({*m, *w});
                   }
                   double total = 0.0;
                   for (const auto& c : mix) total += c.weight;
                   if (std::fabs(total - 1.0) > 1e-9) return "weights must sum to 1, got " + format_double(total);
                   c.difficulty_mix = std::move(mix);
                   return std::nullopt;
                 }});

    f.push_back(real("amplitude_min", "sinusoid", &C::amplitude_min, 0.0, 1e6));
    f.push_back(real("amplitude_max", "sinusoid", &C::amplitude_max, 0.0, 1e6));
    f.push_back(real("phase_min", "sinusoid", &C::phase_min, -1e6, 1e6));
    f.push_back(real("phase_max", "sinusoid", &C::phase_max, -1e6, 1e6));
    f.push_back(real("x_min", "sinusoid", &C::x_min, -1e6, 1e6));
    f.push_back(real("x_max", "sinusoid", &C::x_max, -1e6, 1e6));

    f.push_back(integer<std::size_t>("horizon", "navigation", &C::horizon, 1, 100000));
    f.push_back(real("action_clip", "navigation", &C::action_clip, 0.0, 1e6, true));
    f.push_back(real("goal_radius", "navigation", &C::goal_radius, 0.0, 1e6));
    f.push_back(integer<std::size_t>("trajectories", "navigation", &C::trajectories, 1, 100000));
    f.push_back(real("policy_stddev", "navigation", &C::policy_stddev, 0.0, 1e6, true));

    f.push_back(text("omniglot_root", "omniglot", &C::omniglot_root));
    f.push_back(integer<std::size_t>("image_side", "omniglot", &C::image_side, 1, 1024));
    f.push_back(flag("rotations", "omniglot", &C::rotations));
    f.push_back(integer<std::size_t>("train_characters", "omniglot", &C::train_characters, 1, 1000000));
    f.push_back(integer<std::size_t>("val_characters", "omniglot", &C::val_characters, 0, 1000000));
    return f;
  }();
  return table;
}

inline const Field* find_field(std::string_view key) {
  for (const auto& f : fields()) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

// Defaults that depend on other keys, applied only to keys absent from the file.
inline void derive_defaults(ExperimentConfig& c, const std::set<std::string, std::less<>>& given) {
  const bool classification = c.task_distribution == "synthetic" || c.task_distribution == "omniglot";
  // Sinusoid K and Q count points, classification K and Q count per class.
  if (c.task_distribution == "sinusoid") {
    if (!given.contains("K")) c.shots = 10;
    if (!given.contains("Q")) c.query = 10;
  } else if (!given.contains("Q")) {
    c.query = c.shots;
  }
  if (!given.contains("M")) c.meta_batch = classification ? (c.ways >= 20 ? 16 : 32) : 20;
  if (!given.contains("hidden")) {
    if (c.task_distribution == "sinusoid") {
      c.hidden = {40, 40};
    } else if (c.task_distribution == "navigation") {
      c.hidden = {100, 100};
    }
  }
  // The policy-gradient surrogate sums log-probabilities times returns over the
  // whole horizon, so its gradient is several orders larger than a supervised
  // loss gradient; larger steps overshoot after one or two updates.
  if (!given.contains("alpha") && c.task_distribution == "navigation") c.alpha = 5e-6;
}

inline std::vector<std::string> cross_check(const ExperimentConfig& c) {
  std::vector<std::string> d;
  Method m;
  try {
    m = c.parsed_method();
  } catch (const std::invalid_argument& e) {
    d.push_back(e.what());
    return d;
  }
  if (m.kind == objectives::Kind::Inequality && c.meta_batch < 2) {
    d.push_back("M: inequality methods need M >= 2 tasks per meta-batch, got " + std::to_string(c.meta_batch));
  }
  const bool entropy = m.kind == objectives::Kind::EntropyReduction || m.kind == objectives::Kind::EntropyMaxOnly;
  if (entropy && c.task_distribution != "synthetic" && c.task_distribution != "omniglot") {
    d.push_back("method: entropy methods need a classification task_distribution, got " + c.task_distribution);
  }
  if (c.task_distribution == "navigation" && !m.first_order) {
    d.push_back("method: navigation meta-gradients are first-order only; use maml-first-order or append +first-order");
  }
  if (c.task_distribution == "sinusoid") {
    if (c.amplitude_min > c.amplitude_max) d.push_back("amplitude_min: must be <= amplitude_max");
    if (c.phase_min > c.phase_max) d.push_back("phase_min: must be <= phase_max");
    if (!(c.x_min < c.x_max)) d.push_back("x_min: must be < x_max");
  }
  if (c.task_distribution == "omniglot" && c.omniglot_root.empty()) {
    d.push_back("omniglot_root: required when task_distribution = omniglot");
  }
  return d;
}

}  // namespace detail

struct ParsedConfig {
  ExperimentConfig config;
  // Keys present in the source text, in file order.
  std::vector<std::string> given;
};

/// Parses and validates. Throws ConfigError listing every bad line.
inline ParsedConfig parse_config(std::string_view text) {
  // First pass: find task_distribution so scoped keys can be checked.
  std::string dist = "synthetic";
  std::vector<std::pair<std::size_t, std::pair<std::string, std::string>>> entries;
  std::vector<std::string> diags;
  std::size_t line_no = 0;
  for (auto raw : detail::raw_lines(text)) {
    ++line_no;
    const auto line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      diags.push_back("line " + std::to_string(line_no) + ": expected 'key = value', got '" + std::string(line) + "'");
      continue;
    }
    std::string key(detail::trim(line.substr(0, eq)));
    std::string value(detail::trim(line.substr(eq + 1)));
    if (key == "task_distribution") dist = value;
    entries.push_back({line_no, {std::move(key), std::move(value)}});
  }

  ParsedConfig out;
  std::set<std::string, std::less<>> seen;
  for (const auto& [ln, kv] : entries) {
    const auto& [key, value] = kv;
    const std::string where = "line " + std::to_string(ln) + ": " + key + ": ";
    const auto* f = detail::find_field(key);
    if (!f) {
      diags.push_back(where + "unknown key");
      continue;
    }
    if (!seen.insert(key).second) {
      diags.push_back(where + "duplicate key");
      continue;
    }
    if (!detail::in_scope(f->scope, dist)) {
      diags.push_back(where + "not valid with task_distribution = " + dist);
      continue;
    }
    if (auto err = f->set(out.config, value)) diags.push_back(where + *err);
    out.given.push_back(key);
  }
  if (!diags.empty()) throw ConfigError(std::move(diags));
  detail::derive_defaults(out.config, seen);
  auto cross = detail::cross_check(out.config);
  if (!cross.empty()) throw ConfigError(std::move(cross));
  return out;
}

inline bool applies(const detail::Field& f, const ExperimentConfig& c) {
  return detail::in_scope(f.scope, c.task_distribution);
}

/// `key = value` for every key that applies to the config, in table order.
inline std::string canonical_text(const ExperimentConfig& c) {
  std::string s;
  for (const auto& f : detail::fields()) {
    if (applies(f, c)) s += std::string(f.key) + " = " + f.get(c) + "\n";
  }
  return s;
}

/// The source text verbatim followed by every applicable key it did not set.
inline std::string resolved_text(std::string_view source, const ParsedConfig& p) {
  std::string s(source);
  std::string tail;
  for (const auto& f : detail::fields()) {
    if (!applies(f, p.config)) continue;
    bool given = false;
    for (const auto& g : p.given) given = given || g == f.key;
    if (!given) tail += std::string(f.key) + " = " + f.get(p.config) + "\n";
  }
  if (tail.empty()) return s;
  if (!s.empty() && s.back() != '\n') s += '\n';
  return s + "# resolved defaults\n" + tail;
}

/// Rewrites (or appends) one key in config text, leaving other lines as-is.
inline std::string override_key(std::string_view source, std::string_view key, std::string_view value) {
  std::string out;
  bool replaced = false;
  const auto lines = detail::raw_lines(source);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = detail::trim(lines[i]);
    const auto eq = line.find('=');
    if (!line.empty() && line.front() != '#' && eq != std::string_view::npos && detail::trim(line.substr(0, eq)) == key) {
      out += std::string(key) + " = " + std::string(value);
      replaced = true;
    } else {
      out += lines[i];
    }
    if (i + 1 < lines.size()) out += '\n';
  }
  if (!replaced) {
    if (!out.empty() && out.back() != '\n') out += '\n';
    out += std::string(key) + " = " + std::string(value) + "\n";
  }
  return out;
}

}  // namespace taml::run
