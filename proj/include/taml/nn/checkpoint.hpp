#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "taml/format.hpp"
#include "taml/nn/mlp.hpp"

namespace taml::nn {

/// Parameter checkpoint, plain text, version 1:
///
///   taml-checkpoint 1
///   layer_sizes <n0> <n1> ... <nL>
///   activation <leaky_relu|relu>
///   leaky_slope <double>
///   head <softmax_classifier|linear_regressor|gaussian_policy>
///   policy_stddev <double>
///   iteration <int>
///   seed <uint>
///   theta <count>
///   <one double per line, flat layer-major layout, weights before biases>
///   alphas <count>          (0 when there are no learned step sizes)
///   <one double per line>
///   end
///
/// Doubles use the shortest decimal form that round-trips exactly.
struct Checkpoint {
  MlpSpec spec;
  std::vector<Matrix> theta;
  std::optional<std::vector<Matrix>> alphas;
  std::int64_t iteration = 0;
  std::uint64_t seed = 0;

  bool operator==(const Checkpoint&) const = default;
};

inline constexpr int kCheckpointVersion = 1;

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  os << "taml-checkpoint " << kCheckpointVersion << '\n';
  os << "layer_sizes";
  for (std::size_t s : ck.spec.layer_sizes) os << ' ' << s;
  os << '\n';
  os << "activation " << to_string(ck.spec.activation) << '\n';
  os << "leaky_slope " << format_double(ck.spec.leaky_slope) << '\n';
  os << "head " << to_string(ck.spec.head) << '\n';
  os << "policy_stddev " << format_double(ck.spec.policy_stddev) << '\n';
  os << "iteration " << ck.iteration << '\n';
  os << "seed " << ck.seed << '\n';
  const auto theta = flatten(ck.theta);
  os << "theta " << theta.size() << '\n';
  for (double v : theta) os << format_double(v) << '\n';
  if (ck.alphas) {
    const auto alphas = flatten(*ck.alphas);
    os << "alphas " << alphas.size() << '\n';
    for (double v : alphas) os << format_double(v) << '\n';
  } else {
    os << "alphas 0\n";
  }
  os << "end\n";
}

namespace detail {

class LineReader {
 public:
  explicit LineReader(std::istream& is) : is_(is) {}

  std::string next() {
    std::string line;
    if (!std::getline(is_, line)) throw std::runtime_error("checkpoint: unexpected end of file at line " + std::to_string(n_ + 1));
    ++n_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  }

  /// Reads "<key> <rest>" and returns rest.
  std::string field(const std::string& key) {
    const std::string line = next();
    if (line.rfind(key + " ", 0) != 0 && line != key) fail("expected '" + key + "'");
    return line.size() > key.size() ? line.substr(key.size() + 1) : std::string{};
  }

  double number() {
    const std::string line = next();
    auto v = parse_double(line);
    if (!v) fail("bad number '" + line + "'");
    return *v;
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw std::runtime_error("checkpoint line " + std::to_string(n_) + ": " + why);
  }

 private:
  std::istream& is_;
  std::size_t n_ = 0;
};

inline std::vector<double> read_values(LineReader& r, const std::string& key) {
  auto count = parse_int<std::size_t>(r.field(key));
  if (!count) r.fail("bad count for " + key);
  std::vector<double> v(*count);
  for (double& x : v) x = r.number();
  return v;
}

}  // namespace detail

inline Checkpoint read_checkpoint(std::istream& is) {
  detail::LineReader r(is);
  Checkpoint ck;
  if (r.field("taml-checkpoint") != std::to_string(kCheckpointVersion)) r.fail("unsupported checkpoint version");
  {
    std::istringstream sizes(r.field("layer_sizes"));
    std::size_t s = 0;
    while (sizes >> s) ck.spec.layer_sizes.push_back(s);
  }
  const std::string act = r.field("activation");
  if (act == "relu") {
    ck.spec.activation = Activation::Relu;
  } else if (act == "leaky_relu") {
    ck.spec.activation = Activation::LeakyRelu;
  } else {
    r.fail("unknown activation '" + act + "'");
  }
  auto slope = parse_double(r.field("leaky_slope"));
  if (!slope) r.fail("bad leaky_slope");
  ck.spec.leaky_slope = *slope;
  const std::string head = r.field("head");
  if (head == "softmax_classifier") {
    ck.spec.head = Head::SoftmaxClassifier;
  } else if (head == "linear_regressor") {
    ck.spec.head = Head::LinearRegressor;
  } else if (head == "gaussian_policy") {
    ck.spec.head = Head::GaussianPolicy;
  } else {
    r.fail("unknown head '" + head + "'");
  }
  auto sd = parse_double(r.field("policy_stddev"));
  if (!sd) r.fail("bad policy_stddev");
  ck.spec.policy_stddev = *sd;
  auto it = parse_int<std::int64_t>(r.field("iteration"));
  if (!it) r.fail("bad iteration");
  ck.iteration = *it;
  auto seed = parse_int<std::uint64_t>(r.field("seed"));
  if (!seed) r.fail("bad seed");
  ck.seed = *seed;
  ck.spec.validate();

  const auto shapes = ck.spec.parameter_shapes();
  const auto theta = detail::read_values(r, "theta");
  ck.theta = unflatten(shapes, theta);
  const auto alphas = detail::read_values(r, "alphas");
  if (!alphas.empty()) ck.alphas = unflatten(shapes, alphas);
  r.field("end");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  write_checkpoint(os, ck);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read checkpoint " + path.string());
  return read_checkpoint(is);
}

}  // namespace taml::nn
