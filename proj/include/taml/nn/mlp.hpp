#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "taml/autodiff.hpp"
#include "taml/rng.hpp"

namespace taml::nn {

using ad::Matrix;
using ad::Shape;
using ad::Tape;
using ad::Variable;

enum class Activation { LeakyRelu, Relu };
enum class Head { SoftmaxClassifier, LinearRegressor, GaussianPolicy };

inline const char* to_string(Activation a) { return a == Activation::Relu ? "relu" : "leaky_relu"; }

inline const char* to_string(Head h) {
  switch (h) {
    case Head::SoftmaxClassifier: return "softmax_classifier";
    case Head::LinearRegressor: return "linear_regressor";
    case Head::GaussianPolicy: return "gaussian_policy";
  }
  return "unknown";
}

/// Fully connected network. `layer_sizes` runs from input width to output
/// width, so {8, 32, 5} has one hidden layer of 32 units.
struct MlpSpec {
  std::vector<std::size_t> layer_sizes;
  Activation activation = Activation::LeakyRelu;
  double leaky_slope = 0.01;
  Head head = Head::SoftmaxClassifier;
  double policy_stddev = 0.1;

  bool operator==(const MlpSpec&) const = default;

  void validate() const {
    if (layer_sizes.size() < 3) throw std::invalid_argument("MlpSpec: at least one hidden layer is required");
    for (std::size_t s : layer_sizes) {
      if (s == 0) throw std::invalid_argument("MlpSpec: layer sizes must be >= 1");
    }
    if (head == Head::GaussianPolicy && !(policy_stddev > 0.0)) {
      throw std::invalid_argument("MlpSpec: gaussian_policy stddev must be > 0");
    }
    if (!std::isfinite(leaky_slope)) throw std::invalid_argument("MlpSpec: leaky slope must be finite");
  }

  std::size_t num_layers() const { return layer_sizes.size() - 1; }
  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t output_dim() const { return layer_sizes.back(); }
  double hidden_slope() const { return activation == Activation::Relu ? 0.0 : leaky_slope; }

  /// Layer-major, weights (in x out, row-major) before biases (1 x out).
  std::vector<Shape> parameter_shapes() const {
    std::vector<Shape> shapes;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
      shapes.push_back({layer_sizes[l], layer_sizes[l + 1]});
      shapes.push_back({1, layer_sizes[l + 1]});
    }
    return shapes;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) n += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
    return n;
  }
};

inline std::vector<double> flatten(std::span<const Matrix> tensors) {
  std::vector<double> flat;
  for (const Matrix& m : tensors) flat.insert(flat.end(), m.values().begin(), m.values().end());
  return flat;
}

inline std::vector<Matrix> unflatten(std::span<const Shape> shapes, std::span<const double> flat) {
  std::size_t expected = 0;
  for (const Shape& s : shapes) expected += s.size();
  if (expected != flat.size()) {
    throw std::invalid_argument("unflatten: expected " + std::to_string(expected) + " values, got " +
                                std::to_string(flat.size()));
  }
  std::vector<Matrix> out;
  std::size_t offset = 0;
  for (const Shape& s : shapes) {
    out.emplace_back(s.rows, s.cols, std::vector<double>(flat.begin() + offset, flat.begin() + offset + s.size()));
    offset += s.size();
  }
  return out;
}

inline std::vector<Matrix> unflatten(const MlpSpec& spec, std::span<const double> flat) {
  const auto shapes = spec.parameter_shapes();
  return unflatten(shapes, flat);
}

inline std::vector<Matrix> zero_params(const MlpSpec& spec) {
  std::vector<Matrix> out;
  for (const Shape& s : spec.parameter_shapes()) out.emplace_back(s);
  return out;
}

/// Glorot-uniform weights, zero biases.
inline std::vector<Matrix> init_params(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  std::vector<Matrix> out;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const std::size_t fan_in = spec.layer_sizes[l], fan_out = spec.layer_sizes[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Matrix w(fan_in, fan_out);
    for (double& v : w.values()) v = u(rng);
    out.push_back(std::move(w));
    out.emplace_back(1, fan_out);
  }
  return out;
}

inline std::vector<Variable> leaves(Tape& tape, std::span<const Matrix> tensors, bool requires_grad = true) {
  std::vector<Variable> out;
  out.reserve(tensors.size());
  for (const Matrix& m : tensors) out.push_back(tape.leaf(m, requires_grad));
  return out;
}

inline std::vector<Matrix> values(std::span<const Variable> vars) {
  std::vector<Matrix> out;
  out.reserve(vars.size());
  for (const Variable& v : vars) out.push_back(v.value());
  return out;
}

/// Network output for a batch of row inputs: logits, regression outputs or
/// policy means depending on the head. Works on plain matrices and on tape
/// variables alike.
template <class T>
T forward(const MlpSpec& spec, std::span<const T> params, const T& input) {
  if (ad::value_of(input).cols() != spec.input_dim()) {
    throw std::invalid_argument("forward: input width " + std::to_string(ad::value_of(input).cols()) +
                                " does not match layer_sizes[0] = " + std::to_string(spec.input_dim()));
  }
  if (params.size() != 2 * spec.num_layers()) {
    throw std::invalid_argument("forward: expected " + std::to_string(2 * spec.num_layers()) +
                                " parameter tensors, got " + std::to_string(params.size()));
  }
  const std::size_t rows = ad::value_of(input).rows();
  T h = input;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    h = ad::add(ad::matmul(h, params[2 * l]), ad::broadcast_rows(params[2 * l + 1], rows));
    if (l + 1 < spec.num_layers()) h = ad::leaky_relu(h, spec.hidden_slope());
  }
  return h;
}

inline Matrix forward(const MlpSpec& spec, const std::vector<Matrix>& params, const Matrix& input) {
  return forward<Matrix>(spec, std::span<const Matrix>(params), input);
}

inline Variable forward(const MlpSpec& spec, const std::vector<Variable>& params, const Variable& input) {
  return forward<Variable>(spec, std::span<const Variable>(params), input);
}

}  // namespace taml::nn
