#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "taml/autodiff/matrix.hpp"
#include "taml/rng.hpp"

namespace taml::tasks {

using ad::Matrix;

struct RegressionTask {
  Matrix support_x;  // shots x 1
  Matrix support_y;
  Matrix query_x;    // query x 1
  Matrix query_y;
  double amplitude = 0.0;
  double phase = 0.0;
};

struct SinusoidSpec {
  std::size_t shots = 10;
  std::size_t query = 10;
  double amplitude_min = 0.1;
  double amplitude_max = 5.0;
  double phase_min = 0.0;
  double phase_max = std::numbers::pi;
  double x_min = -5.0;
  double x_max = 5.0;

  void validate() const {
    if (shots == 0 || query == 0) throw std::invalid_argument("sinusoid: shots and query must be >= 1");
    if (!(amplitude_min <= amplitude_max) || !(phase_min <= phase_max) || !(x_min < x_max)) {
      throw std::invalid_argument("sinusoid: empty parameter range");
    }
  }

  bool operator==(const SinusoidSpec&) const = default;
};

inline double sinusoid(double amplitude, double phase, double x) { return amplitude * std::sin(x + phase); }

inline RegressionTask sinusoid_task(const SinusoidSpec& spec, Rng& rng) {
  spec.validate();
  std::uniform_real_distribution<double> amp(spec.amplitude_min, spec.amplitude_max);
  std::uniform_real_distribution<double> phase(spec.phase_min, spec.phase_max);
  std::uniform_real_distribution<double> xs(spec.x_min, spec.x_max);
  RegressionTask t;
  t.amplitude = amp(rng);
  t.phase = phase(rng);
  auto fill = [&](Matrix& x, Matrix& y, std::size_t n) {
    x = Matrix(n, 1);
    y = Matrix(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = xs(rng);
      y[i] = sinusoid(t.amplitude, t.phase, x[i]);
    }
  };
  fill(t.support_x, t.support_y, spec.shots);
  fill(t.query_x, t.query_y, spec.query);
  return t;
}

}  // namespace taml::tasks
