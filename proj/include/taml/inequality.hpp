#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "taml/autodiff.hpp"

/// Economic inequality indices over a batch of per-task losses. Every
/// function is generic over the scalar type: plain doubles for reporting, or
/// 1x1 tape variables when the index is part of a training objective.
namespace taml::inequality {

/// Losses below this are raised to it before any log or ratio is taken.
inline constexpr double kDefaultFloor = 1e-8;

enum class Kind { Theil, GeneralizedEntropy, Atkinson, Gini, VarianceOfLogarithms };

struct Measure {
  Kind kind = Kind::Theil;
  // Exponent for GeneralizedEntropy, inequality aversion for Atkinson.
  double parameter = 0.0;

  static Measure theil() { return {Kind::Theil, 0.0}; }
  static Measure generalized_entropy(double exponent) { return {Kind::GeneralizedEntropy, exponent}; }
  static Measure atkinson(double aversion) { return {Kind::Atkinson, aversion}; }
  static Measure gini() { return {Kind::Gini, 0.0}; }
  static Measure variance_of_logarithms() { return {Kind::VarianceOfLogarithms, 0.0}; }

  bool operator==(const Measure&) const = default;
};

namespace detail {

inline double scalar_value(double x) { return x; }
inline double scalar_value(const ad::Variable& x) { return x.item(); }

inline double log_of(double x) { return std::log(x); }
inline ad::Variable log_of(const ad::Variable& x) { return ad::log(x); }
inline double exp_of(double x) { return std::exp(x); }
inline ad::Variable exp_of(const ad::Variable& x) { return ad::exp(x); }
inline double pow_of(double x, double p) { return std::pow(x, p); }
inline ad::Variable pow_of(const ad::Variable& x, double p) { return ad::pow(x, p); }
inline double abs_of(double x) { return std::fabs(x); }
inline ad::Variable abs_of(const ad::Variable& x) { return ad::abs(x); }
inline double floor_of(double x, double floor) { return x > floor ? x : floor; }
inline ad::Variable floor_of(const ad::Variable& x, double floor) { return ad::clamp_min(x, floor); }

inline void require_batch(std::size_t m, const char* who) {
  if (m < 2) {
    throw std::invalid_argument(std::string(who) + ": at least 2 losses are required, got " + std::to_string(m));
  }
}

template <class T>
T total(std::span<const T> xs) {
  T acc = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) acc = acc + xs[i];
  return acc;
}

template <class T>
T average(std::span<const T> xs) {
  return total(xs) * (1.0 / static_cast<double>(xs.size()));
}

template <class T>
std::vector<T> floored(std::span<const T> losses, double floor) {
  std::vector<T> out;
  out.reserve(losses.size());
  for (const T& l : losses) {
    if (!std::isfinite(scalar_value(l))) throw std::invalid_argument("inequality measure: non-finite loss");
    out.push_back(floor_of(l, floor));
  }
  return out;
}

template <class T>
std::vector<T> relative_to_mean(std::span<const T> xs) {
  const T inv_mean = pow_of(average(xs), -1.0);
  std::vector<T> out;
  out.reserve(xs.size());
  for (const T& x : xs) out.push_back(x * inv_mean);
  return out;
}

}  // namespace detail

/// (1/M) sum (l_i / mean) ln(l_i / mean)
template <class T>
T theil(std::span<const T> losses, double floor = kDefaultFloor) {
  detail::require_batch(losses.size(), "theil");
  const auto l = detail::floored(losses, floor);
  const auto r = detail::relative_to_mean<T>(l);
  std::vector<T> terms;
  for (const T& ri : r) terms.push_back(ri * detail::log_of(ri));
  return detail::average<T>(terms);
}

/// GE(exponent); exponent 1 is Theil, exponent 0 is the mean log deviation.
template <class T>
T generalized_entropy(std::span<const T> losses, double exponent, double floor = kDefaultFloor) {
  detail::require_batch(losses.size(), "generalized_entropy");
  if (!std::isfinite(exponent)) throw std::invalid_argument("generalized_entropy: exponent must be finite");
  if (exponent == 1.0) return theil(losses, floor);
  const auto l = detail::floored(losses, floor);
  const auto r = detail::relative_to_mean<T>(l);
  std::vector<T> terms;
  if (exponent == 0.0) {
    for (const T& ri : r) terms.push_back(detail::log_of(ri));
    return detail::average<T>(terms) * -1.0;
  }
  for (const T& ri : r) terms.push_back(detail::pow_of(ri, exponent) - 1.0);
  return detail::average<T>(terms) * (1.0 / (exponent * (exponent - 1.0)));
}

/// 1 - (generalized mean of order 1 - aversion) / arithmetic mean. The
/// aversion = 1 case uses the geometric mean, computed as exp(mean log).
template <class T>
T atkinson(std::span<const T> losses, double aversion, double floor = kDefaultFloor) {
  detail::require_batch(losses.size(), "atkinson");
  if (!(aversion >= 0.0)) throw std::invalid_argument("atkinson: aversion must be >= 0");
  const auto l = detail::floored(losses, floor);
  const T mean = detail::average<T>(l);
  std::vector<T> terms;
  if (aversion == 1.0) {
    for (const T& li : l) terms.push_back(detail::log_of(li));
    const T geometric = detail::exp_of(detail::average<T>(terms));
    return 1.0 - geometric * detail::pow_of(mean, -1.0);
  }
  const double order = 1.0 - aversion;
  for (const T& li : l) terms.push_back(detail::pow_of(li, order));
  const T generalized = detail::pow_of(detail::average<T>(terms), 1.0 / order);
  return 1.0 - generalized * detail::pow_of(mean, -1.0);
}

/// sum_i sum_j |l_i - l_j| / (2 M sum_i l_i)
template <class T>
T gini(std::span<const T> losses, double floor = kDefaultFloor) {
  detail::require_batch(losses.size(), "gini");
  bool all_zero = true;
  for (const T& l : losses) all_zero = all_zero && detail::scalar_value(l) == 0.0;
  if (all_zero) throw std::invalid_argument("gini: all losses are zero");
  const auto l = detail::floored(losses, floor);
  const std::size_t m = l.size();
  std::vector<T> diffs;
  diffs.reserve(m * (m - 1) / 2);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) diffs.push_back(detail::abs_of(l[i] - l[j]));
  // Each unordered pair appears twice in the double sum.
  const T pair_sum = detail::total<T>(diffs) * 2.0;
  return pair_sum * detail::pow_of(detail::total<T>(l), -1.0) * (1.0 / (2.0 * static_cast<double>(m)));
}

/// Population variance of ln l_i, i.e. (1/M) sum (ln l_i - ln g)^2 with g
/// the geometric mean.
template <class T>
T variance_of_logarithms(std::span<const T> losses, double floor = kDefaultFloor) {
  detail::require_batch(losses.size(), "variance_of_logarithms");
  const auto l = detail::floored(losses, floor);
  std::vector<T> logs;
  for (const T& li : l) logs.push_back(detail::log_of(li));
  const T log_geometric = detail::average<T>(logs);
  std::vector<T> terms;
  for (const T& lg : logs) {
    const T d = lg - log_geometric;
    terms.push_back(d * d);
  }
  return detail::average<T>(terms);
}

template <class T>
T measure(const Measure& m, std::span<const T> losses, double floor = kDefaultFloor) {
  switch (m.kind) {
    case Kind::Theil: return theil(losses, floor);
    case Kind::GeneralizedEntropy: return generalized_entropy(losses, m.parameter, floor);
    case Kind::Atkinson: return atkinson(losses, m.parameter, floor);
    case Kind::Gini: return gini(losses, floor);
    case Kind::VarianceOfLogarithms: return variance_of_logarithms(losses, floor);
  }
  throw std::invalid_argument("measure: unknown kind");
}

// Non-template conveniences so brace-initialised vectors bind directly.
inline double theil(const std::vector<double>& l, double floor = kDefaultFloor) {
  return theil(std::span<const double>(l), floor);
}
inline double generalized_entropy(const std::vector<double>& l, double exponent, double floor = kDefaultFloor) {
  return generalized_entropy(std::span<const double>(l), exponent, floor);
}
inline double atkinson(const std::vector<double>& l, double aversion, double floor = kDefaultFloor) {
  return atkinson(std::span<const double>(l), aversion, floor);
}
inline double gini(const std::vector<double>& l, double floor = kDefaultFloor) {
  return gini(std::span<const double>(l), floor);
}
inline double variance_of_logarithms(const std::vector<double>& l, double floor = kDefaultFloor) {
  return variance_of_logarithms(std::span<const double>(l), floor);
}
inline double measure(const Measure& m, const std::vector<double>& l, double floor = kDefaultFloor) {
  return measure(m, std::span<const double>(l), floor);
}

}  // namespace taml::inequality
