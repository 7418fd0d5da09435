#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace taml::ad {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << rows << 'x' << cols;
    return os.str();
  }
};

/// Dense row-major matrix of doubles. Scalars are 1x1.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
      throw std::invalid_argument("Matrix: data length " + std::to_string(data_.size()) +
                                  " does not match shape " + shape().str());
    }
  }
  explicit Matrix(Shape s, double fill = 0.0) : Matrix(s.rows, s.cols, fill) {}

  static Matrix scalar(double v) { return Matrix(1, 1, v); }
  static Matrix column(std::vector<double> v) {
    const auto n = v.size();
    return Matrix(n, 1, std::move(v));
  }
  static Matrix row(std::vector<double> v) {
    const auto n = v.size();
    return Matrix(1, n, std::move(v));
  }
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw std::invalid_argument("Matrix::from_rows: ragged rows");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  Shape shape() const { return {rows_, cols_}; }
  bool is_scalar() const { return rows_ == 1 && cols_ == 1; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double item() const {
    if (!is_scalar()) throw std::logic_error("Matrix::item on non-scalar " + shape().str());
    return data_[0];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& vec() const { return data_; }

  Matrix row_slice(std::size_t r) const {
    return Matrix(1, cols_, std::vector<double>(data_.begin() + r * cols_, data_.begin() + (r + 1) * cols_));
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Numeric kernels. These share names with the Variable overloads so that
// templated code (forward passes, vector-Jacobian products) works on both.

namespace detail {
inline void require_same(const char* op, const Matrix& a, const Matrix& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                                b.shape().str());
  }
}
template <class F>
Matrix map(const Matrix& a, F f) {
  Matrix out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}
template <class F>
Matrix zip(const char* op, const Matrix& a, const Matrix& b, F f) {
  require_same(op, a, b);
  Matrix out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}
}  // namespace detail

inline Matrix add(const Matrix& a, const Matrix& b) {
  return detail::zip("add", a, b, [](double x, double y) { return x + y; });
}
inline Matrix sub(const Matrix& a, const Matrix& b) {
  return detail::zip("sub", a, b, [](double x, double y) { return x - y; });
}
inline Matrix mul(const Matrix& a, const Matrix& b) {
  return detail::zip("mul", a, b, [](double x, double y) { return x * y; });
}
inline Matrix scale(const Matrix& a, double c) {
  return detail::map(a, [c](double x) { return x * c; });
}
inline Matrix add_scalar(const Matrix& a, double c) {
  return detail::map(a, [c](double x) { return x + c; });
}
inline Matrix pow(const Matrix& a, double p) {
  return detail::map(a, [p](double x) { return std::pow(x, p); });
}
inline Matrix exp(const Matrix& a) {
  return detail::map(a, [](double x) { return std::exp(x); });
}
inline Matrix log(const Matrix& a) {
  return detail::map(a, [](double x) { return std::log(x); });
}
inline Matrix abs(const Matrix& a) {
  return detail::map(a, [](double x) { return std::fabs(x); });
}
inline Matrix leaky_relu(const Matrix& a, double slope) {
  return detail::map(a, [slope](double x) { return x > 0.0 ? x : slope * x; });
}
inline Matrix clamp_min(const Matrix& a, double floor) {
  return detail::map(a, [floor](double x) { return x > floor ? x : floor; });
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
  Matrix out(a.rows(), b.cols());
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = out.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      if (av == 0.0) continue;
      const double* brow = b.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

inline Matrix sum(const Matrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return Matrix::scalar(s);
}

/// Column sums: rows x cols -> 1 x cols.
inline Matrix sum_rows(const Matrix& a) {
  Matrix out(1, a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(0, j) += a(i, j);
  return out;
}

/// Row sums: rows x cols -> rows x 1.
inline Matrix sum_cols(const Matrix& a) {
  Matrix out(a.rows(), 1);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j);
    out(i, 0) = s;
  }
  return out;
}

inline Matrix broadcast(const Matrix& a, Shape to) {
  if (!a.is_scalar()) throw std::invalid_argument("broadcast: input must be 1x1, got " + a.shape().str());
  return Matrix(to, a[0]);
}

/// 1 x cols -> rows x cols.
inline Matrix broadcast_rows(const Matrix& a, std::size_t rows) {
  if (a.rows() != 1) throw std::invalid_argument("broadcast_rows: input must be 1xN, got " + a.shape().str());
  Matrix out(rows, a.cols());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(0, j);
  return out;
}

/// rows x 1 -> rows x cols.
inline Matrix broadcast_cols(const Matrix& a, std::size_t cols) {
  if (a.cols() != 1) throw std::invalid_argument("broadcast_cols: input must be Nx1, got " + a.shape().str());
  Matrix out(a.rows(), cols);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < cols; ++j) out(i, j) = a(i, 0);
  return out;
}

/// Per-row maximum, rows x cols -> rows x 1.
inline Matrix row_max(const Matrix& a) {
  Matrix out(a.rows(), 1);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double m = a(i, 0);
    for (std::size_t j = 1; j < a.cols(); ++j) m = std::max(m, a(i, j));
    out(i, 0) = m;
  }
  return out;
}

/// Pass-through for plain values; the Variable overload severs the graph.
inline const Matrix& stop_gradient(const Matrix& a) { return a; }
inline const Matrix& value_of(const Matrix& a) { return a; }
inline Matrix lift(const Matrix& /*like*/, Matrix m) { return m; }

inline Matrix operator+(const Matrix& a, const Matrix& b) { return add(a, b); }
inline Matrix operator-(const Matrix& a, const Matrix& b) { return sub(a, b); }
inline Matrix operator*(const Matrix& a, const Matrix& b) { return mul(a, b); }
inline Matrix operator*(const Matrix& a, double c) { return scale(a, c); }
inline Matrix operator*(double c, const Matrix& a) { return scale(a, c); }
inline Matrix operator-(const Matrix& a) { return scale(a, -1.0); }

}  // namespace taml::ad
