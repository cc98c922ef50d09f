#pragma once

// Dense row-major double matrix and the element-wise / reduction kernels the
// rest of the library is written against. Every kernel here has a twin in
// autodiff.hpp taking ad::Var, so model code can be templated on either.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "emoforge/error.hpp"

namespace emoforge {

using Vector = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows_ * cols_, ErrorKind::Shape,
            "matrix data length " + std::to_string(data_.size()) + " != " +
                std::to_string(rows_) + "x" + std::to_string(cols_));
  }
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      require(r.size() == cols_, ErrorKind::Shape, "ragged matrix literal");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
  static Matrix row_vector(std::span<const double> v) {
    return Matrix(1, v.size(), std::vector<double>(v.begin(), v.end()));
  }
  static Matrix scalar(double v) { return Matrix(1, 1, v); }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  /// The scalar held by a 1x1 matrix.
  double item() const {
    require(rows_ == 1 && cols_ == 1, ErrorKind::Shape, "item() on non-scalar matrix");
    return data_[0];
  }

  bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  require(a.same_shape(b), ErrorKind::Shape,
          std::string(op) + ": " + shape_str(a) + " vs " + shape_str(b));
}

inline void require_finite(const Matrix& m, const char* op) {
  require(m.all_finite(), ErrorKind::InvalidInput, std::string(op) + ": non-finite entry");
}

template <class F>
Matrix map(const Matrix& a, F&& f) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

template <class F>
Matrix zip(const Matrix& a, const Matrix& b, F&& f, const char* op) {
  require_same_shape(a, b, op);
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), ErrorKind::Shape,
          "matmul: " + shape_str(a) + " * " + shape_str(b));
  Matrix out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* orow = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
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

inline Matrix add(const Matrix& a, const Matrix& b) {
  return zip(a, b, [](double x, double y) { return x + y; }, "add");
}
inline Matrix sub(const Matrix& a, const Matrix& b) {
  return zip(a, b, [](double x, double y) { return x - y; }, "sub");
}
inline Matrix hadamard(const Matrix& a, const Matrix& b) {
  return zip(a, b, [](double x, double y) { return x * y; }, "hadamard");
}
inline Matrix scale(const Matrix& a, double s) {
  return map(a, [s](double x) { return x * s; });
}
/// Multiply every entry by the 1x1 matrix `s`.
inline Matrix scale_by(const Matrix& a, const Matrix& s) { return scale(a, s.item()); }

/// Adds a 1xC row to every row of `a`.
inline Matrix add_row(const Matrix& a, const Matrix& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), ErrorKind::Shape,
          "add_row: " + shape_str(a) + " + " + shape_str(row));
  Matrix out = a;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) += row(0, j);
  return out;
}

inline Matrix tanh(const Matrix& a) {
  return map(a, [](double x) { return std::tanh(x); });
}
inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
inline Matrix sigmoid(const Matrix& a) {
  return map(a, [](double x) { return sigmoid(x); });
}
inline double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}
inline Matrix softplus(const Matrix& a) {
  return map(a, [](double x) { return softplus(x); });
}
inline Matrix exp(const Matrix& a) {
  return map(a, [](double x) { return std::exp(x); });
}
inline Matrix log(const Matrix& a) {
  return map(a, [](double x) { return std::log(x); });
}
inline Matrix square(const Matrix& a) {
  return map(a, [](double x) { return x * x; });
}
inline Matrix clamp(const Matrix& a, double lo, double hi) {
  return map(a, [lo, hi](double x) { return std::clamp(x, lo, hi); });
}

inline Matrix sum(const Matrix& a) {
  return Matrix::scalar(std::accumulate(a.data().begin(), a.data().end(), 0.0));
}
inline Matrix mean(const Matrix& a) {
  require(!a.empty(), ErrorKind::InvalidInput, "mean of empty matrix");
  return Matrix::scalar(sum(a).item() / static_cast<double>(a.size()));
}

/// Row-wise softmax with max subtraction.
inline Matrix softmax_rows(const Matrix& m) {
  require(!m.empty(), ErrorKind::InvalidInput, "softmax_rows: empty matrix");
  require_finite(m, "softmax_rows");
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto in = m.row(i);
    auto o = out.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) z += (o[j] = std::exp(in[j] - mx));
    for (double& v : o) v /= z;
  }
  return out;
}

inline Matrix log_softmax_rows(const Matrix& m) {
  require(!m.empty(), ErrorKind::InvalidInput, "log_softmax_rows: empty matrix");
  require_finite(m, "log_softmax_rows");
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto in = m.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (double v : in) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < in.size(); ++j) out(i, j) = in[j] - lse;
  }
  return out;
}

inline double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorKind::Shape,
          "dot: length " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline Matrix l2_normalize_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double n = norm(m.row(i));
    require(n > 0.0 && std::isfinite(n), ErrorKind::DegenerateInput,
            "l2_normalize_rows: row " + std::to_string(i) + " has zero norm");
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j) / n;
  }
  return out;
}

inline Vector l2_normalize(std::span<const double> v) {
  return l2_normalize_rows(Matrix::row_vector(v)).storage();
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorKind::Shape,
          "cosine_similarity: length " + std::to_string(a.size()) + " vs " +
              std::to_string(b.size()));
  const double na = norm(a);
  const double nb = norm(b);
  require(na > 0.0 && nb > 0.0, ErrorKind::DegenerateInput, "cosine_similarity: zero vector");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

/// Rows of `a` selected by `idx` (repeats allowed).
inline Matrix gather_rows(const Matrix& a, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] < a.rows(), ErrorKind::Shape,
            "gather_rows: index " + std::to_string(idx[i]) + " out of " + shape_str(a));
    std::copy_n(a.row(idx[i]).begin(), a.cols(), out.row(i).begin());
  }
  return out;
}

/// Column vector with entry i = a(i, idx[i]).
inline Matrix pick(const Matrix& a, std::span<const std::size_t> idx) {
  require(idx.size() == a.rows(), ErrorKind::Shape, "pick: one index per row required");
  Matrix out(a.rows(), 1);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    require(idx[i] < a.cols(), ErrorKind::Shape, "pick: column index out of range");
    out(i, 0) = a(i, idx[i]);
  }
  return out;
}

inline Matrix concat_cols(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), ErrorKind::Shape,
          "concat_cols: " + shape_str(a) + " | " + shape_str(b));
  Matrix out(a.rows(), a.cols() + b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    std::copy_n(a.row(i).begin(), a.cols(), out.row(i).begin());
    std::copy_n(b.row(i).begin(), b.cols(), out.row(i).begin() + a.cols());
  }
  return out;
}

inline Matrix slice_cols(const Matrix& a, std::size_t begin, std::size_t end) {
  require(begin <= end && end <= a.cols(), ErrorKind::Shape, "slice_cols: bad range");
  Matrix out(a.rows(), end - begin);
  for (std::size_t i = 0; i < a.rows(); ++i)
    std::copy_n(a.row(i).begin() + begin, end - begin, out.row(i).begin());
  return out;
}

/// Stacks `n` copies of a 1xC row.
inline Matrix repeat_row(const Matrix& row, std::size_t n) {
  require(row.rows() == 1, ErrorKind::Shape, "repeat_row: expected a 1xC row");
  Matrix out(n, row.cols());
  for (std::size_t i = 0; i < n; ++i) std::copy_n(row.row(0).begin(), row.cols(), out.row(i).begin());
  return out;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace emoforge
