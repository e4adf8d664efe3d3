#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "tokf/errors.hpp"

namespace tokf {

// Dense row-major tensor of rank 1-3, value semantics. T is float or double.
template <class T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::int64_t> shape) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(static_cast<std::size_t>(numel_from_shape()), T(0));
  }

  Tensor(std::vector<std::int64_t> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    if (numel_from_shape() != static_cast<std::int64_t>(data_.size())) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_str());
    }
  }

  static Tensor zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<std::int64_t> shape, T value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  // 2-D tensor from nested initializer lists: Tensor<double>::matrix({{1,2},{3,4}}).
  static Tensor matrix(std::initializer_list<std::initializer_list<T>> rows) {
    std::int64_t r = static_cast<std::int64_t>(rows.size());
    std::int64_t c = r > 0 ? static_cast<std::int64_t>(rows.begin()->size()) : 0;
    std::vector<T> data;
    data.reserve(static_cast<std::size_t>(r * c));
    for (const auto& row : rows) {
      if (static_cast<std::int64_t>(row.size()) != c) {
        throw DimensionError("ragged rows in matrix literal");
      }
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
  }

  std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
  const std::vector<std::int64_t>& shape() const { return shape_; }
  std::int64_t extent(std::int64_t axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }
  static constexpr int elem_width() { return static_cast<int>(sizeof(T)) * 8; }

  // Rank-2 accessors; most kernels work on matrices.
  std::int64_t rows() const {
    require_rank(2);
    return shape_[0];
  }
  std::int64_t cols() const {
    require_rank(2);
    return shape_[1];
  }

  T& operator()(std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  T operator()(std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
  T& operator()(std::int64_t i, std::int64_t j) {
    return data_[static_cast<std::size_t>(i * shape_[1] + j)];
  }
  T operator()(std::int64_t i, std::int64_t j) const {
    return data_[static_cast<std::size_t>(i * shape_[1] + j)];
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  T* row_ptr(std::int64_t i) { return data_.data() + i * shape_[1]; }
  const T* row_ptr(std::int64_t i) const { return data_.data() + i * shape_[1]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
    os << "]";
    return os.str();
  }

  bool all_finite() const {
    for (T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

 private:
  void validate_shape() const {
    if (shape_.empty() || shape_.size() > 3) {
      throw DimensionError("tensor rank must be 1-3, got " + std::to_string(shape_.size()));
    }
    for (std::int64_t e : shape_) {
      if (e < 0) throw DimensionError("negative extent in shape " + shape_str());
    }
  }
  std::int64_t numel_from_shape() const {
    return std::accumulate(shape_.begin(), shape_.end(), std::int64_t(1),
                           std::multiplies<std::int64_t>());
  }
  void require_rank(std::int64_t r) const {
    if (rank() != r) {
      throw DimensionError("expected rank-" + std::to_string(r) + " tensor, got " + shape_str());
    }
  }

  std::vector<std::int64_t> shape_;
  std::vector<T> data_;
};

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;

// Default eps for L2 row normalization: below resolvable magnitudes at each width,
// preserving the zero-row -> zero-score behavior.
template <class T>
constexpr T default_l2_eps() {
  return sizeof(T) == 8 ? T(1e-12) : T(1e-6);
}

template <class T>
inline void ensure_finite(const Tensor<T>& t, const char* op) {
  if (!t.all_finite()) {
    throw NumericError(std::string(op) + " produced a non-finite value (shape " + t.shape_str() +
                       ")");
  }
}

namespace detail {
template <class T>
inline void require_matrix(const Tensor<T>& t, const char* name) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(name) + " must be rank-2, got " + t.shape_str());
  }
}
}  // namespace detail

// C = A * B.  Summation order is fixed: every output element accumulates over k
// ascending (ikj loop), so results are bit-stable across runs single-threaded.
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_matrix(a, "matmul lhs");
  detail::require_matrix(b, "matmul rhs");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul shape mismatch: " + a.shape_str() + " * " + b.shape_str());
  }
  const std::int64_t m = a.rows(), k = a.cols(), p = b.cols();
  Tensor<T> c({m, p});
  for (std::int64_t i = 0; i < m; ++i) {
    const T* ai = a.row_ptr(i);
    T* ci = c.row_ptr(i);
    for (std::int64_t kk = 0; kk < k; ++kk) {
      const T aik = ai[kk];
      const T* bk = b.row_ptr(kk);
      for (std::int64_t j = 0; j < p; ++j) ci[j] += aik * bk[j];
    }
  }
  ensure_finite(c, "matmul");
  return c;
}

// C = A * B^T, i.e. C[i][j] = sum_k A[i][k] * B[j][k] (k ascending).
template <class T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_matrix(a, "matmul_nt lhs");
  detail::require_matrix(b, "matmul_nt rhs");
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt shape mismatch: " + a.shape_str() + " * " + b.shape_str() +
                         "^T");
  }
  const std::int64_t m = a.rows(), k = a.cols(), p = b.rows();
  Tensor<T> c({m, p});
  for (std::int64_t i = 0; i < m; ++i) {
    const T* ai = a.row_ptr(i);
    T* ci = c.row_ptr(i);
    for (std::int64_t j = 0; j < p; ++j) {
      const T* bj = b.row_ptr(j);
      T acc = 0;
      for (std::int64_t kk = 0; kk < k; ++kk) acc += ai[kk] * bj[kk];
      ci[j] = acc;
    }
  }
  ensure_finite(c, "matmul_nt");
  return c;
}

// C = A^T * B, i.e. C[i][j] = sum_k A[k][i] * B[k][j] (k ascending).
template <class T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_matrix(a, "matmul_tn lhs");
  detail::require_matrix(b, "matmul_tn rhs");
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn shape mismatch: " + a.shape_str() + "^T * " + b.shape_str());
  }
  const std::int64_t m = a.cols(), k = a.rows(), p = b.cols();
  Tensor<T> c({m, p});
  for (std::int64_t kk = 0; kk < k; ++kk) {
    const T* ak = a.row_ptr(kk);
    const T* bk = b.row_ptr(kk);
    for (std::int64_t i = 0; i < m; ++i) {
      const T aki = ak[i];
      T* ci = c.row_ptr(i);
      for (std::int64_t j = 0; j < p; ++j) ci[j] += aki * bk[j];
    }
  }
  ensure_finite(c, "matmul_tn");
  return c;
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
  detail::require_matrix(a, "transpose arg");
  Tensor<T> out({a.cols(), a.rows()});
  for (std::int64_t i = 0; i < a.rows(); ++i)
    for (std::int64_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

namespace detail {
// Standard normal CDF / PDF in the element type.
template <class T>
inline T norm_cdf(T x) {
  return T(0.5) * (T(1) + std::erf(x * T(0.70710678118654752440)));
}
template <class T>
inline T norm_pdf(T x) {
  return T(0.39894228040143267794) * std::exp(T(-0.5) * x * x);
}
}  // namespace detail

// Exact erf-based GeLU: x * Phi(x). Not the tanh approximation; the analytic
// Pattention gradients require gelu/gelu_prime to be an exact derivative pair.
template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
  Tensor<T> out = x;
  for (std::int64_t i = 0; i < out.numel(); ++i) out(i) = out(i) * detail::norm_cdf(out(i));
  ensure_finite(out, "gelu");
  return out;
}

// d/dx gelu(x) = Phi(x) + x * phi(x).
template <class T>
Tensor<T> gelu_prime(const Tensor<T>& x) {
  Tensor<T> out = x;
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    const T v = x(i);
    out(i) = detail::norm_cdf(v) + v * detail::norm_pdf(v);
  }
  ensure_finite(out, "gelu_prime");
  return out;
}

// Each row divided by max(L2 norm, eps); a zero row stays zero.
template <class T>
Tensor<T> row_l2_normalize(const Tensor<T>& a, T eps = default_l2_eps<T>()) {
  detail::require_matrix(a, "row_l2_normalize arg");
  if (!(eps > T(0))) throw ConfigError("row_l2_normalize eps must be positive");
  Tensor<T> out = a;
  for (std::int64_t i = 0; i < a.rows(); ++i) {
    T sumsq = 0;
    const T* row = a.row_ptr(i);
    for (std::int64_t j = 0; j < a.cols(); ++j) sumsq += row[j] * row[j];
    const T denom = std::max(std::sqrt(sumsq), eps);
    T* orow = out.row_ptr(i);
    for (std::int64_t j = 0; j < a.cols(); ++j) orow[j] = row[j] / denom;
  }
  ensure_finite(out, "row_l2_normalize");
  return out;
}

// r[i] = max(||a_i||_2, eps), as a column vector [m x 1].
template <class T>
Tensor<T> clamped_row_l2_norm(const Tensor<T>& a, T eps) {
  detail::require_matrix(a, "clamped_row_l2_norm arg");
  Tensor<T> r({a.rows(), 1});
  for (std::int64_t i = 0; i < a.rows(); ++i) {
    T sumsq = 0;
    const T* row = a.row_ptr(i);
    for (std::int64_t j = 0; j < a.cols(); ++j) sumsq += row[j] * row[j];
    r(i, 0) = std::max(std::sqrt(sumsq), eps);
  }
  return r;
}

// Row-wise softmax with max-subtraction. Masked variant: entries j > i get
// probability zero (causal); only unmasked entries are touched, so outputs for a
// prefix never depend on later columns.
template <class T>
Tensor<T> softmax_rows(const Tensor<T>& a, bool causal = false) {
  detail::require_matrix(a, "softmax_rows arg");
  Tensor<T> out({a.rows(), a.cols()});
  for (std::int64_t i = 0; i < a.rows(); ++i) {
    const std::int64_t limit = causal ? std::min(i + 1, a.cols()) : a.cols();
    const T* row = a.row_ptr(i);
    T* orow = out.row_ptr(i);
    T maxv = row[0];
    for (std::int64_t j = 1; j < limit; ++j) maxv = std::max(maxv, row[j]);
    T sum = 0;
    for (std::int64_t j = 0; j < limit; ++j) {
      orow[j] = std::exp(row[j] - maxv);
      sum += orow[j];
    }
    for (std::int64_t j = 0; j < limit; ++j) orow[j] /= sum;
  }
  ensure_finite(out, "softmax_rows");
  return out;
}

// Rows of a followed by rows of b; either may have zero rows.
template <class T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_matrix(a, "concat_rows lhs");
  detail::require_matrix(b, "concat_rows rhs");
  if (a.cols() != b.cols()) {
    throw DimensionError("concat_rows column mismatch: " + a.shape_str() + " vs " + b.shape_str());
  }
  Tensor<T> out({a.rows() + b.rows(), a.cols()});
  std::copy(a.data(), a.data() + a.numel(), out.data());
  std::copy(b.data(), b.data() + b.numel(), out.data() + a.numel());
  return out;
}

// Elementwise plumbing used by autodiff and the model stack.

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) {
    throw DimensionError("add shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  }
  Tensor<T> out = a;
  for (std::int64_t i = 0; i < out.numel(); ++i) out(i) += b(i);
  return out;
}

template <class T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) {
    throw DimensionError("hadamard shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  }
  Tensor<T> out = a;
  for (std::int64_t i = 0; i < out.numel(); ++i) out(i) *= b(i);
  return out;
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  Tensor<T> out = a;
  for (std::int64_t i = 0; i < out.numel(); ++i) out(i) *= c;
  return out;
}

// out[i][j] = a[i][j] / c[i]  (c is [m x 1]).
template <class T>
Tensor<T> div_colvec(const Tensor<T>& a, const Tensor<T>& c) {
  detail::require_matrix(a, "div_colvec lhs");
  if (c.rank() != 2 || c.cols() != 1 || c.rows() != a.rows()) {
    throw DimensionError("div_colvec rhs must be [" + std::to_string(a.rows()) + "x1], got " +
                         c.shape_str());
  }
  Tensor<T> out = a;
  for (std::int64_t i = 0; i < a.rows(); ++i) {
    const T inv = c(i, 0);
    T* row = out.row_ptr(i);
    for (std::int64_t j = 0; j < a.cols(); ++j) row[j] /= inv;
  }
  return out;
}

template <class T>
Tensor<T> slice_rows(const Tensor<T>& a, std::int64_t start, std::int64_t count) {
  detail::require_matrix(a, "slice_rows arg");
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw DimensionError("slice_rows [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of bounds for " + a.shape_str());
  }
  Tensor<T> out({count, a.cols()});
  std::copy(a.row_ptr(start), a.row_ptr(start) + count * a.cols(), out.data());
  return out;
}

template <class T>
Tensor<T> slice_cols(const Tensor<T>& a, std::int64_t start, std::int64_t count) {
  detail::require_matrix(a, "slice_cols arg");
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw DimensionError("slice_cols [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of bounds for " + a.shape_str());
  }
  Tensor<T> out({a.rows(), count});
  for (std::int64_t i = 0; i < a.rows(); ++i) {
    std::copy(a.row_ptr(i) + start, a.row_ptr(i) + start + count, out.row_ptr(i));
  }
  return out;
}

template <class T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) {
    throw DimensionError("max_abs_diff shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  }
  T worst = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) worst = std::max(worst, std::abs(a(i) - b(i)));
  return worst;
}

}  // namespace tokf
