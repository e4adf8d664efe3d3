#pragma once

#include <cmath>
#include <string>

#include "tokf/autodiff.hpp"
#include "tokf/errors.hpp"
#include "tokf/rng.hpp"
#include "tokf/tensor.hpp"

namespace tokf {

// Score nonlinearity of the token-parameter attention layer. GeluL2 is the
// default; the other two are ablation arms.
enum class Activation { GeluL2, GeluL1, ExpL1 };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::GeluL2: return "gelu_l2";
    case Activation::GeluL1: return "gelu_l1";
    case Activation::ExpL1: return "exp_l1";
  }
  throw ConfigError("unknown activation variant");
}

inline Activation parse_activation(const std::string& name) {
  if (name == "gelu_l2") return Activation::GeluL2;
  if (name == "gelu_l1") return Activation::GeluL1;
  if (name == "exp_l1") return Activation::ExpL1;
  throw ConfigError("unknown activation variant '" + name + "' (gelu_l2|gelu_l1|exp_l1)");
}

// One Pattention layer's learnable state: n key rows, n value rows, and the
// scale tau frozen at creation. tau is intentionally NOT recomputed when the
// layer grows; rescaling it would perturb all pre-scaling attention scores.
template <class T>
struct ParamTokens {
  Tensor<T> keys;    // [n x d_in]
  Tensor<T> values;  // [n x d_out]
  T tau = T(1);
  Activation variant = Activation::GeluL2;

  ParamTokens() = default;
  ParamTokens(Tensor<T> k, Tensor<T> v, T tau_, Activation var = Activation::GeluL2)
      : keys(std::move(k)), values(std::move(v)), tau(tau_), variant(var) {
    if (keys.rows() != values.rows()) {
      throw DimensionError("param token count mismatch: keys " + keys.shape_str() + " vs values " +
                           values.shape_str());
    }
    if (!(tau > T(0))) throw ConfigError("param token tau must be positive");
  }

  std::int64_t n() const { return keys.rows(); }
  std::int64_t d_in() const { return keys.cols(); }
  std::int64_t d_out() const { return values.cols(); }
};

// Fresh layer with gaussian keys/values and tau = sqrt(n).
template <class T>
ParamTokens<T> make_param_tokens(Rng& rng, std::int64_t n, std::int64_t d_in, std::int64_t d_out,
                                 T init_std, Activation variant = Activation::GeluL2) {
  return ParamTokens<T>(randn<T>(rng, {n, d_in}, T(0), init_std),
                        randn<T>(rng, {n, d_out}, T(0), init_std),
                        std::sqrt(static_cast<T>(n)), variant);
}

// S = Theta(A): row-wise normalized, nonlinearly activated similarity scores.
//   gelu_l2: S_ij = GeLU(A_ij * tau / max(||A_i||_2, eps))
//   gelu_l1: G = GeLU(A); S_ij = G_ij / max(sum_k |G_ik|, eps)   (tau unused)
//   exp_l1:  standard row softmax of A / tau
// gelu_l2 rows are not a probability distribution: entries may be negative and
// need not sum to one.
template <class T>
Tensor<T> modified_softmax(const Tensor<T>& a, T tau, Activation variant = Activation::GeluL2,
                           T eps = default_l2_eps<T>()) {
  if (!(tau > T(0))) throw ConfigError("modified_softmax tau must be positive");
  switch (variant) {
    case Activation::GeluL2: {
      const Tensor<T> r = clamped_row_l2_norm(a, eps);
      return gelu(div_colvec(scale(a, tau), r));
    }
    case Activation::GeluL1: {
      const Tensor<T> g = gelu(a);
      Tensor<T> r({g.rows(), 1});
      for (std::int64_t i = 0; i < g.rows(); ++i) {
        T acc = 0;
        for (std::int64_t j = 0; j < g.cols(); ++j) acc += std::abs(g(i, j));
        r(i, 0) = std::max(acc, eps);
      }
      return div_colvec(g, r);
    }
    case Activation::ExpL1:
      return softmax_rows(scale(a, T(1) / tau));
  }
  throw ConfigError("unknown activation variant");
}

// Same computation recorded on a tape, composed from primitives so backward is
// the generic chain rule (independent of the closed-form Jacobian below).
template <class T>
ad::Var modified_softmax(ad::Tape<T>& t, ad::Var a, T tau,
                         Activation variant = Activation::GeluL2, T eps = default_l2_eps<T>()) {
  if (!(tau > T(0))) throw ConfigError("modified_softmax tau must be positive");
  switch (variant) {
    case Activation::GeluL2: {
      ad::Var r = ad::clamped_row_l2_norm(t, a, eps);
      return ad::gelu(t, ad::div_colvec(t, ad::scale(t, a, tau), r));
    }
    case Activation::GeluL1: {
      ad::Var g = ad::gelu(t, a);
      return ad::div_colvec(t, g, ad::clamped_row_l1_norm(t, g, eps));
    }
    case Activation::ExpL1:
      return ad::softmax(t, ad::scale(t, a, T(1) / tau));
  }
  throw ConfigError("unknown activation variant");
}

// O = Theta(X * K_P^T) * V_P.
template <class T>
Tensor<T> pattention_forward(const Tensor<T>& x, const ParamTokens<T>& p,
                             T eps = default_l2_eps<T>()) {
  if (x.rank() != 2 || x.cols() != p.d_in()) {
    throw DimensionError("pattention input " + x.shape_str() + " incompatible with keys " +
                         p.keys.shape_str());
  }
  const Tensor<T> a = matmul_nt(x, p.keys);
  const Tensor<T> s = modified_softmax(a, p.tau, p.variant, eps);
  return matmul(s, p.values);
}

template <class T>
ad::Var pattention_forward(ad::Tape<T>& t, ad::Var x, ad::Var keys, ad::Var values, T tau,
                           Activation variant = Activation::GeluL2, T eps = default_l2_eps<T>()) {
  ad::Var a = ad::matmul_nt(t, x, keys);
  ad::Var s = modified_softmax(t, a, tau, variant, eps);
  return ad::matmul(t, s, values);
}

template <class T>
struct PattentionGrads {
  Tensor<T> grad_x;
  Tensor<T> grad_keys;
  Tensor<T> grad_values;
};

// Closed-form backward of the gelu_l2 Pattention layer. Per row of A, with
// r = ||A_i||_2 and z = tau * A_i / max(r, eps):
//   dS_i/dA_j = f'(z_i) * (tau / r) * (delta_ij - z_i * z_j / tau^2)   (r > eps)
//   dS_i/dA_j = f'(z_i) * (tau / eps) * delta_ij                       (0 < r <= eps)
// and a zero-norm row contributes zero gradient. Chained through
// O = S * V_P and A = X * K_P^T.
template <class T>
PattentionGrads<T> pattention_grad_analytic(const Tensor<T>& x, const ParamTokens<T>& p,
                                            const Tensor<T>& upstream,
                                            T eps = default_l2_eps<T>()) {
  if (p.variant != Activation::GeluL2) {
    throw ConfigError("analytic pattention gradient is defined for the gelu_l2 variant only");
  }
  if (x.rank() != 2 || x.cols() != p.d_in()) {
    throw DimensionError("pattention input " + x.shape_str() + " incompatible with keys " +
                         p.keys.shape_str());
  }
  if (upstream.rows() != x.rows() || upstream.cols() != p.d_out()) {
    throw DimensionError("upstream " + upstream.shape_str() + " incompatible with output [" +
                         std::to_string(x.rows()) + "x" + std::to_string(p.d_out()) + "]");
  }
  const std::int64_t rows = x.rows(), n = p.n();
  const Tensor<T> a = matmul_nt(x, p.keys);
  const Tensor<T> s = modified_softmax(a, p.tau, Activation::GeluL2, eps);

  // dL/dS = U * V_P^T, dL/dV_P = S^T * U.
  const Tensor<T> ds = matmul_nt(upstream, p.values);
  Tensor<T> dv = matmul_tn(s, upstream);

  Tensor<T> da({rows, n});
  for (std::int64_t i = 0; i < rows; ++i) {
    T sumsq = 0;
    for (std::int64_t j = 0; j < n; ++j) sumsq += a(i, j) * a(i, j);
    const T norm = std::sqrt(sumsq);
    if (norm == T(0)) continue;  // zero-norm row: zero contribution
    const T r = std::max(norm, eps);
    T dot = 0;  // sum_k ds_k * f'(z_k) * z_k
    for (std::int64_t j = 0; j < n; ++j) {
      const T z = a(i, j) * p.tau / r;
      const T w = ds(i, j) * (detail::norm_cdf(z) + z * detail::norm_pdf(z));
      da(i, j) = w;
      dot += w * z;
    }
    const T tau_over_r = p.tau / r;
    const T inv_tau_sq = norm > eps ? T(1) / (p.tau * p.tau) : T(0);
    for (std::int64_t j = 0; j < n; ++j) {
      const T z = a(i, j) * p.tau / r;
      da(i, j) = tau_over_r * (da(i, j) - dot * z * inv_tau_sq);
    }
  }

  PattentionGrads<T> out;
  out.grad_x = matmul(da, p.keys);
  out.grad_keys = matmul_tn(da, x);
  out.grad_values = std::move(dv);
  return out;
}

// Jacobian of the standard scaled softmax for one score row (the baseline the
// gelu_l2 design is compared against in gradient-magnitude studies):
//   J_ij = (1/sqrt(d_ref)) * S_i * (delta_ij - S_j), S = softmax(A / sqrt(d_ref)).
template <class T>
Tensor<T> softmax_grad_reference(const Tensor<T>& a, T d_ref) {
  if (a.rank() != 2 || a.rows() != 1) {
    throw DimensionError("softmax_grad_reference expects a [1 x n] row, got " + a.shape_str());
  }
  if (!(d_ref > T(0))) throw ConfigError("softmax_grad_reference d_ref must be positive");
  const T inv_sqrt_d = T(1) / std::sqrt(d_ref);
  const Tensor<T> s = softmax_rows(scale(a, inv_sqrt_d));
  const std::int64_t n = a.cols();
  Tensor<T> j({n, n});
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t k = 0; k < n; ++k) {
      const T delta = i == k ? T(1) : T(0);
      j(i, k) = inv_sqrt_d * s(0, i) * (delta - s(0, k));
    }
  }
  return j;
}

}  // namespace tokf
