#include <doctest.h>

#include <cmath>

#include "tokf/autodiff.hpp"
#include "tokf/pattention.hpp"
#include "tokf/rng.hpp"
#include "tokf/tensor.hpp"

using namespace tokf;

namespace {

// Random layer with entries bounded away from degenerate norms.
ParamTokens<double> random_layer(Rng& rng, std::int64_t n, std::int64_t d_in, std::int64_t d_out) {
  return ParamTokens<double>(randn<double>(rng, {n, d_in}, 0.0, 0.8),
                             randn<double>(rng, {n, d_out}, 0.0, 0.8),
                             std::sqrt(static_cast<double>(n)));
}

}  // namespace

TEST_CASE("modified_softmax gelu_l2: zeros, frozen example, scale invariance") {
  Tensor64 z({2, 3});
  auto sz = modified_softmax(z, std::sqrt(3.0));
  CHECK(max_abs_diff(sz, z) == 0.0);

  auto a = Tensor64::matrix({{1.0, -1.0}});
  auto s = modified_softmax(a, std::sqrt(2.0));
  CHECK(s(0, 0) == doctest::Approx(0.8413447460685429).epsilon(1e-12));
  CHECK(s(0, 1) == doctest::Approx(-0.15865525393145707).epsilon(1e-12));

  Rng rng(3);
  auto b = randn<double>(rng, {4, 6});
  auto sb = modified_softmax(b, 2.0);
  for (double c : {0.5, 3.0, 250.0}) {
    CHECK(max_abs_diff(modified_softmax(scale(b, c), 2.0), sb) <= 1e-12);
  }
}

TEST_CASE("modified_softmax rows are not a probability distribution") {
  auto a = Tensor64::matrix({{1.0, -1.0, 0.2}});
  auto s = modified_softmax(a, std::sqrt(3.0));
  double sum = 0;
  bool has_negative = false;
  for (std::int64_t j = 0; j < s.cols(); ++j) {
    sum += s(0, j);
    has_negative = has_negative || s(0, j) < 0.0;
  }
  CHECK(has_negative);
  CHECK(std::abs(sum - 1.0) > 1e-3);
}

TEST_CASE("modified_softmax variants: gelu_l1 and exp_l1") {
  auto a = Tensor64::matrix({{0.5, -0.25, 1.5}});

  auto l1 = modified_softmax(a, 9.0, Activation::GeluL1);  // tau unused by this variant
  auto g = gelu(a);
  double denom = 0;
  for (std::int64_t j = 0; j < 3; ++j) denom += std::abs(g(0, j));
  for (std::int64_t j = 0; j < 3; ++j) CHECK(l1(0, j) == doctest::Approx(g(0, j) / denom).epsilon(1e-12));

  const double tau = std::sqrt(3.0);
  auto e = modified_softmax(a, tau, Activation::ExpL1);
  auto ref = softmax_rows(scale(a, 1.0 / tau));
  CHECK(max_abs_diff(e, ref) == 0.0);
}

TEST_CASE("pattention_forward: zeros, frozen scalar example, single key") {
  Rng rng(4);
  auto p = random_layer(rng, 5, 3, 2);
  Tensor64 zx({4, 3});
  auto o = pattention_forward(zx, p);
  CHECK(o.rows() == 4);
  CHECK(o.cols() == 2);
  CHECK(o.all_finite());
  for (std::int64_t i = 0; i < o.numel(); ++i) CHECK(o(i) == 0.0);

  // d_in = 1: X=[[1]], K=[[1],[-1]], V=[[2],[4]], tau=sqrt(2)
  ParamTokens<double> tiny(Tensor64::matrix({{1.0}, {-1.0}}), Tensor64::matrix({{2.0}, {4.0}}),
                           std::sqrt(2.0));
  auto out = pattention_forward(Tensor64::matrix({{1.0}}), tiny);
  CHECK(out(0, 0) == doctest::Approx(1.0480684764112577).epsilon(1e-12));

  // n = 1, positive score: normalization gives z = tau = 1, so O = GeLU(1) * V
  ParamTokens<double> single(Tensor64::matrix({{0.7}}), Tensor64::matrix({{3.0, -2.0}}), 1.0);
  auto so = pattention_forward(Tensor64::matrix({{2.0}}), single);
  CHECK(so(0, 0) == doctest::Approx(0.8413447460685429 * 3.0).epsilon(1e-12));
  CHECK(so(0, 1) == doctest::Approx(0.8413447460685429 * -2.0).epsilon(1e-12));
}

TEST_CASE("pattention_forward dimension error names both shapes") {
  Rng rng(5);
  auto p = random_layer(rng, 4, 3, 3);
  Tensor64 x({2, 5});
  CHECK_THROWS_WITH_AS(pattention_forward(x, p), doctest::Contains("[2x5]"), DimensionError);
  CHECK_THROWS_WITH_AS(pattention_forward(x, p), doctest::Contains("[4x3]"), DimensionError);
}

TEST_CASE("appended zero keys leave pattention output bit-identical") {
  Rng rng(6);
  auto p = random_layer(rng, 6, 4, 3);
  auto x = randn<double>(rng, {5, 4});
  auto base = pattention_forward(x, p);

  ParamTokens<double> grown(concat_rows(p.keys, Tensor64({3, 4})),
                            concat_rows(p.values, randn<double>(rng, {3, 3}, 0.0, 5.0)), p.tau,
                            p.variant);
  auto grown_out = pattention_forward(x, grown);
  CHECK(max_abs_diff(grown_out, base) == 0.0);
}

TEST_CASE("taped pattention matches the plain kernel bit-for-bit") {
  Rng rng(7);
  for (Activation variant : {Activation::GeluL2, Activation::GeluL1, Activation::ExpL1}) {
    auto p = random_layer(rng, 6, 4, 3);
    p.variant = variant;
    auto x = randn<double>(rng, {5, 4});
    ad::Tape<double> tape;
    ad::Var vx = tape.leaf(x);
    ad::Var vk = tape.leaf(p.keys);
    ad::Var vv = tape.leaf(p.values);
    ad::Var out = pattention_forward(tape, vx, vk, vv, p.tau, variant);
    CHECK(max_abs_diff(tape.value(out), pattention_forward(x, p)) == 0.0);
  }
}

TEST_CASE("analytic gradient: zero upstream gives zero gradients") {
  Rng rng(8);
  auto p = random_layer(rng, 4, 3, 2);
  auto x = randn<double>(rng, {3, 3});
  auto grads = pattention_grad_analytic(x, p, Tensor64({3, 2}));
  CHECK(max_abs_diff(grads.grad_x, Tensor64({3, 3})) == 0.0);
  CHECK(max_abs_diff(grads.grad_keys, Tensor64({4, 3})) == 0.0);
  CHECK(max_abs_diff(grads.grad_values, Tensor64({4, 2})) == 0.0);
}

TEST_CASE("analytic gradient matches autodiff on 100 random instances") {
  Rng rng(9);
  double worst = 0;
  for (int round = 0; round < 100; ++round) {
    const std::int64_t n = 2 + static_cast<std::int64_t>(rng.next_below(5));
    const std::int64_t d_in = 2 + static_cast<std::int64_t>(rng.next_below(4));
    const std::int64_t d_out = 2 + static_cast<std::int64_t>(rng.next_below(4));
    const std::int64_t rows = 1 + static_cast<std::int64_t>(rng.next_below(4));
    auto p = random_layer(rng, n, d_in, d_out);
    auto x = randn<double>(rng, {rows, d_in});
    auto upstream = randn<double>(rng, {rows, d_out});

    auto analytic = pattention_grad_analytic(x, p, upstream);

    ad::Tape<double> tape;
    ad::Var vx = tape.leaf(x);
    ad::Var vk = tape.leaf(p.keys);
    ad::Var vv = tape.leaf(p.values);
    ad::Var out = pattention_forward(tape, vx, vk, vv, p.tau);
    // loss = sum(upstream .* out) reproduces the given upstream gradient
    ad::Var loss = ad::sum_all(tape, ad::hadamard(tape, tape.leaf(upstream), out));
    tape.backward(loss);

    auto rel = [](const Tensor64& a, const Tensor64& b) {
      double w = 0;
      for (std::int64_t i = 0; i < a.numel(); ++i) {
        w = std::max(w, std::abs(a(i) - b(i)) /
                            std::max({std::abs(a(i)), std::abs(b(i)), 1e-8}));
      }
      return w;
    };
    worst = std::max({worst, rel(analytic.grad_x, tape.grad(vx)),
                      rel(analytic.grad_keys, tape.grad(vk)),
                      rel(analytic.grad_values, tape.grad(vv))});
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("analytic gradient matches finite differences") {
  Rng rng(10);
  auto p = random_layer(rng, 4, 3, 3);
  auto x = randn<double>(rng, {3, 3});
  auto upstream = randn<double>(rng, {3, 3});
  const double tau = p.tau;

  auto report = ad::grad_check_multi<double>(
      [&upstream, tau](ad::Tape<double>& t, const std::vector<ad::Var>& v) {
        ad::Var out = pattention_forward(t, v[0], v[1], v[2], tau);
        return ad::sum_all(t, ad::hadamard(t, t.leaf(upstream), out));
      },
      {x, p.keys, p.values}, 1e-5);
  CHECK(report.max_rel_err <= 1e-5);
}

TEST_CASE("analytic gradient rejects non-gelu_l2 variants") {
  Rng rng(11);
  auto p = random_layer(rng, 4, 3, 3);
  p.variant = Activation::ExpL1;
  auto x = randn<double>(rng, {2, 3});
  CHECK_THROWS_AS(pattention_grad_analytic(x, p, Tensor64({2, 3})), ConfigError);
}

TEST_CASE("softmax_grad_reference: symmetric case, saturation, finite differences") {
  const double d_ref = 4.0;
  auto uniform = Tensor64::matrix({{0.7, 0.7, 0.7}});
  auto j = softmax_grad_reference(uniform, d_ref);
  const double expect = (1.0 / std::sqrt(d_ref)) * (1.0 / 3) * (1 - 1.0 / 3);
  for (int i = 0; i < 3; ++i) CHECK(j(i, i) == doctest::Approx(expect).epsilon(1e-12));

  // one dominant logit: off-diagonals vanish (the regime that motivates gelu_l2)
  auto dominant = Tensor64::matrix({{40.0, 0.0, 0.0}});
  auto jd = softmax_grad_reference(dominant, 1.0);
  CHECK(std::abs(jd(0, 1)) <= 1e-12);
  CHECK(std::abs(jd(1, 2)) <= 1e-12);

  Rng rng(12);
  auto a = randn<double>(rng, {1, 5});
  auto jr = softmax_grad_reference(a, d_ref);
  const double h = 1e-6;
  double worst = 0;
  for (std::int64_t col = 0; col < 5; ++col) {
    auto hi = a, lo = a;
    hi(0, col) += h;
    lo(0, col) -= h;
    auto shi = softmax_rows(scale(hi, 1.0 / std::sqrt(d_ref)));
    auto slo = softmax_rows(scale(lo, 1.0 / std::sqrt(d_ref)));
    for (std::int64_t row = 0; row < 5; ++row) {
      const double fd = (shi(0, row) - slo(0, row)) / (2 * h);
      worst = std::max(worst, std::abs(fd - jr(row, col)) /
                                  std::max({std::abs(fd), std::abs(jr(row, col)), 1e-8}));
    }
  }
  CHECK(worst <= 1e-6);
}
