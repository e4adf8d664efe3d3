#include <doctest.h>

#include <cmath>

#include "tokf/rng.hpp"
#include "tokf/tensor.hpp"

using namespace tokf;

TEST_CASE("matmul identity and hand-checked product") {
  auto a = Tensor64::matrix({{1, 2}, {3, 4}});
  auto eye = Tensor64::matrix({{1, 0}, {0, 1}});
  CHECK(max_abs_diff(matmul(a, eye), a) == 0.0);

  auto b = Tensor64::matrix({{5, 6}, {7, 8}});
  auto c = matmul(a, b);
  CHECK(c(0, 0) == 19.0);
  CHECK(c(0, 1) == 22.0);
  CHECK(c(1, 0) == 43.0);
  CHECK(c(1, 1) == 50.0);
}

TEST_CASE("matmul zero case and shape errors") {
  Tensor64 z({3, 4});
  Rng rng(7);
  auto b = randn<double>(rng, {4, 2});
  auto c = matmul(z, b);
  CHECK(c.rows() == 3);
  CHECK(c.cols() == 2);
  for (std::int64_t i = 0; i < c.numel(); ++i) CHECK(c(i) == 0.0);

  Tensor64 bad({3, 3});
  CHECK_THROWS_AS(matmul(z, bad), DimensionError);
  CHECK_THROWS_WITH_AS(matmul(z, bad), doctest::Contains("[3x4]"), DimensionError);
}

TEST_CASE("matmul associativity on random tensors (64-bit)") {
  Rng rng(11);
  for (int round = 0; round < 20; ++round) {
    auto a = randn<double>(rng, {4, 5});
    auto b = randn<double>(rng, {5, 3});
    auto c = randn<double>(rng, {3, 6});
    auto left = matmul(matmul(a, b), c);
    auto right = matmul(a, matmul(b, c));
    CHECK(max_abs_diff(left, right) <= 1e-10);
  }
}

TEST_CASE("matmul_nt and matmul_tn agree with explicit transpose") {
  Rng rng(13);
  auto a = randn<double>(rng, {4, 6});
  auto b = randn<double>(rng, {5, 6});
  CHECK(max_abs_diff(matmul_nt(a, b), matmul(a, transpose(b))) <= 1e-12);
  auto c = randn<double>(rng, {4, 3});
  CHECK(max_abs_diff(matmul_tn(a, c), matmul(transpose(a), c)) <= 1e-12);
}

TEST_CASE("gelu frozen values") {
  auto x = Tensor64::matrix({{0.0, 1.0, -1.0}});
  auto y = gelu(x);
  CHECK(y(0, 0) == 0.0);
  CHECK(y(0, 1) == doctest::Approx(0.8413447460685429).epsilon(1e-12));
  CHECK(y(0, 2) == doctest::Approx(-0.15865525393145707).epsilon(1e-12));
}

TEST_CASE("gelu_prime frozen values and finite differences") {
  auto x = Tensor64::matrix({{0.0, 1.0}});
  auto d = gelu_prime(x);
  CHECK(d(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(d(0, 1) == doctest::Approx(1.0833154705876864).epsilon(1e-12));

  // central differences at x = 0.3 and 1000 random points
  Rng rng(5);
  const double h = 1e-5;
  for (int i = 0; i < 1000; ++i) {
    const double v = i == 0 ? 0.3 : 4.0 * rng.next_uniform() - 2.0;
    auto lo = gelu(Tensor64::matrix({{v - h}}));
    auto hi = gelu(Tensor64::matrix({{v + h}}));
    const double fd = (hi(0) - lo(0)) / (2 * h);
    const double an = gelu_prime(Tensor64::matrix({{v}}))(0);
    CHECK(std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8}) <= 1e-6);
  }
}

TEST_CASE("row_l2_normalize") {
  auto a = Tensor64::matrix({{3, 4}});
  auto n = row_l2_normalize(a);
  CHECK(n(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(n(0, 1) == doctest::Approx(0.8).epsilon(1e-15));

  auto z = Tensor64::matrix({{0, 0}});
  auto nz = row_l2_normalize(z);
  CHECK(nz(0, 0) == 0.0);
  CHECK(nz(0, 1) == 0.0);

  auto unit = Tensor64::matrix({{0, 1}});
  CHECK(max_abs_diff(row_l2_normalize(unit), unit) <= 1e-15);
}

TEST_CASE("softmax_rows: symmetry, saturation, frozen derived values") {
  auto c = Tensor64::matrix({{2.5, 2.5, 2.5}});
  auto sc = softmax_rows(c);
  for (int j = 0; j < 3; ++j) CHECK(sc(0, j) == doctest::Approx(1.0 / 3).epsilon(1e-12));

  auto sat = softmax_rows(Tensor64::matrix({{0.0, 60.0}}));
  CHECK(sat(0, 0) <= 1e-20);
  CHECK(sat(0, 1) == doctest::Approx(1.0).epsilon(1e-12));

  auto lns = Tensor64::matrix({{std::log(1.0), std::log(2.0), std::log(3.0)}});
  auto s = softmax_rows(lns);
  CHECK(s(0, 0) == doctest::Approx(1.0 / 6).epsilon(1e-12));
  CHECK(s(0, 1) == doctest::Approx(2.0 / 6).epsilon(1e-12));
  CHECK(s(0, 2) == doctest::Approx(3.0 / 6).epsilon(1e-12));
}

TEST_CASE("softmax_rows properties: rows sum to one, shift invariance") {
  Rng rng(23);
  for (int round = 0; round < 50; ++round) {
    auto a = randn<double>(rng, {3, 7});
    auto s = softmax_rows(a);
    for (std::int64_t i = 0; i < s.rows(); ++i) {
      double sum = 0;
      for (std::int64_t j = 0; j < s.cols(); ++j) {
        CHECK(s(i, j) >= 0.0);
        sum += s(i, j);
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
    const double shift = 3.0 * rng.next_gaussian();
    auto shifted = a;
    for (std::int64_t i = 0; i < shifted.numel(); ++i) shifted(i) += shift;
    CHECK(max_abs_diff(softmax_rows(shifted), s) <= 1e-12);
  }
}

TEST_CASE("causal softmax never reads masked columns") {
  auto a = Tensor64::matrix({{1.0, 500.0, -300.0}, {0.5, 0.25, 900.0}, {1, 2, 3}});
  auto s = softmax_rows(a, /*causal=*/true);
  CHECK(s(0, 0) == 1.0);
  CHECK(s(0, 1) == 0.0);
  CHECK(s(0, 2) == 0.0);
  CHECK(s(1, 0) + s(1, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s(1, 2) == 0.0);
}

TEST_CASE("concat_rows") {
  auto a = Tensor64::matrix({{1, 2}});
  auto b = Tensor64::matrix({{3, 4}});
  auto ab = concat_rows(a, b);
  CHECK(ab.rows() == 2);
  CHECK(ab(0, 0) == 1.0);
  CHECK(ab(1, 0) == 3.0);
  CHECK(ab(1, 1) == 4.0);

  Tensor64 empty({0, 2});
  auto same = concat_rows(a, empty);
  CHECK(same.rows() == 1);
  CHECK(max_abs_diff(same, a) == 0.0);

  Rng rng(3);
  auto x = randn<double>(rng, {5, 4});
  auto y = randn<double>(rng, {3, 4});
  auto xy = concat_rows(x, y);
  CHECK(xy.rows() == 8);
  CHECK(xy.cols() == 4);
  // first n rows are a, exactly
  CHECK(max_abs_diff(slice_rows(xy, 0, 5), x) == 0.0);

  auto bad = Tensor64({2, 3});
  CHECK_THROWS_AS(concat_rows(x, bad), DimensionError);
}

TEST_CASE("randn determinism and degenerate std") {
  Rng rng1(42), rng2(42);
  auto a = randn<double>(rng1, {16, 16});
  auto b = randn<double>(rng2, {16, 16});
  CHECK(max_abs_diff(a, b) == 0.0);

  Rng rng3(9);
  auto z = randn<double>(rng3, {4, 4}, 0.0, 0.0);
  for (std::int64_t i = 0; i < z.numel(); ++i) CHECK(z(i) == 0.0);
}

TEST_CASE("randn statistics: 1e5 samples, mean within 3 sigma / sqrt(N)") {
  Rng rng(1234);
  const int n = 100000;
  const double target_mean = 0.5, target_std = 2.0;
  auto samples = randn<double>(rng, {n, 1}, target_mean, target_std);
  double sum = 0;
  for (std::int64_t i = 0; i < samples.numel(); ++i) sum += samples(i);
  const double mean = sum / n;
  CHECK(std::abs(mean - target_mean) <= 3.0 * target_std / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("non-finite inputs are surfaced, never propagated") {
  auto a = Tensor64::matrix({{1e308, 1e308}});
  auto b = Tensor64::matrix({{1e308}, {1e308}});
  CHECK_THROWS_AS(matmul(a, b), NumericError);
}

TEST_CASE("rank bounds and shape validation") {
  CHECK_THROWS_AS(Tensor64(std::vector<std::int64_t>{}), DimensionError);
  CHECK_THROWS_AS(Tensor64({1, 2, 3, 4}), DimensionError);
  CHECK_THROWS_AS(Tensor64({2, 2}, {1.0, 2.0}), DimensionError);
  Tensor64 cube({2, 2, 2});
  CHECK(cube.rank() == 3);
  CHECK(cube.numel() == 8);
}
