#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "sgiformer/gradcheck.hpp"
#include "sgiformer/tensor.hpp"
#include "test_support.hpp"

using namespace sgiformer;
using sgiformer::testing::random_const;
using sgiformer::testing::random_param;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_close(std::span<const double> got, const std::vector<double>& want, double tol = 1e-12) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(tol));
}

void expect_gradients(const std::function<Tensor()>& loss, const std::vector<Tensor>& params) {
  std::vector<GradCheckTarget> targets;
  for (std::size_t i = 0; i < params.size(); ++i) targets.push_back({"p" + std::to_string(i), params[i]});
  auto report = check_gradients(loss, targets);
  for (const auto& f : report.failures) {
    MESSAGE(f.name << "[" << f.index << "] analytic " << f.analytic << " numeric " << f.numeric);
  }
  CHECK(report.ok());
  CHECK(report.checked > 0);
}

}  // namespace

TEST_CASE("matmul examples") {
  auto eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto x = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6});
  check_close(matmul(eye, x).data(), {1, 2, 3, 4, 5, 6});

  auto a = Tensor::from({2, 2}, {1, 2, 3, 4});
  auto b = Tensor::from({2, 1}, {1, 1});
  auto ab = matmul(a, b);
  CHECK(ab.shape() == Shape{2, 1});
  check_close(ab.data(), {3, 7});

  std::mt19937_64 rng(1);
  auto z = matmul(Tensor::zeros({2, 3}), random_const({3, 4}, rng));
  CHECK(z.shape() == Shape{2, 4});
  for (double v : z.data()) CHECK(v == 0.0);
}

TEST_CASE("matmul shape error names both shapes") {
  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({2, 3});
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[2x3]", msg.find("[2x3]") + 1) != std::string::npos);
  }
}

TEST_CASE("matmul_nt agrees with matmul of transpose") {
  std::mt19937_64 rng(2);
  auto a = random_const({3, 4}, rng);
  auto b = random_const({5, 4}, rng);
  auto ref = matmul(a, transpose(b));
  check_close(matmul_nt(a, b).data(), std::vector<double>(ref.data().begin(), ref.data().end()));
}

TEST_CASE("softmax examples") {
  auto u = softmax_rows(Tensor::from({1, 4}, {2, 2, 2, 2}));
  check_close(u.data(), {0.25, 0.25, 0.25, 0.25});

  auto s = softmax_rows(Tensor::from({1, 2}, {0.0, std::log(3.0)}));
  check_close(s.data(), {0.25, 0.75});

  std::mt19937_64 rng(3);
  auto x = random_const({3, 5}, rng, -4, 4);
  auto shifted = add_scalar(x, 123.25);
  auto sx = softmax_rows(x);
  auto ss = softmax_rows(shifted);
  for (std::size_t i = 0; i < sx.numel(); ++i) CHECK(sx.at(i) == doctest::Approx(ss.at(i)).epsilon(1e-12));
}

TEST_CASE("softmax rows are distributions on random inputs") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = random_const({4, 7}, rng, -30, 30);
    auto s = softmax_rows(x);
    for (std::size_t r = 0; r < 4; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 7; ++c) {
        CHECK(s.at(r, c) >= 0.0);
        CHECK(s.at(r, c) <= 1.0);
        total += s.at(r, c);
      }
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("softmax gives exact zeros to -inf and rejects all -inf rows") {
  auto s = softmax_rows(Tensor::from({1, 3}, {0.3, -kInf, 1.2}));
  CHECK(s.at(0, 1) == 0.0);
  CHECK(s.at(0, 0) + s.at(0, 2) == doctest::Approx(1.0));
  CHECK_THROWS_AS(softmax_rows(Tensor::from({1, 2}, {-kInf, -kInf})), std::domain_error);
}

TEST_CASE("backward examples") {
  auto x = Tensor::parameter({3}, {1.5, -2.0, 0.25});
  backward(sum(x));
  check_close(x.grad(), {1, 1, 1});

  auto y = Tensor::parameter({3}, {1.5, -2.0, 0.25});
  backward(sum(y * y));
  check_close(y.grad(), {3.0, -4.0, 0.5});
}

TEST_CASE("backward accumulates through shared nodes and rejects non-scalars") {
  auto x = Tensor::parameter({2}, {1.0, 2.0});
  auto h = scale(x, 3.0);
  backward(add(sum(h), sum(h * h)));
  // d/dx [3x + 9x^2] = 3 + 18x
  check_close(x.grad(), {21.0, 39.0});
  CHECK_THROWS_AS(backward(x), ShapeError);
}

TEST_CASE("no_grad guard records no graph") {
  auto x = Tensor::parameter({2}, {1.0, 2.0});
  Tensor y;
  {
    NoGradGuard guard;
    y = sum(x * x);
  }
  CHECK_FALSE(y.requires_grad());
  CHECK(grad_enabled());
}

TEST_CASE("finite-difference agreement for every differentiable op") {
  std::mt19937_64 rng(7);
  auto a = random_param({3, 4}, rng);
  auto b = random_param({3, 4}, rng);
  auto w = random_param({4, 2}, rng);
  auto row = random_param({4}, rng);
  auto pos = random_param({3, 4}, rng, 0.5, 2.0);
  auto gamma = random_param({4}, rng);
  auto beta = random_param({4}, rng);
  // keep entries away from the kinks of relu/abs
  auto away = random_param({3, 4}, rng, 0.2, 1.0);
  auto signs = Tensor::from({3, 4}, {1, -1, 1, -1, -1, 1, -1, 1, 1, 1, -1, -1});
  std::vector<std::size_t> idx{2, 0, 2};
  std::vector<std::size_t> targets{1, 3, 0};
  std::vector<std::vector<std::size_t>> groups{{0, 2}, {1}};

  SUBCASE("arithmetic") {
    expect_gradients([&] { return sum(add(a, b) * sub(a, scale(b, 0.5)) + div(a, pos)); }, {a, b, pos});
  }
  SUBCASE("pointwise") {
    expect_gradients(
        [&] {
          auto k = mul(away, signs);
          return sum(relu(k) + sigmoid(a) + softplus(b) + exp(scale(a, 0.5)) + log(pos) + abs(k));
        },
        {away, a, b, pos});
  }
  SUBCASE("matmul family") {
    expect_gradients([&] { return sum(matmul(a, w) * matmul(b, w)) + sum(matmul_nt(a, b)); }, {a, b, w});
    expect_gradients([&] { return sum(transpose(a) * transpose(b)); }, {a, b});
  }
  SUBCASE("softmax family") {
    expect_gradients([&] { return sum(softmax_rows(a) * b) + sum(log_softmax_rows(b) * a); }, {a, b});
  }
  SUBCASE("layer norm") {
    expect_gradients([&] { return sum(layer_norm_rows(a, gamma, beta) * b); }, {a, gamma, beta});
  }
  SUBCASE("layout") {
    expect_gradients(
        [&] {
          auto g = gather_rows(a, idx);
          auto c = concat_rows({g, b});
          auto d = concat_cols({a, slice_cols(b, 1, 2)});
          return sum(c * c) + sum(d) + sum(add_row(a, row) * b) + mean(row_sum(b) * row_sum(a));
        },
        {a, b, row});
  }
  SUBCASE("segment mean and cross entropy") {
    expect_gradients(
        [&] { return sum(segment_mean(a, groups) * segment_mean(b, groups)) + cross_entropy(a, targets); },
        {a, b});
  }
}

TEST_CASE("segment_mean matches loop oracle") {
  std::mt19937_64 rng(8);
  auto x = random_const({6, 3}, rng);
  std::vector<std::vector<std::size_t>> groups{{5, 1}, {0}, {2, 3, 4}};
  auto y = segment_mean(x, groups);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (auto r : groups[g]) acc += x.at(r, c);
      CHECK(y.at(g, c) == doctest::Approx(acc / groups[g].size()).epsilon(1e-14));
    }
  }
  CHECK_THROWS(segment_mean(x, {{0}, {}}));
}

TEST_CASE("cross entropy of uniform logits is log of class count") {
  auto logits = Tensor::zeros({5, 4});
  std::vector<std::size_t> t{0, 1, 2, 3, 3};
  CHECK(cross_entropy(logits, t).item() == doctest::Approx(std::log(4.0)).epsilon(1e-14));
}

TEST_CASE("layer norm output has zero mean and unit variance with identity affine") {
  std::mt19937_64 rng(9);
  auto x = random_const({3, 8}, rng, -5, 5);
  auto y = layer_norm_rows(x, Tensor::full({8}, 1.0), Tensor::zeros({8}), 0.0);
  for (std::size_t r = 0; r < 3; ++r) {
    double m = 0, v = 0;
    for (std::size_t c = 0; c < 8; ++c) m += y.at(r, c);
    m /= 8;
    for (std::size_t c = 0; c < 8; ++c) v += (y.at(r, c) - m) * (y.at(r, c) - m);
    CHECK(std::abs(m) < 1e-12);
    CHECK(v / 8 == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("op results refuse mutation") {
  auto x = Tensor::parameter({2}, {1, 2});
  auto y = scale(x, 2.0);
  CHECK_THROWS_AS(y.mutable_data(), std::logic_error);
}
