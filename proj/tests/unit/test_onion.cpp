#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "sct/errors.hpp"
#include "sct/onion_spline.hpp"

using namespace sct::onion;

namespace {

std::vector<double> random_beta(int D, std::mt19937_64& rng, double s = 1.0) {
  std::normal_distribution<double> nd(0.0, s);
  std::vector<double> b(D);
  for (auto& v : b) v = nd(rng);
  return b;
}

}  // namespace

TEST(KnotGrid, Defaults) {
  const KnotGrid k(-4, 4, 40);
  EXPECT_EQ(k.interior_count(), 45);
  EXPECT_EQ(k.basis_count(), 47);
  EXPECT_NEAR(k.spacing(), 8.0 / 42.0, 1e-15);
  EXPECT_DOUBLE_EQ(k.knot(2), -4.0);
  EXPECT_DOUBLE_EQ(k.knot(44), 4.0);
}

TEST(KnotGrid, SmallCases) {
  const KnotGrid k1(0, 1, 1);
  EXPECT_EQ(k1.interior_count(), 6);
  EXPECT_NEAR(k1.spacing(), 1.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(k1.knot(2), 0.0);
  EXPECT_DOUBLE_EQ(k1.knot(5), 1.0);
  const KnotGrid k3(-1, 1, 3);
  EXPECT_EQ(k3.interior_count(), 8);
  EXPECT_NEAR(k3.spacing(), 0.4, 1e-15);
  for (int j = -2; j < k3.interior_count() + 3; ++j) {
    EXPECT_NEAR(k3.knot(j + 1) - k3.knot(j), 0.4, 1e-12);
  }
}

TEST(KnotGrid, RejectsBadInput) {
  EXPECT_THROW(KnotGrid(1, 1, 3), sct::DomainError);
  EXPECT_THROW(KnotGrid(0, 1, 0), sct::DomainError);
}

TEST(Gamma, ConstantBetaGivesLogSpacing) {
  const KnotGrid k(-1, 1, 3);
  for (double c : {0.0, 17.3}) {
    const std::vector<double> beta(3, c);
    const auto g = gamma_from_beta(beta, k);
    for (int j = 5; j <= 7; ++j) EXPECT_NEAR(g[j - 1], std::log(k.spacing()), 1e-14);
    EXPECT_DOUBLE_EQ(g[0], k.knot(0));
  }
}

TEST(Gamma, HandComputedTwoParameterCase) {
  // D = 2 gives m = 7; a, b chosen so that k = 1
  const KnotGrid k(0.0, 4.0, 2);
  ASSERT_NEAR(k.spacing(), 1.0, 1e-15);
  const std::vector<double> beta{std::log(2.0), 0.0};
  const auto g = gamma_from_beta(beta, k);
  EXPECT_NEAR(g[4], std::log(2.0) - std::log(1.5), 1e-14);
  EXPECT_NEAR(g[5], -std::log(1.5), 1e-14);
  EXPECT_NEAR(std::exp(g[4]) + std::exp(g[5]), 2.0, 1e-14);
}

TEST(Gamma, ShiftInvarianceAndLargeValues) {
  const KnotGrid k(-4, 4, 10);
  std::mt19937_64 rng(1);
  auto beta = random_beta(10, rng);
  auto shifted = beta;
  for (auto& v : shifted) v += 650.0;
  const auto g1 = gamma_from_beta(beta, k), g2 = gamma_from_beta(shifted, k);
  for (std::size_t j = 0; j < g1.size(); ++j) EXPECT_NEAR(g1[j], g2[j], 1e-12);
  double s = 0.0;
  for (int j = 5; j <= k.basis_count() - 3; ++j) s += std::exp(g1[j - 1]);
  EXPECT_NEAR(s, (k.interior_count() - 5) * k.spacing(), 1e-10 * s);
}

TEST(Gamma, RejectsNonFinite) {
  const KnotGrid k(-4, 4, 2);
  const std::vector<double> beta{0.0, NAN};
  EXPECT_THROW(gamma_from_beta(beta, k), sct::DomainError);
}

TEST(HForward, ConstantBetaIsIdentity) {
  const KnotGrid k(-4, 4, 40);
  const OnionCoefficients c(k, std::vector<double>(40, 2.5));
  for (double x = -6; x <= 6; x += 0.01) EXPECT_NEAR(h_forward(x, c, k), x, 1e-12);
}

TEST(HForward, FixedPointsAndTails) {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 50; ++rep) {
    const KnotGrid k(-4, 4, 40);
    const OnionCoefficients c(k, random_beta(40, rng, 2.0));
    EXPECT_NEAR(h_forward(k.first_interior(), c, k), k.first_interior(), 1e-12);
    EXPECT_NEAR(spline_branch(k.first_interior(), c, k), k.first_interior(), 1e-12);
    EXPECT_NEAR(h_forward(-4.0, c, k), -4.0, 1e-12);
    EXPECT_NEAR(h_forward(4.0, c, k), 4.0, 1e-12);
    for (double x : {-9.0, -4.5, -4.0, 4.0, 4.2, 30.0}) {
      EXPECT_EQ(h_forward(x, c, k), x);
      EXPECT_EQ(h_derivative(x, c, k), 1.0);
    }
  }
}

TEST(HForward, Monotone) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-5, 5);
  const KnotGrid k(-4, 4, 20);
  for (int rep = 0; rep < 1000; ++rep) {
    const OnionCoefficients c(k, random_beta(20, rng, 1.5));
    for (int t = 0; t < 100; ++t) {
      double x1 = U(rng), x2 = U(rng);
      if (x1 == x2) continue;
      if (x1 > x2) std::swap(x1, x2);
      EXPECT_LT(h_forward(x1, c, k), h_forward(x2, c, k));
    }
  }
}

TEST(HDerivative, MatchesFiniteDifference) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(-3.9, 3.9);
  const KnotGrid k(-4, 4, 40);
  for (int rep = 0; rep < 50; ++rep) {
    const OnionCoefficients c(k, random_beta(40, rng));
    const double x = U(rng), h = 1e-5;
    const double fd = (h_forward(x + h, c, k) - h_forward(x - h, c, k)) / (2 * h);
    EXPECT_NEAR(h_derivative(x, c, k), fd, 1e-6 * fd);
    const double fd2 = (h_derivative(x + h, c, k) - h_derivative(x - h, c, k)) / (2 * h);
    EXPECT_NEAR(h_second_derivative(x, c, k), fd2, 1e-5 * std::max(1.0, std::abs(fd2)));
  }
}

TEST(HInverse, Examples) {
  const KnotGrid k(-4, 4, 40);
  const auto id = OnionCoefficients::identity(k);
  EXPECT_NEAR(h_inverse(0.37, id, k), 0.37, 1e-12);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-4, 4);
  for (int rep = 0; rep < 200; ++rep) {
    const OnionCoefficients c(k, random_beta(40, rng, 2.0));
    EXPECT_EQ(h_inverse(9.0, c, k), 9.0);
    const double x0 = U(rng);
    EXPECT_NEAR(h_inverse(h_forward(x0, c, k), c, k), x0, 1e-8);
  }
}

TEST(Basis, PartitionOfUnity) {
  const KnotGrid k(-4, 4, 12);
  for (double x = k.first_interior(); x <= k.last_interior(); x += 0.013) {
    double b[4];
    cox_de_boor(k, k.span(x), x, 3, b);
    EXPECT_NEAR(b[0] + b[1] + b[2] + b[3], 1.0, 1e-12);
  }
}

TEST(Table, CloseToExactPath) {
  const KnotGrid k(-4, 4, 40);
  std::mt19937_64 rng(6);
  const OnionCoefficients c(k, random_beta(40, rng, 0.5));
  const SplineEvalTable t(k);
  EXPECT_EQ(t.size(), 1000);
  EXPECT_DOUBLE_EQ(t.abscissa(0), k.first_interior());
  EXPECT_DOUBLE_EQ(t.abscissa(t.size() - 1), k.last_interior());
  for (double x = -3.99; x < 4; x += 0.05) EXPECT_NEAR(t.forward(x, c), h_forward(x, c, k), 1e-3);
}

TEST(BetaGradient, MatchesFiniteDifference) {
  const KnotGrid k(-2, 2, 6);
  std::mt19937_64 rng(7);
  const auto beta = random_beta(6, rng);
  const std::vector<double> xs{-1.7, -0.3, 0.2, 1.1, 1.9, 3.0};
  auto f = [&](const std::vector<double>& b) {
    const OnionCoefficients c(k, b);
    double s = 0.0;
    for (double x : xs) s += 0.7 * h_forward(x, c, k) + 1.3 * h_derivative(x, c, k);
    return s;
  };
  const OnionCoefficients c(k, beta);
  BetaGradient bg(k);
  bg.reset();
  for (double x : xs) bg.add(evaluate(x, c, k), 0.7, 1.3);
  std::vector<double> g(6);
  bg.finish(c, g);
  for (int d = 0; d < 6; ++d) {
    auto bp = beta, bm = beta;
    bp[d] += 1e-6;
    bm[d] -= 1e-6;
    EXPECT_NEAR(g[d], (f(bp) - f(bm)) / 2e-6, 1e-7);
  }
}
