#include <cmath>
#include <limits>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "sct/errors.hpp"
#include "sct/model.hpp"

using namespace sct;
namespace st = sct::testing;

namespace {

Ensemble single_location(int N) {
  Ensemble e;
  e.locs = geo::LocationSet({{10.0, 45.0}}, geo::Metric::chordal_sphere);
  e.Y.resize(N, 1);
  for (int r = 0; r < N; ++r) e.Y(r, 0) = st::st3_quantile((r + 0.5) / N, 2.0, 1.5, 1.6, 5.0);
  return e;
}

double integrate_density(const FittedModel& m) {
  auto f = [&](double y) { return std::exp(m.log_density(std::span<const double>(&y, 1))); };
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      f, -std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(), 15, 1e-10);
}

}  // namespace

TEST(SingleLocation, DensityIntegratesToOne) {
  const Ensemble e = single_location(40);
  for (auto family : {marginal::FamilyKind::gaussian, marginal::FamilyKind::skew_t3}) {
    for (bool use_h : {false, true}) {
      ModelConfig c = st::small_config();
      c.family = family;
      c.use_h = use_h;
      c.M = 1;
      const FittedModel m = FittedModel::fit(e, c);
      EXPECT_NEAR(integrate_density(m), 1.0, 1e-5) << marginal::family_name(family) << " h=" << use_h;
    }
  }
}

TEST(SingleLocation, IdentityIsStudentT) {
  const Ensemble e = single_location(30);
  ModelConfig c = st::small_config();
  c.family = marginal::FamilyKind::identity;
  c.use_h = false;
  c.standardize = false;
  c.M = 1;
  const FittedModel m = FittedModel::fit(e, c);
  const double y = 1.3;
  const auto pred = m.transport().predictive(0, std::span<const double>(&y, 1));
  const double t = (y - pred.location) / pred.scale;
  const double nu = pred.dof;
  const double expect = std::lgamma((nu + 1) / 2) - std::lgamma(nu / 2) - 0.5 * std::log(nu * M_PI) -
                        std::log(pred.scale) - (nu + 1) / 2 * std::log1p(t * t / nu);
  EXPECT_NEAR(m.log_density(std::span<const double>(&y, 1)), expect, 1e-10);
}

TEST(Model, DecompositionSumsToDensity) {
  const auto& m = st::small_model();
  const auto& Y = st::small_field().test.Y;
  for (Eigen::Index r = 0; r < Y.rows(); ++r) {
    const Eigen::VectorXd yv = Y.row(r).transpose();
    const std::span<const double> y(yv.data(), std::size_t(yv.size()));
    const auto d = m.decompose(y);
    EXPECT_NEAR(d.total(), m.log_density(y), 1e-9 * std::abs(d.total()));
    EXPECT_TRUE(std::isfinite(d.transport) && std::isfinite(d.onion) && std::isfinite(d.parametric));
  }
}

TEST(Model, RoundTripOnTraining) {
  const auto& m = st::small_model();
  const auto rt = roundtrip(m, st::small_field().train.Y);
  EXPECT_TRUE(rt.all_finite);
  EXPECT_LT(rt.max_z_error, 1e-6);
  EXPECT_LT(rt.max_y_relative, 1e-6);
}

TEST(Sampling, DeterministicAndFromNoise) {
  const auto& m = st::small_model();
  const Eigen::MatrixXd a = sample(m, 5, 17);
  const Eigen::MatrixXd b = sample(m, 5, 17);
  EXPECT_EQ(a, b);
  EXPECT_EQ(sample_from_noise(m, draw_noise(5, m.size(), 17)), a);
  EXPECT_NE(sample(m, 5, 18), a);
  EXPECT_TRUE(a.allFinite());
}

TEST(Sampling, NoiseShapeAndSeed) {
  const Eigen::MatrixXd z = draw_noise(4, 7, 3);
  EXPECT_EQ(z.rows(), 4);
  EXPECT_EQ(z.cols(), 7);
  EXPECT_EQ(z, draw_noise(4, 7, 3));
  EXPECT_THROW(sample_from_noise(st::small_model(), draw_noise(2, 3, 1)), DomainError);
}

TEST(Scoring, MeanNegativeMatchesDensities) {
  const auto& m = st::small_model();
  const auto& Y = st::small_field().test.Y;
  const ScoreReport s = log_score(m, Y, "holdout");
  ASSERT_EQ(s.log_density.size(), std::size_t(Y.rows()));
  double mean = 0.0;
  for (Eigen::Index r = 0; r < Y.rows(); ++r) {
    const Eigen::VectorXd yv = Y.row(r).transpose();
    const std::span<const double> y(yv.data(), std::size_t(yv.size()));
    mean += m.log_density(y) / double(Y.rows());
  }
  EXPECT_NEAR(-mean, s.mean_negative, 1e-9 * std::abs(mean));
  EXPECT_GT(s.standard_error, 0.0);
  EXPECT_EQ(s.split, "holdout");
}

TEST(Quantile, PooledInterpolation) {
  Eigen::MatrixXd v(1, 3);
  v << 3, 1, 2;
  EXPECT_DOUBLE_EQ(global_quantile(v, 0.5), 2.0);
  Eigen::MatrixXd w(2, 2);
  w << 0, 3, 2, 1;
  EXPECT_DOUBLE_EQ(global_quantile(w, 0.25), 0.75);
  double prev = -std::numeric_limits<double>::infinity();
  for (double p = 0.05; p < 1.0; p += 0.05) {
    EXPECT_GE(global_quantile(w, p), prev);
    prev = global_quantile(w, p);
  }
  EXPECT_THROW(global_quantile(v, 0.0), DomainError);
  EXPECT_THROW(global_quantile(v, 1.5), DomainError);
}

TEST(Exceedance, FrequenciesPerLocation) {
  Eigen::MatrixXd s(4, 2);
  s << 1, 5, 2, 5, 3, 0, 4, 0;
  const auto above = exceedance_map(s, 2.5, Direction::above);
  EXPECT_DOUBLE_EQ(above[0], 0.5);
  EXPECT_DOUBLE_EQ(above[1], 0.5);
  const auto below = exceedance_map(s, 1.5, Direction::below);
  EXPECT_DOUBLE_EQ(below[0], 0.25);
  EXPECT_DOUBLE_EQ(below[1], 0.5);
  for (double q : exceedance_map(s, -std::numeric_limits<double>::infinity(), Direction::above)) EXPECT_EQ(q, 1.0);
  EXPECT_EQ(parse_direction("below"), Direction::below);
  EXPECT_THROW(parse_direction("sideways"), DomainError);
}

TEST(Ensemble, Validate) {
  Ensemble e = single_location(3);
  EXPECT_NO_THROW(e.validate());
  e.Y(1, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(e.validate(), DomainError);
}
