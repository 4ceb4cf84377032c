#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "sct/errors.hpp"
#include "sct/transport_map.hpp"

using namespace sct;
using namespace sct::tm;

namespace {

struct Problem {
  Eigen::MatrixXd Z;
  TMStructure s;
};

Problem make_problem(int N, int nx, std::uint64_t seed, std::size_t m = 3) {
  std::vector<geo::Coord> c;
  for (int y = 0; y < nx; ++y)
    for (int x = 0; x < nx; ++x) c.push_back({double(x), double(y)});
  const geo::LocationSet locs(c, geo::Metric::euclidean_plane);
  const auto ord = geo::maximin_order(locs, 0);
  Problem p;
  p.s = tm_structure(locs, ord, m);
  p.s.m = m;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  const int L = nx * nx;
  p.Z.resize(N, L);
  for (int r = 0; r < N; ++r) {
    double prev = 0.0;
    for (int l = 0; l < L; ++l) {
      prev = 0.6 * prev + 0.8 * nd(rng) + 0.2 * std::tanh(prev);
      p.Z(r, l) = prev;
    }
  }
  return p;
}

TMHyper some_hyper() {
  TMHyper h;
  h.theta = {0.1, -0.2, 0.3, 0.2, -0.5, 0.1};
  return h;
}

}  // namespace

TEST(Prior, Quantities) {
  const TMHyper zero;
  const PriorQuantities p = prior_quantities(std::exp(1.0), zero, 4.0);
  EXPECT_DOUBLE_EQ(p.alpha, 2.0625);
  EXPECT_NEAR(p.expected_d2, std::exp(1.0), 1e-14);
  EXPECT_NEAR(p.beta, std::exp(1.0) * 1.0625, 1e-14);
  EXPECT_NEAR(p.sigma2, std::exp(1.0), 1e-14);
  EXPECT_THROW(prior_quantities(0.0, zero, 4.0), DomainError);
  EXPECT_THROW(prior_quantities(1.0, zero, 0.0), DomainError);
}

TEST(Prior, ConditioningCap) {
  EXPECT_EQ(conditioning_cap(0.0, 0.01), 4u);
  EXPECT_EQ(conditioning_cap(10.0, 0.01), 1u);
  EXPECT_EQ(conditioning_cap(-20.0, 0.01, 30), 30u);
  EXPECT_THROW(conditioning_cap(0.0, 1.5), DomainError);
}

TEST(Kernel, ValueAtOriginAndSymmetry) {
  const TMSettings st;
  const KernelContext c = kernel_context(3, 0.5, some_hyper(), st);
  const std::vector<double> zero(3, 0.0);
  EXPECT_NEAR(tm_kernel(zero, zero, c), c.sigma2 / c.expected_d2, 1e-15);
  const std::vector<double> a{0.3, -1.0, 2.0}, b{1.1, 0.4, -0.2};
  EXPECT_DOUBLE_EQ(tm_kernel(a, b, c), tm_kernel(b, a, c));
  TMSettings lin;
  lin.linear = true;
  const KernelContext cl = kernel_context(3, 0.5, some_hyper(), lin);
  EXPECT_EQ(tm_kernel(zero, zero, cl), 0.0);
}

TEST(Kernel, GramIsPositiveSemidefinite) {
  const KernelContext c = kernel_context(4, 0.3, some_hyper(), TMSettings{});
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  const int n = 40;
  std::vector<std::vector<double>> x(n, std::vector<double>(4));
  for (auto& v : x)
    for (auto& e : v) e = nd(rng);
  Eigen::MatrixXd K(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) K(i, j) = tm_kernel(x[i], x[j], c);
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(K).eigenvalues();
  EXPECT_GT(ev.minCoeff(), -1e-10 * ev.maxCoeff());
}

TEST(Evidence, SumsOverLocations) {
  const Problem p = make_problem(12, 4, 3);
  const TMHyper h = some_hyper();
  const TMSettings st;
  double total = 0.0;
  for (std::size_t i = 0; i < p.s.size(); ++i) total += location_evidence(p.Z, p.s, i, h, st, false).value;
  EXPECT_NEAR(tm_marginal_loglik(p.Z, p.s, h, st), total, 1e-10 * std::abs(total));
}

TEST(Evidence, GradientMatchesFiniteDifference) {
  const Problem p = make_problem(10, 4, 4);
  const TMHyper h = some_hyper();
  for (bool linear : {false, true}) {
    TMSettings st;
    st.linear = linear;
    std::array<double, kHyperCount> g{};
    tm_marginal_loglik(p.Z, p.s, h, st, g);
    for (std::size_t k = 0; k < kHyperCount; ++k) {
      if (linear && (k == kGamma || k == kSigma1 || k == kSigma2)) {
        EXPECT_EQ(g[k], 0.0);
        continue;
      }
      TMHyper hp = h, hm = h;
      const double step = 1e-5;
      hp.theta[k] += step;
      hm.theta[k] -= step;
      const double fd = (tm_marginal_loglik(p.Z, p.s, hp, st) - tm_marginal_loglik(p.Z, p.s, hm, st)) / (2 * step);
      EXPECT_NEAR(g[k], fd, 1e-6 * std::max(1.0, std::abs(fd))) << "component " << k;
    }
  }
}

TEST(Posterior, ApplyInvertRoundTrip) {
  const Problem p = make_problem(15, 4, 5);
  const TMPosterior post(p.Z, p.s, some_hyper(), TMSettings{});
  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd;
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> zt(16);
    for (auto& v : zt) v = nd(rng);
    const auto z = post.apply(zt);
    const auto back = post.invert(z);
    for (std::size_t l = 0; l < zt.size(); ++l) EXPECT_NEAR(back[l], zt[l], 1e-9);
  }
}

TEST(Posterior, TriangularAndMonotone) {
  const Problem p = make_problem(15, 4, 7);
  const TMPosterior post(p.Z, p.s, some_hyper(), TMSettings{});
  std::vector<double> zt(16, 0.2);
  const auto base = post.apply(zt);
  const auto& order = p.s.order;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    std::vector<double> bumped = zt;
    bumped[order[pos]] += 0.5;
    const auto z = post.apply(bumped);
    for (std::size_t q = 0; q < pos; ++q) EXPECT_EQ(z[order[q]], base[order[q]]);
    EXPECT_GT(z[order[pos]], base[order[pos]]);
  }
}

TEST(Posterior, DensityDecomposes) {
  const Problem p = make_problem(15, 3, 8);
  const TMPosterior post(p.Z, p.s, some_hyper(), TMSettings{});
  const std::vector<double> zt{0.1, -0.4, 1.2, 0.0, 0.7, -1.1, 0.3, 0.9, -0.2};
  const auto terms = post.log_density_terms(zt);
  double sum = 0.0;
  for (double t : terms) sum += t;
  EXPECT_NEAR(post.log_density(zt), sum, 1e-12);
  EXPECT_TRUE(p.s.neighbors[0].empty());
}

TEST(Fit, TwoReplicatesFinite) {
  const Problem p = make_problem(2, 3, 9);
  opt::OptimizerConfig cfg;
  cfg.max_iter = 50;
  const TMFitResult r = tm_fit(p.Z, p.s, TMSettings{}, cfg);
  EXPECT_TRUE(std::isfinite(r.optimization.objective));
  const std::vector<double> zt(9, 0.5);
  EXPECT_TRUE(std::isfinite(r.posterior.log_density(zt)));
}

TEST(Fit, ImprovesOnStart) {
  const Problem p = make_problem(30, 4, 10, 5);
  opt::OptimizerConfig cfg;
  cfg.max_iter = 100;
  const TMHyper start;
  const double before = tm_marginal_loglik(p.Z, p.s, start, TMSettings{});
  const TMFitResult r = tm_fit(p.Z, p.s, TMSettings{}, cfg, start);
  EXPECT_GT(tm_marginal_loglik(r.posterior.training(), r.posterior.structure(), r.posterior.hyper(), TMSettings{}),
            before);
}
