#include "synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace sct::testing {

namespace bm = boost::math;

double st3_cdf(double y, double mu, double sigma, double alpha, double nu) {
  const bm::students_t t(nu);
  const double z = (y - mu) / sigma;
  const double a2 = alpha * alpha;
  if (z < 0) return 2.0 / (1.0 + a2) * bm::cdf(t, alpha * z);
  return 1.0 / (1.0 + a2) + 2.0 * a2 / (1.0 + a2) * (bm::cdf(t, z / alpha) - 0.5);
}

double st3_pdf(double y, double mu, double sigma, double alpha, double nu) {
  const bm::students_t t(nu);
  const double z = (y - mu) / sigma;
  const double x = z < 0 ? alpha * z : z / alpha;
  return 2.0 * alpha / ((1.0 + alpha * alpha) * sigma) * bm::pdf(t, x);
}

double st3_quantile(double p, double mu, double sigma, double alpha, double nu) {
  const bm::students_t t(nu);
  const double a2 = alpha * alpha;
  const double p0 = 1.0 / (1.0 + a2);
  double z;
  if (p < p0) {
    z = bm::quantile(t, p * (1.0 + a2) / 2.0) / alpha;
  } else {
    z = alpha * bm::quantile(t, 0.5 + (p - p0) * (1.0 + a2) / (2.0 * a2));
  }
  return mu + sigma * z;
}

geo::LocationSet lonlat_grid(int nx, int ny, double lon0, double lat0) {
  std::vector<geo::Coord> c;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) c.push_back({lon0 + i, lat0 + j});
  }
  return geo::LocationSet(std::move(c), geo::Metric::chordal_sphere);
}

SyntheticField skewed_field(std::uint64_t seed, int n_train, int n_test, int nx, int ny) {
  const geo::LocationSet locs = lonlat_grid(nx, ny);
  const int L = nx * ny;
  const double ell = 3.0 * std::numbers::pi / 180.0;

  Eigen::MatrixXd C(L, L);
  for (int i = 0; i < L; ++i) {
    for (int j = 0; j < L; ++j) {
      const double r = std::sqrt(3.0) * locs.distance(i, j) / ell;
      C(i, j) = (1.0 + r) * std::exp(-r);
    }
  }
  C.diagonal().array() += 1e-10;
  const Eigen::MatrixXd Lc = Eigen::LLT<Eigen::MatrixXd>(C).matrixL();

  SyntheticField out;
  out.theta.resize(L, 4);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const double u = (nx > 1) ? double(i) / (nx - 1) : 0.0;
      const double v = (ny > 1) ? double(j) / (ny - 1) : 0.0;
      const int l = j * nx + i;
      out.theta(l, 0) = 10.0 + 2.0 * std::sin(2.0 * std::numbers::pi * u) + v;
      out.theta(l, 1) = 1.0 + 0.5 * v;
      out.theta(l, 2) = 2.0 + 1.0 * u;
      out.theta(l, 3) = 4.0;
    }
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  const bm::normal std_normal;
  const int total = n_train + n_test;
  Eigen::MatrixXd Y(total, L);
  Eigen::VectorXd xi(L);
  for (int r = 0; r < total; ++r) {
    for (int l = 0; l < L; ++l) xi(l) = nd(rng);
    const Eigen::VectorXd w = Lc * xi;
    for (int l = 0; l < L; ++l) {
      const double p = bm::cdf(std_normal, w(l));
      Y(r, l) = st3_quantile(p, out.theta(l, 0), out.theta(l, 1), out.theta(l, 2), out.theta(l, 3));
    }
  }
  out.train = Ensemble{locs, Y.topRows(n_train)};
  out.test = Ensemble{locs, Y.bottomRows(n_test)};
  return out;
}

double ks_statistic(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double F = 0.5 * std::erfc(-x[i] / std::sqrt(2.0));
    d = std::max({d, F - double(i) / n, double(i + 1) / n - F});
  }
  return d;
}

double ks_critical_value(int n, double level, int draws, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<double> stats(draws), x(n);
  for (int d = 0; d < draws; ++d) {
    for (auto& v : x) v = nd(rng);
    stats[d] = ks_statistic(x);
  }
  std::sort(stats.begin(), stats.end());
  return stats[static_cast<std::size_t>(std::ceil((1.0 - level) * draws)) - 1];
}

}  // namespace sct::testing
