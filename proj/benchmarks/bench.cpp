#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "sct/config.hpp"
#include "sct/estimation.hpp"
#include "sct/geometry.hpp"
#include "sct/onion_spline.hpp"
#include "sct/transport_map.hpp"

namespace {

using namespace sct;

geo::LocationSet grid(int nx, int ny) {
  std::vector<geo::Coord> c;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) c.push_back({double(i), 10.0 + j});
  return geo::LocationSet(std::move(c), geo::Metric::chordal_sphere);
}

Eigen::MatrixXd skewed(std::size_t N, std::size_t L, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> gd(2.0, 1.0);
  Eigen::MatrixXd Y(N, L);
  for (Eigen::Index j = 0; j < Y.rows(); ++j)
    for (Eigen::Index l = 0; l < Y.cols(); ++l) Y(j, l) = gd(rng);
  return Y;
}

void BM_Stage1Objective(benchmark::State& state) {
  const int nx = 64, ny = static_cast<int>(state.range(0)) / 64;
  const auto locs = grid(nx, ny);
  const auto ord = geo::maximin_order(locs, 0);
  const ModelConfig cfg;
  const est::Stage1Problem prob(locs, ord, cfg);
  const Eigen::MatrixXd Y = skewed(20, locs.size(), 1);
  const auto x = prob.initialize(Y);
  std::vector<double> g(x.size());
  for (auto _ : state) benchmark::DoNotOptimize(prob.objective(x, Y, g));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Stage1Objective)->Arg(1024)->Arg(2048)->Arg(4096)->Unit(benchmark::kMillisecond)->Complexity();

void BM_TransportLoglik(benchmark::State& state) {
  const auto locs = grid(64, static_cast<int>(state.range(0)) / 64);
  const auto ord = geo::maximin_order(locs, 0);
  tm::TMStructure s = tm::tm_structure(locs, ord, 30);
  s.m = 8;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd Z(20, static_cast<Eigen::Index>(locs.size()));
  for (Eigen::Index j = 0; j < Z.size(); ++j) Z(j) = nd(rng);
  tm::TMHyper h;
  const tm::TMSettings set;
  std::vector<double> g(tm::kHyperCount);
  for (auto _ : state) benchmark::DoNotOptimize(tm::tm_marginal_loglik(Z, s, h, set, g));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_TransportLoglik)->Arg(1024)->Arg(2048)->Unit(benchmark::kMillisecond)->Complexity();

struct SplineFixture {
  onion::KnotGrid knots{-4.0, 4.0, 40};
  onion::OnionCoefficients coeffs;
  std::vector<double> xs;
  SplineFixture() {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    std::vector<double> beta(40);
    for (auto& b : beta) b = 0.5 * nd(rng);
    coeffs = onion::OnionCoefficients(knots, beta);
    for (int i = 0; i < 4096; ++i) xs.push_back(6.0 * nd(rng) / 2.0);
  }
};

void BM_SplineExact(benchmark::State& state) {
  const SplineFixture f;
  for (auto _ : state) {
    double acc = 0.0;
    for (double x : f.xs) acc += onion::h_forward(x, f.coeffs, f.knots);
    benchmark::DoNotOptimize(acc);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.xs.size()));
}
BENCHMARK(BM_SplineExact);

void BM_SplineTable(benchmark::State& state) {
  const SplineFixture f;
  const onion::SplineEvalTable table(f.knots);
  for (auto _ : state) {
    double acc = 0.0;
    for (double x : f.xs) acc += table.forward(x, f.coeffs);
    benchmark::DoNotOptimize(acc);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.xs.size()));
}
BENCHMARK(BM_SplineTable);

}  // namespace

BENCHMARK_MAIN();
