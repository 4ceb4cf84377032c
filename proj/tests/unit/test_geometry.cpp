#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "sct/errors.hpp"
#include "sct/geometry.hpp"

using namespace sct::geo;

namespace {

LocationSet line(int n) {
  std::vector<Coord> c;
  for (int i = 0; i < n; ++i) c.push_back({double(i), 0.0});
  return LocationSet(c, Metric::euclidean_plane);
}

}  // namespace

TEST(Distance, ChordalIdentityAndAntipode) {
  EXPECT_DOUBLE_EQ(distance({0, 0}, {0, 0}, Metric::chordal_sphere), 0.0);
  EXPECT_NEAR(distance({0, 0}, {180, 0}, Metric::chordal_sphere), 2.0, 1e-15);
  EXPECT_NEAR(distance({0, 90}, {0, -90}, Metric::chordal_sphere), 2.0, 1e-15);
}

TEST(Distance, Euclidean) { EXPECT_DOUBLE_EQ(distance({0, 0}, {3, 4}, Metric::euclidean_plane), 5.0); }

TEST(Distance, RejectsBadLatitude) {
  EXPECT_THROW(distance({0, 91}, {0, 0}, Metric::chordal_sphere), sct::DomainError);
  EXPECT_THROW(LocationSet({{0, 0}, {400, 0}}, Metric::chordal_sphere), sct::DomainError);
}

TEST(Distance, SymmetryOnRandomPairs) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> lon(-180, 180), lat(-90, 90);
  for (int i = 0; i < 10000; ++i) {
    const Coord a{lon(rng), lat(rng)}, b{lon(rng), lat(rng)};
    EXPECT_NEAR(distance(a, b, Metric::chordal_sphere), distance(b, a, Metric::chordal_sphere), 1e-12);
  }
}

TEST(LocationSet, RejectsDuplicates) {
  EXPECT_THROW(LocationSet({{1, 2}, {1, 2}}, Metric::euclidean_plane), sct::DomainError);
}

TEST(Maximin, LineOfFive) {
  const auto ord = maximin_order(line(5), 0);
  EXPECT_EQ(ord.order, (std::vector<std::size_t>{0, 4, 2, 1, 3}));
  EXPECT_EQ(ord.min_dists, (std::vector<double>{4, 2, 1, 1}));
}

TEST(Maximin, SingleLocation) {
  const auto ord = maximin_order(line(1), 0);
  EXPECT_EQ(ord.order, (std::vector<std::size_t>{0}));
  EXPECT_TRUE(ord.min_dists.empty());
}

TEST(Maximin, GridOppositeCorner) {
  std::vector<Coord> c;
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) c.push_back({double(x), double(y)});
  const auto ord = maximin_order(LocationSet(c, Metric::euclidean_plane), 0);
  EXPECT_EQ(ord.order[1], 8u);
}

TEST(Maximin, PermutationAndNonIncreasingDelta) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> U(0, 1);
  std::vector<Coord> c;
  for (int i = 0; i < 200; ++i) c.push_back({U(rng), U(rng)});
  const auto ord = maximin_order(LocationSet(c, Metric::euclidean_plane), 17);
  auto sorted = ord.order;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);
  for (std::size_t j = 1; j < ord.min_dists.size(); ++j) EXPECT_LE(ord.min_dists[j], ord.min_dists[j - 1]);
  EXPECT_EQ(ord.order[0], 17u);
}

TEST(NearestPredecessors, Examples) {
  const auto locs = line(5);
  const auto ord = maximin_order(locs, 0);
  EXPECT_TRUE(nearest_predecessors(ord, locs, 0, 3).empty());
  EXPECT_EQ(nearest_predecessors(ord, locs, 1, 5), (std::vector<std::size_t>{0}));
  // x = 1 sits at position 3; x = 0 (position 0) and x = 2 (position 2) tie at distance 1
  EXPECT_EQ(nearest_predecessors(ord, locs, 3, 2), (std::vector<std::size_t>{0, 2}));
}
