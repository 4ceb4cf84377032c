#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace sct::geo {

enum class Metric : std::uint8_t {
  chordal_sphere = 0,   ///< (lon, lat) in degrees, straight-line distance on the unit sphere
  euclidean_plane = 1,  ///< planar (x, y)
};

Metric parse_metric(std::string_view name);
std::string_view metric_name(Metric metric);

struct Coord {
  double x = 0.0;  ///< longitude in degrees, or planar x
  double y = 0.0;  ///< latitude in degrees, or planar y
};

/// Throws DomainError for latitudes outside [-90, 90], longitudes outside
/// [-180, 360) or non-finite coordinates.
double distance(Coord a, Coord b, Metric metric);

/// Validated, immutable set of distinct locations.
class LocationSet {
 public:
  LocationSet() = default;
  LocationSet(std::vector<Coord> coords, Metric metric);

  std::size_t size() const noexcept { return coords_.size(); }
  Metric metric() const noexcept { return metric_; }
  const std::vector<Coord>& coords() const noexcept { return coords_; }
  Coord operator[](std::size_t i) const { return coords_[i]; }

  double distance(std::size_t i, std::size_t j) const;

  /// Largest distance from location `from` to any other location; lies within
  /// a factor of two of the set diameter.
  double diameter_estimate(std::size_t from = 0) const;

 private:
  std::vector<Coord> coords_;
  Metric metric_ = Metric::euclidean_plane;
  // unit-sphere embedding, only populated for chordal_sphere
  std::vector<double> xyz_;
};

/// Greedy maximin permutation. `order[j]` is the original index placed at
/// position j. `min_dists[j - 1]` is the distance from position j to its
/// nearest predecessor, for j >= 1; position 0 has none.
struct MaximinOrdering {
  std::vector<std::size_t> order;
  std::vector<double> min_dists;

  std::size_t size() const noexcept { return order.size(); }
  /// delta at position j >= 1
  double delta(std::size_t position) const;
  /// position of each original index
  std::vector<std::size_t> inverse() const;
};

/// Exact O(L^2) greedy maximin ordering starting at original index `first`.
/// Ties are broken toward the lowest original index.
MaximinOrdering maximin_order(const LocationSet& locs, std::size_t first = 0);

/// Ordering positions of up to min(m, position) predecessors of `position`,
/// sorted by increasing distance; ties go to the earlier ordering position.
std::vector<std::size_t> nearest_predecessors(const MaximinOrdering& ordering,
                                              const LocationSet& locs, std::size_t position,
                                              std::size_t m);

/// nearest_predecessors for every position.
std::vector<std::vector<std::size_t>> conditioning_sets(const MaximinOrdering& ordering,
                                                        const LocationSet& locs, std::size_t m);

}  // namespace sct::geo
