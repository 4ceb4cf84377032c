#include "sct/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>

#include "sct/errors.hpp"

namespace sct::geo {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

void check_coord(Coord c, Metric metric) {
  if (!std::isfinite(c.x) || !std::isfinite(c.y)) {
    throw DomainError("non-finite coordinate");
  }
  if (metric == Metric::chordal_sphere) {
    if (c.y < -90.0 || c.y > 90.0) {
      std::ostringstream os;
      os << "latitude " << c.y << " outside [-90, 90]";
      throw DomainError(os.str());
    }
    if (c.x < -180.0 || c.x >= 360.0) {
      std::ostringstream os;
      os << "longitude " << c.x << " outside [-180, 360)";
      throw DomainError(os.str());
    }
  }
}

void embed(Coord c, double* out) {
  const double lon = c.x * kDegToRad;
  const double lat = c.y * kDegToRad;
  const double cl = std::cos(lat);
  out[0] = cl * std::cos(lon);
  out[1] = cl * std::sin(lon);
  out[2] = std::sin(lat);
}

// Key under which two coordinates denote the same point.
Coord canonical(Coord c, Metric metric) {
  if (metric == Metric::euclidean_plane) return c;
  if (c.y == 90.0 || c.y == -90.0) return {0.0, c.y};
  double lon = c.x < 0.0 ? c.x + 360.0 : c.x;
  if (lon >= 360.0) lon -= 360.0;
  return {lon, c.y};
}

}  // namespace

Metric parse_metric(std::string_view name) {
  if (name == "chordal-sphere" || name == "chordal") return Metric::chordal_sphere;
  if (name == "euclidean-plane" || name == "euclidean") return Metric::euclidean_plane;
  throw DomainError("unknown metric '" + std::string(name) + "'");
}

std::string_view metric_name(Metric metric) {
  return metric == Metric::chordal_sphere ? "chordal-sphere" : "euclidean-plane";
}

double distance(Coord a, Coord b, Metric metric) {
  check_coord(a, metric);
  check_coord(b, metric);
  if (metric == Metric::euclidean_plane) {
    return std::hypot(a.x - b.x, a.y - b.y);
  }
  double pa[3], pb[3];
  embed(a, pa);
  embed(b, pb);
  const double dx = pa[0] - pb[0], dy = pa[1] - pb[1], dz = pa[2] - pb[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

LocationSet::LocationSet(std::vector<Coord> coords, Metric metric)
    : coords_(std::move(coords)), metric_(metric) {
  if (coords_.empty()) throw DomainError("location set must not be empty");
  for (const auto& c : coords_) check_coord(c, metric_);

  std::vector<std::size_t> idx(coords_.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<Coord> keys(coords_.size());
  for (std::size_t i = 0; i < coords_.size(); ++i) keys[i] = canonical(coords_[i], metric_);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (keys[a].y != keys[b].y) return keys[a].y < keys[b].y;
    if (keys[a].x != keys[b].x) return keys[a].x < keys[b].x;
    return a < b;
  });
  for (std::size_t k = 1; k < idx.size(); ++k) {
    const auto& p = keys[idx[k - 1]];
    const auto& q = keys[idx[k]];
    if (p.x == q.x && p.y == q.y) {
      std::ostringstream os;
      os << "duplicate locations at indices " << std::min(idx[k - 1], idx[k]) << " and "
         << std::max(idx[k - 1], idx[k]) << " (" << coords_[idx[k]].x << ", "
         << coords_[idx[k]].y << ")";
      throw DomainError(os.str());
    }
  }

  if (metric_ == Metric::chordal_sphere) {
    xyz_.resize(3 * coords_.size());
    for (std::size_t i = 0; i < coords_.size(); ++i) embed(coords_[i], &xyz_[3 * i]);
  }
}

double LocationSet::distance(std::size_t i, std::size_t j) const {
  if (metric_ == Metric::euclidean_plane) {
    return std::hypot(coords_[i].x - coords_[j].x, coords_[i].y - coords_[j].y);
  }
  const double* a = &xyz_[3 * i];
  const double* b = &xyz_[3 * j];
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

double LocationSet::diameter_estimate(std::size_t from) const {
  double best = 0.0;
  for (std::size_t j = 0; j < size(); ++j) best = std::max(best, distance(from, j));
  return best;
}

double MaximinOrdering::delta(std::size_t position) const {
  if (position == 0 || position >= order.size()) {
    throw DomainError("delta is defined for ordering positions 1..L-1 only");
  }
  return min_dists[position - 1];
}

std::vector<std::size_t> MaximinOrdering::inverse() const {
  std::vector<std::size_t> pos(order.size());
  for (std::size_t j = 0; j < order.size(); ++j) pos[order[j]] = j;
  return pos;
}

MaximinOrdering maximin_order(const LocationSet& locs, std::size_t first) {
  const std::size_t n = locs.size();
  if (first >= n) throw DomainError("maximin_order: first index out of range");

  MaximinOrdering out;
  out.order.reserve(n);
  out.min_dists.reserve(n > 0 ? n - 1 : 0);

  std::vector<double> mind(n, std::numeric_limits<double>::infinity());
  std::vector<char> taken(n, 0);
  std::size_t cur = first;
  for (std::size_t step = 0; step < n; ++step) {
    taken[cur] = 1;
    out.order.push_back(cur);
    std::size_t best = n;
    double best_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      const double d = locs.distance(cur, i);
      if (d < mind[i]) mind[i] = d;
      // strict '>' keeps the lowest original index among ties
      if (mind[i] > best_d) {
        best_d = mind[i];
        best = i;
      }
    }
    if (best == n) break;
    out.min_dists.push_back(best_d);
    cur = best;
  }
  return out;
}

std::vector<std::size_t> nearest_predecessors(const MaximinOrdering& ordering,
                                              const LocationSet& locs, std::size_t position,
                                              std::size_t m) {
  if (position >= ordering.size()) throw DomainError("nearest_predecessors: position out of range");
  const std::size_t k = std::min(m, position);
  if (k == 0) return {};
  const std::size_t self = ordering.order[position];
  std::vector<std::pair<double, std::size_t>> cand(position);
  for (std::size_t p = 0; p < position; ++p) {
    cand[p] = {locs.distance(self, ordering.order[p]), p};
  }
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
  std::vector<std::size_t> out(k);
  for (std::size_t j = 0; j < k; ++j) out[j] = cand[j].second;
  return out;
}

std::vector<std::vector<std::size_t>> conditioning_sets(const MaximinOrdering& ordering,
                                                        const LocationSet& locs, std::size_t m) {
  std::vector<std::vector<std::size_t>> sets(ordering.size());
  for (std::size_t p = 0; p < ordering.size(); ++p) {
    sets[p] = nearest_predecessors(ordering, locs, p, m);
  }
  return sets;
}

}  // namespace sct::geo
