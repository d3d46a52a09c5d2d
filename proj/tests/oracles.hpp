#pragma once

// Reference computations shared by the unit tests and the acceptance runner.
// They deliberately avoid the library's own code paths.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

inline long double trust(std::uint64_t t, std::uint64_t f, long double theta) {
  return (static_cast<long double>(t) + theta) / (static_cast<long double>(t + f) + 1.0L);
}

struct P2 {
  double x, y;
};

inline double dist_point_segment(P2 p, P2 a, P2 b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = a.x + t * dx - p.x, ey = a.y + t * dy - p.y;
  return std::sqrt(ex * ex + ey * ey);
}

// Distance between the convex hulls of two planar point sets. The closest
// pair always involves a vertex of one hull and an edge (or vertex) of the
// other, and every segment between same-class points lies inside its hull,
// so scanning all point/segment pairs is exact. Equals the full hard-margin
// width of the separating hyperplane.
inline double hull_distance(const std::vector<P2>& A, const std::vector<P2>& B) {
  double best = std::numeric_limits<double>::infinity();
  auto scan = [&](const std::vector<P2>& pts, const std::vector<P2>& segs) {
    for (P2 p : pts)
      for (std::size_t i = 0; i < segs.size(); ++i)
        for (std::size_t j = i; j < segs.size(); ++j)
          best = std::min(best, dist_point_segment(p, segs[i], segs[j]));
  };
  scan(A, B);
  scan(B, A);
  return best;
}

struct PlanarInstance {
  std::vector<P2> pos, neg;
};

// 2..8 points split by a random line, with a 0.1 exclusion band.
template <class Rng>
PlanarInstance separable_instance(Rng& rng) {
  std::uniform_real_distribution<double> coord(-5, 5), ang(0, 6.283185307179586);
  std::uniform_int_distribution<int> count(2, 8);
  for (;;) {
    const double th = ang(rng), off = coord(rng) * 0.3;
    const double nx = std::cos(th), ny = std::sin(th);
    PlanarInstance inst;
    const int n = count(rng);
    for (int k = 0; k < n; ++k) {
      const P2 p{coord(rng), coord(rng)};
      const double side = nx * p.x + ny * p.y - off;
      if (std::abs(side) < 0.1) continue;
      (side > 0 ? inst.pos : inst.neg).push_back(p);
    }
    if (!inst.pos.empty() && !inst.neg.empty()) return inst;
  }
}

}  // namespace oracle
