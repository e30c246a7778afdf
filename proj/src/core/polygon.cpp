#include "gimt/core/polygon.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "gimt/core/error.hpp"

namespace gimt {
namespace {

struct Crossing {
  double x;
  int dir;
};

std::string Where(const std::string& record, std::size_t ring) {
  std::string s = "ring " + std::to_string(ring);
  if (!record.empty()) s += " of record '" + record + "'";
  return s;
}

// Scanline fill of one ring with the nonzero rule, OR-ed into `mask`.
// For a row center yc an edge a->b contributes +1 when a.y <= yc < b.y and
// -1 when b.y <= yc < a.y; a pixel center is wound by the crossings that lie
// strictly to its right.
void FillRing(const Ring& ring, BinaryMask& mask) {
  const int w = mask.width();
  const int h = mask.height();
  double ymin = ring[0].y, ymax = ring[0].y;
  for (const Vertex& v : ring) {
    ymin = std::min(ymin, v.y);
    ymax = std::max(ymax, v.y);
  }
  const int row_lo = std::max(0, static_cast<int>(std::floor(ymin - 0.5)));
  const int row_hi = std::min(h - 1, static_cast<int>(std::ceil(ymax - 0.5)));

  std::vector<Crossing> xs;
  const std::size_t n = ring.size();
  for (int row = row_lo; row <= row_hi; ++row) {
    const double yc = row + 0.5;
    xs.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const Vertex& a = ring[i];
      const Vertex& b = ring[(i + 1) % n];
      int dir = 0;
      if (a.y <= yc && b.y > yc) {
        dir = 1;
      } else if (b.y <= yc && a.y > yc) {
        dir = -1;
      } else {
        continue;
      }
      const double t = (yc - a.y) / (b.y - a.y);
      xs.push_back({a.x + t * (b.x - a.x), dir});
    }
    if (xs.empty()) continue;
    std::sort(xs.begin(), xs.end(),
              [](const Crossing& l, const Crossing& r) { return l.x < r.x; });

    // Sweep left to right: winding(xc) = total - sum(dirs of crossings <= xc).
    int total = 0;
    for (const Crossing& c : xs) total += c.dir;
    int passed = 0;
    std::size_t k = 0;
    for (int col = 0; col < w; ++col) {
      const double xc = col + 0.5;
      while (k < xs.size() && xs[k].x <= xc) passed += xs[k++].dir;
      if (total - passed != 0) mask.set(col, row, true);
    }
  }
}

}  // namespace

void ValidatePolygons(const PolygonAnnotation& polys, int width, int height,
                      const std::string& record) {
  for (std::size_t r = 0; r < polys.rings.size(); ++r) {
    const Ring& ring = polys.rings[r];
    if (ring.size() < 3) {
      throw Error(Errc::kMalformedAnnotation,
                  Where(record, r) + " has " + std::to_string(ring.size()) +
                      " vertices (need at least 3)");
    }
    for (const Vertex& v : ring) {
      if (!(v.x >= 0.0 && v.x <= width && v.y >= 0.0 && v.y <= height)) {
        throw Error(Errc::kMalformedAnnotation,
                    Where(record, r) + " has vertex (" + std::to_string(v.x) +
                        ", " + std::to_string(v.y) + ") outside the " +
                        std::to_string(width) + "x" + std::to_string(height) +
                        " image");
      }
    }
  }
}

BinaryMask RasterizePolygons(const PolygonAnnotation& polys, int width,
                             int height, const std::string& record) {
  ValidatePolygons(polys, width, height, record);
  BinaryMask mask(width, height);
  for (const Ring& ring : polys.rings) FillRing(ring, mask);
  return mask;
}

}  // namespace gimt
