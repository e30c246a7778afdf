#pragma once

#include <string>
#include <vector>

#include "gimt/core/image.hpp"

namespace gimt {

struct Vertex {
  double x = 0.0;
  double y = 0.0;
};

using Ring = std::vector<Vertex>;

// Polygon-based object annotation. Rings are unioned; there are no holes.
struct PolygonAnnotation {
  std::vector<Ring> rings;
};

// Throws a malformed-annotation error (mentioning `record`) when a ring has
// fewer than three vertices or a vertex falls outside [0,width]x[0,height].
void ValidatePolygons(const PolygonAnnotation& polys, int width, int height,
                      const std::string& record = {});

// A pixel is set iff its center (x+0.5, y+0.5) has nonzero winding number
// with respect to at least one ring.
BinaryMask RasterizePolygons(const PolygonAnnotation& polys, int width,
                             int height, const std::string& record = {});

}  // namespace gimt
