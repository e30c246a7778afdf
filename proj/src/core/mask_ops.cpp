#include "gimt/core/mask_ops.hpp"

#include <algorithm>
#include <cmath>

#include "gimt/core/error.hpp"

namespace gimt {

BinaryMask Binarize(const SoftMask& soft, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw Error(Errc::kConfig, "binarize threshold " +
                                   std::to_string(threshold) +
                                   " outside [0,1]");
  }
  std::vector<std::uint8_t> out(soft.values().size());
  std::transform(soft.values().begin(), soft.values().end(), out.begin(),
                 [threshold](float v) {
                   return static_cast<std::uint8_t>(v >= threshold ? 1 : 0);
                 });
  return BinaryMask(soft.width(), soft.height(), std::move(out));
}

ImageFrame OverlayHighlight(const ImageFrame& frame, const SoftMask& mask,
                            Rgb color, double alpha_scale) {
  RequireSameShape(frame.shape(), mask.shape(), "overlay_highlight");
  const std::uint8_t tint[3] = {color.r, color.g, color.b};
  std::vector<std::uint8_t> out(frame.pixels().begin(), frame.pixels().end());
  const auto values = mask.values();
  for (std::size_t p = 0; p < values.size(); ++p) {
    const double a = alpha_scale * values[p];
    for (int c = 0; c < 3; ++c) {
      const double v = (1.0 - a) * out[p * 3 + c] + a * tint[c];
      out[p * 3 + c] =
          static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
    }
  }
  return ImageFrame(frame.width(), frame.height(), std::move(out),
                    frame.source_id());
}

SoftMask ToSoft(const BinaryMask& mask) {
  std::vector<float> out(mask.values().begin(), mask.values().end());
  return SoftMask(mask.width(), mask.height(), std::move(out));
}

BinaryMask ResizeNearest(const BinaryMask& mask, int width, int height) {
  if (mask.width() == width && mask.height() == height) return mask;
  BinaryMask out(width, height);
  const double sx = static_cast<double>(mask.width()) / width;
  const double sy = static_cast<double>(mask.height()) / height;
  for (int y = 0; y < height; ++y) {
    const int src_y =
        std::min(mask.height() - 1, static_cast<int>(std::floor((y + 0.5) * sy)));
    for (int x = 0; x < width; ++x) {
      const int src_x = std::min(mask.width() - 1,
                                 static_cast<int>(std::floor((x + 0.5) * sx)));
      out.set(x, y, mask.at(src_x, src_y) != 0);
    }
  }
  return out;
}

ImageFrame ConcatHorizontal(const std::vector<ImageFrame>& panels) {
  if (panels.empty()) throw Error(Errc::kArgument, "no panels to concatenate");
  const int h = panels.front().height();
  int w = 0;
  for (const auto& p : panels) {
    if (p.height() != h) throw Error(Errc::kShape, "panel heights differ");
    w += p.width();
  }
  std::vector<std::uint8_t> out(static_cast<std::size_t>(w) * h * 3);
  int x0 = 0;
  for (const auto& p : panels) {
    const auto px = p.pixels();
    for (int y = 0; y < h; ++y) {
      std::copy_n(px.begin() + static_cast<std::ptrdiff_t>(y) * p.width() * 3,
                  p.width() * 3,
                  out.begin() + (static_cast<std::ptrdiff_t>(y) * w + x0) * 3);
    }
    x0 += p.width();
  }
  return ImageFrame(w, h, std::move(out));
}

}  // namespace gimt
