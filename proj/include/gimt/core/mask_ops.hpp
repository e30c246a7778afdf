#pragma once

#include "gimt/core/image.hpp"

namespace gimt {

inline constexpr double kDefaultBinarizeThreshold = 0.5;

// 1 iff value >= threshold. Threshold must lie in [0,1].
BinaryMask Binarize(const SoftMask& soft,
                    double threshold = kDefaultBinarizeThreshold);

// out = (1 - a) * in + a * color with a = alpha_scale * mask, rounded half-up
// and clamped to [0,255].
ImageFrame OverlayHighlight(const ImageFrame& frame, const SoftMask& mask,
                            Rgb color, double alpha_scale);

SoftMask ToSoft(const BinaryMask& mask);

// Nearest-neighbour resampling (pixel-center aligned) for label-like data.
BinaryMask ResizeNearest(const BinaryMask& mask, int width, int height);

// Places images side by side (heights must match).
ImageFrame ConcatHorizontal(const std::vector<ImageFrame>& panels);

}  // namespace gimt
