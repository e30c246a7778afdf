#include "gimt/core/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gimt/core/error.hpp"

namespace gimt {
namespace {

void RequirePositive(int width, int height) {
  if (width <= 0 || height <= 0) {
    throw Error(Errc::kShape, "non-positive size " + std::to_string(width) +
                                  "x" + std::to_string(height));
  }
}

}  // namespace

std::string ToString(const Shape& shape) {
  return std::to_string(shape.width) + "x" + std::to_string(shape.height);
}

void RequireSameShape(const Shape& a, const Shape& b, std::string_view what) {
  if (!(a == b)) {
    throw Error(Errc::kShape, std::string(what) + ": " + ToString(a) +
                                  " vs " + ToString(b));
  }
}

ImageFrame::ImageFrame(int width, int height, std::vector<std::uint8_t> pixels,
                       std::string source_id)
    : shape_{width, height},
      pixels_(std::move(pixels)),
      source_id_(std::move(source_id)) {
  RequirePositive(width, height);
  if (pixels_.size() != shape_.area() * 3) {
    throw Error(Errc::kShape, "pixel buffer holds " +
                                  std::to_string(pixels_.size()) +
                                  " bytes, expected " +
                                  std::to_string(shape_.area() * 3));
  }
}

ImageFrame ImageFrame::Filled(int width, int height, Rgb color,
                              std::string source_id) {
  RequirePositive(width, height);
  std::vector<std::uint8_t> px(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < px.size(); i += 3) {
    px[i] = color.r;
    px[i + 1] = color.g;
    px[i + 2] = color.b;
  }
  return ImageFrame(width, height, std::move(px), std::move(source_id));
}

Rgb ImageFrame::at(int x, int y) const {
  const std::size_t i = (static_cast<std::size_t>(y) * shape_.width + x) * 3;
  return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
}

ImageFrame ImageFrame::WithSourceId(std::string source_id) const {
  ImageFrame copy = *this;
  copy.source_id_ = std::move(source_id);
  return copy;
}

BinaryMask::BinaryMask(int width, int height)
    : shape_{width, height}, values_(shape_.area(), 0) {
  RequirePositive(width, height);
}

BinaryMask::BinaryMask(int width, int height, std::vector<std::uint8_t> values)
    : shape_{width, height}, values_(std::move(values)) {
  RequirePositive(width, height);
  if (values_.size() != shape_.area()) {
    throw Error(Errc::kShape, "binary mask buffer size mismatch");
  }
  if (std::any_of(values_.begin(), values_.end(),
                  [](std::uint8_t v) { return v > 1; })) {
    throw Error(Errc::kArgument, "binary mask values must be 0 or 1");
  }
}

std::size_t BinaryMask::popcount() const noexcept {
  return static_cast<std::size_t>(
      std::count(values_.begin(), values_.end(), std::uint8_t{1}));
}

SoftMask::SoftMask(int width, int height, float fill)
    : shape_{width, height}, values_(shape_.area(), fill) {
  RequirePositive(width, height);
  if (!(fill >= 0.0f && fill <= 1.0f)) {
    throw Error(Errc::kArgument, "soft mask fill outside [0,1]");
  }
}

SoftMask::SoftMask(int width, int height, std::vector<float> values)
    : shape_{width, height}, values_(std::move(values)) {
  RequirePositive(width, height);
  if (values_.size() != shape_.area()) {
    throw Error(Errc::kShape, "soft mask buffer size mismatch");
  }
  for (float v : values_) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw Error(Errc::kArgument,
                  "soft mask value " + std::to_string(v) + " outside [0,1]");
    }
  }
}

SoftMask QuantizeToU8Grid(const SoftMask& mask) {
  std::vector<float> out(mask.values().begin(), mask.values().end());
  for (float& v : out) {
    const auto k = static_cast<int>(std::lround(static_cast<double>(v) * 255.0));
    v = static_cast<float>(k) / 255.0f;
  }
  return SoftMask(mask.width(), mask.height(), std::move(out));
}

}  // namespace gimt
