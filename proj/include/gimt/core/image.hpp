#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gimt {

inline constexpr int kCaptureWidth = 640;
inline constexpr int kCaptureHeight = 480;

struct Shape {
  int width = 0;
  int height = 0;

  std::size_t area() const noexcept {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string ToString(const Shape& shape);

// Throws a shape error when the two shapes differ.
void RequireSameShape(const Shape& a, const Shape& b, std::string_view what);

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// Row-major interleaved 8-bit RGB frame.
class ImageFrame {
 public:
  ImageFrame() = default;
  ImageFrame(int width, int height, std::vector<std::uint8_t> pixels,
             std::string source_id = {});

  static ImageFrame Filled(int width, int height, Rgb color,
                           std::string source_id = {});

  int width() const noexcept { return shape_.width; }
  int height() const noexcept { return shape_.height; }
  const Shape& shape() const noexcept { return shape_; }
  const std::string& source_id() const noexcept { return source_id_; }
  std::span<const std::uint8_t> pixels() const noexcept { return pixels_; }
  bool empty() const noexcept { return pixels_.empty(); }

  Rgb at(int x, int y) const;

  ImageFrame WithSourceId(std::string source_id) const;

  friend bool operator==(const ImageFrame& a, const ImageFrame& b) {
    return a.shape_ == b.shape_ && a.pixels_ == b.pixels_;
  }

 private:
  Shape shape_;
  std::vector<std::uint8_t> pixels_;
  std::string source_id_;
};

// Row-major {0,1} mask.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height);
  BinaryMask(int width, int height, std::vector<std::uint8_t> values);

  int width() const noexcept { return shape_.width; }
  int height() const noexcept { return shape_.height; }
  const Shape& shape() const noexcept { return shape_; }
  std::span<const std::uint8_t> values() const noexcept { return values_; }

  std::uint8_t at(int x, int y) const {
    return values_[static_cast<std::size_t>(y) * shape_.width + x];
  }
  void set(int x, int y, bool on) {
    values_[static_cast<std::size_t>(y) * shape_.width + x] = on ? 1 : 0;
  }

  std::size_t popcount() const noexcept;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  Shape shape_;
  std::vector<std::uint8_t> values_;
};

// Row-major mask of reals in [0,1].
class SoftMask {
 public:
  SoftMask() = default;
  SoftMask(int width, int height, float fill = 0.0f);
  SoftMask(int width, int height, std::vector<float> values);

  int width() const noexcept { return shape_.width; }
  int height() const noexcept { return shape_.height; }
  const Shape& shape() const noexcept { return shape_; }
  std::span<const float> values() const noexcept { return values_; }

  float at(int x, int y) const {
    return values_[static_cast<std::size_t>(y) * shape_.width + x];
  }

  friend bool operator==(const SoftMask&, const SoftMask&) = default;

 private:
  Shape shape_;
  std::vector<float> values_;
};

// Snaps every value onto the 8-bit grid k/255 used by the PNG encoding, so a
// save/load cycle reproduces the mask bit for bit.
SoftMask QuantizeToU8Grid(const SoftMask& mask);

}  // namespace gimt
