#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gimt/core/image.hpp"

namespace gimt {

using Bytes = std::vector<std::uint8_t>;

// Binary masks encode as single-channel PNG with values {0,255}; soft masks as
// single-channel 8-bit PNG holding round(value * 255).
Bytes EncodePng(const BinaryMask& mask);
Bytes EncodePng(const SoftMask& mask);
Bytes EncodePng(const ImageFrame& frame);
Bytes EncodeJpeg(const ImageFrame& frame, int quality = 80);

// Accepts any format OpenCV can decode; grey images are expanded to RGB.
ImageFrame DecodeImage(const Bytes& bytes, std::string source_id = {});
// Any nonzero pixel becomes 1.
BinaryMask DecodeBinaryMask(const Bytes& bytes);
// Pixel k becomes k / 255.
SoftMask DecodeSoftMask(const Bytes& bytes);

// Single-channel 8-bit image returned verbatim (used for label maps).
struct GreyImage {
  Shape shape;
  std::vector<std::uint8_t> values;
};
GreyImage DecodeGrey(const Bytes& bytes);
Bytes EncodeGreyPng(const GreyImage& image);

Bytes ReadFileBytes(const std::filesystem::path& path);
// Writes to a sibling temporary file then renames it over `path`.
void WriteFileAtomic(const std::filesystem::path& path, const Bytes& bytes);
void WriteFileAtomic(const std::filesystem::path& path, const std::string& text);

ImageFrame ReadImageFile(const std::filesystem::path& path,
                         std::string source_id = {});
BinaryMask ReadBinaryMaskFile(const std::filesystem::path& path);
SoftMask ReadSoftMaskFile(const std::filesystem::path& path);

}  // namespace gimt
