#include "gimt/core/codec.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <random>

#include "gimt/core/error.hpp"

namespace gimt {
namespace {

Bytes Encode(const std::string& ext, const cv::Mat& mat,
             const std::vector<int>& params = {}) {
  std::vector<uchar> buf;
  if (!cv::imencode(ext, mat, buf, params)) {
    throw Error(Errc::kIo, "failed to encode " + ext);
  }
  return Bytes(buf.begin(), buf.end());
}

cv::Mat Decode(const Bytes& bytes, int flags) {
  if (bytes.empty()) throw Error(Errc::kIo, "cannot decode empty buffer");
  const cv::Mat raw(1, static_cast<int>(bytes.size()), CV_8UC1,
                    const_cast<std::uint8_t*>(bytes.data()));
  cv::Mat mat = cv::imdecode(raw, flags);
  if (mat.empty()) throw Error(Errc::kIo, "undecodable image data");
  return mat;
}

cv::Mat DecodeSingleChannel(const Bytes& bytes) {
  cv::Mat mat = Decode(bytes, cv::IMREAD_UNCHANGED);
  if (mat.depth() != CV_8U) {
    throw Error(Errc::kIo, "expected an 8-bit mask image");
  }
  if (mat.channels() == 1) return mat;
  cv::Mat grey;
  if (mat.channels() == 3) {
    cv::cvtColor(mat, grey, cv::COLOR_BGR2GRAY);
  } else if (mat.channels() == 4) {
    cv::cvtColor(mat, grey, cv::COLOR_BGRA2GRAY);
  } else {
    throw Error(Errc::kIo, "unsupported mask channel count");
  }
  return grey;
}

}  // namespace

Bytes EncodePng(const BinaryMask& mask) {
  cv::Mat mat(mask.height(), mask.width(), CV_8UC1);
  const auto v = mask.values();
  for (std::size_t i = 0; i < v.size(); ++i) mat.data[i] = v[i] ? 255 : 0;
  return Encode(".png", mat);
}

Bytes EncodePng(const SoftMask& mask) {
  cv::Mat mat(mask.height(), mask.width(), CV_8UC1);
  const auto v = mask.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    mat.data[i] = static_cast<uchar>(std::lround(static_cast<double>(v[i]) * 255.0));
  }
  return Encode(".png", mat);
}

Bytes EncodePng(const ImageFrame& frame) {
  cv::Mat rgb(frame.height(), frame.width(), CV_8UC3,
              const_cast<std::uint8_t*>(frame.pixels().data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return Encode(".png", bgr);
}

Bytes EncodeJpeg(const ImageFrame& frame, int quality) {
  cv::Mat rgb(frame.height(), frame.width(), CV_8UC3,
              const_cast<std::uint8_t*>(frame.pixels().data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return Encode(".jpg", bgr, {cv::IMWRITE_JPEG_QUALITY, quality});
}

ImageFrame DecodeImage(const Bytes& bytes, std::string source_id) {
  cv::Mat bgr = Decode(bytes, cv::IMREAD_COLOR);
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  if (!rgb.isContinuous()) rgb = rgb.clone();
  std::vector<std::uint8_t> px(rgb.data, rgb.data + rgb.total() * 3);
  return ImageFrame(rgb.cols, rgb.rows, std::move(px), std::move(source_id));
}

BinaryMask DecodeBinaryMask(const Bytes& bytes) {
  cv::Mat mat = DecodeSingleChannel(bytes);
  std::vector<std::uint8_t> v(mat.total());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = mat.data[i] ? 1 : 0;
  return BinaryMask(mat.cols, mat.rows, std::move(v));
}

SoftMask DecodeSoftMask(const Bytes& bytes) {
  cv::Mat mat = DecodeSingleChannel(bytes);
  std::vector<float> v(mat.total());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = static_cast<float>(mat.data[i]) / 255.0f;
  }
  return SoftMask(mat.cols, mat.rows, std::move(v));
}

GreyImage DecodeGrey(const Bytes& bytes) {
  cv::Mat mat = DecodeSingleChannel(bytes);
  return {{mat.cols, mat.rows},
          std::vector<std::uint8_t>(mat.data, mat.data + mat.total())};
}

Bytes EncodeGreyPng(const GreyImage& image) {
  cv::Mat mat(image.shape.height, image.shape.width, CV_8UC1,
              const_cast<std::uint8_t*>(image.values.data()));
  return Encode(".png", mat);
}

Bytes ReadFileBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIo, "cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in),
               std::istreambuf_iterator<char>());
}

void WriteFileAtomic(const std::filesystem::path& path, const Bytes& bytes) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  fs::path tmp = path;
  tmp += ".tmp" + std::to_string(rng() % 1000000007ULL);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::kIo, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(Errc::kIo, "short write to " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error(Errc::kIo, "cannot rename onto " + path.string() + ": " +
                               ec.message());
  }
}

void WriteFileAtomic(const std::filesystem::path& path, const std::string& text) {
  WriteFileAtomic(path, Bytes(text.begin(), text.end()));
}

ImageFrame ReadImageFile(const std::filesystem::path& path,
                         std::string source_id) {
  try {
    return DecodeImage(ReadFileBytes(path), std::move(source_id));
  } catch (const Error& e) {
    throw Error(Errc::kIo, path.string() + ": " + e.what());
  }
}

BinaryMask ReadBinaryMaskFile(const std::filesystem::path& path) {
  try {
    return DecodeBinaryMask(ReadFileBytes(path));
  } catch (const Error& e) {
    throw Error(Errc::kIo, path.string() + ": " + e.what());
  }
}

SoftMask ReadSoftMaskFile(const std::filesystem::path& path) {
  try {
    return DecodeSoftMask(ReadFileBytes(path));
  } catch (const Error& e) {
    throw Error(Errc::kIo, path.string() + ": " + e.what());
  }
}

}  // namespace gimt
