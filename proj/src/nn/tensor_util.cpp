#include "gimt/nn/tensor_util.hpp"

#include "gimt/core/error.hpp"

namespace gimt::nn {
namespace F = torch::nn::functional;

torch::Tensor FrameToTensor(const ImageFrame& frame) {
  auto bytes = torch::from_blob(const_cast<std::uint8_t*>(frame.pixels().data()),
                                {frame.height(), frame.width(), 3}, torch::kUInt8);
  return bytes.permute({2, 0, 1}).to(torch::kFloat32).div(255.0f).contiguous();
}

torch::Tensor MaskToTensor(const BinaryMask& mask) {
  auto bytes = torch::from_blob(const_cast<std::uint8_t*>(mask.values().data()),
                                {1, mask.height(), mask.width()}, torch::kUInt8);
  return bytes.to(torch::kFloat32).contiguous();
}

namespace {
torch::Tensor As2d(const torch::Tensor& t) {
  auto s = t.detach().to(torch::kCPU);
  while (s.dim() > 2 && s.size(0) == 1) s = s.squeeze(0);
  if (s.dim() != 2) throw Error(Errc::kShape, "expected a single-channel map");
  return s.contiguous();
}
}  // namespace

SoftMask TensorToSoftMask(const torch::Tensor& t) {
  auto s = As2d(t).to(torch::kFloat32).clamp(0.0, 1.0).contiguous();
  const auto* p = s.data_ptr<float>();
  std::vector<float> values(p, p + s.numel());
  return SoftMask(static_cast<int>(s.size(1)), static_cast<int>(s.size(0)),
                  std::move(values));
}

BinaryMask TensorToBinaryMask(const torch::Tensor& t) {
  auto s = As2d(t).ne(0).to(torch::kUInt8).contiguous();
  const auto* p = s.data_ptr<std::uint8_t>();
  return BinaryMask(static_cast<int>(s.size(1)), static_cast<int>(s.size(0)),
                    std::vector<std::uint8_t>(p, p + s.numel()));
}

torch::Tensor ResizeBilinear(const torch::Tensor& x, int height, int width) {
  const bool batched = x.dim() == 4;
  auto in = batched ? x : x.unsqueeze(0);
  if (in.size(2) == height && in.size(3) == width) return x;
  auto out = F::interpolate(in, F::InterpolateFuncOptions()
                                    .size(std::vector<int64_t>{height, width})
                                    .mode(torch::kBilinear)
                                    .align_corners(false));
  return batched ? out : out.squeeze(0);
}

torch::Tensor ResizeNearest(const torch::Tensor& x, int height, int width) {
  const bool batched = x.dim() == 4;
  auto in = batched ? x : x.unsqueeze(0);
  if (in.size(2) == height && in.size(3) == width) return x;
  auto out = F::interpolate(in, F::InterpolateFuncOptions()
                                    .size(std::vector<int64_t>{height, width})
                                    .mode(torch::kNearest));
  return batched ? out : out.squeeze(0);
}

torch::Tensor NormalizeRgbChannels(const torch::Tensor& x,
                                   const std::array<float, 3>& mean,
                                   const std::array<float, 3>& stddev) {
  const int64_t channel_dim = x.dim() == 4 ? 1 : 0;
  auto opts = x.options();
  std::vector<int64_t> shape(x.dim(), 1);
  shape[channel_dim] = 3;
  auto m = torch::tensor({mean[0], mean[1], mean[2]}, opts).view(shape);
  auto s = torch::tensor({stddev[0], stddev[1], stddev[2]}, opts).view(shape);
  auto rgb = x.narrow(channel_dim, 0, 3);
  auto normalized = (rgb - m) / s;
  if (x.size(channel_dim) == 3) return normalized;
  return torch::cat({normalized, x.narrow(channel_dim, 3, x.size(channel_dim) - 3)},
                    channel_dim);
}

}  // namespace gimt::nn

namespace gimt::nn {

std::mutex& TorchRngMutex() {
  static std::mutex mu;
  return mu;
}

}  // namespace gimt::nn
