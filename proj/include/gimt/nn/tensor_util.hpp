#pragma once

#include <array>
#include <mutex>
#include <torch/torch.h>

#include "gimt/core/image.hpp"

namespace gimt::nn {

// [3,H,W] float32, values / 255.
torch::Tensor FrameToTensor(const ImageFrame& frame);
// [1,H,W] float32 in {0,1}.
torch::Tensor MaskToTensor(const BinaryMask& mask);
// Accepts [H,W] or any shape squeezable to it; values are clamped to [0,1].
SoftMask TensorToSoftMask(const torch::Tensor& t);
BinaryMask TensorToBinaryMask(const torch::Tensor& t);

// x: [N,C,H,W] or [C,H,W]; half-pixel aligned bilinear resampling.
torch::Tensor ResizeBilinear(const torch::Tensor& x, int height, int width);
torch::Tensor ResizeNearest(const torch::Tensor& x, int height, int width);

// Channel-wise (x - mean) / std applied to the first three channels only.
torch::Tensor NormalizeRgbChannels(const torch::Tensor& x,
                                   const std::array<float, 3>& mean,
                                   const std::array<float, 3>& stddev);

// Guards the global torch RNG while seeding and initialising a network.
std::mutex& TorchRngMutex();

inline constexpr std::array<float, 3> kImageNetMean = {0.485f, 0.456f, 0.406f};
inline constexpr std::array<float, 3> kImageNetStd = {0.229f, 0.224f, 0.225f};

}  // namespace gimt::nn
