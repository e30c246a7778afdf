#pragma once

#include <torch/torch.h>

#include "gimt/highlighter/highlighter.hpp"
#include "gimt/nn/architecture.hpp"

namespace gimt::highlight {

class HighlighterNet : public torch::nn::Module {
 public:
  HighlighterNet(const ModelSpec& spec, bool normalize_input);

  torch::Tensor forward(torch::Tensor x);

  std::shared_ptr<nn::EncoderImpl> encoder;
  std::shared_ptr<nn::DecoderImpl> decoder;

 private:
  bool normalize_input_;
};

struct HighlighterModel::Impl {
  HighlighterOptions options;
  bool normalize_input = false;
  std::optional<double> trained_miou;
  std::shared_ptr<HighlighterNet> net;
};

// [4,h,w]: RGB resampled bilinearly, hand mask with nearest neighbour.
torch::Tensor ToNetworkInput(const ImageFrame& frame, const BinaryMask& hand,
                             int height, int width);

}  // namespace gimt::highlight
