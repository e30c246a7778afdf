#pragma once

#include <string>
#include <torch/torch.h>
#include <vector>

namespace gimt::nn {

// Registered backbones and decoders.
const std::vector<std::string>& BackboneCatalog();
const std::vector<std::string>& DecoderCatalog();
bool IsRegisteredBackbone(const std::string& id);
bool IsRegisteredDecoder(const std::string& id);

// Whether the backbone's pretraining convention normalizes RGB with ImageNet
// statistics.
bool DefaultNormalizeInput(const std::string& backbone_id);

// Feature pyramid extractor. Features are returned shallowest first; their
// channel counts are listed by channels().
class EncoderImpl : public torch::nn::Module {
 public:
  virtual std::vector<torch::Tensor> forward(torch::Tensor x) = 0;
  const std::vector<int64_t>& channels() const { return channels_; }

 protected:
  std::vector<int64_t> channels_;
};

// Maps an encoder pyramid to single-channel logits at (height, width).
class DecoderImpl : public torch::nn::Module {
 public:
  virtual torch::Tensor forward(const std::vector<torch::Tensor>& features,
                                int64_t height, int64_t width) = 0;
  // The final 1x1 convolution producing the logits.
  virtual torch::nn::Conv2d logit_layer() = 0;
};

std::shared_ptr<EncoderImpl> MakeEncoder(const std::string& backbone_id,
                                         int64_t in_channels);
std::shared_ptr<DecoderImpl> MakeDecoder(const std::string& decoder_id,
                                         const std::string& backbone_id,
                                         const std::vector<int64_t>& encoder_channels);

}  // namespace gimt::nn
