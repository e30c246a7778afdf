#include <algorithm>
#include <array>
#include <map>

#include "gimt/core/error.hpp"
#include "gimt/nn/architecture.hpp"
#include "gimt/nn/tensor_util.hpp"

namespace gimt::nn {
namespace {

namespace tnn = torch::nn;
namespace F = torch::nn::functional;

tnn::Sequential ConvBlock(int64_t in, int64_t out) {
  return tnn::Sequential(
      tnn::Conv2d(tnn::Conv2dOptions(in, out, 3).padding(1)), tnn::ReLU(),
      tnn::Conv2d(tnn::Conv2dOptions(out, out, 3).padding(1)), tnn::ReLU());
}

torch::Tensor UpTo(const torch::Tensor& x, const torch::Tensor& ref) {
  return ResizeBilinear(x, static_cast<int>(ref.size(2)), static_cast<int>(ref.size(3)));
}

// Full-resolution refinement followed by the 1x1 logit head.
class SegmentationHead : public tnn::Module {
 public:
  explicit SegmentationHead(int64_t in) {
    const int64_t mid = std::clamp<int64_t>(in / 2, 8, 32);
    refine_ = register_module(
        "refine", tnn::Sequential(tnn::Conv2d(tnn::Conv2dOptions(in, mid, 3).padding(1)),
                                  tnn::ReLU()));
    logits_ = register_module("logits", tnn::Conv2d(tnn::Conv2dOptions(mid, 1, 1)));
  }
  torch::Tensor forward(torch::Tensor x, int64_t h, int64_t w) {
    x = ResizeBilinear(x, static_cast<int>(h), static_cast<int>(w));
    return logits_->forward(refine_->forward(x));
  }
  tnn::Conv2d logits() const { return logits_; }

 private:
  tnn::Sequential refine_{nullptr};
  tnn::Conv2d logits_{nullptr};
};

class UNetDecoder final : public DecoderImpl {
 public:
  explicit UNetDecoder(const std::vector<int64_t>& ch) : levels_(ch.size()) {
    int64_t below = ch.back();
    for (int i = static_cast<int>(ch.size()) - 2; i >= 0; --i) {
      blocks_.push_back(register_module("block" + std::to_string(i),
                                        ConvBlock(below + ch[i], ch[i])));
      below = ch[i];
    }
    head_ = register_module("head", std::make_shared<SegmentationHead>(below));
  }

  torch::Tensor forward(const std::vector<torch::Tensor>& f, int64_t h,
                        int64_t w) override {
    auto x = f.back();
    std::size_t b = 0;
    for (int i = static_cast<int>(levels_) - 2; i >= 0; --i) {
      x = blocks_[b++]->forward(torch::cat({UpTo(x, f[i]), f[i]}, 1));
    }
    return head_->forward(x, h, w);
  }
  tnn::Conv2d logit_layer() override { return head_->logits(); }

 private:
  std::size_t levels_;
  std::vector<tnn::Sequential> blocks_;
  std::shared_ptr<SegmentationHead> head_;
};

// Nested dense skip pathways: node (i, j) fuses nodes (i, 0..j-1) with the
// upsampled node (i+1, j-1).
class UNetPlusPlusDecoder final : public DecoderImpl {
 public:
  explicit UNetPlusPlusDecoder(const std::vector<int64_t>& ch) : levels_(ch.size()) {
    for (std::size_t j = 1; j < levels_; ++j) {
      for (std::size_t i = 0; i + j < levels_; ++i) {
        const int64_t in = static_cast<int64_t>(j) * ch[i] + ch[i + 1];
        nodes_[{i, j}] = register_module(
            "node" + std::to_string(i) + "_" + std::to_string(j), ConvBlock(in, ch[i]));
      }
    }
    head_ = register_module("head", std::make_shared<SegmentationHead>(ch[0]));
  }

  torch::Tensor forward(const std::vector<torch::Tensor>& f, int64_t h,
                        int64_t w) override {
    std::map<std::pair<std::size_t, std::size_t>, torch::Tensor> x;
    for (std::size_t i = 0; i < levels_; ++i) x[{i, 0}] = f[i];
    for (std::size_t j = 1; j < levels_; ++j) {
      for (std::size_t i = 0; i + j < levels_; ++i) {
        std::vector<torch::Tensor> parts;
        for (std::size_t k = 0; k < j; ++k) parts.push_back(x[{i, k}]);
        parts.push_back(UpTo(x[{i + 1, j - 1}], f[i]));
        x[{i, j}] = nodes_[{i, j}]->forward(torch::cat(parts, 1));
      }
    }
    return head_->forward(x[{0, levels_ - 1}], h, w);
  }
  tnn::Conv2d logit_layer() override { return head_->logits(); }

 private:
  std::size_t levels_;
  std::map<std::pair<std::size_t, std::size_t>, tnn::Sequential> nodes_;
  std::shared_ptr<SegmentationHead> head_;
};

// Atrous spatial pyramid pooling.
class Aspp : public tnn::Module {
 public:
  Aspp(int64_t in, int64_t out, const std::array<int64_t, 3>& rates) {
    branches_.push_back(register_module(
        "b0", tnn::Sequential(tnn::Conv2d(tnn::Conv2dOptions(in, out, 1)), tnn::ReLU())));
    for (int r = 0; r < 3; ++r) {
      branches_.push_back(register_module(
          "b" + std::to_string(r + 1),
          tnn::Sequential(tnn::Conv2d(tnn::Conv2dOptions(in, out, 3)
                                          .padding(rates[r])
                                          .dilation(rates[r])),
                          tnn::ReLU())));
    }
    pool_ = register_module(
        "pool", tnn::Sequential(tnn::Conv2d(tnn::Conv2dOptions(in, out, 1)), tnn::ReLU()));
    project_ = register_module(
        "project",
        tnn::Sequential(tnn::Conv2d(tnn::Conv2dOptions(5 * out, out, 1)), tnn::ReLU()));
  }

  torch::Tensor forward(const torch::Tensor& x) {
    std::vector<torch::Tensor> outs;
    for (auto& b : branches_) outs.push_back(b->forward(x));
    auto pooled = pool_->forward(torch::adaptive_avg_pool2d(x, {1, 1}));
    outs.push_back(pooled.expand({-1, -1, x.size(2), x.size(3)}));
    return project_->forward(torch::cat(outs, 1));
  }

 private:
  std::vector<tnn::Sequential> branches_;
  tnn::Sequential pool_{nullptr}, project_{nullptr};
};

std::array<int64_t, 3> AtrousRates(const std::string& backbone_id) {
  if (backbone_id == "tiny-cnn") return {1, 2, 3};
  return {3, 6, 9};
}

int64_t AsppWidth(const std::vector<int64_t>& ch) {
  return std::clamp<int64_t>(ch.back() / 2, 32, 256);
}

class DeepLabV3Decoder final : public DecoderImpl {
 public:
  DeepLabV3Decoder(const std::vector<int64_t>& ch, const std::string& backbone) {
    const int64_t width = AsppWidth(ch);
    aspp_ = register_module("aspp", std::make_shared<Aspp>(ch.back(), width, AtrousRates(backbone)));
    refine_ = register_module(
        "refine", tnn::Sequential(tnn::Conv2d(tnn::Conv2dOptions(width, width, 3).padding(1)),
                                  tnn::ReLU()));
    logits_ = register_module("logits", tnn::Conv2d(tnn::Conv2dOptions(width, 1, 1)));
  }

  torch::Tensor forward(const std::vector<torch::Tensor>& f, int64_t h,
                        int64_t w) override {
    auto x = logits_->forward(refine_->forward(aspp_->forward(f.back())));
    return ResizeBilinear(x, static_cast<int>(h), static_cast<int>(w));
  }
  tnn::Conv2d logit_layer() override { return logits_; }

 private:
  std::shared_ptr<Aspp> aspp_;
  tnn::Sequential refine_{nullptr};
  tnn::Conv2d logits_{nullptr};
};

// ASPP context upsampled onto the stride-4 level (the second-deepest level
// when the pyramid is shallow) and fused with projected low-level features.
class DeepLabV3PlusDecoder final : public DecoderImpl {
 public:
  DeepLabV3PlusDecoder(const std::vector<int64_t>& ch, const std::string& backbone)
      : low_level_(LowLevelIndex(ch, backbone)) {
    const int64_t width = AsppWidth(ch);
    const int64_t low = std::clamp<int64_t>(ch[low_level_], 8, 48);
    aspp_ = register_module("aspp", std::make_shared<Aspp>(ch.back(), width, AtrousRates(backbone)));
    reduce_ = register_module(
        "reduce", tnn::Sequential(tnn::Conv2d(tnn::Conv2dOptions(ch[low_level_], low, 1)),
                                  tnn::ReLU()));
    fuse_ = register_module("fuse", ConvBlock(width + low, width));
    head_ = register_module("head", std::make_shared<SegmentationHead>(width));
  }

  torch::Tensor forward(const std::vector<torch::Tensor>& f, int64_t h,
                        int64_t w) override {
    auto context = aspp_->forward(f.back());
    auto low = reduce_->forward(f[low_level_]);
    auto x = fuse_->forward(torch::cat({UpTo(context, low), low}, 1));
    return head_->forward(x, h, w);
  }
  tnn::Conv2d logit_layer() override { return head_->logits(); }

 private:
  static std::size_t LowLevelIndex(const std::vector<int64_t>& ch,
                                   const std::string& backbone) {
    // tiny-cnn taps strides 1,2,4,8; EfficientNet taps 2,4,8,16,32.
    const std::size_t idx = backbone == "tiny-cnn" ? 2 : 1;
    return std::min(idx, ch.size() - 2);
  }

  std::size_t low_level_;
  std::shared_ptr<Aspp> aspp_;
  tnn::Sequential reduce_{nullptr}, fuse_{nullptr};
  std::shared_ptr<SegmentationHead> head_;
};

}  // namespace

std::shared_ptr<DecoderImpl> MakeDecoder(const std::string& decoder_id,
                                         const std::string& backbone_id,
                                         const std::vector<int64_t>& ch) {
  if (ch.size() < 2) throw Error(Errc::kArgument, "decoder needs at least two pyramid levels");
  if (decoder_id == "unet") return std::make_shared<UNetDecoder>(ch);
  if (decoder_id == "unetpp") return std::make_shared<UNetPlusPlusDecoder>(ch);
  if (decoder_id == "deeplabv3") return std::make_shared<DeepLabV3Decoder>(ch, backbone_id);
  if (decoder_id == "deeplabv3plus") {
    return std::make_shared<DeepLabV3PlusDecoder>(ch, backbone_id);
  }
  throw Error(Errc::kCatalog, "unknown decoder '" + decoder_id + "'");
}

}  // namespace gimt::nn
