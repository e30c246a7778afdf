#include <algorithm>
#include <cmath>

#include "gimt/core/error.hpp"
#include "gimt/nn/architecture.hpp"

namespace gimt::nn {
namespace {

namespace tnn = torch::nn;

tnn::Conv2d Conv(int64_t in, int64_t out, int64_t k, int64_t stride = 1,
                 int64_t groups = 1, bool bias = true) {
  return tnn::Conv2d(tnn::Conv2dOptions(in, out, k)
                         .stride(stride)
                         .padding(k / 2)
                         .groups(groups)
                         .bias(bias));
}

// Four stages of two 3x3 convolutions; strides 1, 2, 4, 8.
class TinyCnnEncoder final : public EncoderImpl {
 public:
  explicit TinyCnnEncoder(int64_t in_channels) {
    const int64_t widths[] = {8, 16, 32, 64};
    int64_t prev = in_channels;
    for (int s = 0; s < 4; ++s) {
      tnn::Sequential stage(Conv(prev, widths[s], 3, s == 0 ? 1 : 2), tnn::ReLU(),
                            Conv(widths[s], widths[s], 3), tnn::ReLU());
      stages_.push_back(register_module("stage" + std::to_string(s), stage));
      channels_.push_back(widths[s]);
      prev = widths[s];
    }
  }

  std::vector<torch::Tensor> forward(torch::Tensor x) override {
    std::vector<torch::Tensor> feats;
    for (auto& stage : stages_) {
      x = stage->forward(x);
      feats.push_back(x);
    }
    return feats;
  }

 private:
  std::vector<tnn::Sequential> stages_;
};

struct BlockArgs {
  int64_t expand, kernel, stride, in, out, repeats;
};

int64_t RoundFilters(int64_t filters, double width) {
  const double f = filters * width;
  int64_t rounded = std::max<int64_t>(8, static_cast<int64_t>(f + 4) / 8 * 8);
  if (rounded < 0.9 * f) rounded += 8;
  return rounded;
}

int64_t RoundRepeats(int64_t repeats, double depth) {
  return static_cast<int64_t>(std::ceil(depth * repeats));
}

// Mobile inverted bottleneck with squeeze-and-excitation.
class MBConvImpl : public tnn::Module {
 public:
  MBConvImpl(int64_t in, int64_t out, int64_t expand, int64_t kernel, int64_t stride)
      : residual_(stride == 1 && in == out) {
    const int64_t mid = in * expand;
    if (expand != 1) {
      expand_ = register_module("expand", tnn::Sequential(Conv(in, mid, 1, 1, 1, false),
                                                         tnn::BatchNorm2d(mid), tnn::SiLU()));
    }
    depthwise_ = register_module(
        "depthwise", tnn::Sequential(Conv(mid, mid, kernel, stride, mid, false),
                                     tnn::BatchNorm2d(mid), tnn::SiLU()));
    const int64_t squeezed = std::max<int64_t>(1, in / 4);
    se_reduce_ = register_module("se_reduce", Conv(mid, squeezed, 1));
    se_expand_ = register_module("se_expand", Conv(squeezed, mid, 1));
    project_ = register_module(
        "project", tnn::Sequential(Conv(mid, out, 1, 1, 1, false), tnn::BatchNorm2d(out)));
  }

  torch::Tensor forward(torch::Tensor x) {
    auto h = expand_ ? expand_->forward(x) : x;
    h = depthwise_->forward(h);
    auto s = torch::adaptive_avg_pool2d(h, {1, 1});
    s = torch::sigmoid(se_expand_->forward(torch::silu(se_reduce_->forward(s))));
    h = project_->forward(h * s);
    return residual_ ? h + x : h;
  }

 private:
  bool residual_;
  tnn::Sequential expand_{nullptr}, depthwise_{nullptr}, project_{nullptr};
  tnn::Conv2d se_reduce_{nullptr}, se_expand_{nullptr};
};
TORCH_MODULE(MBConv);

// EfficientNet feature extractor without the classification head. Taps the
// outputs at strides 2, 4, 8, 16 and 32.
class EfficientNetEncoder final : public EncoderImpl {
 public:
  EfficientNetEncoder(int64_t in_channels, double width, double depth) {
    static const BlockArgs kB0[] = {{1, 3, 1, 32, 16, 1},   {6, 3, 2, 16, 24, 2},
                                    {6, 5, 2, 24, 40, 2},   {6, 3, 2, 40, 80, 3},
                                    {6, 5, 1, 80, 112, 3},  {6, 5, 2, 112, 192, 4},
                                    {6, 3, 1, 192, 320, 1}};
    const int64_t stem_out = RoundFilters(32, width);
    stem_ = register_module("stem", tnn::Sequential(Conv(in_channels, stem_out, 3, 2, 1, false),
                                                    tnn::BatchNorm2d(stem_out), tnn::SiLU()));
    // Stage index after which a pyramid level is tapped.
    const int taps[] = {0, 1, 2, 4, 6};
    int next_tap = 0;
    for (int s = 0; s < 7; ++s) {
      const BlockArgs& a = kB0[s];
      const int64_t in = RoundFilters(a.in, width);
      const int64_t out = RoundFilters(a.out, width);
      tnn::Sequential stage;
      for (int64_t r = 0; r < RoundRepeats(a.repeats, depth); ++r) {
        stage->push_back(MBConv(r == 0 ? in : out, out, a.expand, a.kernel,
                                r == 0 ? a.stride : 1));
      }
      stages_.push_back(register_module("stage" + std::to_string(s), stage));
      if (next_tap < 5 && taps[next_tap] == s) {
        tap_after_.push_back(s);
        channels_.push_back(out);
        ++next_tap;
      }
    }
  }

  std::vector<torch::Tensor> forward(torch::Tensor x) override {
    std::vector<torch::Tensor> feats;
    x = stem_->forward(x);
    std::size_t t = 0;
    for (int s = 0; s < static_cast<int>(stages_.size()); ++s) {
      x = stages_[s]->forward(x);
      if (t < tap_after_.size() && tap_after_[t] == s) {
        feats.push_back(x);
        ++t;
      }
    }
    return feats;
  }

 private:
  tnn::Sequential stem_{nullptr};
  std::vector<tnn::Sequential> stages_;
  std::vector<int> tap_after_;
};

}  // namespace

const std::vector<std::string>& BackboneCatalog() {
  static const std::vector<std::string> kIds = {"tiny-cnn", "efficientnet-b0",
                                                "efficientnet-b3"};
  return kIds;
}

const std::vector<std::string>& DecoderCatalog() {
  static const std::vector<std::string> kIds = {"unet", "unetpp", "deeplabv3",
                                                "deeplabv3plus"};
  return kIds;
}

bool IsRegisteredBackbone(const std::string& id) {
  const auto& c = BackboneCatalog();
  return std::find(c.begin(), c.end(), id) != c.end();
}

bool IsRegisteredDecoder(const std::string& id) {
  const auto& c = DecoderCatalog();
  return std::find(c.begin(), c.end(), id) != c.end();
}

bool DefaultNormalizeInput(const std::string& backbone_id) {
  return backbone_id.rfind("efficientnet", 0) == 0;
}

std::shared_ptr<EncoderImpl> MakeEncoder(const std::string& backbone_id,
                                         int64_t in_channels) {
  if (backbone_id == "tiny-cnn") return std::make_shared<TinyCnnEncoder>(in_channels);
  if (backbone_id == "efficientnet-b0") {
    return std::make_shared<EfficientNetEncoder>(in_channels, 1.0, 1.0);
  }
  if (backbone_id == "efficientnet-b3") {
    return std::make_shared<EfficientNetEncoder>(in_channels, 1.2, 1.4);
  }
  throw Error(Errc::kCatalog, "unknown backbone '" + backbone_id + "'");
}

}  // namespace gimt::nn
