#include <torch/script.h>

#include <mutex>

#include "gimt/core/error.hpp"
#include "gimt/handseg/handseg.hpp"
#include "gimt/nn/tensor_util.hpp"

namespace gimt::handseg::detail {
namespace {

// Runs a scripted parser at its native resolution on ImageNet-normalized RGB.
// The module may publish its own taxonomy through a `label_names` attribute
// (list of strings, index = label id); otherwise the LIP table is assumed.
// Outputs are [1,C,h,w] logits, or a list/tuple whose last element is.
class TorchScriptParser final : public HumanParser {
 public:
  explicit TorchScriptParser(const HandSegmentorConfig& config)
      : native_w_(config.native_width), native_h_(config.native_height) {
    if (config.model_path.empty() || !std::filesystem::exists(config.model_path)) {
      throw Error(Errc::kInitialization, "human parser weights not found at '" +
                                             config.model_path.string() + "'");
    }
    try {
      module_ = torch::jit::load(config.model_path.string());
    } catch (const c10::Error& e) {
      throw Error(Errc::kInitialization, "cannot load human parser '" +
                                             config.model_path.string() +
                                             "': " + e.what_without_backtrace());
    }
    module_.eval();
    if (module_.hasattr("label_names")) {
      const auto list = module_.attr("label_names").toList();
      for (std::size_t i = 0; i < list.size(); ++i) {
        names_[static_cast<int>(i)] = list.get(i).toStringRef();
      }
    } else {
      names_ = LipLabelNames();
    }
    if (!names_.count(0) || names_.at(0) != "background") {
      throw Error(Errc::kInitialization, "parser label 0 must be 'background'");
    }
  }

  const LabelNames& label_names() const override { return names_; }

  BodyPartLabelMap Parse(const ImageFrame& frame) const override {
    torch::NoGradGuard no_grad;
    torch::Tensor labels;
    try {
      auto x = nn::FrameToTensor(frame).unsqueeze(0);
      x = nn::ResizeBilinear(x, native_h_, native_w_);
      x = nn::NormalizeRgbChannels(x, nn::kImageNetMean, nn::kImageNetStd);
      c10::IValue out;
      {
        std::lock_guard lock(mu_);
        out = module_.forward({x});
      }
      torch::Tensor logits;
      if (out.isTensor()) {
        logits = out.toTensor();
      } else if (out.isList()) {
        logits = out.toList().get(out.toList().size() - 1).toTensor();
      } else if (out.isTuple()) {
        logits = out.toTupleRef().elements().back().toTensor();
      } else {
        throw Error(Errc::kInference, "unexpected parser output type");
      }
      if (logits.dim() != 4 || logits.size(0) != 1) {
        throw Error(Errc::kInference, "parser logits must be [1,C,h,w]");
      }
      labels = logits.argmax(1, /*keepdim=*/true).to(torch::kFloat32);
      labels = nn::ResizeNearest(labels, frame.height(), frame.width());
      labels = labels.reshape({frame.height(), frame.width()}).to(torch::kUInt8).contiguous();
    } catch (const Error& e) {
      throw Error(Errc::kInference, "frame '" + frame.source_id() + "': " + e.what());
    } catch (const c10::Error& e) {
      throw Error(Errc::kInference,
                  "frame '" + frame.source_id() + "': " + e.what_without_backtrace());
    }
    const auto* p = labels.data_ptr<std::uint8_t>();
    BodyPartLabelMap map{frame.shape(), std::vector<std::uint8_t>(p, p + labels.numel()),
                         names_};
    try {
      map.Validate();
    } catch (const Error& e) {
      throw Error(Errc::kInference, "frame '" + frame.source_id() + "': " + e.what());
    }
    return map;
  }

 private:
  int native_w_;
  int native_h_;
  LabelNames names_;
  mutable std::mutex mu_;
  mutable torch::jit::Module module_;
};

}  // namespace

std::unique_ptr<HumanParser> MakeTorchScriptParser(const HandSegmentorConfig& config) {
  return std::make_unique<TorchScriptParser>(config);
}

}  // namespace gimt::handseg::detail
