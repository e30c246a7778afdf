#include <cmath>
#include <json.hpp>

#include "gimt/core/error.hpp"
#include "gimt/nn/tensor_util.hpp"
#include "net.hpp"

namespace gimt::highlight {

void ModelSpec::Validate() const {
  if (!nn::IsRegisteredBackbone(backbone_id)) {
    throw Error(Errc::kCatalog, "unknown backbone '" + backbone_id + "'");
  }
  if (!nn::IsRegisteredDecoder(decoder_id)) {
    throw Error(Errc::kCatalog, "unknown decoder '" + decoder_id + "'");
  }
}

HighlighterNet::HighlighterNet(const ModelSpec& spec, bool normalize_input)
    : normalize_input_(normalize_input) {
  encoder = register_module("encoder", nn::MakeEncoder(spec.backbone_id, 4));
  decoder = register_module(
      "decoder", nn::MakeDecoder(spec.decoder_id, spec.backbone_id, encoder->channels()));
}

torch::Tensor HighlighterNet::forward(torch::Tensor x) {
  if (normalize_input_) x = nn::NormalizeRgbChannels(x, nn::kImageNetMean, nn::kImageNetStd);
  const auto h = x.size(2);
  const auto w = x.size(3);
  return decoder->forward(encoder->forward(x), h, w);
}

torch::Tensor ToNetworkInput(const ImageFrame& frame, const BinaryMask& hand,
                             int height, int width) {
  RequireSameShape(frame.shape(), hand.shape(), "frame vs hand mask");
  auto rgb = nn::ResizeBilinear(nn::FrameToTensor(frame), height, width);
  auto mask = nn::ResizeNearest(nn::MaskToTensor(hand), height, width);
  return torch::cat({rgb, mask}, 0);
}

HighlighterModel::HighlighterModel() = default;
HighlighterModel::~HighlighterModel() = default;
HighlighterModel::HighlighterModel(const HighlighterModel&) = default;
HighlighterModel& HighlighterModel::operator=(const HighlighterModel&) = default;
HighlighterModel::HighlighterModel(HighlighterModel&&) noexcept = default;
HighlighterModel& HighlighterModel::operator=(HighlighterModel&&) noexcept = default;

namespace {

std::shared_ptr<HighlighterModel::Impl> BuildImpl(const HighlighterOptions& options) {
  options.spec.Validate();
  if (options.input_width <= 0 || options.input_height <= 0) {
    throw Error(Errc::kConfig, "network input size must be positive");
  }
  auto impl = std::make_shared<HighlighterModel::Impl>();
  impl->options = options;
  impl->normalize_input =
      options.normalize_input.value_or(nn::DefaultNormalizeInput(options.spec.backbone_id));
  impl->net = std::make_shared<HighlighterNet>(options.spec, impl->normalize_input);
  impl->net->eval();
  return impl;
}

}  // namespace

HighlighterModel HighlighterModel::Create(const HighlighterOptions& options,
                                          std::uint64_t seed) {
  HighlighterModel model;
  {
    std::lock_guard lock(nn::TorchRngMutex());
    torch::manual_seed(seed);
    model.impl_ = BuildImpl(options);
  }
  if (!options.encoder_weights.empty()) {
    if (!std::filesystem::exists(options.encoder_weights)) {
      throw Error(Errc::kInitialization, "encoder weights not found at '" +
                                             options.encoder_weights.string() + "'");
    }
    try {
      torch::serialize::InputArchive archive;
      archive.load_from(options.encoder_weights.string());
      model.impl_->net->encoder->load(archive);
    } catch (const c10::Error& e) {
      throw Error(Errc::kInitialization,
                  "incompatible encoder weights: " + std::string(e.what_without_backtrace()));
    }
  }
  return model;
}

HighlighterModel HighlighterModel::Load(const std::filesystem::path& file) {
  if (!std::filesystem::exists(file)) {
    throw Error(Errc::kIo, "highlighter weights not found at " + file.string());
  }
  try {
    torch::serialize::InputArchive archive;
    archive.load_from(file.string());
    c10::IValue meta_value;
    archive.read("meta", meta_value);
    const auto meta = nlohmann::json::parse(meta_value.toStringRef());
    HighlighterOptions options;
    options.spec.backbone_id = meta.at("backbone").get<std::string>();
    options.spec.decoder_id = meta.at("decoder").get<std::string>();
    options.input_width = meta.at("input_width").get<int>();
    options.input_height = meta.at("input_height").get<int>();
    options.normalize_input = meta.at("normalize_input").get<bool>();
    HighlighterModel model;
    model.impl_ = BuildImpl(options);
    model.impl_->net->load(archive);
    model.impl_->net->eval();
    if (meta.contains("trained_miou") && !meta["trained_miou"].is_null()) {
      model.impl_->trained_miou = meta["trained_miou"].get<double>();
    }
    return model;
  } catch (const c10::Error& e) {
    throw Error(Errc::kIo, "cannot read highlighter " + file.string() + ": " +
                               e.what_without_backtrace());
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kIo, "bad highlighter metadata in " + file.string() + ": " + e.what());
  }
}

void HighlighterModel::Save(const std::filesystem::path& file) const {
  const Impl& im = impl();
  nlohmann::json meta = {{"backbone", im.options.spec.backbone_id},
                         {"decoder", im.options.spec.decoder_id},
                         {"input_width", im.options.input_width},
                         {"input_height", im.options.input_height},
                         {"normalize_input", im.normalize_input},
                         {"input_channels", 4}};
  meta["trained_miou"] = im.trained_miou ? nlohmann::json(*im.trained_miou) : nlohmann::json();
  torch::serialize::OutputArchive archive;
  im.net->save(archive);
  archive.write("meta", c10::IValue(meta.dump()));
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  const auto tmp = file.string() + ".tmp";
  archive.save_to(tmp);
  std::filesystem::rename(tmp, file);
}

bool HighlighterModel::loaded() const noexcept { return impl_ && impl_->net; }

HighlighterModel::Impl& HighlighterModel::impl() const {
  if (!loaded()) throw Error(Errc::kState, "highlighter model is not loaded");
  return *impl_;
}

const ModelSpec& HighlighterModel::spec() const { return impl().options.spec; }
const HighlighterOptions& HighlighterModel::options() const { return impl().options; }
std::optional<double> HighlighterModel::trained_miou() const { return impl().trained_miou; }
void HighlighterModel::set_trained_miou(double miou) { impl().trained_miou = miou; }

void HighlighterModel::ZeroLogitLayer() {
  torch::NoGradGuard no_grad;
  auto layer = impl().net->decoder->logit_layer();
  layer->weight.zero_();
  if (layer->bias.defined()) layer->bias.zero_();
}

FourChannelInput PrepareInput(const ImageFrame& frame, const BinaryMask& hand) {
  RequireSameShape(frame.shape(), hand.shape(), "prepare_input");
  FourChannelInput out;
  out.shape = frame.shape();
  const std::size_t area = frame.shape().area();
  out.values.resize(area * 4);
  const auto px = frame.pixels();
  for (std::size_t p = 0; p < area; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      out.values[c * area + p] = static_cast<float>(px[p * 3 + c]) / 255.0f;
    }
    out.values[3 * area + p] = hand.values()[p] ? 1.0f : 0.0f;
  }
  return out;
}

void HighlighterTrainConfig::Validate() const {
  if (epochs <= 0) throw Error(Errc::kConfig, "epochs must be positive");
  if (batch_size <= 0) throw Error(Errc::kConfig, "batch_size must be positive");
  if (lr_hold_head < 0 || lr_hold_tail < 0 || lr_hold_head + lr_hold_tail >= epochs) {
    throw Error(Errc::kConfig, "lr hold phases must be non-negative and shorter than the run");
  }
  if (!(lr_initial > 0.0) || !(lr_final > 0.0) || lr_final > lr_initial) {
    throw Error(Errc::kConfig, "learning rates must satisfy 0 < lr_final <= lr_initial");
  }
  if (optimizer != "adam") throw Error(Errc::kConfig, "only the adam optimizer is supported");
}

double LrAtEpoch(const HighlighterTrainConfig& config, int epoch) {
  config.Validate();
  if (epoch < 0 || epoch >= config.epochs) {
    throw Error(Errc::kArgument, "epoch " + std::to_string(epoch) + " outside [0," +
                                     std::to_string(config.epochs) + ")");
  }
  if (epoch < config.lr_hold_head) return config.lr_initial;
  if (epoch >= config.epochs - config.lr_hold_tail) return config.lr_final;
  const double span = config.epochs - config.lr_hold_head - config.lr_hold_tail;
  const double t = (epoch - config.lr_hold_head) / span;
  return config.lr_initial * std::pow(config.lr_final / config.lr_initial, t);
}

SoftMask PredictHighlight(const HighlighterModel& model, const ImageFrame& frame,
                          const BinaryMask& hand) {
  const auto& im = model.impl();
  torch::NoGradGuard no_grad;
  auto x = ToNetworkInput(frame, hand, im.options.input_height, im.options.input_width)
               .unsqueeze(0);
  // Resampling logits rather than probabilities keeps a zero logit exactly 0.5.
  auto logits = nn::ResizeBilinear(im.net->forward(x), frame.height(), frame.width());
  return nn::TensorToSoftMask(torch::sigmoid(logits));
}

}  // namespace gimt::highlight
