#include "gimt/teachtrain/user_model.hpp"

#include <cmath>
#include <cstdlib>
#include <numeric>
#include <random>
#include <set>

#include <torch/torch.h>

#include "gimt/core/codec.hpp"
#include "gimt/core/error.hpp"
#include "gimt/core/mask_ops.hpp"
#include "gimt/evalbench/metrics.hpp"
#include "gimt/nn/architecture.hpp"
#include "gimt/nn/tensor_util.hpp"

namespace gimt::teach {
namespace F = torch::nn::functional;
using nlohmann::json;

void UserTrainConfig::Validate() const {
  if (epochs <= 0) throw Error(Errc::kConfig, "epochs must be positive");
  if (batch_size <= 0) throw Error(Errc::kConfig, "batch_size must be positive");
  if (!(lr > 0.0)) throw Error(Errc::kConfig, "lr must be positive");
  if (optimizer != "adam") throw Error(Errc::kConfig, "only the adam optimizer is supported");
  if (input_width <= 0 || input_height <= 0) {
    throw Error(Errc::kConfig, "network input size must be positive");
  }
  if (!nn::IsRegisteredBackbone(encoder_id)) {
    throw Error(Errc::kCatalog, "unknown encoder '" + encoder_id + "'");
  }
}

json ToJson(const UserTrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"optimizer", c.optimizer},
          {"pretrained_encoder", c.pretrained_encoder},
          {"seed", c.seed},
          {"encoder_id", c.encoder_id},
          {"seg_decoder", c.seg_decoder},
          {"input_width", c.input_width},
          {"input_height", c.input_height}};
}

UserTrainConfig UserTrainConfigFromJson(const json& j) {
  UserTrainConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.optimizer = j.value("optimizer", c.optimizer);
    c.pretrained_encoder = j.value("pretrained_encoder", c.pretrained_encoder);
    c.seed = j.value("seed", c.seed);
    c.encoder_id = j.value("encoder_id", c.encoder_id);
    c.seg_decoder = j.value("seg_decoder", c.seg_decoder);
    c.input_width = j.value("input_width", c.input_width);
    c.input_height = j.value("input_height", c.input_height);
    if (j.contains("encoder_weights")) c.encoder_weights = j["encoder_weights"].get<std::string>();
  } catch (const json::exception& e) {
    throw Error(Errc::kConfig, std::string("bad training config: ") + e.what());
  }
  c.Validate();
  return c;
}

namespace {

struct NetOutput {
  torch::Tensor logits;      // [N,K]
  torch::Tensor seg_logits;  // [N,1,h,w], undefined without a decoder
  torch::Tensor features;    // [N,C,h',w'] final stage
};

class UserNet : public torch::nn::Module {
 public:
  UserNet(const std::string& encoder_id, int64_t num_classes, bool with_decoder,
          bool normalize)
      : normalize_(normalize) {
    encoder = register_module("encoder", nn::MakeEncoder(encoder_id, 3));
    head = register_module("head",
                           torch::nn::Linear(encoder->channels().back(), num_classes));
    if (with_decoder) {
      decoder = register_module("decoder",
                                nn::MakeDecoder("unet", encoder_id, encoder->channels()));
    }
  }

  NetOutput forward(torch::Tensor x) {
    if (normalize_) x = nn::NormalizeRgbChannels(x, nn::kImageNetMean, nn::kImageNetStd);
    const auto feats = encoder->forward(x);
    NetOutput out;
    out.features = feats.back();
    out.logits = head->forward(out.features.mean({2, 3}));
    if (decoder) out.seg_logits = decoder->forward(feats, x.size(2), x.size(3));
    return out;
  }

  std::shared_ptr<nn::EncoderImpl> encoder;
  torch::nn::Linear head{nullptr};
  std::shared_ptr<nn::DecoderImpl> decoder;

 private:
  bool normalize_;
};

torch::Tensor FrameInput(const ImageFrame& frame, int height, int width) {
  if (frame.empty()) throw Error(Errc::kShape, "empty frame");
  return nn::ResizeBilinear(nn::FrameToTensor(frame), height, width);
}

std::filesystem::path PretrainedPath(const UserTrainConfig& config) {
  if (!config.encoder_weights.empty()) return config.encoder_weights;
  if (const char* dir = std::getenv("GIMT_PRETRAINED_DIR")) {
    return std::filesystem::path(dir) / (config.encoder_id + ".pt");
  }
  return {};
}

}  // namespace

struct UserModel::Impl {
  std::vector<ClassDef> classes;
  UserTrainConfig config;
  double lambda_loss = kDefaultLambdaLoss;
  double lambda_blend = data::kDefaultLambdaBlend;
  bool has_seg_decoder = false;
  bool normalize_input = false;
  json metrics = json::object();
  std::shared_ptr<UserNet> net;
};

UserModel::UserModel() = default;
UserModel::~UserModel() = default;
UserModel::UserModel(const UserModel&) = default;
UserModel& UserModel::operator=(const UserModel&) = default;
UserModel::UserModel(UserModel&&) noexcept = default;
UserModel& UserModel::operator=(UserModel&&) noexcept = default;

namespace {

std::shared_ptr<UserModel::Impl> BuildImpl(std::vector<ClassDef> classes,
                                           const UserTrainConfig& config, double lambda_loss,
                                           bool has_seg_decoder) {
  config.Validate();
  data::ValidateClassDefs(classes);
  if (classes.size() < 2) throw Error(Errc::kDataset, "a user model needs at least 2 classes");
  if (!(lambda_loss >= 0.0)) throw Error(Errc::kArgument, "lambda_loss must be >= 0");
  auto impl = std::make_shared<UserModel::Impl>();
  impl->classes = std::move(classes);
  impl->config = config;
  impl->lambda_loss = lambda_loss;
  impl->has_seg_decoder = has_seg_decoder;
  impl->normalize_input = nn::DefaultNormalizeInput(config.encoder_id);
  impl->net = std::make_shared<UserNet>(config.encoder_id,
                                        static_cast<int64_t>(impl->classes.size()),
                                        has_seg_decoder, impl->normalize_input);
  impl->net->eval();
  return impl;
}

}  // namespace

UserModel UserModel::Create(std::vector<ClassDef> classes, const UserTrainConfig& config,
                            double lambda_loss) {
  UserModel model;
  {
    std::lock_guard lock(nn::TorchRngMutex());
    torch::manual_seed(config.seed);
    model.impl_ = BuildImpl(std::move(classes), config, lambda_loss,
                            config.seg_decoder && lambda_loss > 0.0);
  }
  // Only backbones with an ImageNet pretraining convention take weights.
  if (config.pretrained_encoder && nn::DefaultNormalizeInput(config.encoder_id)) {
    const auto path = PretrainedPath(config);
    if (path.empty() || !std::filesystem::exists(path)) {
      throw Error(Errc::kInitialization,
                  "pretrained weights for " + config.encoder_id +
                      " not found (set encoder_weights or GIMT_PRETRAINED_DIR, or disable "
                      "pretrained_encoder)");
    }
    try {
      torch::serialize::InputArchive archive;
      archive.load_from(path.string());
      model.impl_->net->encoder->load(archive);
    } catch (const c10::Error& e) {
      throw Error(Errc::kInitialization,
                  "incompatible encoder weights: " + std::string(e.what_without_backtrace()));
    }
  }
  return model;
}

void UserModel::Save(const std::filesystem::path& dir) const {
  const Impl& im = impl();
  std::filesystem::create_directories(dir);
  torch::serialize::OutputArchive archive;
  im.net->save(archive);
  const auto weights = dir / "weights.bin";
  const auto tmp = weights.string() + ".tmp";
  archive.save_to(tmp);
  std::filesystem::rename(tmp, weights);

  json classes = json::array();
  for (const auto& c : im.classes) {
    classes.push_back({{"id", c.class_id}, {"label", c.label}, {"sample_count", c.sample_count}});
  }
  WriteFileAtomic(dir / "classes.json", classes.dump(2));
  json cfg = ToJson(im.config);
  cfg["lambda_loss"] = im.lambda_loss;
  cfg["lambda_blend"] = im.lambda_blend;
  cfg["has_seg_decoder"] = im.has_seg_decoder;
  WriteFileAtomic(dir / "train_config.json", cfg.dump(2));
  WriteFileAtomic(dir / "metrics.json", im.metrics.dump(2));
}

UserModel UserModel::Load(const std::filesystem::path& dir) {
  const auto read_json = [&](const char* name) {
    const auto bytes = ReadFileBytes(dir / name);
    try {
      return json::parse(bytes.begin(), bytes.end());
    } catch (const json::exception& e) {
      throw Error(Errc::kValidation, std::string(name) + ": " + e.what());
    }
  };
  const json classes_j = read_json("classes.json");
  const json cfg = read_json("train_config.json");
  std::vector<ClassDef> classes;
  try {
    for (const auto& c : classes_j) {
      classes.push_back({c.at("id").get<int>(), c.at("label").get<std::string>(),
                         c.value("sample_count", 0)});
    }
  } catch (const json::exception& e) {
    throw Error(Errc::kValidation, std::string("classes.json: ") + e.what());
  }
  UserModel model;
  try {
    model.impl_ = BuildImpl(std::move(classes), UserTrainConfigFromJson(cfg),
                            cfg.at("lambda_loss").get<double>(),
                            cfg.at("has_seg_decoder").get<bool>());
    model.impl_->lambda_blend = cfg.value("lambda_blend", data::kDefaultLambdaBlend);
  } catch (const json::exception& e) {
    throw Error(Errc::kValidation, std::string("train_config.json: ") + e.what());
  }
  if (std::filesystem::exists(dir / "metrics.json")) model.impl_->metrics = read_json("metrics.json");
  try {
    torch::serialize::InputArchive archive;
    archive.load_from((dir / "weights.bin").string());
    model.impl_->net->load(archive);
  } catch (const c10::Error& e) {
    throw Error(Errc::kIo, "cannot read user model weights in " + dir.string() + ": " +
                               e.what_without_backtrace());
  }
  model.impl_->net->eval();
  return model;
}

bool UserModel::loaded() const noexcept { return impl_ && impl_->net; }

UserModel::Impl& UserModel::impl() const {
  if (!loaded()) throw Error(Errc::kState, "user model is not loaded");
  return *impl_;
}

const std::vector<ClassDef>& UserModel::classes() const { return impl().classes; }
const std::string& UserModel::encoder_id() const { return impl().config.encoder_id; }
bool UserModel::has_seg_decoder() const { return impl().has_seg_decoder; }
double UserModel::lambda_loss() const { return impl().lambda_loss; }
double UserModel::lambda_blend() const { return impl().lambda_blend; }
const UserTrainConfig& UserModel::train_config() const { return impl().config; }
json UserModel::metrics() const { return impl().metrics; }
void UserModel::set_metrics(json metrics) { impl().metrics = std::move(metrics); }

void UserModel::set_lambda_blend(double lambda_blend) {
  if (!(lambda_blend >= 0.0 && lambda_blend <= 1.0)) {
    throw Error(Errc::kArgument, "lambda_blend must lie in [0,1]");
  }
  impl().lambda_blend = lambda_blend;
}

namespace {

NetOutput Forward(const UserModel::Impl& im, const ImageFrame& frame) {
  torch::NoGradGuard no_grad;
  return im.net->forward(
      FrameInput(frame, im.config.input_height, im.config.input_width).unsqueeze(0));
}

std::vector<double> ToDoubles(const torch::Tensor& t) {
  auto d = t.to(torch::kFloat64).contiguous().flatten();
  const double* p = d.data_ptr<double>();
  return {p, p + d.numel()};
}

FeatureMaps ToFeatureMaps(const torch::Tensor& f) {
  FeatureMaps out;
  out.channels = static_cast<int>(f.size(1));
  out.height = static_cast<int>(f.size(2));
  out.width = static_cast<int>(f.size(3));
  out.values = ToDoubles(f[0]);
  return out;
}

void CheckClassId(const UserModel::Impl& im, int class_id) {
  if (class_id < 0 || class_id >= static_cast<int>(im.classes.size())) {
    throw Error(Errc::kArgument, "class " + std::to_string(class_id) + " outside [0," +
                                     std::to_string(im.classes.size()) + ")");
  }
}

}  // namespace

std::vector<double> UserModel::Logits(const ImageFrame& frame) const {
  return ToDoubles(Forward(impl(), frame).logits[0]);
}

FeatureMaps UserModel::ExtractFeatures(const ImageFrame& frame) const {
  return ToFeatureMaps(Forward(impl(), frame).features);
}

std::vector<double> UserModel::ClassifierWeights() const {
  torch::NoGradGuard no_grad;
  return ToDoubles(impl().net->head->weight);
}

SoftMask CamFromFeatures(const FeatureMaps& features, std::span<const double> class_weights,
                         const Shape& out) {
  const auto c = static_cast<int64_t>(features.channels);
  if (c <= 0 || features.height <= 0 || features.width <= 0 ||
      features.values.size() != static_cast<std::size_t>(c) * features.height * features.width) {
    throw Error(Errc::kShape, "inconsistent feature maps");
  }
  if (class_weights.size() != static_cast<std::size_t>(c)) {
    throw Error(Errc::kShape, "CAM needs one weight per feature channel");
  }
  if (out.width <= 0 || out.height <= 0) throw Error(Errc::kShape, "empty CAM output shape");
  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  auto f = torch::from_blob(const_cast<double*>(features.values.data()),
                            {1, c, features.height, features.width}, opts);
  auto w = torch::from_blob(const_cast<double*>(class_weights.data()), {1, c, 1, 1}, opts);
  auto raw = F::conv2d(f, w);  // [1,1,h,w]
  const double lo = raw.min().item<double>();
  const double hi = raw.max().item<double>();
  torch::Tensor norm;
  if (hi - lo <= 1e-12 * std::max(1.0, std::max(std::abs(lo), std::abs(hi)))) {
    norm = torch::zeros_like(raw);
  } else {
    norm = (raw - lo) / (hi - lo);
  }
  if (norm.size(2) != out.height || norm.size(3) != out.width) {
    norm = nn::ResizeBilinear(norm, out.height, out.width);
  }
  return nn::TensorToSoftMask(norm);
}

SoftMask ComputeCam(const UserModel& model, const ImageFrame& frame, int class_id) {
  const auto& im = model.impl();
  CheckClassId(im, class_id);
  const auto features = model.ExtractFeatures(frame);
  const auto weights = model.ClassifierWeights();
  const auto c = static_cast<std::size_t>(features.channels);
  return CamFromFeatures(features,
                         std::span<const double>(weights).subspan(class_id * c, c),
                         frame.shape());
}

SoftMask BlendSaliency(const SoftMask& model_out, const SoftMask& cam, double lambda_blend) {
  if (!(lambda_blend >= 0.0 && lambda_blend <= 1.0)) {
    throw Error(Errc::kArgument, "lambda_blend must lie in [0,1]");
  }
  RequireSameShape(model_out.shape(), cam.shape(), "blend_saliency");
  const auto a = model_out.values();
  const auto b = cam.values();
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double v = lambda_blend * a[i] + (1.0 - lambda_blend) * b[i];
    out[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return SoftMask(model_out.width(), model_out.height(), std::move(out));
}

PredictionResult Predict(const UserModel& model, const ImageFrame& frame, double lambda_blend,
                         std::optional<int> saliency_class) {
  const auto& im = model.impl();
  if (!(lambda_blend >= 0.0 && lambda_blend <= 1.0)) {
    throw Error(Errc::kArgument, "lambda_blend must lie in [0,1]");
  }
  const NetOutput out = Forward(im, frame);
  PredictionResult r;
  const auto logits = ToDoubles(out.logits[0]);
  r.confidences = Softmax(logits);
  r.predicted_class = ArgmaxLowestTie(r.confidences);
  r.saliency_class = saliency_class.value_or(r.predicted_class);
  CheckClassId(im, r.saliency_class);

  const auto features = ToFeatureMaps(out.features);
  const auto weights = model.ClassifierWeights();
  const auto c = static_cast<std::size_t>(features.channels);
  r.cam = CamFromFeatures(
      features,
      std::span<const double>(weights).subspan(static_cast<std::size_t>(r.saliency_class) * c, c),
      frame.shape());
  if (out.seg_logits.defined()) {
    r.seg_output = nn::TensorToSoftMask(
        nn::ResizeBilinear(torch::sigmoid(out.seg_logits), frame.height(), frame.width()));
    r.saliency = BlendSaliency(*r.seg_output, r.cam, lambda_blend);
  } else {
    r.saliency = r.cam;
  }
  return r;
}

void ValidateTrainingSamples(const std::vector<ClassDef>& classes,
                             const std::vector<TeachingSample>& samples,
                             const UserTrainConfig& config, double lambda_loss) {
  config.Validate();
  data::ValidateClassDefs(classes);
  if (!(lambda_loss >= 0.0)) throw Error(Errc::kArgument, "lambda_loss must be >= 0");
  std::set<int> seen;
  for (const auto& s : samples) {
    if (s.class_id < 0 || s.class_id >= static_cast<int>(classes.size())) {
      throw Error(Errc::kValidation, "sample '" + s.sample_id + "' has unknown class " +
                                         std::to_string(s.class_id));
    }
    if (s.frame.empty()) {
      throw Error(Errc::kValidation, "sample '" + s.sample_id + "' has no frame");
    }
    seen.insert(s.class_id);
  }
  if (seen.size() < 2) {
    throw Error(Errc::kDataset, "training needs samples from at least 2 distinct classes, got " +
                                    std::to_string(seen.size()));
  }
  if (config.seg_decoder && lambda_loss > 0.0) {
    for (const auto& s : samples) {
      if (s.highlight_bin.shape().area() == 0) {
        throw Error(Errc::kValidation, "sample '" + s.sample_id + "' is missing its mask");
      }
      RequireSameShape(s.frame.shape(), s.highlight_bin.shape(), "sample " + s.sample_id);
    }
  }
}

struct UserModelTrainer::State {
  std::unique_ptr<torch::optim::Adam> optimizer;
  std::mt19937_64 rng;
  std::vector<torch::Tensor> inputs;
  std::vector<torch::Tensor> masks;
};

UserModelTrainer::UserModelTrainer(UserModel model, const UserTrainConfig& config,
                                   const std::vector<TeachingSample>& samples)
    : model_(std::move(model)), config_(config), samples_(samples),
      state_(std::make_unique<State>()) {
  config_.Validate();
  if (samples_.empty()) throw Error(Errc::kDataset, "no training samples");
  auto& im = model_.impl();
  state_->optimizer = std::make_unique<torch::optim::Adam>(
      im.net->parameters(), torch::optim::AdamOptions(config_.lr));
  state_->rng.seed(config_.seed);
  const int h = im.config.input_height;
  const int w = im.config.input_width;
  for (const auto& s : samples_) {
    state_->inputs.push_back(FrameInput(s.frame, h, w));
    if (im.has_seg_decoder) {
      state_->masks.push_back(nn::ResizeNearest(nn::MaskToTensor(s.highlight_bin), h, w));
    }
  }
}

UserModelTrainer::~UserModelTrainer() = default;

double UserModelTrainer::Step(const std::vector<std::size_t>& batch) {
  auto& im = model_.impl();
  std::vector<torch::Tensor> xs, ms;
  std::vector<int64_t> ys;
  for (std::size_t i : batch) {
    xs.push_back(state_->inputs.at(i));
    ys.push_back(samples_.at(i).class_id);
    if (im.has_seg_decoder) ms.push_back(state_->masks.at(i));
  }
  im.net->train();
  state_->optimizer->zero_grad();
  const NetOutput out = im.net->forward(torch::stack(xs));
  auto loss = F::cross_entropy(out.logits, torch::tensor(ys, torch::kInt64));
  if (im.has_seg_decoder) {
    loss = loss + im.lambda_loss *
                      F::binary_cross_entropy_with_logits(out.seg_logits, torch::stack(ms));
  }
  loss.backward();
  state_->optimizer->step();
  im.net->eval();
  return loss.item<double>();
}

UserEpochStats UserModelTrainer::RunEpoch(int epoch) {
  std::vector<std::size_t> order(samples_.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[state_->rng() % i]);
  }
  double total = 0.0;
  std::size_t batches = 0;
  const auto bs = static_cast<std::size_t>(config_.batch_size);
  for (std::size_t start = 0; start < order.size(); start += bs) {
    const std::size_t end = std::min(order.size(), start + bs);
    total += Step({order.begin() + static_cast<std::ptrdiff_t>(start),
                   order.begin() + static_cast<std::ptrdiff_t>(end)});
    ++batches;
  }
  return {epoch, total / static_cast<double>(batches)};
}

void UserModelTrainer::Run(const UserEpochCallback& on_epoch) {
  for (int epoch = 0; epoch < config_.epochs; ++epoch) {
    const auto stats = RunEpoch(epoch);
    if (on_epoch) on_epoch(stats);
  }
  model_.impl().net->eval();
}

UserModel TrainUserModel(const std::vector<ClassDef>& classes,
                         const std::vector<TeachingSample>& samples,
                         const UserTrainConfig& config, double lambda_loss,
                         const UserEpochCallback& on_epoch) {
  ValidateTrainingSamples(classes, samples, config, lambda_loss);
  std::vector<ClassDef> counted = classes;
  for (auto& c : counted) c.sample_count = 0;
  for (const auto& s : samples) ++counted[static_cast<std::size_t>(s.class_id)].sample_count;
  UserModelTrainer trainer(UserModel::Create(std::move(counted), config, lambda_loss), config,
                           samples);
  trainer.Run(on_epoch);
  UserModel model = trainer.model();
  const auto scores = ScoreUserModel(model, samples);
  json metrics = {{"train_accuracy", scores.accuracy}, {"samples", samples.size()}};
  metrics["train_seg_miou"] = scores.seg_miou ? json(*scores.seg_miou) : json();
  model.set_metrics(std::move(metrics));
  return model;
}

UserModelScores ScoreUserModel(const UserModel& model, const std::vector<TeachingSample>& samples) {
  if (samples.empty()) throw Error(Errc::kArgument, "no samples to score");
  UserModelScores scores;
  std::vector<int> truth;
  std::vector<eval::PredictionPair> pairs;
  for (const auto& s : samples) {
    const auto r = Predict(model, s.frame, model.lambda_blend());
    scores.predictions.push_back(r.predicted_class);
    truth.push_back(s.class_id);
    if (r.seg_output && s.highlight_bin.shape().area() > 0) {
      pairs.push_back({*r.seg_output, s.highlight_bin, s.sample_id});
    }
  }
  scores.accuracy = eval::ClassificationAccuracy(scores.predictions, truth);
  if (!pairs.empty()) scores.seg_miou = eval::MeanIou(pairs).miou;
  return scores;
}

}  // namespace gimt::teach
