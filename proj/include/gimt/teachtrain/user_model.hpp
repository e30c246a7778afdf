#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gimt/core/image.hpp"
#include "gimt/datamgmt/session_store.hpp"
#include "gimt/teachtrain/joint_loss.hpp"

namespace gimt::teach {

using data::ClassDef;
using data::TeachingSample;

struct UserTrainConfig {
  int epochs = 50;
  int batch_size = 4;
  double lr = 1e-4;  // constant
  std::string optimizer = "adam";
  // Ignored for backbones without a pretraining convention (tiny-cnn).
  bool pretrained_encoder = true;
  std::uint64_t seed = 0;
  std::string encoder_id = "efficientnet-b0";
  // Attach the segmentation decoder (trained only when lambda > 0).
  bool seg_decoder = true;
  int input_width = kCaptureWidth;
  int input_height = kCaptureHeight;
  // Pretrained encoder archive. When empty, $GIMT_PRETRAINED_DIR/<encoder>.pt.
  std::filesystem::path encoder_weights;

  void Validate() const;
};

nlohmann::json ToJson(const UserTrainConfig& config);
UserTrainConfig UserTrainConfigFromJson(const nlohmann::json& j);

// Final-stage encoder activations, channel-major [C][H][W].
struct FeatureMaps {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> values;
};

// The user-taught classifier with an optional segmentation decoder sharing
// its encoder. Classification is global average pooling plus one linear
// layer, which is what makes class activation maps available.
class UserModel {
 public:
  UserModel();  // unloaded
  ~UserModel();
  UserModel(const UserModel&);
  UserModel& operator=(const UserModel&);
  UserModel(UserModel&&) noexcept;
  UserModel& operator=(UserModel&&) noexcept;

  // Randomly initialised (deterministic for config.seed). The decoder is
  // attached iff config.seg_decoder and lambda_loss > 0.
  static UserModel Create(std::vector<ClassDef> classes, const UserTrainConfig& config,
                          double lambda_loss);

  // Directory with weights.bin, classes.json, train_config.json, metrics.json.
  void Save(const std::filesystem::path& dir) const;
  static UserModel Load(const std::filesystem::path& dir);

  bool loaded() const noexcept;
  const std::vector<ClassDef>& classes() const;
  std::size_t num_classes() const { return classes().size(); }
  const std::string& encoder_id() const;
  bool has_seg_decoder() const;
  double lambda_loss() const;
  double lambda_blend() const;
  void set_lambda_blend(double lambda_blend);
  const UserTrainConfig& train_config() const;
  nlohmann::json metrics() const;
  void set_metrics(nlohmann::json metrics);

  // Raw class logits for a frame.
  std::vector<double> Logits(const ImageFrame& frame) const;
  FeatureMaps ExtractFeatures(const ImageFrame& frame) const;
  // Row-major [num_classes][channels] weights of the linear head.
  std::vector<double> ClassifierWeights() const;

  struct Impl;
  Impl& impl() const;

 private:
  std::shared_ptr<Impl> impl_;
};

// CAM = sum_k w_k f_k, min-max normalised to [0,1] (constant maps become all
// zero), bilinearly resampled to `out`. Evaluated with tensor ops in double.
SoftMask CamFromFeatures(const FeatureMaps& features, std::span<const double> class_weights,
                         const Shape& out);

SoftMask ComputeCam(const UserModel& model, const ImageFrame& frame, int class_id);

// Lambda * decoder output + (1 - Lambda) * CAM, pixelwise.
SoftMask BlendSaliency(const SoftMask& model_out, const SoftMask& cam, double lambda_blend);

struct PredictionResult {
  std::vector<double> confidences;
  int predicted_class = 0;
  std::optional<SoftMask> seg_output;
  SoftMask saliency;
  SoftMask cam;
  int saliency_class = 0;
};

// Saliency is explained for `saliency_class` when given, otherwise for the
// predicted class. Models without a decoder return the CAM as saliency.
PredictionResult Predict(const UserModel& model, const ImageFrame& frame, double lambda_blend,
                         std::optional<int> saliency_class = std::nullopt);

struct UserEpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
};
using UserEpochCallback = std::function<void(const UserEpochStats&)>;

class UserModelTrainer {
 public:
  UserModelTrainer(UserModel model, const UserTrainConfig& config,
                   const std::vector<TeachingSample>& samples);
  ~UserModelTrainer();

  // One Adam step on the given sample indices; returns the pre-update joint
  // loss of the batch.
  double Step(const std::vector<std::size_t>& batch);
  UserEpochStats RunEpoch(int epoch);
  void Run(const UserEpochCallback& on_epoch = {});

  UserModel& model() { return model_; }

 private:
  struct State;
  UserModel model_;
  UserTrainConfig config_;
  const std::vector<TeachingSample>& samples_;
  std::unique_ptr<State> state_;
};

// Throws a dataset error for fewer than two distinct classes and a validation
// error naming the sample when lambda > 0, the decoder is enabled and a
// sample has no mask.
void ValidateTrainingSamples(const std::vector<ClassDef>& classes,
                             const std::vector<TeachingSample>& samples,
                             const UserTrainConfig& config, double lambda_loss);

UserModel TrainUserModel(const std::vector<ClassDef>& classes,
                         const std::vector<TeachingSample>& samples,
                         const UserTrainConfig& config, double lambda_loss,
                         const UserEpochCallback& on_epoch = {});

struct UserModelScores {
  double accuracy = 0.0;
  std::optional<double> seg_miou;
  std::vector<int> predictions;
};

// Classification accuracy and (with a decoder) mIoU of the binarised decoder
// output against each sample's highlight_bin.
UserModelScores ScoreUserModel(const UserModel& model, const std::vector<TeachingSample>& samples);

}  // namespace gimt::teach
