#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "gimt/handseg/handseg.hpp"
#include "gimt/teachtrain/user_model.hpp"

namespace gimt::service {

struct ServiceConfig {
  handseg::HandSegmentorConfig handseg;
  // Highlighter weights file, or "random:<backbone>+<decoder>" for an
  // untrained network (demos and tests only).
  std::string highlighter_model;
  // Network input size of a "random:" highlighter.
  int highlighter_input_width = kCaptureWidth;
  int highlighter_input_height = kCaptureHeight;
  double lambda_blend = data::kDefaultLambdaBlend;
  double lambda_loss = teach::kDefaultLambdaLoss;
  int capture_width = kCaptureWidth;
  int capture_height = kCaptureHeight;
  // Advertised to clients as their send cap; the server itself never queues.
  double max_fps = 24.0;
  std::filesystem::path data_root = "gimt-data";
  // Defaults for training jobs; request bodies override individual keys.
  teach::UserTrainConfig train;

  void Validate() const;
};

// Keys: handseg.backend, handseg.model, handseg.arm_labels, highlighter.model,
// highlighter.input_width/height, blend.lambda, loss.lambda, capture.width,
// capture.height, stream.max_fps, data.root, train.{epochs,batch_size,lr,seed,
// encoder_id,seg_decoder,pretrained_encoder,input_width,input_height}.
ServiceConfig ServiceConfigFromJson(const nlohmann::json& j);
ServiceConfig LoadServiceConfig(const std::filesystem::path& file);
nlohmann::json ToJson(const ServiceConfig& config);

}  // namespace gimt::service
