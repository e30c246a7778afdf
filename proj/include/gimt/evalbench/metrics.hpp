#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gimt/core/image.hpp"
#include "gimt/core/mask_ops.hpp"

namespace gimt::eval {

// |a ∩ b| / |a ∪ b|; 1.0 when both masks are empty.
double Iou(const BinaryMask& a, const BinaryMask& b);

struct EvalReport {
  double miou = 0.0;
  std::vector<double> per_image_iou;
  std::vector<std::string> per_image_id;  // parallel to per_image_iou when known
  std::optional<double> classification_accuracy;
  std::optional<double> fps;
  std::string model_desc;
  std::string dataset_desc;
  std::uint64_t seed = 0;

  // Throws unless miou equals the mean of per_image_iou within 1e-9 and every
  // IoU lies in [0,1].
  void Validate() const;
};

nlohmann::json ToJson(const EvalReport& report);
EvalReport EvalReportFromJson(const nlohmann::json& j);

struct PredictionPair {
  SoftMask prediction;
  BinaryMask ground_truth;
  std::string id;
};

// Binarizes each prediction and averages per-image IoU (unweighted).
EvalReport MeanIou(const std::vector<PredictionPair>& pairs,
                   double threshold = kDefaultBinarizeThreshold);

double ClassificationAccuracy(const std::vector<int>& predictions,
                              const std::vector<int>& labels);

}  // namespace gimt::eval
