#include "gimt/evalbench/metrics.hpp"

#include <cmath>

#include "gimt/core/error.hpp"

namespace gimt::eval {

double Iou(const BinaryMask& a, const BinaryMask& b) {
  RequireSameShape(a.shape(), b.shape(), "iou");
  std::size_t inter = 0;
  std::size_t uni = 0;
  const auto va = a.values();
  const auto vb = b.values();
  for (std::size_t i = 0; i < va.size(); ++i) {
    inter += va[i] & vb[i];
    uni += va[i] | vb[i];
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

void EvalReport::Validate() const {
  double sum = 0.0;
  for (double v : per_image_iou) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(Errc::kValidation, "IoU outside [0,1]");
    sum += v;
  }
  const double mean = per_image_iou.empty() ? 0.0 : sum / per_image_iou.size();
  if (std::abs(mean - miou) > 1e-9) {
    throw Error(Errc::kValidation, "miou does not equal the per-image mean");
  }
}

nlohmann::json ToJson(const EvalReport& r) {
  nlohmann::json j = {{"miou", r.miou},
                      {"per_image_iou", r.per_image_iou},
                      {"model", r.model_desc},
                      {"dataset", r.dataset_desc},
                      {"seed", r.seed}};
  if (!r.per_image_id.empty()) j["per_image_id"] = r.per_image_id;
  j["classification_accuracy"] =
      r.classification_accuracy ? nlohmann::json(*r.classification_accuracy) : nlohmann::json();
  j["fps"] = r.fps ? nlohmann::json(*r.fps) : nlohmann::json();
  return j;
}

EvalReport EvalReportFromJson(const nlohmann::json& j) {
  EvalReport r;
  r.miou = j.at("miou").get<double>();
  r.per_image_iou = j.at("per_image_iou").get<std::vector<double>>();
  if (j.contains("per_image_id")) r.per_image_id = j["per_image_id"].get<std::vector<std::string>>();
  r.model_desc = j.value("model", "");
  r.dataset_desc = j.value("dataset", "");
  r.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("classification_accuracy") && !j["classification_accuracy"].is_null()) {
    r.classification_accuracy = j["classification_accuracy"].get<double>();
  }
  if (j.contains("fps") && !j["fps"].is_null()) r.fps = j["fps"].get<double>();
  return r;
}

EvalReport MeanIou(const std::vector<PredictionPair>& pairs, double threshold) {
  if (pairs.empty()) throw Error(Errc::kArgument, "mIoU over an empty list");
  EvalReport report;
  double sum = 0.0;
  for (const auto& p : pairs) {
    const double v = Iou(Binarize(p.prediction, threshold), p.ground_truth);
    report.per_image_iou.push_back(v);
    report.per_image_id.push_back(p.id);
    sum += v;
  }
  report.miou = sum / static_cast<double>(pairs.size());
  return report;
}

double ClassificationAccuracy(const std::vector<int>& predictions,
                              const std::vector<int>& labels) {
  if (predictions.size() != labels.size()) {
    throw Error(Errc::kArgument, "prediction/label length mismatch (" +
                                     std::to_string(predictions.size()) + " vs " +
                                     std::to_string(labels.size()) + ")");
  }
  if (predictions.empty()) throw Error(Errc::kArgument, "accuracy over an empty list");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace gimt::eval
