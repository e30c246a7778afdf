#include "gimt/teachtrain/joint_loss.hpp"

#include <algorithm>
#include <cmath>

#include "gimt/core/error.hpp"

namespace gimt::teach {
namespace {

void CheckClass(std::span<const double> logits, int true_class) {
  if (logits.empty()) throw Error(Errc::kArgument, "no class logits");
  if (true_class < 0 || true_class >= static_cast<int>(logits.size())) {
    throw Error(Errc::kArgument, "class " + std::to_string(true_class) +
                                     " outside [0," + std::to_string(logits.size()) + ")");
  }
}

void CheckSeg(const SegTerm& seg) {
  if (seg.logits.size() != seg.target.shape().area()) {
    throw Error(Errc::kShape, "segmentation logits hold " +
                                  std::to_string(seg.logits.size()) +
                                  " values, target mask " + ToString(seg.target.shape()));
  }
  if (seg.logits.empty()) throw Error(Errc::kShape, "empty segmentation term");
}

double LogSumExp(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

double Sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

double ClassificationLoss(std::span<const double> logits, int true_class) {
  CheckClass(logits, true_class);
  return LogSumExp(logits) - logits[static_cast<std::size_t>(true_class)];
}

double SegmentationLoss(const SegTerm& seg) {
  CheckSeg(seg);
  const auto y = seg.target.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < seg.logits.size(); ++i) {
    const double z = seg.logits[i];
    sum += std::max(z, 0.0) - z * y[i] + std::log1p(std::exp(-std::abs(z)));
  }
  return sum / static_cast<double>(seg.logits.size());
}

double JointLoss(std::span<const double> cls_logits, int true_class,
                 const std::optional<SegTerm>& seg, double lambda) {
  if (lambda < 0.0) throw Error(Errc::kArgument, "lambda must be non-negative");
  const double cls = ClassificationLoss(cls_logits, true_class);
  if (!seg || lambda == 0.0) return cls;
  return cls + lambda * SegmentationLoss(*seg);
}

JointLossGradient JointLossGrad(std::span<const double> cls_logits, int true_class,
                                const std::optional<SegTerm>& seg, double lambda) {
  CheckClass(cls_logits, true_class);
  JointLossGradient g;
  g.cls = Softmax(cls_logits);
  g.cls[static_cast<std::size_t>(true_class)] -= 1.0;
  if (seg) {
    CheckSeg(*seg);
    const auto y = seg->target.values();
    const double scale = lambda / static_cast<double>(seg->logits.size());
    g.seg.resize(seg->logits.size());
    for (std::size_t i = 0; i < g.seg.size(); ++i) {
      g.seg[i] = scale * (Sigmoid(seg->logits[i]) - y[i]);
    }
  }
  return g;
}

std::vector<double> Softmax(std::span<const double> logits) {
  if (logits.empty()) return {};
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    s += out[i];
  }
  for (double& v : out) v /= s;
  return out;
}

int ArgmaxLowestTie(std::span<const double> values) {
  if (values.empty()) throw Error(Errc::kArgument, "argmax of an empty vector");
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

}  // namespace gimt::teach
