#pragma once

#include <optional>
#include <span>
#include <vector>

#include "gimt/core/image.hpp"

namespace gimt::teach {

inline constexpr double kDefaultLambdaLoss = 1.0;

// Segmentation logits paired with their binary target (same pixel count).
struct SegTerm {
  std::span<const double> logits;
  const BinaryMask& target;
};

// Softmax cross-entropy (log-sum-exp stabilised).
double ClassificationLoss(std::span<const double> logits, int true_class);
// Mean per-pixel sigmoid binary cross-entropy.
double SegmentationLoss(const SegTerm& seg);

// l_cls + lambda * l_seg. With lambda == 0 or no segmentation term the result
// is l_cls exactly.
double JointLoss(std::span<const double> cls_logits, int true_class,
                 const std::optional<SegTerm>& seg, double lambda);

struct JointLossGradient {
  std::vector<double> cls;  // softmax - onehot
  std::vector<double> seg;  // lambda * (sigmoid - target) / pixels
};

JointLossGradient JointLossGrad(std::span<const double> cls_logits, int true_class,
                                const std::optional<SegTerm>& seg, double lambda);

// Numerically stable softmax in double precision.
std::vector<double> Softmax(std::span<const double> logits);
// Index of the largest value; ties resolve to the lowest index.
int ArgmaxLowestTie(std::span<const double> values);

}  // namespace gimt::teach
