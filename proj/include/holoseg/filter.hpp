#pragma once

#include <optional>

#include "holoseg/ops.hpp"
#include "holoseg/tensor.hpp"

namespace holoseg {

/// Pixel scores (h x w x c) with their ground-truth label map.
struct ScoreMapSet {
  Tensor scores;
  LabelMap truth;

  Index num_classes() const { return scores.dim(2); }
};

/// Image-level confidence value used by gt_confidence; sigmoid of it is 1
/// to machine precision.
inline constexpr double kGtConfidence = 1e4;

/// Unrestricted per-pixel argmax; ties go to the lowest class.
LabelMap argmax_labels(const Tensor& scores);

/// Per-pixel argmax over the classes in `allowed` only.
LabelMap hard_filter_argmax(const Tensor& scores, const LabelSet& allowed);

/// logit(sigmoid(seg) * sigmoid(conf)) with conf broadcast over pixels.
Tensor soft_filter(const Tensor& seg, const Tensor& conf, double eps = kDefaultLogitEps);

struct SoftFilterGrads {
  Tensor seg;
  Tensor conf;  // summed over all pixels
};

SoftFilterGrads soft_filter_backward(const Tensor& seg, const Tensor& conf, const Tensor& grad_out,
                                     double eps = kDefaultLogitEps);

/// +kGtConfidence for present classes, -kGtConfidence otherwise.
Tensor gt_confidence(const LabelSet& present, Index num_classes);

/// { k : conf[k] > tau }.
LabelSet threshold_labels(const Tensor& conf, double tau = 0.0);

/// Soft filter at map resolution, then bilinear upsampling to H x W.
Tensor filter_then_upsample(const Tensor& seg, const Tensor& conf, Index out_h, Index out_w,
                            double eps = kDefaultLogitEps);

/// Reverse order: upsample first, filter the full map. Costlier.
Tensor upsample_then_filter(const Tensor& seg, const Tensor& conf, Index out_h, Index out_w,
                            double eps = kDefaultLogitEps);

}  // namespace holoseg
