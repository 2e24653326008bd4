#include "holoseg/filter.hpp"

#include <string>

namespace holoseg {

namespace {

void check_conf(const Tensor& seg, const Tensor& conf, const char* what) {
  require_rank(seg, 3, what);
  if (conf.rank() != 1 || conf.dim(0) != seg.dim(2)) {
    throw Error(std::string(what) + ": confidence " + dims_to_string(conf.dims()) +
                " does not match " + std::to_string(seg.dim(2)) + " classes");
  }
}

/// sigmoid(seg) * sigmoid(conf) per cell.
Tensor joint_probability(const Tensor& seg, const Tensor& conf) {
  Tensor q = sigmoid(seg);
  const Eigen::ArrayXd pc = sigmoid(conf).array();
  for (Index y = 0; y < q.dim(0); ++y)
    for (Index x = 0; x < q.dim(1); ++x) q.pixel(y, x) *= pc;
  return q;
}

}  // namespace

LabelMap argmax_labels(const Tensor& scores) {
  require_rank(scores, 3, "argmax_labels");
  LabelMap out(scores.dim(0), scores.dim(1));
  for (Index y = 0; y < scores.dim(0); ++y) {
    for (Index x = 0; x < scores.dim(1); ++x) {
      Index best = 0;
      scores.pixel(y, x).maxCoeff(&best);  // first maximum
      out(y, x) = static_cast<std::int32_t>(best);
    }
  }
  return out;
}

LabelMap hard_filter_argmax(const Tensor& scores, const LabelSet& allowed) {
  require_rank(scores, 3, "hard_filter_argmax");
  if (allowed.empty()) throw Error("hard_filter_argmax: allowed label set is empty");
  const Index c = scores.dim(2);
  Eigen::ArrayXd mask = Eigen::ArrayXd::Constant(c, kNegMask);
  for (std::int32_t k : allowed) {
    if (k < 0 || k >= c) {
      throw Error("hard_filter_argmax: label " + std::to_string(k) + " outside [0, " +
                  std::to_string(c) + ")");
    }
    mask[k] = 0.0;
  }
  LabelMap out(scores.dim(0), scores.dim(1));
  for (Index y = 0; y < scores.dim(0); ++y) {
    for (Index x = 0; x < scores.dim(1); ++x) {
      Index best = 0;
      (scores.pixel(y, x) + mask).maxCoeff(&best);
      out(y, x) = static_cast<std::int32_t>(best);
    }
  }
  return out;
}

Tensor soft_filter(const Tensor& seg, const Tensor& conf, double eps) {
  check_conf(seg, conf, "soft_filter");
  return logit(joint_probability(seg, conf), eps);
}

SoftFilterGrads soft_filter_backward(const Tensor& seg, const Tensor& conf, const Tensor& grad_out,
                                     double eps) {
  check_conf(seg, conf, "soft_filter_backward");
  require_same_shape(seg, grad_out, "soft_filter_backward");
  const Tensor ps = sigmoid(seg);
  const Eigen::ArrayXd pc = sigmoid(conf).array();
  const Tensor q = joint_probability(seg, conf);
  const Tensor dq = logit_backward(q, grad_out, eps);

  SoftFilterGrads g{Tensor(seg.dims()), Tensor(conf.dims())};
  for (Index y = 0; y < seg.dim(0); ++y) {
    for (Index x = 0; x < seg.dim(1); ++x) {
      const auto p = ps.pixel(y, x);
      const auto d = dq.pixel(y, x);
      g.seg.pixel(y, x) = d * pc * p * (1 - p);
      g.conf.array() += d * p * pc * (1 - pc);
    }
  }
  return g;
}

Tensor gt_confidence(const LabelSet& present, Index num_classes) {
  Tensor conf({num_classes}, -kGtConfidence);
  for (std::int32_t k : present) {
    if (k < 0 || k >= num_classes) {
      throw Error("gt_confidence: label " + std::to_string(k) + " out of range");
    }
    conf[k] = kGtConfidence;
  }
  return conf;
}

LabelSet threshold_labels(const Tensor& conf, double tau) {
  LabelSet out;
  for (Index k = 0; k < conf.size(); ++k)
    if (conf[k] > tau) out.insert(static_cast<std::int32_t>(k));
  return out;
}

Tensor filter_then_upsample(const Tensor& seg, const Tensor& conf, Index out_h, Index out_w,
                            double eps) {
  return bilinear_upsample(soft_filter(seg, conf, eps), out_h, out_w);
}

Tensor upsample_then_filter(const Tensor& seg, const Tensor& conf, Index out_h, Index out_w,
                            double eps) {
  return soft_filter(bilinear_upsample(seg, out_h, out_w), conf, eps);
}

}  // namespace holoseg
