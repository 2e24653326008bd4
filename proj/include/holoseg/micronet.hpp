#pragma once

// Toy two-stream segmentation network: a shared feature net feeds a patch
// network (classification map, max-pooled into image-level confidences)
// and a non-linear pixel classifier (segmentation map). The confidences
// soft-filter the segmentation map before bilinear upsampling.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "holoseg/filter.hpp"
#include "holoseg/metrics.hpp"
#include "holoseg/random.hpp"
#include "holoseg/synthetic.hpp"
#include "holoseg/tensor.hpp"

namespace holoseg {

enum class Variant {
  kHolistic,    // learned holistic branch, segmentation + classification loss
  kBaseline,    // no filter; segmentation map upsampled directly
  kHolisticGt,  // holistic branch replaced by ground-truth confidences
};

Variant parse_variant(const std::string& name);
std::string to_string(Variant v);

struct MicroNetConfig {
  Index num_classes = 5;
  Index in_channels = 3;
  Index feature_channels = 16;
  Index downsample = 4;  // one stride-2 conv stage per factor of two
  Index kernel = 3;
  Index dilation = 2;
  Index hidden = 32;
  Index patch = 0;  // window side in input pixels; 0 means 4 * downsample
  double lambda = 1.0;
  double learning_rate = 0.03;
  double momentum = 0.9;
  Index epochs = 4;
  double eps = kDefaultLogitEps;
  std::int32_t ignore_label = kDefaultIgnoreLabel;
  bool augment = false;

  Index patch_size() const { return patch > 0 ? patch : 4 * downsample; }
  Index feature_stages() const;
  /// Throws on the first invalid field.
  void validate() const;
};

/// Every learnable tensor of the network.
struct Weights {
  std::vector<Tensor> feature_kernels;
  std::vector<Tensor> feature_biases;
  Tensor patch_kernel, patch_bias, patch_head, patch_head_bias;
  Tensor pixel_kernel, pixel_bias, pixel_head, pixel_head_bias;

  /// Zero-filled weights with the shapes `config` requires.
  static Weights zeros(const MicroNetConfig& config);

  /// Visits (name, tensor) in a fixed order.
  template <typename F>
  void for_each(F&& f) {
    for (std::size_t i = 0; i < feature_kernels.size(); ++i) {
      f("feature" + std::to_string(i) + ".kernel", feature_kernels[i]);
      f("feature" + std::to_string(i) + ".bias", feature_biases[i]);
    }
    f(std::string("patch.kernel"), patch_kernel);
    f(std::string("patch.bias"), patch_bias);
    f(std::string("patch.head"), patch_head);
    f(std::string("patch.head_bias"), patch_head_bias);
    f(std::string("pixel.kernel"), pixel_kernel);
    f(std::string("pixel.bias"), pixel_bias);
    f(std::string("pixel.head"), pixel_head);
    f(std::string("pixel.head_bias"), pixel_head_bias);
  }
  template <typename F>
  void for_each(F&& f) const {
    const_cast<Weights*>(this)->for_each(
        [&f](const std::string& name, Tensor& t) { f(name, static_cast<const Tensor&>(t)); });
  }

  std::vector<std::string> names() const;
  Tensor& by_name(const std::string& name);
};

/// Weights plus SGD momentum buffers of matching shapes.
struct MicroNetParams {
  Weights weights;
  Weights velocity;
};

/// Uniform in +-1/sqrt(fan_in) per kernel, zero biases. Each tensor draws
/// from its own stream, so a given tensor's init depends only on the seed.
MicroNetParams init_params(const MicroNetConfig& config, std::uint64_t seed);

struct ForwardResult {
  Tensor classification_map;  // h x w x c, empty for non-holistic variants
  Tensor holistic_conf;       // c, empty for the baseline
  Tensor seg_map;             // h x w x c
  Tensor full_map;            // H x W x c, filtered unless baseline
};

/// `truth_labels` supplies the label set for kHolisticGt.
ForwardResult forward(const Weights& weights, const MicroNetConfig& config, const Tensor& image,
                      Variant variant = Variant::kHolistic,
                      const std::optional<LabelSet>& truth_labels = std::nullopt);

/// Smallest distance of the forward pass to a non-differentiable point:
/// the minimum of |relu input| and of the gap between the largest and
/// second-largest cell of every max-pooled channel.
double nonsmooth_margin(const Weights& weights, const MicroNetConfig& config, const Tensor& image,
                        Variant variant = Variant::kHolistic);

/// Cell (i, j, k) is 1 iff the p x p window centred at input pixel
/// (i*s + s/2, j*s + s/2), clipped to the image, has a pixel of class k.
Tensor gt_classification_map(const LabelMap& truth, const MicroNetConfig& config);

/// Mean binary cross-entropy of sigmoid(map) against a 0/1 target,
/// evaluated as softplus(z) - g*z.
double classification_loss(const Tensor& map, const Tensor& target);
Tensor classification_loss_grad(const Tensor& map, const Tensor& target);

/// Mean over non-ignored pixels of -log softmax(map)[truth].
double segmentation_loss(const Tensor& map, const LabelMap& truth,
                         std::int32_t ignore_label = kDefaultIgnoreLabel);
Tensor segmentation_loss_grad(const Tensor& map, const LabelMap& truth,
                              std::int32_t ignore_label = kDefaultIgnoreLabel);

struct LossBreakdown {
  double segmentation = 0;
  double classification = 0;  // zero unless kHolistic
  double total = 0;
};

/// segmentation + lambda * classification; the classification term only
/// applies to kHolistic.
LossBreakdown total_loss(const TrainSample& sample, const Weights& weights,
                         const MicroNetConfig& config, Variant variant = Variant::kHolistic);

/// Loss together with its gradient for every weight tensor.
LossBreakdown loss_and_gradients(const TrainSample& sample, const Weights& weights,
                                 const MicroNetConfig& config, Variant variant, Weights& grads);

/// velocity = momentum * velocity + grad; weight -= lr * velocity.
void sgd_step(MicroNetParams& params, const Weights& grads, double learning_rate, double momentum);

inline constexpr double kScaleFactors[] = {0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3};

/// Deterministic part of augmentation: optional mirror, then rescale by
/// `scale` (bilinear image, nearest labels) and centre pad/crop back to the
/// original size. Padding is black with ignore labels.
TrainSample transform_sample(const TrainSample& sample, bool flip, double scale,
                             std::int32_t ignore_label = kDefaultIgnoreLabel);

/// Flip with probability 0.5, scale drawn uniformly from kScaleFactors.
TrainSample augment(const TrainSample& sample, Rng& rng,
                    std::int32_t ignore_label = kDefaultIgnoreLabel);

/// Per-pixel prediction of the variant's full-resolution map.
LabelMap predict(const Weights& weights, const MicroNetConfig& config, const TrainSample& sample,
                 Variant variant);

MetricReport evaluate(const Weights& weights, const MicroNetConfig& config,
                      const std::vector<TrainSample>& data, Variant variant);

/// Mean total loss over a dataset.
LossBreakdown mean_loss(const Weights& weights, const MicroNetConfig& config,
                        const std::vector<TrainSample>& data, Variant variant);

struct EpochLog {
  Index epoch = 0;
  double seg_loss = 0;  // means over the epoch's steps
  double cls_loss = 0;
  double total = 0;
  double val_miu = 0;   // NaN without a validation set
};

struct TrainResult {
  MicroNetParams params;
  std::vector<EpochLog> log;
};

/// Batch-size-1 SGD with momentum over seeded shuffles of `train_set`.
TrainResult train(const std::vector<TrainSample>& train_set,
                  const std::vector<TrainSample>& validation_set, const MicroNetConfig& config,
                  std::uint64_t seed, Variant variant);

/// Same, continuing from given parameters.
TrainResult train(MicroNetParams params, const std::vector<TrainSample>& train_set,
                  const std::vector<TrainSample>& validation_set, const MicroNetConfig& config,
                  std::uint64_t seed, Variant variant);

std::string epoch_log_csv_header();
std::string to_csv_row(const EpochLog& row);

}  // namespace holoseg
