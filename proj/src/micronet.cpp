#include "holoseg/micronet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <utility>

#include "holoseg/ops.hpp"

namespace holoseg {

Variant parse_variant(const std::string& name) {
  if (name == "holistic") return Variant::kHolistic;
  if (name == "baseline") return Variant::kBaseline;
  if (name == "holistic_gt") return Variant::kHolisticGt;
  throw Error("unknown variant '" + name + "' (expected holistic, baseline or holistic_gt)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kHolistic: return "holistic";
    case Variant::kBaseline: return "baseline";
    case Variant::kHolisticGt: return "holistic_gt";
  }
  return "?";
}

Index MicroNetConfig::feature_stages() const {
  Index stages = 0;
  for (Index s = downsample; s > 1; s /= 2) ++stages;
  return stages;
}

void MicroNetConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error("config: " + msg); };
  if (num_classes < 2) fail("num_classes must be at least 2");
  if (in_channels < 1 || feature_channels < 1 || hidden < 1) fail("channel counts must be positive");
  if (downsample < 2 || (downsample & (downsample - 1)) != 0) {
    fail("downsample must be a power of two >= 2");
  }
  if (kernel < 1 || kernel % 2 == 0) fail("kernel must be odd");
  if (dilation < 1) fail("dilation must be positive");
  if (patch < 0) fail("patch must be nonnegative");
  if (!(lambda >= 0)) fail("lambda must be nonnegative");
  if (!(learning_rate > 0)) fail("learning_rate must be positive");
  if (!(momentum >= 0 && momentum < 1)) fail("momentum must lie in [0, 1)");
  if (epochs < 0) fail("epochs must be nonnegative");
  if (!(eps > 0 && eps < 0.5)) fail("eps must lie in (0, 0.5)");
}

// ---------------------------------------------------------------------------
// Weights

Weights Weights::zeros(const MicroNetConfig& cfg) {
  Weights w;
  Index cin = cfg.in_channels;
  for (Index s = 0; s < cfg.feature_stages(); ++s) {
    w.feature_kernels.emplace_back(Dims{3, 3, cin, cfg.feature_channels});
    w.feature_biases.emplace_back(Dims{cfg.feature_channels});
    cin = cfg.feature_channels;
  }
  const Index k = cfg.kernel, f = cfg.feature_channels, d = cfg.hidden, c = cfg.num_classes;
  w.patch_kernel = Tensor({k, k, f, d});
  w.patch_bias = Tensor({d});
  w.patch_head = Tensor({1, 1, d, c});
  w.patch_head_bias = Tensor({c});
  w.pixel_kernel = Tensor({k, k, f, d});
  w.pixel_bias = Tensor({d});
  w.pixel_head = Tensor({1, 1, d, c});
  w.pixel_head_bias = Tensor({c});
  return w;
}

std::vector<std::string> Weights::names() const {
  std::vector<std::string> out;
  for_each([&out](const std::string& name, const Tensor&) { out.push_back(name); });
  return out;
}

Tensor& Weights::by_name(const std::string& name) {
  Tensor* found = nullptr;
  for_each([&](const std::string& n, Tensor& t) {
    if (n == name) found = &t;
  });
  if (!found) throw Error("no weight tensor named '" + name + "'");
  return *found;
}

MicroNetParams init_params(const MicroNetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  MicroNetParams p{Weights::zeros(cfg), Weights::zeros(cfg)};
  std::uint64_t stream = 0;
  p.weights.for_each([&](const std::string&, Tensor& t) {
    const std::uint64_t id = stream++;
    if (t.rank() != 4) return;  // biases stay zero
    const double bound = 1.0 / std::sqrt(double(t.dim(0) * t.dim(1) * t.dim(2)));
    Rng rng = make_rng(seed, {0x1417, id});
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Index i = 0; i < t.size(); ++i) t[i] = u(rng);
  });
  return p;
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

struct Trace {
  std::vector<Tensor> stage_in;
  std::vector<Tensor> stage_pre;
  Tensor feat;
  Tensor patch_pre, patch_act, cls;
  std::vector<Index> pool_argmax;
  Tensor conf;
  Tensor pixel_pre, pixel_act, seg;
  Tensor full;
};

void check_image(const MicroNetConfig& cfg, const Tensor& image) {
  require_rank(image, 3, "forward: image");
  if (image.dim(2) != cfg.in_channels) {
    throw Error("forward: image has " + std::to_string(image.dim(2)) + " channels, expected " +
                std::to_string(cfg.in_channels));
  }
  if (image.dim(0) % cfg.downsample || image.dim(1) % cfg.downsample) {
    throw Error("forward: image " + dims_to_string(image.dims()) + " is not divisible by " +
                std::to_string(cfg.downsample));
  }
}

Trace run_forward(const Weights& w, const MicroNetConfig& cfg, const Tensor& image, Variant variant,
                  const std::optional<LabelSet>& truth_labels) {
  check_image(cfg, image);
  Trace t;
  Tensor x = image;
  for (std::size_t s = 0; s < w.feature_kernels.size(); ++s) {
    t.stage_in.push_back(x);
    t.stage_pre.push_back(conv2d(x, w.feature_kernels[s], w.feature_biases[s], 1, 2));
    x = relu(t.stage_pre.back());
  }
  t.feat = std::move(x);

  t.pixel_pre = conv2d(t.feat, w.pixel_kernel, w.pixel_bias, cfg.dilation);
  t.pixel_act = relu(t.pixel_pre);
  t.seg = conv2d(t.pixel_act, w.pixel_head, w.pixel_head_bias);

  const Index H = image.dim(0), W = image.dim(1);
  switch (variant) {
    case Variant::kHolistic: {
      t.patch_pre = conv2d(t.feat, w.patch_kernel, w.patch_bias, cfg.dilation);
      t.patch_act = relu(t.patch_pre);
      t.cls = conv2d(t.patch_act, w.patch_head, w.patch_head_bias);
      auto pooled = global_max_pool(t.cls);
      t.conf = std::move(pooled.values);
      t.pool_argmax = std::move(pooled.argmax);
      t.full = filter_then_upsample(t.seg, t.conf, H, W, cfg.eps);
      break;
    }
    case Variant::kHolisticGt:
      if (!truth_labels) throw Error("forward: holistic_gt needs the ground-truth label set");
      t.conf = gt_confidence(*truth_labels, cfg.num_classes);
      t.full = filter_then_upsample(t.seg, t.conf, H, W, cfg.eps);
      break;
    case Variant::kBaseline:
      t.full = bilinear_upsample(t.seg, H, W);
      break;
  }
  return t;
}

/// Backward through conv + relu + 1x1 head, accumulating into `grads`.
Tensor branch_backward(const Tensor& feat, const Tensor& pre, const Tensor& act,
                       const Tensor& kernel, const Tensor& head, const Tensor& grad_out,
                       Index dilation, Tensor& g_kernel, Tensor& g_bias, Tensor& g_head,
                       Tensor& g_head_bias) {
  auto head_grads = conv2d_backward(act, head, grad_out);
  g_head.array() += head_grads.kernel.array();
  g_head_bias.array() += head_grads.bias.array();
  const Tensor g_pre = relu_backward(pre, head_grads.input);
  auto grads = conv2d_backward(feat, kernel, g_pre, dilation);
  g_kernel.array() += grads.kernel.array();
  g_bias.array() += grads.bias.array();
  return std::move(grads.input);
}

LossBreakdown losses(const Trace& t, const TrainSample& sample, const MicroNetConfig& cfg,
                     Variant variant, const Tensor* gt_map) {
  LossBreakdown l;
  l.segmentation = segmentation_loss(t.full, sample.truth, cfg.ignore_label);
  if (variant == Variant::kHolistic) l.classification = classification_loss(t.cls, *gt_map);
  l.total = l.segmentation + cfg.lambda * l.classification;
  return l;
}

}  // namespace

ForwardResult forward(const Weights& weights, const MicroNetConfig& config, const Tensor& image,
                      Variant variant, const std::optional<LabelSet>& truth_labels) {
  Trace t = run_forward(weights, config, image, variant, truth_labels);
  return {std::move(t.cls), std::move(t.conf), std::move(t.seg), std::move(t.full)};
}

double nonsmooth_margin(const Weights& weights, const MicroNetConfig& config, const Tensor& image,
                        Variant variant) {
  const LabelSet all = [&] {
    LabelSet s;
    for (std::int32_t k = 0; k < config.num_classes; ++k) s.insert(k);
    return s;
  }();
  const Trace t = run_forward(weights, config, image, variant, all);
  double margin = std::numeric_limits<double>::infinity();
  auto scan = [&margin](const Tensor& pre) {
    if (!pre.empty()) margin = std::min(margin, pre.array().abs().minCoeff());
  };
  for (const auto& pre : t.stage_pre) scan(pre);
  scan(t.pixel_pre);
  scan(t.patch_pre);
  if (!t.cls.empty()) {
    const Index c = t.cls.dim(2), cells = t.cls.dim(0) * t.cls.dim(1);
    for (Index ch = 0; ch < c; ++ch) {
      const double top = t.conf[ch];
      double second = -std::numeric_limits<double>::infinity();
      for (Index i = 0; i < cells; ++i)
        if (i != t.pool_argmax[ch]) second = std::max(second, t.cls[i * c + ch]);
      if (cells > 1) margin = std::min(margin, top - second);
    }
  }
  return margin;
}

LossBreakdown total_loss(const TrainSample& sample, const Weights& weights,
                         const MicroNetConfig& config, Variant variant) {
  const Trace t = run_forward(weights, config, sample.image, variant,
                              labels_present(sample.truth, config.ignore_label));
  Tensor gt_map;
  if (variant == Variant::kHolistic) gt_map = gt_classification_map(sample.truth, config);
  return losses(t, sample, config, variant, &gt_map);
}

LossBreakdown loss_and_gradients(const TrainSample& sample, const Weights& weights,
                                 const MicroNetConfig& cfg, Variant variant, Weights& grads) {
  const Trace t = run_forward(weights, cfg, sample.image, variant,
                              labels_present(sample.truth, cfg.ignore_label));
  Tensor gt_map;
  if (variant == Variant::kHolistic) gt_map = gt_classification_map(sample.truth, cfg);
  const LossBreakdown result = losses(t, sample, cfg, variant, &gt_map);

  grads = Weights::zeros(cfg);
  const Tensor g_full = segmentation_loss_grad(t.full, sample.truth, cfg.ignore_label);
  Tensor g_seg = bilinear_resize_backward(g_full, t.seg.dim(0), t.seg.dim(1));
  std::optional<Tensor> g_feat_patch;
  if (variant != Variant::kBaseline) {
    auto fg = soft_filter_backward(t.seg, t.conf, g_seg, cfg.eps);
    g_seg = std::move(fg.seg);
    if (variant == Variant::kHolistic) {
      Tensor g_cls = global_max_pool_backward(t.cls.dims(), t.pool_argmax, fg.conf);
      g_cls.array() += cfg.lambda * classification_loss_grad(t.cls, gt_map).array();
      g_feat_patch = branch_backward(t.feat, t.patch_pre, t.patch_act, weights.patch_kernel,
                                     weights.patch_head, g_cls, cfg.dilation, grads.patch_kernel,
                                     grads.patch_bias, grads.patch_head, grads.patch_head_bias);
    }
  }

  Tensor g_feat = branch_backward(t.feat, t.pixel_pre, t.pixel_act, weights.pixel_kernel,
                                  weights.pixel_head, g_seg, cfg.dilation, grads.pixel_kernel,
                                  grads.pixel_bias, grads.pixel_head, grads.pixel_head_bias);
  if (g_feat_patch) g_feat.array() += g_feat_patch->array();
  for (auto s = static_cast<std::ptrdiff_t>(weights.feature_kernels.size()) - 1; s >= 0; --s) {
    const Tensor g_pre = relu_backward(t.stage_pre[s], g_feat);
    auto cg = conv2d_backward(t.stage_in[s], weights.feature_kernels[s], g_pre, 1, 2);
    grads.feature_kernels[s].array() += cg.kernel.array();
    grads.feature_biases[s].array() += cg.bias.array();
    g_feat = std::move(cg.input);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Losses

Tensor gt_classification_map(const LabelMap& truth, const MicroNetConfig& cfg) {
  const Index H = truth.rows(), W = truth.cols(), s = cfg.downsample, p = cfg.patch_size();
  if (H % s || W % s) {
    throw Error("gt_classification_map: " + std::to_string(H) + "x" + std::to_string(W) +
                " labels are not divisible by " + std::to_string(s));
  }
  const Index h = H / s, w = W / s, c = cfg.num_classes;
  Tensor out({h, w, c});
  for (Index i = 0; i < h; ++i) {
    const Index y0 = std::max<Index>(i * s + s / 2 - p / 2, 0);
    const Index y1 = std::min<Index>(i * s + s / 2 - p / 2 + p, H);
    for (Index j = 0; j < w; ++j) {
      const Index x0 = std::max<Index>(j * s + s / 2 - p / 2, 0);
      const Index x1 = std::min<Index>(j * s + s / 2 - p / 2 + p, W);
      for (Index y = y0; y < y1; ++y) {
        for (Index x = x0; x < x1; ++x) {
          const std::int32_t k = truth(y, x);
          if (k == cfg.ignore_label) continue;
          if (k < 0 || k >= c) throw Error("gt_classification_map: label out of range");
          out(i, j, k) = 1.0;
        }
      }
    }
  }
  return out;
}

double classification_loss(const Tensor& map, const Tensor& target) {
  require_same_shape(map, target, "classification_loss");
  const auto& z = map.array();
  // softplus(z) = max(z, 0) + log1p(exp(-|z|))
  const Eigen::ArrayXd softplus = z.max(0.0) + (-z.abs()).exp().log1p();
  return (softplus - target.array() * z).mean();
}

Tensor classification_loss_grad(const Tensor& map, const Tensor& target) {
  require_same_shape(map, target, "classification_loss_grad");
  Tensor g = sigmoid(map);
  g.array() = (g.array() - target.array()) / double(map.size());
  return g;
}

namespace {

void check_seg_inputs(const Tensor& map, const LabelMap& truth, const char* what) {
  require_rank(map, 3, what);
  if (map.dim(0) != truth.rows() || map.dim(1) != truth.cols()) {
    throw Error(std::string(what) + ": map " + dims_to_string(map.dims()) +
                " does not match label map");
  }
}

}  // namespace

double segmentation_loss(const Tensor& map, const LabelMap& truth, std::int32_t ignore_label) {
  check_seg_inputs(map, truth, "segmentation_loss");
  double sum = 0;
  Index counted = 0;
  for (Index y = 0; y < map.dim(0); ++y) {
    for (Index x = 0; x < map.dim(1); ++x) {
      const std::int32_t k = truth(y, x);
      if (k == ignore_label) continue;
      if (k < 0 || k >= map.dim(2)) throw Error("segmentation_loss: label out of range");
      const auto v = map.pixel(y, x);
      const double m = v.maxCoeff();
      sum += m + std::log((v - m).exp().sum()) - v[k];
      ++counted;
    }
  }
  if (counted == 0) throw Error("segmentation_loss: every pixel is ignored");
  return sum / double(counted);
}

Tensor segmentation_loss_grad(const Tensor& map, const LabelMap& truth, std::int32_t ignore_label) {
  check_seg_inputs(map, truth, "segmentation_loss_grad");
  Tensor g = softmax_channel(map);
  Index counted = 0;
  for (Index y = 0; y < map.dim(0); ++y) {
    for (Index x = 0; x < map.dim(1); ++x) {
      const std::int32_t k = truth(y, x);
      if (k == ignore_label) {
        g.pixel(y, x).setZero();
      } else {
        g(y, x, k) -= 1.0;
        ++counted;
      }
    }
  }
  if (counted == 0) throw Error("segmentation_loss_grad: every pixel is ignored");
  g.array() /= double(counted);
  return g;
}

// ---------------------------------------------------------------------------
// Optimizer

void sgd_step(MicroNetParams& params, const Weights& grads, double learning_rate, double momentum) {
  std::vector<const Tensor*> g;
  grads.for_each([&g](const std::string&, const Tensor& t) { g.push_back(&t); });
  std::vector<Tensor*> v;
  params.velocity.for_each([&v](const std::string&, Tensor& t) { v.push_back(&t); });
  std::size_t i = 0;
  params.weights.for_each([&](const std::string& name, Tensor& w) {
    if (i >= g.size() || !w.same_shape(*g[i]) || !w.same_shape(*v[i])) {
      throw Error("sgd_step: shape mismatch for " + name);
    }
    v[i]->array() = momentum * v[i]->array() + g[i]->array();
    w.array() -= learning_rate * v[i]->array();
    ++i;
  });
  if (i != g.size()) throw Error("sgd_step: gradient tensor count mismatch");
}

// ---------------------------------------------------------------------------
// Augmentation

TrainSample transform_sample(const TrainSample& sample, bool flip, double scale,
                             std::int32_t ignore_label) {
  const Index H = sample.truth.rows(), W = sample.truth.cols();
  if (sample.image.dim(0) != H || sample.image.dim(1) != W) {
    throw Error("transform_sample: image and labels differ in size");
  }
  if (!(scale > 0)) throw Error("transform_sample: scale must be positive");
  TrainSample src = sample;
  if (flip) {
    src.truth = sample.truth.rowwise().reverse().eval();
    for (Index y = 0; y < H; ++y)
      for (Index x = 0; x < W; ++x) src.image.pixel(y, x) = sample.image.pixel(y, W - 1 - x);
  }
  if (scale == 1.0) return src;

  // Each output pixel maps to a source coordinate through the image centre,
  // so mirroring before or after scaling gives the same result.
  const Index nh = std::max<Index>(1, std::lround(H * scale));
  const Index nw = std::max<Index>(1, std::lround(W * scale));
  struct Axis {
    double centre, ratio, half;  // half extent of the scaled content
    std::optional<double> source(Index i) const {
      const double d = double(i) - centre;
      if (std::abs(d) > half + 1e-9) return std::nullopt;
      return centre + d * ratio;
    }
  };
  auto axis = [](Index n, Index scaled) {
    return Axis{(n - 1) / 2.0, scaled > 1 ? double(n - 1) / double(scaled - 1) : 0.0, (scaled - 1) / 2.0};
  };
  // Nearest index with ties broken toward the centre, symmetric under mirroring.
  auto nearest = [](double u, Index n) -> Index {
    const Index i = u <= (n - 1) / 2.0 ? Index(std::floor(u + 0.5)) : Index(std::ceil(u - 0.5));
    return std::clamp<Index>(i, 0, n - 1);
  };
  auto lerp = [](double u, Index n) {
    const Index lo = std::clamp<Index>(Index(std::floor(u)), 0, n - 1);
    return std::pair<Index, double>{lo, std::clamp(u - double(lo), 0.0, 1.0)};
  };
  const Axis ay = axis(H, nh), ax = axis(W, nw);

  TrainSample out{Tensor(sample.image.dims()), LabelMap::Constant(H, W, ignore_label)};
  for (Index y = 0; y < H; ++y) {
    const auto v = ay.source(y);
    if (!v) continue;
    const auto [y0, fy] = lerp(*v, H);
    const Index y1 = std::min(y0 + 1, H - 1);
    for (Index x = 0; x < W; ++x) {
      const auto u = ax.source(x);
      if (!u) continue;
      const auto [x0, fx] = lerp(*u, W);
      const Index x1 = std::min(x0 + 1, W - 1);
      out.image.pixel(y, x) = (1 - fy) * ((1 - fx) * src.image.pixel(y0, x0) + fx * src.image.pixel(y0, x1)) +
                              fy * ((1 - fx) * src.image.pixel(y1, x0) + fx * src.image.pixel(y1, x1));
      out.truth(y, x) = src.truth(nearest(*v, H), nearest(*u, W));
    }
  }
  return out;
}

TrainSample augment(const TrainSample& sample, Rng& rng, std::int32_t ignore_label) {
  const bool flip = std::bernoulli_distribution(0.5)(rng);
  const auto pick = std::uniform_int_distribution<std::size_t>(0, std::size(kScaleFactors) - 1)(rng);
  return transform_sample(sample, flip, kScaleFactors[pick], ignore_label);
}

// ---------------------------------------------------------------------------
// Evaluation and training

LabelMap predict(const Weights& weights, const MicroNetConfig& config, const TrainSample& sample,
                 Variant variant) {
  const auto result = forward(weights, config, sample.image, variant,
                              labels_present(sample.truth, config.ignore_label));
  return argmax_labels(result.full_map);
}

MetricReport evaluate(const Weights& weights, const MicroNetConfig& config,
                      const std::vector<TrainSample>& data, Variant variant) {
  ConfusionMatrix cm(config.num_classes);
  for (const auto& s : data) cm.accumulate(predict(weights, config, s, variant), s.truth, config.ignore_label);
  return compute_metrics(cm);
}

LossBreakdown mean_loss(const Weights& weights, const MicroNetConfig& config,
                        const std::vector<TrainSample>& data, Variant variant) {
  if (data.empty()) throw Error("mean_loss: empty dataset");
  LossBreakdown sum;
  for (const auto& s : data) {
    const auto l = total_loss(s, weights, config, variant);
    sum.segmentation += l.segmentation;
    sum.classification += l.classification;
    sum.total += l.total;
  }
  const double n = double(data.size());
  return {sum.segmentation / n, sum.classification / n, sum.total / n};
}

TrainResult train(const std::vector<TrainSample>& train_set,
                  const std::vector<TrainSample>& validation_set, const MicroNetConfig& config,
                  std::uint64_t seed, Variant variant) {
  return train(init_params(config, seed), train_set, validation_set, config, seed, variant);
}

TrainResult train(MicroNetParams params, const std::vector<TrainSample>& train_set,
                  const std::vector<TrainSample>& validation_set, const MicroNetConfig& config,
                  std::uint64_t seed, Variant variant) {
  config.validate();
  if (train_set.empty()) throw Error("train: empty training set");
  TrainResult result{std::move(params), {}};
  std::vector<std::size_t> order(train_set.size());
  Weights grads;
  for (Index epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = make_rng(seed, {0x5348, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochLog row;
    row.epoch = epoch;
    for (std::size_t step = 0; step < order.size(); ++step) {
      const TrainSample* sample = &train_set[order[step]];
      TrainSample augmented;
      if (config.augment) {
        Rng aug_rng = make_rng(seed, {0x4147, static_cast<std::uint64_t>(epoch), step});
        augmented = augment(*sample, aug_rng, config.ignore_label);
        sample = &augmented;
      }
      const auto l = loss_and_gradients(*sample, result.params.weights, config, variant, grads);
      sgd_step(result.params, grads, config.learning_rate, config.momentum);
      row.seg_loss += l.segmentation;
      row.cls_loss += l.classification;
      row.total += l.total;
    }
    const double n = double(order.size());
    row.seg_loss /= n;
    row.cls_loss /= n;
    row.total /= n;
    row.val_miu = validation_set.empty()
                      ? std::numeric_limits<double>::quiet_NaN()
                      : evaluate(result.params.weights, config, validation_set, variant).mean_iu;
    result.log.push_back(row);
  }
  return result;
}

std::string epoch_log_csv_header() { return "epoch,seg_loss,cls_loss,total,val_mIU"; }

std::string to_csv_row(const EpochLog& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%td,%.6f,%.6f,%.6f,%.6f", r.epoch, r.seg_loss, r.cls_loss,
                r.total, r.val_miu);
  return buf;
}

}  // namespace holoseg
