#include "holoseg/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>

#include "holoseg/filter.hpp"
#include "holoseg/gradcheck.hpp"
#include "holoseg/ops.hpp"
#include "holoseg/random.hpp"
#include "holoseg/synthetic.hpp"

namespace holoseg {

namespace {

Tensor uniform(const Dims& dims, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(dims);
  for (Index i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

/// Values bounded away from zero: |v| in [gap, 1 + gap].
Tensor away_from_zero(const Dims& dims, double gap, Rng& rng) {
  Tensor t = uniform(dims, -1.0, 1.0, rng);
  for (Index i = 0; i < t.size(); ++i) t[i] += t[i] < 0 ? -gap : gap;
  return t;
}

/// sum(weights * y) and, through `backward`, its gradient.
Objective weighted(std::function<Tensor(const Tensor&)> fwd,
                   std::function<Tensor(const Tensor&, const Tensor&)> backward, Tensor weights) {
  return [=](const Tensor& x, Tensor* grad) {
    const Tensor y = fwd(x);
    if (grad) *grad = backward(x, weights);
    return (y.array() * weights.array()).sum();
  };
}

using Check = std::function<double(Rng&)>;

const std::map<std::string, Check>& op_checks() {
  static const std::map<std::string, Check> checks{
      {"sigmoid",
       [](Rng& rng) {
         const Tensor x = uniform({4, 5}, -4, 4, rng), w = uniform({4, 5}, -1, 1, rng);
         return grad_check(weighted([](const Tensor& v) { return sigmoid(v); },
                                    [](const Tensor& v, const Tensor& g) { return sigmoid_backward(sigmoid(v), g); },
                                    w),
                           x);
       }},
      {"logit",
       [](Rng& rng) {
         const Tensor x = uniform({4, 5}, 0.1, 0.9, rng), w = uniform({4, 5}, -1, 1, rng);
         return grad_check(weighted([](const Tensor& v) { return logit(v); },
                                    [](const Tensor& v, const Tensor& g) { return logit_backward(v, g); }, w),
                           x);
       }},
      {"relu",
       [](Rng& rng) {
         const Tensor x = away_from_zero({4, 5}, 0.1, rng), w = uniform({4, 5}, -1, 1, rng);
         return grad_check(weighted([](const Tensor& v) { return relu(v); },
                                    [](const Tensor& v, const Tensor& g) { return relu_backward(v, g); }, w),
                           x);
       }},
      {"conv2d",
       [](Rng& rng) {
         const Tensor x = uniform({6, 5, 2}, -1, 1, rng), k = uniform({3, 3, 2, 3}, -1, 1, rng),
                      b = uniform({3}, -1, 1, rng);
         double worst = 0;
         for (Index stride : {1, 2}) {
           for (Index dilation : {1, 2}) {
             const Tensor w = uniform({(6 + stride - 1) / stride, (5 + stride - 1) / stride, 3}, -1, 1, rng);
             auto loss = [&](const Tensor& xi, const Tensor& ki, const Tensor& bi) {
               return (conv2d(xi, ki, bi, dilation, stride).array() * w.array()).sum();
             };
             const Objective wrt_input = [&](const Tensor& xi, Tensor* g) {
               if (g) *g = conv2d_backward(xi, k, w, dilation, stride).input;
               return loss(xi, k, b);
             };
             const Objective wrt_kernel = [&](const Tensor& ki, Tensor* g) {
               if (g) *g = conv2d_backward(x, ki, w, dilation, stride).kernel;
               return loss(x, ki, b);
             };
             const Objective wrt_bias = [&](const Tensor& bi, Tensor* g) {
               if (g) *g = conv2d_backward(x, k, w, dilation, stride).bias;
               return loss(x, k, bi);
             };
             worst = std::max({worst, grad_check(wrt_input, x), grad_check(wrt_kernel, k),
                               grad_check(wrt_bias, b)});
           }
         }
         return worst;
       }},
      {"global_max_pool",
       [](Rng& rng) {
         // A shuffled ladder keeps every channel's maximum well separated.
         Tensor x({3, 4, 2});
         std::vector<double> ladder(12);
         for (std::size_t i = 0; i < ladder.size(); ++i) ladder[i] = 0.1 * double(i);
         for (Index ch = 0; ch < 2; ++ch) {
           std::shuffle(ladder.begin(), ladder.end(), rng);
           for (Index i = 0; i < 12; ++i) x[i * 2 + ch] = ladder[static_cast<std::size_t>(i)];
         }
         const Tensor w = uniform({2}, -1, 1, rng);
         return grad_check(
             weighted([](const Tensor& v) { return global_max_pool(v).values; },
                      [](const Tensor& v, const Tensor& g) {
                        return global_max_pool_backward(v.dims(), global_max_pool(v).argmax, g);
                      },
                      w),
             x);
       }},
      {"bilinear_upsample",
       [](Rng& rng) {
         const Tensor x = uniform({3, 4, 2}, -1, 1, rng), w = uniform({7, 9, 2}, -1, 1, rng);
         return grad_check(weighted([](const Tensor& v) { return bilinear_upsample(v, 7, 9); },
                                    [](const Tensor& v, const Tensor& g) {
                                      return bilinear_resize_backward(g, v.dim(0), v.dim(1));
                                    },
                                    w),
                           x);
       }},
      {"softmax_channel",
       [](Rng& rng) {
         const Tensor x = uniform({3, 3, 4}, -3, 3, rng), w = uniform({3, 3, 4}, -1, 1, rng);
         return grad_check(weighted([](const Tensor& v) { return softmax_channel(v); },
                                    [](const Tensor& v, const Tensor& g) {
                                      return softmax_channel_backward(softmax_channel(v), g);
                                    },
                                    w),
                           x);
       }},
      {"soft_filter",
       [](Rng& rng) {
         const Tensor seg = uniform({3, 4, 3}, -3, 3, rng), conf = uniform({3}, -3, 3, rng),
                      w = uniform({3, 4, 3}, -1, 1, rng);
         const Objective wrt_seg = [&](const Tensor& s, Tensor* g) {
           if (g) *g = soft_filter_backward(s, conf, w).seg;
           return (soft_filter(s, conf).array() * w.array()).sum();
         };
         const Objective wrt_conf = [&](const Tensor& c, Tensor* g) {
           if (g) *g = soft_filter_backward(seg, c, w).conf;
           return (soft_filter(seg, c).array() * w.array()).sum();
         };
         return std::max(grad_check(wrt_seg, seg), grad_check(wrt_conf, conf));
       }},
      {"filter_then_upsample",
       [](Rng& rng) {
         const Tensor seg = uniform({3, 3, 3}, -3, 3, rng), conf = uniform({3}, -3, 3, rng),
                      w = uniform({7, 7, 3}, -1, 1, rng);
         auto backward = [&](const Tensor& s, const Tensor& c) {
           return soft_filter_backward(s, c, bilinear_resize_backward(w, 3, 3));
         };
         const Objective wrt_seg = [&](const Tensor& s, Tensor* g) {
           if (g) *g = backward(s, conf).seg;
           return (filter_then_upsample(s, conf, 7, 7).array() * w.array()).sum();
         };
         const Objective wrt_conf = [&](const Tensor& c, Tensor* g) {
           if (g) *g = backward(seg, c).conf;
           return (filter_then_upsample(seg, c, 7, 7).array() * w.array()).sum();
         };
         return std::max(grad_check(wrt_seg, seg), grad_check(wrt_conf, conf));
       }},
      {"classification_loss",
       [](Rng& rng) {
         const Tensor map = uniform({2, 3, 3}, -4, 4, rng);
         Tensor target({2, 3, 3});
         std::bernoulli_distribution coin(0.5);
         for (Index i = 0; i < target.size(); ++i) target[i] = coin(rng) ? 1.0 : 0.0;
         const Objective f = [&](const Tensor& m, Tensor* g) {
           if (g) *g = classification_loss_grad(m, target);
           return classification_loss(m, target);
         };
         return grad_check(f, map);
       }},
      {"segmentation_loss",
       [](Rng& rng) {
         const Tensor map = uniform({3, 4, 4}, -3, 3, rng);
         LabelMap truth(3, 4);
         std::uniform_int_distribution<int> label(0, 3);
         for (Index i = 0; i < truth.size(); ++i) truth.data()[i] = label(rng);
         truth(1, 1) = kDefaultIgnoreLabel;
         const Objective f = [&](const Tensor& m, Tensor* g) {
           if (g) *g = segmentation_loss_grad(m, truth);
           return segmentation_loss(m, truth);
         };
         return grad_check(f, map);
       }},
  };
  return checks;
}

}  // namespace

std::vector<std::string> gradcheck_op_names() {
  std::vector<std::string> names;
  for (const auto& [name, check] : op_checks()) names.push_back(name);
  return names;
}

double check_op(const std::string& name, std::uint64_t seed) {
  const auto it = op_checks().find(name);
  if (it == op_checks().end()) throw Error("gradcheck: unknown op '" + name + "'");
  Rng rng = make_rng(seed, {0x4743});
  return it->second(rng);
}

MicroNetConfig gradcheck_net_config() {
  MicroNetConfig cfg;
  cfg.num_classes = 3;
  cfg.feature_channels = 4;
  cfg.hidden = 6;
  cfg.downsample = 4;
  return cfg;
}

FullNetCheck check_full_net(std::uint64_t seed, double step, double margin) {
  const MicroNetConfig cfg = gradcheck_net_config();
  FullNetCheck result;
  for (std::uint64_t attempt = 0; attempt < 200; ++attempt) {
    const std::uint64_t s = seed + attempt;
    MicroNetParams params = init_params(cfg, s);
    // Nonzero biases so that no layer sits at a symmetric point.
    Rng rng = make_rng(s, {0x4249});
    params.weights.for_each([&](const std::string&, Tensor& t) {
      if (t.rank() == 1) t = uniform(t.dims(), -0.2, 0.2, rng);
    });
    const TrainSample sample = make_shapes_dataset(1, 16, 16, cfg.num_classes, s).front();
    if (nonsmooth_margin(params.weights, cfg, sample.image) < margin) continue;

    result.seed_used = s;
    Weights grads;
    loss_and_gradients(sample, params.weights, cfg, Variant::kHolistic, grads);
    for (const auto& name : params.weights.names()) {
      const Objective f = [&](const Tensor& x, Tensor* g) {
        Weights probe = params.weights;
        probe.by_name(name) = x;
        if (g) *g = grads.by_name(name);
        return total_loss(sample, probe, cfg, Variant::kHolistic).total;
      };
      result.tensors.push_back({name, grad_check(f, params.weights.by_name(name), step)});
    }

    MicroNetConfig seg_only = cfg;
    seg_only.lambda = 0.0;
    Weights seg_grads;
    loss_and_gradients(sample, params.weights, seg_only, Variant::kHolistic, seg_grads);
    double sq = 0;
    for (Tensor* t : {&seg_grads.patch_kernel, &seg_grads.patch_bias, &seg_grads.patch_head,
                      &seg_grads.patch_head_bias})
      sq += t->array().square().sum();
    result.holistic_path_norm = std::sqrt(sq);
    return result;
  }
  throw Error("gradcheck: no seed in 200 attempts kept the network away from kinks");
}

}  // namespace holoseg
