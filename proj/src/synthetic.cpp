#include "holoseg/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "holoseg/random.hpp"

namespace holoseg {

namespace {

Eigen::Array3d hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1 - std::abs(std::fmod(hp, 2.0) - 1));
  Eigen::Array3d rgb;
  switch (static_cast<int>(hp) % 6) {
    case 0: rgb << c, x, 0; break;
    case 1: rgb << x, c, 0; break;
    case 2: rgb << 0, c, x; break;
    case 3: rgb << 0, x, c; break;
    case 4: rgb << x, 0, c; break;
    default: rgb << c, 0, x; break;
  }
  return rgb + (v - c);
}

}  // namespace

Eigen::Array3d class_color(Index k, Index num_classes) {
  if (k == 0) return Eigen::Array3d::Constant(0.15);
  // Foreground classes come in pairs sharing a hue and differing slightly in
  // brightness, so local color alone leaves them ambiguous.
  const Index pairs = std::max<Index>(num_classes / 2, 1);
  const Index pair = (k - 1) / 2;
  return hsv_to_rgb(double(pair) / double(pairs), 0.85, (k - 1) % 2 ? 0.84 : 0.9);
}

std::vector<TrainSample> make_shapes_dataset(Index count, Index height, Index width,
                                             Index num_classes, std::uint64_t seed, double noise) {
  if (num_classes < 3) throw Error("make_shapes_dataset: need at least 3 classes");
  if (height < 4 || width < 4) throw Error("make_shapes_dataset: image too small");
  std::vector<TrainSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Index n = 0; n < count; ++n) {
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(n)});
    LabelMap truth = LabelMap::Zero(height, width);

    std::vector<std::int32_t> classes(static_cast<std::size_t>(num_classes - 1));
    std::iota(classes.begin(), classes.end(), 1);
    std::shuffle(classes.begin(), classes.end(), rng);
    const Index regions =
        std::uniform_int_distribution<Index>(1, std::min<Index>(3, num_classes - 1))(rng);

    for (Index r = 0; r < regions; ++r) {
      const std::int32_t k = classes[static_cast<std::size_t>(r)];
      const bool disc = std::bernoulli_distribution(0.5)(rng);
      const Index rh = std::uniform_int_distribution<Index>(height / 4, height / 2)(rng);
      const Index rw = std::uniform_int_distribution<Index>(width / 4, width / 2)(rng);
      const Index y0 = std::uniform_int_distribution<Index>(0, height - rh)(rng);
      const Index x0 = std::uniform_int_distribution<Index>(0, width - rw)(rng);
      const double cy = y0 + (rh - 1) / 2.0, cx = x0 + (rw - 1) / 2.0;
      for (Index y = y0; y < y0 + rh; ++y) {
        for (Index x = x0; x < x0 + rw; ++x) {
          const double dy = (y - cy) / (rh / 2.0), dx = (x - cx) / (rw / 2.0);
          if (!disc || dy * dy + dx * dx <= 1.0) truth(y, x) = k;
        }
      }
    }

    Tensor image({height, width, 3});
    std::normal_distribution<double> gauss(0.0, noise);
    for (Index y = 0; y < height; ++y) {
      for (Index x = 0; x < width; ++x) {
        const Eigen::Array3d color = class_color(truth(y, x), num_classes);
        for (Index ch = 0; ch < 3; ++ch) image(y, x, ch) = std::clamp(color[ch] + gauss(rng), 0.0, 1.0);
      }
    }
    out.push_back({std::move(image), std::move(truth)});
  }
  return out;
}

std::vector<ScoreMapSet> make_noisy_score_maps(const NoisyScoreConfig& cfg, std::uint64_t seed) {
  if (cfg.min_labels < 1 || cfg.max_labels < cfg.min_labels ||
      cfg.max_labels > std::min(cfg.num_classes, cfg.tiles * cfg.tiles)) {
    throw Error("make_noisy_score_maps: label counts must fit the class count and tile grid");
  }
  if (cfg.height < cfg.tiles || cfg.width < cfg.tiles) {
    throw Error("make_noisy_score_maps: image smaller than the tile grid");
  }
  std::vector<ScoreMapSet> out;
  out.reserve(static_cast<std::size_t>(cfg.count));
  for (Index n = 0; n < cfg.count; ++n) {
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(n)});
    std::vector<std::int32_t> classes(static_cast<std::size_t>(cfg.num_classes));
    std::iota(classes.begin(), classes.end(), 0);
    std::shuffle(classes.begin(), classes.end(), rng);
    const Index labels = std::uniform_int_distribution<Index>(cfg.min_labels, cfg.max_labels)(rng);

    // Every chosen label gets at least one tile.
    const Index tile_count = cfg.tiles * cfg.tiles;
    std::vector<std::int32_t> tile_class(static_cast<std::size_t>(tile_count));
    std::uniform_int_distribution<Index> pick(0, labels - 1);
    for (Index t = 0; t < tile_count; ++t)
      tile_class[static_cast<std::size_t>(t)] = classes[static_cast<std::size_t>(t < labels ? t : pick(rng))];
    std::shuffle(tile_class.begin(), tile_class.end(), rng);

    LabelMap truth(cfg.height, cfg.width);
    for (Index y = 0; y < cfg.height; ++y) {
      for (Index x = 0; x < cfg.width; ++x) {
        const Index ty = y * cfg.tiles / cfg.height, tx = x * cfg.tiles / cfg.width;
        truth(y, x) = tile_class[static_cast<std::size_t>(ty * cfg.tiles + tx)];
      }
    }

    Tensor scores({cfg.height, cfg.width, cfg.num_classes});
    std::normal_distribution<double> gauss(0.0, cfg.noise);
    for (Index i = 0; i < scores.size(); ++i) scores[i] = gauss(rng);
    for (Index y = 0; y < cfg.height; ++y)
      for (Index x = 0; x < cfg.width; ++x) scores(y, x, truth(y, x)) += cfg.signal;
    out.push_back({std::move(scores), std::move(truth)});
  }
  return out;
}

}  // namespace holoseg
