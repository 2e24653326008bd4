#pragma once

#include <cstdint>
#include <vector>

#include "holoseg/filter.hpp"
#include "holoseg/tensor.hpp"

namespace holoseg {

/// Image (H x W x 3, values in [0, 1]) with its label map.
struct TrainSample {
  Tensor image;
  LabelMap truth;
};

/// Characteristic RGB color of class k among c classes. Classes 2j+1 and
/// 2j+2 share a hue and differ only slightly in brightness.
Eigen::Array3d class_color(Index k, Index num_classes);

/// Images of 1-3 rectangles or discs of distinct foreground classes over
/// background class 0, colored per class with seeded Gaussian noise.
std::vector<TrainSample> make_shapes_dataset(Index count, Index height, Index width,
                                             Index num_classes, std::uint64_t seed,
                                             double noise = 0.05);

struct NoisyScoreConfig {
  Index count = 100;
  Index height = 32;
  Index width = 32;
  Index num_classes = 60;
  Index tiles = 4;       // tiles per side of the truth mosaic
  Index min_labels = 11;
  Index max_labels = 16;
  double signal = 3.0;   // added to the true class score
  double noise = 1.0;    // std-dev of per-class Gaussian noise
};

/// Mosaic truth maps with many labels per image, scored by a predictor
/// whose errors spread uniformly over all classes.
std::vector<ScoreMapSet> make_noisy_score_maps(const NoisyScoreConfig& config, std::uint64_t seed);

}  // namespace holoseg
