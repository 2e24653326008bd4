#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "holoseg/filter.hpp"
#include "holoseg/image.hpp"
#include "holoseg/metrics.hpp"

namespace holoseg {

/// Degrades ground-truth label sets: `noisy_added` spurious labels are
/// added and `true_removed` true labels removed per image. The fractional
/// part f of either count applies one extra label to round(f * N) images.
struct ContaminationSpec {
  double noisy_added = 0;   // n_p
  double true_removed = 0;  // n_r
  std::uint64_t seed = 0;
};

/// Removal and addition orders come from per-image streams that do not
/// depend on (n_p, n_r), so a larger count always contaminates a superset
/// of what a smaller count did.
std::vector<LabelSet> contaminate(const std::vector<LabelSet>& truth, const ContaminationSpec& spec,
                                  Index num_classes);

struct GridRecord {
  double noisy_added = 0;
  double true_removed = 0;
  LabelSetPR pr;  // mean over images
  MetricReport metrics;
  Index empty_set_fallbacks = 0;
};

/// 0, 0.2, 0.4, 0.6, 0.8, 1, 2, ..., 10.
std::vector<double> default_grid_values();

/// Hard-filters every score map with its contaminated label set for each
/// (n_p, n_r) pair. Records are ordered n_p-major. An image whose set
/// becomes empty is filtered with the full label set instead.
std::vector<GridRecord> run_grid(const std::vector<ScoreMapSet>& data,
                                 const std::vector<double>& noisy_added_values,
                                 const std::vector<double>& true_removed_values, std::uint64_t seed,
                                 std::optional<std::int32_t> ignore_label = kDefaultIgnoreLabel);

/// Metrics of the plain argmax, i.e. no filtering at all.
MetricReport unfiltered_baseline(const std::vector<ScoreMapSet>& data,
                                 std::optional<std::int32_t> ignore_label = kDefaultIgnoreLabel);

std::string grid_csv_header();
std::string to_csv_row(const GridRecord& record);

enum class GridMetric { kPixelAccuracy, kMeanAccuracy, kMeanIU, kFrequencyWeightedIU, kPrecision, kRecall };

GridMetric parse_grid_metric(const std::string& name);
double metric_value(const GridRecord& record, GridMetric metric);
double metric_value(const MetricReport& report, GridMetric metric);

/// Heatmap with n_p along x and n_r along y, each cell `cell_size` pixels.
/// Colors ramp linearly from dark blue (minimum) to yellow (maximum). The
/// baseline value, range and axes are stored as image comments.
RgbImage render_surface(const std::vector<GridRecord>& records, GridMetric metric,
                        std::optional<double> baseline = std::nullopt, Index cell_size = 1);

}  // namespace holoseg
