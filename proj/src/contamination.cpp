#include "holoseg/contamination.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "holoseg/random.hpp"

namespace holoseg {

namespace {

enum Stream : std::uint64_t { kRemoveOrder = 1, kAddOrder = 2, kRemoveExtra = 3, kAddExtra = 4 };

/// Images that receive one extra label for a fractional count.
std::vector<bool> extra_mask(double count, std::size_t images, std::uint64_t seed, Stream stream) {
  const double frac = count - std::floor(count);
  const auto chosen = static_cast<std::size_t>(std::llround(frac * double(images)));
  std::vector<std::size_t> order(images);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, {stream});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> mask(images, false);
  for (std::size_t i = 0; i < std::min(chosen, images); ++i) mask[order[i]] = true;
  return mask;
}

void check_count(double v, const char* what) {
  if (!(v >= 0) || !std::isfinite(v)) {
    throw Error(std::string("contaminate: ") + what + " must be a finite nonnegative number");
  }
}

}  // namespace

std::vector<LabelSet> contaminate(const std::vector<LabelSet>& truth, const ContaminationSpec& spec,
                                  Index num_classes) {
  check_count(spec.noisy_added, "n_p");
  check_count(spec.true_removed, "n_r");
  if (spec.noisy_added > double(num_classes)) {
    throw Error("contaminate: n_p = " + std::to_string(spec.noisy_added) + " exceeds " +
                std::to_string(num_classes) + " classes");
  }
  const std::size_t n = truth.size();
  const auto base_remove = static_cast<std::size_t>(std::floor(spec.true_removed));
  const auto base_add = static_cast<std::size_t>(std::floor(spec.noisy_added));
  const auto extra_remove = extra_mask(spec.true_removed, n, spec.seed, kRemoveExtra);
  const auto extra_add = extra_mask(spec.noisy_added, n, spec.seed, kAddExtra);

  std::vector<LabelSet> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const LabelSet& t = truth[i];
    if (t.empty()) throw Error("contaminate: image " + std::to_string(i) + " has no labels");
    if (*t.begin() < 0 || *t.rbegin() >= num_classes) {
      throw Error("contaminate: image " + std::to_string(i) + " has a label outside [0, " +
                  std::to_string(num_classes) + ")");
    }

    std::vector<std::int32_t> kept(t.begin(), t.end());
    Rng remove_rng = make_rng(spec.seed, {kRemoveOrder, i});
    std::shuffle(kept.begin(), kept.end(), remove_rng);
    const std::size_t remove = std::min(kept.size(), base_remove + (extra_remove[i] ? 1 : 0));
    kept.erase(kept.begin(), kept.begin() + static_cast<std::ptrdiff_t>(remove));

    std::vector<std::int32_t> complement;
    for (std::int32_t k = 0; k < num_classes; ++k)
      if (!t.count(k)) complement.push_back(k);
    const std::size_t add = base_add + (extra_add[i] ? 1 : 0);
    if (add > complement.size()) {
      throw Error("contaminate: image " + std::to_string(i) + " needs " + std::to_string(add) +
                  " noisy labels but only " + std::to_string(complement.size()) +
                  " absent classes exist");
    }
    Rng add_rng = make_rng(spec.seed, {kAddOrder, i});
    std::shuffle(complement.begin(), complement.end(), add_rng);

    out[i].insert(kept.begin(), kept.end());
    out[i].insert(complement.begin(), complement.begin() + static_cast<std::ptrdiff_t>(add));
  }
  return out;
}

std::vector<double> default_grid_values() {
  std::vector<double> v{0.0, 0.2, 0.4, 0.6, 0.8};
  for (int i = 1; i <= 10; ++i) v.push_back(double(i));
  return v;
}

std::vector<GridRecord> run_grid(const std::vector<ScoreMapSet>& data,
                                 const std::vector<double>& noisy_added_values,
                                 const std::vector<double>& true_removed_values, std::uint64_t seed,
                                 std::optional<std::int32_t> ignore_label) {
  if (data.empty()) throw Error("run_grid: no score maps");
  const Index c = data.front().num_classes();
  std::vector<LabelSet> truth_sets;
  truth_sets.reserve(data.size());
  for (const auto& d : data) {
    if (d.num_classes() != c) throw Error("run_grid: score maps disagree on the class count");
    truth_sets.push_back(labels_present(d.truth, ignore_label));
  }
  LabelSet all_labels;
  for (std::int32_t k = 0; k < c; ++k) all_labels.insert(k);

  std::vector<GridRecord> records;
  records.reserve(noisy_added_values.size() * true_removed_values.size());
  for (double np : noisy_added_values) {
    for (double nr : true_removed_values) {
      GridRecord rec;
      rec.noisy_added = np;
      rec.true_removed = nr;
      const auto sets = contaminate(truth_sets, {np, nr, seed}, c);
      rec.pr = mean_label_set_pr(sets, truth_sets);
      ConfusionMatrix cm(c);
      for (std::size_t i = 0; i < data.size(); ++i) {
        const bool fallback = sets[i].empty();
        rec.empty_set_fallbacks += fallback ? 1 : 0;
        cm.accumulate(hard_filter_argmax(data[i].scores, fallback ? all_labels : sets[i]),
                      data[i].truth, ignore_label);
      }
      rec.metrics = compute_metrics(cm);
      records.push_back(std::move(rec));
    }
  }
  return records;
}

MetricReport unfiltered_baseline(const std::vector<ScoreMapSet>& data,
                                 std::optional<std::int32_t> ignore_label) {
  if (data.empty()) throw Error("unfiltered_baseline: no score maps");
  ConfusionMatrix cm(data.front().num_classes());
  for (const auto& d : data) cm.accumulate(argmax_labels(d.scores), d.truth, ignore_label);
  return compute_metrics(cm);
}

std::string grid_csv_header() {
  return "n_p,n_r,precision,recall,pAcc,mAcc,mIU,fwIU,empty_set_fallbacks";
}

std::string to_csv_row(const GridRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%td", r.noisy_added,
                r.true_removed, r.pr.precision, r.pr.recall, r.metrics.pixel_accuracy,
                r.metrics.mean_accuracy, r.metrics.mean_iu, r.metrics.frequency_weighted_iu,
                r.empty_set_fallbacks);
  return buf;
}

GridMetric parse_grid_metric(const std::string& name) {
  static const std::map<std::string, GridMetric> names{
      {"pAcc", GridMetric::kPixelAccuracy},     {"mAcc", GridMetric::kMeanAccuracy},
      {"mIU", GridMetric::kMeanIU},             {"fwIU", GridMetric::kFrequencyWeightedIU},
      {"precision", GridMetric::kPrecision},    {"recall", GridMetric::kRecall}};
  const auto it = names.find(name);
  if (it == names.end()) throw Error("unknown metric '" + name + "'");
  return it->second;
}

double metric_value(const MetricReport& m, GridMetric metric) {
  switch (metric) {
    case GridMetric::kPixelAccuracy: return m.pixel_accuracy;
    case GridMetric::kMeanAccuracy: return m.mean_accuracy;
    case GridMetric::kMeanIU: return m.mean_iu;
    case GridMetric::kFrequencyWeightedIU: return m.frequency_weighted_iu;
    default: throw Error("metric_value: precision/recall are not part of a metric report");
  }
}

double metric_value(const GridRecord& r, GridMetric metric) {
  if (metric == GridMetric::kPrecision) return r.pr.precision;
  if (metric == GridMetric::kRecall) return r.pr.recall;
  return metric_value(r.metrics, metric);
}

RgbImage render_surface(const std::vector<GridRecord>& records, GridMetric metric,
                        std::optional<double> baseline, Index cell_size) {
  if (records.empty()) throw Error("render_surface: no records");
  if (cell_size < 1) throw Error("render_surface: cell size must be positive");
  std::vector<double> np_axis, nr_axis;
  for (const auto& r : records) {
    if (std::find(np_axis.begin(), np_axis.end(), r.noisy_added) == np_axis.end())
      np_axis.push_back(r.noisy_added);
    if (std::find(nr_axis.begin(), nr_axis.end(), r.true_removed) == nr_axis.end())
      nr_axis.push_back(r.true_removed);
  }
  std::sort(np_axis.begin(), np_axis.end());
  std::sort(nr_axis.begin(), nr_axis.end());
  const auto cols = static_cast<Index>(np_axis.size());
  const auto rows = static_cast<Index>(nr_axis.size());
  if (cols * rows != static_cast<Index>(records.size())) {
    throw Error("render_surface: records do not form a rectangular grid");
  }

  std::vector<std::optional<double>> cells(static_cast<std::size_t>(cols * rows));
  for (const auto& r : records) {
    const auto x = std::find(np_axis.begin(), np_axis.end(), r.noisy_added) - np_axis.begin();
    const auto y = std::find(nr_axis.begin(), nr_axis.end(), r.true_removed) - nr_axis.begin();
    auto& cell = cells[static_cast<std::size_t>(y * cols + x)];
    if (cell) throw Error("render_surface: duplicate grid cell");
    cell = metric_value(r, metric);
  }
  double lo = *cells.front(), hi = *cells.front();
  for (const auto& v : cells) {
    lo = std::min(lo, *v);
    hi = std::max(hi, *v);
  }

  RgbImage img(cols * cell_size, rows * cell_size);
  for (Index y = 0; y < rows; ++y) {
    for (Index x = 0; x < cols; ++x) {
      const double v = *cells[static_cast<std::size_t>(y * cols + x)];
      const double t = hi > lo ? (v - lo) / (hi - lo) : 0.0;
      const std::uint8_t rgb[3] = {static_cast<std::uint8_t>(std::lround(40 + 215 * t)),
                                   static_cast<std::uint8_t>(std::lround(20 + 200 * t)),
                                   static_cast<std::uint8_t>(std::lround(140 - 110 * t))};
      for (Index dy = 0; dy < cell_size; ++dy)
        for (Index dx = 0; dx < cell_size; ++dx)
          std::copy(rgb, rgb + 3, img.at(y * cell_size + dy, x * cell_size + dx));
    }
  }

  char buf[128];
  std::snprintf(buf, sizeof buf, "range=%.6f,%.6f", lo, hi);
  img.comments.emplace_back(buf);
  if (baseline) {
    std::snprintf(buf, sizeof buf, "baseline=%.6f", *baseline);
    img.comments.emplace_back(buf);
  }
  auto axis = [](const char* name, const std::vector<double>& values) {
    std::string s = name;
    for (std::size_t i = 0; i < values.size(); ++i) {
      char v[32];
      std::snprintf(v, sizeof v, "%s%g", i ? "," : "=", values[i]);
      s += v;
    }
    return s;
  };
  img.comments.push_back(axis("n_p", np_axis));
  img.comments.push_back(axis("n_r", nr_axis));
  return img;
}

}  // namespace holoseg
