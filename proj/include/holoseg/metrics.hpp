#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "holoseg/tensor.hpp"

namespace holoseg {

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

/// counts(i, j) is the number of pixels of true class i predicted as j.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(Index num_classes);
  ConfusionMatrix(CountMatrix counts);

  Index num_classes() const { return counts_.rows(); }
  const CountMatrix& counts() const { return counts_; }
  std::int64_t total() const { return counts_.sum(); }

  /// Adds every pixel whose truth is not `ignore_label`.
  void accumulate(const LabelMap& predicted, const LabelMap& truth,
                  std::optional<std::int32_t> ignore_label = kDefaultIgnoreLabel);

  void merge(const ConfusionMatrix& other);

 private:
  CountMatrix counts_;
};

inline ConfusionMatrix merge(ConfusionMatrix a, const ConfusionMatrix& b) {
  a.merge(b);
  return a;
}

struct MetricReport {
  double pixel_accuracy = 0;         // pAcc
  double mean_accuracy = 0;          // mAcc
  double mean_iu = 0;                // mIU
  double frequency_weighted_iu = 0;  // fwIU
  std::vector<std::optional<double>> per_class_iu;
  Index valid_classes = 0;  // classes with nonzero union
};

/// pAcc, mAcc, mIU and fwIU. Classes without ground-truth pixels are left
/// out of the mAcc mean; classes with an empty union are left out of mIU.
MetricReport compute_metrics(const ConfusionMatrix& cm);

std::string metric_csv_header();
/// "pAcc,mAcc,mIU,fwIU,valid_classes" with six decimals.
std::string to_csv_row(const MetricReport& report);

struct LabelSetPR {
  double precision = 0;
  double recall = 0;
};

/// Set-overlap precision and recall; precision is 0 for an empty prediction.
LabelSetPR label_set_pr(const LabelSet& predicted, const LabelSet& truth);

/// Unweighted mean over images.
LabelSetPR mean_label_set_pr(const std::vector<LabelSet>& predicted,
                             const std::vector<LabelSet>& truth);

/// Classes that occur in `truth`, skipping the ignore label.
LabelSet labels_present(const LabelMap& truth,
                        std::optional<std::int32_t> ignore_label = kDefaultIgnoreLabel);

}  // namespace holoseg
