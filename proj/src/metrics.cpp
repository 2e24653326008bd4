#include "holoseg/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <iterator>

namespace holoseg {

ConfusionMatrix::ConfusionMatrix(Index num_classes) {
  if (num_classes <= 0) throw Error("confusion matrix: class count must be positive");
  counts_ = CountMatrix::Zero(num_classes, num_classes);
}

ConfusionMatrix::ConfusionMatrix(CountMatrix counts) : counts_(std::move(counts)) {
  if (counts_.rows() == 0 || counts_.rows() != counts_.cols()) {
    throw Error("confusion matrix: counts must be a nonempty square matrix");
  }
  if ((counts_.array() < 0).any()) throw Error("confusion matrix: negative count");
}

void ConfusionMatrix::accumulate(const LabelMap& predicted, const LabelMap& truth,
                                 std::optional<std::int32_t> ignore_label) {
  if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols()) {
    throw Error("accumulate: prediction is " + std::to_string(predicted.rows()) + "x" +
                std::to_string(predicted.cols()) + " but truth is " +
                std::to_string(truth.rows()) + "x" + std::to_string(truth.cols()));
  }
  const Index c = num_classes();
  for (Index i = 0; i < truth.size(); ++i) {
    const std::int32_t t = truth.data()[i];
    if (ignore_label && t == *ignore_label) continue;
    const std::int32_t p = predicted.data()[i];
    if (t < 0 || t >= c) throw Error("accumulate: truth label " + std::to_string(t) + " out of range");
    if (p < 0 || p >= c) {
      throw Error("accumulate: predicted label " + std::to_string(p) + " out of range");
    }
    ++counts_(t, p);
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.num_classes() != num_classes()) throw Error("merge: class counts differ");
  counts_ += other.counts_;
}

MetricReport compute_metrics(const ConfusionMatrix& cm) {
  const CountMatrix& n = cm.counts();
  const std::int64_t total = n.sum();
  if (total == 0) throw Error("compute_metrics: confusion matrix is empty");

  const Eigen::VectorXd diag = n.diagonal().cast<double>();
  const Eigen::VectorXd truth_count = n.rowwise().sum().cast<double>();
  const Eigen::VectorXd pred_count = n.colwise().sum().transpose().cast<double>();

  MetricReport r;
  r.pixel_accuracy = diag.sum() / double(total);
  r.per_class_iu.resize(cm.num_classes());

  double acc_sum = 0, iu_sum = 0, fw_sum = 0;
  Index acc_classes = 0;
  for (Index i = 0; i < cm.num_classes(); ++i) {
    if (truth_count[i] > 0) {
      acc_sum += diag[i] / truth_count[i];
      ++acc_classes;
    }
    const double uni = truth_count[i] + pred_count[i] - diag[i];
    if (uni > 0) {
      const double iu = diag[i] / uni;
      r.per_class_iu[i] = iu;
      iu_sum += iu;
      fw_sum += truth_count[i] * iu;
      ++r.valid_classes;
    }
  }
  r.mean_accuracy = acc_sum / double(acc_classes);
  r.mean_iu = iu_sum / double(r.valid_classes);
  r.frequency_weighted_iu = fw_sum / double(total);
  return r;
}

std::string metric_csv_header() { return "pAcc,mAcc,mIU,fwIU,valid_classes"; }

std::string to_csv_row(const MetricReport& report) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f,%td", report.pixel_accuracy,
                report.mean_accuracy, report.mean_iu, report.frequency_weighted_iu,
                report.valid_classes);
  return buf;
}

LabelSetPR label_set_pr(const LabelSet& predicted, const LabelSet& truth) {
  if (truth.empty()) throw Error("label_set_pr: ground-truth label set is empty");
  std::vector<std::int32_t> common;
  std::set_intersection(predicted.begin(), predicted.end(), truth.begin(), truth.end(),
                        std::back_inserter(common));
  LabelSetPR pr;
  pr.precision = predicted.empty() ? 0.0 : double(common.size()) / double(predicted.size());
  pr.recall = double(common.size()) / double(truth.size());
  return pr;
}

LabelSetPR mean_label_set_pr(const std::vector<LabelSet>& predicted,
                             const std::vector<LabelSet>& truth) {
  if (predicted.size() != truth.size() || truth.empty()) {
    throw Error("mean_label_set_pr: need equally many nonempty prediction and truth sets");
  }
  LabelSetPR mean;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const LabelSetPR pr = label_set_pr(predicted[i], truth[i]);
    mean.precision += pr.precision;
    mean.recall += pr.recall;
  }
  mean.precision /= double(truth.size());
  mean.recall /= double(truth.size());
  return mean;
}

LabelSet labels_present(const LabelMap& truth, std::optional<std::int32_t> ignore_label) {
  LabelSet out;
  for (Index i = 0; i < truth.size(); ++i) {
    const std::int32_t t = truth.data()[i];
    if (!(ignore_label && t == *ignore_label)) out.insert(t);
  }
  return out;
}

}  // namespace holoseg
