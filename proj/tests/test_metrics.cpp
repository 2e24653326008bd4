#include <algorithm>
#include <numeric>

#include <gtest/gtest.h>

#include "holoseg/metrics.hpp"
#include "oracles.hpp"

using namespace holoseg;

namespace {

ConfusionMatrix from_rows(std::initializer_list<std::initializer_list<std::int64_t>> rows) {
  const Index c = static_cast<Index>(rows.size());
  CountMatrix m(c, c);
  Index i = 0;
  for (const auto& row : rows) {
    Index j = 0;
    for (std::int64_t v : row) m(i, j++) = v;
    ++i;
  }
  return ConfusionMatrix(m);
}

LabelMap permute(const LabelMap& m, const std::vector<int>& perm) {
  LabelMap out = m;
  for (Index i = 0; i < out.size(); ++i) out.data()[i] = perm[static_cast<std::size_t>(out.data()[i])];
  return out;
}

}  // namespace

TEST(Accumulate, IdenticalMapsAreDiagonal) {
  std::mt19937_64 rng(1);
  const LabelMap m = oracle::random_labels(4, 4, 3, rng);
  ConfusionMatrix cm(3);
  cm.accumulate(m, m);
  const CountMatrix& n = cm.counts();
  EXPECT_EQ(n.sum(), 16);
  EXPECT_EQ(n.diagonal().sum(), 16);
}

TEST(Accumulate, AllWrong) {
  ConfusionMatrix cm(2);
  cm.accumulate(LabelMap::Ones(2, 5), LabelMap::Zero(2, 5));
  EXPECT_EQ(cm.counts()(0, 1), 10);
  EXPECT_EQ(cm.total(), 10);
}

TEST(Accumulate, MatchesPixelLoop) {
  std::mt19937_64 rng(2);
  const LabelMap p = oracle::random_labels(32, 32, 5, rng), t = oracle::random_labels(32, 32, 5, rng);
  ConfusionMatrix cm(5);
  cm.accumulate(p, t);
  const auto n = oracle::confusion({p}, {t}, 5, std::nullopt);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) EXPECT_EQ(cm.counts()(i, j), n[i][j]);
}

TEST(Accumulate, SkipsIgnoreAndRejectsBadInput) {
  ConfusionMatrix cm(3);
  LabelMap t = LabelMap::Zero(2, 2);
  t(0, 0) = kDefaultIgnoreLabel;
  cm.accumulate(LabelMap::Zero(2, 2), t);
  EXPECT_EQ(cm.total(), 3);
  EXPECT_THROW(cm.accumulate(LabelMap::Zero(2, 3), LabelMap::Zero(2, 2)), Error);
  EXPECT_THROW(cm.accumulate(LabelMap::Constant(2, 2, 3), LabelMap::Zero(2, 2)), Error);
  EXPECT_THROW(cm.accumulate(LabelMap::Zero(2, 2), t, std::nullopt), Error);
}

TEST(Compute, HandExample) {
  const MetricReport r = compute_metrics(from_rows({{3, 1}, {0, 4}}));
  EXPECT_EQ(r.pixel_accuracy, 0.875);
  EXPECT_EQ(r.mean_accuracy, 0.875);
  EXPECT_DOUBLE_EQ(r.mean_iu, 0.775);
  EXPECT_DOUBLE_EQ(r.frequency_weighted_iu, 0.775);
  EXPECT_EQ(*r.per_class_iu[0], 0.75);
  EXPECT_EQ(*r.per_class_iu[1], 0.80);
  EXPECT_EQ(r.valid_classes, 2);
}

TEST(Compute, PerfectPrediction) {
  const MetricReport r = compute_metrics(from_rows({{5, 0, 0}, {0, 2, 0}, {0, 0, 9}}));
  EXPECT_EQ(r.pixel_accuracy, 1.0);
  EXPECT_EQ(r.mean_accuracy, 1.0);
  EXPECT_EQ(r.mean_iu, 1.0);
  EXPECT_EQ(r.frequency_weighted_iu, 1.0);
}

TEST(Compute, MatchesFormulaOracle) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::int64_t> u(0, 50);
  for (int trial = 0; trial < 50; ++trial) {
    CountMatrix m(6, 6);
    std::vector<std::vector<std::int64_t>> n(6, std::vector<std::int64_t>(6));
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) n[i][j] = m(i, j) = (trial % 3 == 0 && i == 4) ? 0 : u(rng);
    const MetricReport r = compute_metrics(ConfusionMatrix(m));
    const oracle::Metrics o = oracle::metrics(n);
    EXPECT_NEAR(r.pixel_accuracy, o.pacc, 1e-12);
    EXPECT_NEAR(r.mean_accuracy, o.macc, 1e-12);
    EXPECT_NEAR(r.mean_iu, o.miu, 1e-12);
    EXPECT_NEAR(r.frequency_weighted_iu, o.fwiu, 1e-12);
  }
}

TEST(Compute, AbsentClassesLeftOutOfMeans) {
  // Class 2 has no truth and is never predicted; class 1 has no truth but is predicted.
  const MetricReport r = compute_metrics(from_rows({{2, 2, 0}, {0, 0, 0}, {0, 0, 0}}));
  EXPECT_EQ(r.mean_accuracy, 0.5);
  EXPECT_EQ(r.valid_classes, 2);
  EXPECT_FALSE(r.per_class_iu[2].has_value());
  EXPECT_EQ(*r.per_class_iu[1], 0.0);
  EXPECT_EQ(r.mean_iu, 0.25);
}

TEST(Compute, EmptyMatrixThrows) { EXPECT_THROW(compute_metrics(ConfusionMatrix(3)), Error); }

TEST(Compute, BoundsAndPerClassIuBelowAccuracy) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    ConfusionMatrix cm(5);
    cm.accumulate(oracle::random_labels(8, 8, 5, rng), oracle::random_labels(8, 8, 5, rng));
    const MetricReport r = compute_metrics(cm);
    for (double v : {r.pixel_accuracy, r.mean_accuracy, r.mean_iu, r.frequency_weighted_iu}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    double sum = 0;
    int present = 0;
    for (Index i = 0; i < 5; ++i) {
      if (!r.per_class_iu[i]) continue;
      sum += *r.per_class_iu[i];
      ++present;
      const std::int64_t t = cm.counts().row(i).sum();
      if (t > 0) EXPECT_LE(*r.per_class_iu[i], double(cm.counts()(i, i)) / double(t));
    }
    EXPECT_DOUBLE_EQ(r.mean_iu, sum / present);
  }
}

TEST(Merge, PartitionedAccumulationIsExact) {
  std::mt19937_64 rng(5);
  std::vector<LabelMap> p, t;
  for (int i = 0; i < 6; ++i) {
    p.push_back(oracle::random_labels(7, 5, 4, rng));
    t.push_back(oracle::random_labels(7, 5, 4, rng));
  }
  ConfusionMatrix all(4), a(4), b(4), c(4);
  for (int i = 0; i < 6; ++i) {
    all.accumulate(p[i], t[i]);
    (i < 2 ? a : i < 4 ? b : c).accumulate(p[i], t[i]);
  }
  EXPECT_EQ(merge(merge(a, b), c).counts(), all.counts());
  EXPECT_EQ(merge(a, merge(b, c)).counts(), all.counts());
  EXPECT_EQ(merge(b, a).counts(), merge(a, b).counts());
  const MetricReport x = compute_metrics(all), y = compute_metrics(merge(merge(c, a), b));
  EXPECT_EQ(to_csv_row(x), to_csv_row(y));
  EXPECT_THROW(merge(ConfusionMatrix(3), ConfusionMatrix(4)), Error);
}

TEST(Metrics, InvariantUnderClassPermutation) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const LabelMap p = oracle::random_labels(16, 16, 6, rng), t = oracle::random_labels(16, 16, 6, rng);
    std::vector<int> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    ConfusionMatrix a(6), b(6);
    a.accumulate(p, t);
    b.accumulate(permute(p, perm), permute(t, perm));
    const MetricReport ra = compute_metrics(a), rb = compute_metrics(b);
    EXPECT_EQ(ra.pixel_accuracy, rb.pixel_accuracy);
    EXPECT_NEAR(ra.mean_accuracy, rb.mean_accuracy, 1e-15);
    EXPECT_NEAR(ra.mean_iu, rb.mean_iu, 1e-15);
    EXPECT_NEAR(ra.frequency_weighted_iu, rb.frequency_weighted_iu, 1e-15);
  }
}

TEST(Csv, SixDecimals) {
  const MetricReport r = compute_metrics(from_rows({{3, 1}, {0, 4}}));
  EXPECT_EQ(metric_csv_header(), "pAcc,mAcc,mIU,fwIU,valid_classes");
  EXPECT_EQ(to_csv_row(r), "0.875000,0.875000,0.775000,0.775000,2");
}

TEST(LabelSetPR, Examples) {
  const LabelSetPR same = label_set_pr({1, 2}, {1, 2});
  EXPECT_EQ(same.precision, 1.0);
  EXPECT_EQ(same.recall, 1.0);
  const LabelSetPR pr = label_set_pr({2, 3, 7, 9}, {1, 2, 3});
  EXPECT_EQ(pr.precision, 0.5);
  EXPECT_DOUBLE_EQ(pr.recall, 2.0 / 3.0);
  const LabelSetPR none = label_set_pr({}, {1});
  EXPECT_EQ(none.precision, 0.0);
  EXPECT_EQ(none.recall, 0.0);
  EXPECT_THROW(label_set_pr({1}, {}), Error);
}

TEST(LabelSetPR, SupersetHasFullRecall) {
  EXPECT_EQ(label_set_pr({0, 1, 2, 5}, {1, 5}).recall, 1.0);
}

TEST(LabelSetPR, DatasetMeanIsUnweighted) {
  const LabelSetPR m = mean_label_set_pr({{1}, {1, 2, 3, 4}}, {{1}, {1}});
  EXPECT_EQ(m.recall, 1.0);
  EXPECT_EQ(m.precision, (1.0 + 0.25) / 2);
}

TEST(LabelsPresent, SkipsIgnore) {
  LabelMap t = LabelMap::Zero(2, 2);
  t(0, 1) = 3;
  t(1, 1) = kDefaultIgnoreLabel;
  EXPECT_EQ(labels_present(t), (LabelSet{0, 3}));
}
