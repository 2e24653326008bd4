#include <algorithm>
#include <numeric>

#include <gtest/gtest.h>

#include "holoseg/filter.hpp"
#include "holoseg/metrics.hpp"
#include "holoseg/synthetic.hpp"
#include "oracles.hpp"

using namespace holoseg;

TEST(HardFilter, RestrictsArgmax) {
  const Tensor s = Tensor::from_vector({1, 1, 3}, {2.0, 5.0, 3.0});
  EXPECT_EQ(hard_filter_argmax(s, {0, 2})(0, 0), 2);
  EXPECT_EQ(hard_filter_argmax(s, {0, 1, 2})(0, 0), 1);
}

TEST(HardFilter, FullSetIsPlainArgmax) {
  std::mt19937_64 rng(1);
  const Tensor s = oracle::random_tensor({6, 5, 4}, rng);
  EXPECT_TRUE((hard_filter_argmax(s, {0, 1, 2, 3}) == argmax_labels(s)).all());
}

TEST(HardFilter, SingletonForcesLabel) {
  std::mt19937_64 rng(2);
  const Tensor s = oracle::random_tensor({4, 4, 5}, rng);
  EXPECT_TRUE((hard_filter_argmax(s, {3}) == 3).all());
}

TEST(HardFilter, TiesGoToLowestClass) {
  const Tensor s = Tensor::from_vector({1, 2, 3}, {1, 1, 1, 0, 2, 2});
  EXPECT_EQ(argmax_labels(s)(0, 0), 0);
  EXPECT_EQ(argmax_labels(s)(0, 1), 1);
  EXPECT_EQ(hard_filter_argmax(s, {1, 2})(0, 0), 1);
}

TEST(HardFilter, RejectsBadSets) {
  const Tensor s({2, 2, 3});
  EXPECT_THROW(hard_filter_argmax(s, {}), Error);
  EXPECT_THROW(hard_filter_argmax(s, {3}), Error);
  EXPECT_THROW(hard_filter_argmax(s, {-1}), Error);
}

TEST(HardFilter, PreservesAllowedArgmax) {
  std::mt19937_64 rng(3);
  std::bernoulli_distribution coin(0.5);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor s = oracle::random_tensor({8, 8, 6}, rng);
    LabelSet allowed;
    for (int k = 0; k < 6; ++k)
      if (coin(rng)) allowed.insert(k);
    if (allowed.empty()) allowed.insert(0);
    const LabelMap plain = argmax_labels(s), filtered = hard_filter_argmax(s, allowed);
    for (Index i = 0; i < plain.size(); ++i) {
      if (allowed.count(plain.data()[i])) ASSERT_EQ(filtered.data()[i], plain.data()[i]);
      ASSERT_TRUE(allowed.count(filtered.data()[i]));
    }
  }
}

TEST(HardFilter, GroundTruthSupersetNeverLowersPixelAccuracy) {
  NoisyScoreConfig cfg;
  cfg.count = 20;
  cfg.num_classes = 20;
  cfg.min_labels = 3;
  cfg.max_labels = 6;
  std::mt19937_64 rng(4);
  for (const ScoreMapSet& d : make_noisy_score_maps(cfg, 5)) {
    LabelSet allowed = labels_present(d.truth);
    std::uniform_int_distribution<int> extra(0, 19);
    for (int i = 0; i < 4; ++i) allowed.insert(extra(rng));
    ConfusionMatrix plain(20), filtered(20);
    plain.accumulate(argmax_labels(d.scores), d.truth);
    filtered.accumulate(hard_filter_argmax(d.scores, allowed), d.truth);
    EXPECT_GE(filtered.counts().diagonal().sum(), plain.counts().diagonal().sum());
  }
}

TEST(SoftFilter, FullConfidenceIsIdentity) {
  std::mt19937_64 rng(6);
  const Tensor seg = oracle::random_tensor({4, 3, 3}, rng, -5, 5);
  const Tensor out = soft_filter(seg, Tensor({3}, 40.0));
  EXPECT_LT((out.array() - seg.array()).abs().maxCoeff(), 1e-9);
}

TEST(SoftFilter, ZeroInputs) {
  const Tensor out = soft_filter(Tensor({1, 1, 2}), Tensor({2}));
  EXPECT_NEAR(out[0], -std::log(3.0), 1e-12);
  EXPECT_NEAR(-std::log(3.0), -1.0986, 1e-4);
}

TEST(SoftFilter, NoConfidenceSuppresses) {
  std::mt19937_64 rng(7);
  const Tensor seg = oracle::random_tensor({3, 3, 2}, rng, -3, 3);
  const Tensor out = soft_filter(seg, Tensor::from_vector({2}, {-40.0, 40.0}));
  const double floor = std::log(1e-7 / (1 - 1e-7));
  for (Index y = 0; y < 3; ++y)
    for (Index x = 0; x < 3; ++x) {
      EXPECT_NEAR(out(y, x, 0), floor, 1e-6);
      EXPECT_NEAR(out(y, x, 1), seg(y, x, 1), 1e-9);
    }
}

TEST(SoftFilter, MatchesElementwiseFormula) {
  std::mt19937_64 rng(8);
  const Tensor seg = oracle::random_tensor({3, 4, 3}, rng, -4, 4), conf = oracle::random_tensor({3}, rng, -4, 4);
  const Tensor out = soft_filter(seg, conf, 1e-5);
  for (Index y = 0; y < 3; ++y)
    for (Index x = 0; x < 4; ++x)
      for (Index k = 0; k < 3; ++k)
        EXPECT_NEAR(out(y, x, k), oracle::logit(oracle::sigmoid(seg(y, x, k)) * oracle::sigmoid(conf[k]), 1e-5),
                    1e-12);
}

TEST(SoftFilter, MonotoneInConfidence) {
  std::mt19937_64 rng(9);
  const Tensor seg = oracle::random_tensor({4, 4, 3}, rng, -6, 6);
  Tensor conf = oracle::random_tensor({3}, rng, -6, 6);
  Tensor prev = soft_filter(seg, conf);
  for (int step = 0; step < 20; ++step) {
    conf[1] += 0.7;
    const Tensor next = soft_filter(seg, conf);
    for (Index y = 0; y < 4; ++y)
      for (Index x = 0; x < 4; ++x) {
        EXPECT_GE(next(y, x, 1), prev(y, x, 1));
        EXPECT_EQ(next(y, x, 0), prev(y, x, 0));
      }
    prev = next;
  }
}

TEST(SoftFilter, ClassPermutationEquivariance) {
  std::mt19937_64 rng(10);
  const Tensor seg = oracle::random_tensor({3, 3, 5}, rng, -3, 3), conf = oracle::random_tensor({5}, rng, -3, 3);
  std::vector<Index> perm(5);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensor pseg(seg.dims()), pconf(conf.dims());
  for (Index k = 0; k < 5; ++k) {
    pconf[perm[k]] = conf[k];
    for (Index y = 0; y < 3; ++y)
      for (Index x = 0; x < 3; ++x) pseg(y, x, perm[k]) = seg(y, x, k);
  }
  const Tensor out = soft_filter(seg, conf), pout = soft_filter(pseg, pconf);
  for (Index k = 0; k < 5; ++k)
    for (Index y = 0; y < 3; ++y)
      for (Index x = 0; x < 3; ++x) EXPECT_EQ(pout(y, x, perm[k]), out(y, x, k));

  LabelSet allowed{0, 3}, pallowed{static_cast<std::int32_t>(perm[0]), static_cast<std::int32_t>(perm[3])};
  const LabelMap hard = hard_filter_argmax(seg, allowed), phard = hard_filter_argmax(pseg, pallowed);
  for (Index i = 0; i < hard.size(); ++i) EXPECT_EQ(phard.data()[i], perm[hard.data()[i]]);
}

TEST(SoftFilter, RejectsMismatchedConfidence) {
  EXPECT_THROW(soft_filter(Tensor({2, 2, 3}), Tensor({2})), Error);
  EXPECT_THROW(soft_filter(Tensor({2, 2, 3}), Tensor({3}), 0.7), Error);
}

TEST(GtConfidence, Construction) {
  const Tensor c = gt_confidence({0}, 3);
  EXPECT_TRUE(c == Tensor::from_vector({3}, {1e4, -1e4, -1e4}));
  EXPECT_NEAR(sigmoid(c)[0], 1.0, 1e-9);
  EXPECT_NEAR(sigmoid(c)[1], 0.0, 1e-9);
}

TEST(GtConfidence, AllPresentIsIdentityEmptySuppresses) {
  std::mt19937_64 rng(11);
  const Tensor seg = oracle::random_tensor({3, 3, 3}, rng, -5, 5);
  const Tensor all = soft_filter(seg, gt_confidence({0, 1, 2}, 3));
  EXPECT_LT((all.array() - seg.array()).abs().maxCoeff(), 1e-9);
  const Tensor none = soft_filter(seg, gt_confidence({}, 3));
  EXPECT_LT((none.array() - std::log(1e-7 / (1 - 1e-7))).abs().maxCoeff(), 1e-6);
}

TEST(Threshold, StrictInequality) {
  EXPECT_EQ(threshold_labels(Tensor::from_vector({3}, {1, 2, 0.1})), (LabelSet{0, 1, 2}));
  EXPECT_EQ(threshold_labels(Tensor::from_vector({3}, {-1, 0.5, -2})), (LabelSet{1}));
  EXPECT_EQ(threshold_labels(Tensor::from_vector({2}, {0.0, 1.0})), (LabelSet{1}));
}

TEST(FilterThenUpsample, Examples) {
  std::mt19937_64 rng(12);
  const Tensor seg = oracle::random_tensor({4, 4, 3}, rng, -3, 3), conf = oracle::random_tensor({3}, rng, -3, 3);
  EXPECT_TRUE(filter_then_upsample(seg, conf, 4, 4) == soft_filter(seg, conf));
  const Tensor full = filter_then_upsample(seg, Tensor({3}, 40.0), 9, 9);
  EXPECT_LT((full.array() - bilinear_upsample(seg, 9, 9).array()).abs().maxCoeff(), 1e-9);

  const Tensor out = filter_then_upsample(seg, conf, 9, 9);
  Tensor filtered(seg.dims());
  for (Index y = 0; y < 4; ++y)
    for (Index x = 0; x < 4; ++x)
      for (Index k = 0; k < 3; ++k)
        filtered(y, x, k) = oracle::logit(oracle::sigmoid(seg(y, x, k)) * oracle::sigmoid(conf[k]), 1e-7);
  for (Index Y = 0; Y < 9; ++Y)
    for (Index X = 0; X < 9; ++X)
      for (Index k = 0; k < 3; ++k) EXPECT_NEAR(out(Y, X, k), oracle::bilinear_at(filtered, 9, 9, Y, X, k), 1e-12);
}

TEST(UpsampleThenFilter, DiffersOnlyByOrder) {
  std::mt19937_64 rng(13);
  const Tensor seg = oracle::random_tensor({3, 3, 2}, rng, -3, 3), conf = oracle::random_tensor({2}, rng, -3, 3);
  const Tensor a = upsample_then_filter(seg, conf, 5, 5);
  EXPECT_TRUE(a == soft_filter(bilinear_upsample(seg, 5, 5), conf));
  EXPECT_TRUE(upsample_then_filter(seg, conf, 3, 3) == filter_then_upsample(seg, conf, 3, 3));
}
