#include "oracles.hpp"

#include "concont/consistency.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

using namespace concont;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

LabelMask mask(const char* bits) { return *LabelMask::parse(bits); }

Vector softmax(const Vector& l) {
  const Vector e = (l.array() - l.maxCoeff()).exp();
  return e / e.sum();
}

// Central differences of f(softmax(logits)) against an analytic logit gradient.
double logit_fd_err(const Vector& logits, const std::function<double(const Vector&)>& f, const Vector& analytic) {
  double worst = 0.0;
  for (Eigen::Index k = 0; k < logits.size(); ++k) {
    Vector up = logits, down = logits;
    up[k] += 1e-5;
    down[k] -= 1e-5;
    worst = std::max(worst, oracle::rel_err(analytic[k], (f(softmax(up)) - f(softmax(down))) / 2e-5));
  }
  return worst;
}

}  // namespace

TEST(PartialCe, Examples) {
  EXPECT_EQ(partial_cross_entropy(vec({0.2, 0.3, 0.5}), mask("111")), 0.0);
  EXPECT_EQ(partial_cross_entropy(vec({0.0, 1.0, 0.0}), mask("010")), 0.0);
  EXPECT_NEAR(partial_cross_entropy(vec({0.5, 0.3, 0.2}), mask("110")), -std::log(0.8), 1e-15);
  EXPECT_NEAR(partial_cross_entropy(vec({0.5, 0.3, 0.2}), mask("110")), 0.22314, 1e-5);
}

TEST(PartialCe, EqualsCrossEntropyForOneHot) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    Vector l(5);
    for (int j = 0; j < 5; ++j) l[j] = n(rng);
    const Vector p = softmax(l);
    const int y = trial % 5;
    EXPECT_EQ(partial_cross_entropy(p, LabelMask::one_hot(5, y)), cross_entropy(p, y));
    EXPECT_LE((partial_cross_entropy_grad(p, LabelMask::one_hot(5, y)) - cross_entropy_grad(p, y)).norm(), 1e-15);
  }
}

TEST(PartialCe, AllOnesGradientIsExactlyZero) {
  const Vector p = softmax(vec({0.3, -1.0, 2.0}));
  EXPECT_EQ(partial_cross_entropy_grad(p, mask("111")), Vector::Zero(3));
}

TEST(PartialCe, ZeroMassSaturates) {
  const auto before = warning_count(Warning::log_saturation);
  EXPECT_NEAR(partial_cross_entropy(vec({1.0, 0.0, 0.0}), mask("011")), -std::log(1e-12), 1e-9);
  EXPECT_GT(warning_count(Warning::log_saturation), before);
}

TEST(PartialCe, LogitGradientMatchesFd) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.5);
  for (int trial = 0; trial < 50; ++trial) {
    Vector l(4);
    for (int j = 0; j < 4; ++j) l[j] = n(rng);
    const auto m = oracle::random_mask(4, rng);
    const auto f = [&](const Vector& p) { return partial_cross_entropy(p, m); };
    EXPECT_LT(logit_fd_err(l, f, partial_cross_entropy_grad(softmax(l), m)), 1e-4);
  }
}

TEST(LabelConsistency, Examples) {
  const auto thr = AdaptiveThresholds::uniform(4, 0.8, 0.5, 0.95, 1.0);
  const Vector strong = vec({0.25, 0.25, 0.25, 0.25});
  const Vector weak = vec({0.7, 0.1, 0.1, 0.1});
  EXPECT_EQ(label_consistency_loss(strong, 0, PScore{0, 0, 0, 0.5}, thr, PseudoMode::hard, weak), 0.0);
  EXPECT_NEAR(label_consistency_loss(strong, 2, PScore{0, 0, 0, 1.2}, thr, PseudoMode::hard, weak), 1.38629, 1e-5);
  EXPECT_EQ(label_consistency_loss(weak, 0, PScore{0, 0, 0, 1.2}, thr, PseudoMode::soft, weak), 0.0);
}

TEST(LabelConsistency, GradientsMatchFd) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.5);
  for (int trial = 0; trial < 50; ++trial) {
    Vector ls(5), lw(5);
    for (int j = 0; j < 5; ++j) {
      ls[j] = n(rng);
      lw[j] = n(rng);
    }
    const Vector pw = softmax(lw);
    const int y = trial % 5;
    const auto hard = [&](const Vector& p) { return -std::log(p[y]); };
    const auto soft = [&](const Vector& p) { return kl_divergence(pw, p); };
    EXPECT_LT(logit_fd_err(ls, hard, label_consistency_grad(softmax(ls), y, PseudoMode::hard, pw)), 1e-4);
    EXPECT_LT(logit_fd_err(ls, soft, label_consistency_grad(softmax(ls), y, PseudoMode::soft, pw)), 1e-4);
  }
}

TEST(Contrastive, Examples) {
  const Vector z = vec({1.0, 0.0});
  const std::vector<Vector> self{z};
  EXPECT_NEAR(contrastive_loss(z, self, {}, 1.0), 0.0, 1e-15);
  const std::vector<Vector> pos{vec({0.0, 1.0})}, neg{vec({0.0, -1.0})};
  EXPECT_NEAR(contrastive_loss(z, pos, neg, 1.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(contrastive_loss(z, pos, neg, 2.0), contrastive_loss(z, pos, neg, 1.0), 1e-15);
  EXPECT_THROW(contrastive_loss(z, {}, neg, 1.0), DomainError);
}

TEST(Contrastive, PermutationInvariant) {
  std::mt19937_64 rng(4);
  const Vector z = oracle::random_unit(6, rng);
  std::vector<Vector> pos, neg;
  for (int k = 0; k < 4; ++k) pos.push_back(oracle::random_unit(6, rng));
  for (int k = 0; k < 7; ++k) neg.push_back(oracle::random_unit(6, rng));
  const double base = contrastive_loss(z, pos, neg, 0.2);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);
  EXPECT_NEAR(contrastive_loss(z, pos, neg, 0.2), base, 1e-12);
}

TEST(Contrastive, GradientMatchesFd) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const Vector z = oracle::random_unit(5, rng);
    std::vector<Vector> pos{z}, neg;
    for (int k = 0; k < 3; ++k) pos.push_back(oracle::random_unit(5, rng));
    for (int k = 0; k < 6; ++k) neg.push_back(oracle::random_unit(5, rng));
    Vector g;
    contrastive_loss(z, pos, neg, 0.3, &g);
    for (int k = 0; k < 5; ++k) {
      Vector up = z, down = z;
      up[k] += 1e-5;
      down[k] -= 1e-5;
      const double fd = (contrastive_loss(up, pos, neg, 0.3) - contrastive_loss(down, pos, neg, 0.3)) / 2e-5;
      EXPECT_LT(oracle::rel_err(g[k], fd), 1e-4);
    }
  }
}

TEST(Queue, FifoEviction) {
  std::mt19937_64 rng(6);
  RepresentationQueue q(4, 3);
  std::vector<Vector> keys;
  for (int k = 0; k < 6; ++k) {
    keys.push_back(oracle::random_unit(3, rng));
    q.push(keys.back(), k, k % 2 == 0);
  }
  ASSERT_EQ(q.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(Vector(q.key(i)), keys[i + 2]);
    EXPECT_EQ(q.pseudo_class(i), static_cast<int>(i) + 2);
    EXPECT_EQ(q.confident(i), (i + 2) % 2 == 0);
  }
  const auto same = enqueue(q, {});
  EXPECT_EQ(same.size(), 4u);
  EXPECT_EQ(Vector(same.key(0)), keys[2]);
}

TEST(Queue, FillsToCapacityAfterTenBatches) {
  std::mt19937_64 rng(7);
  RepresentationQueue q(512, 16);
  for (int b = 0; b < 10; ++b) {
    std::vector<QueueEntry> batch;
    for (int i = 0; i < 64; ++i) batch.push_back({oracle::random_unit(16, rng), i % 4, true});
    q = enqueue(std::move(q), batch);
    EXPECT_EQ(q.size(), std::min<std::size_t>(512, 64u * static_cast<std::size_t>(b + 1)));
  }
  EXPECT_EQ(q.size(), 512u);
}

TEST(Queue, RejectsNonUnitKeys) {
  RepresentationQueue q(4, 2);
  EXPECT_THROW(q.push(vec({1.0, 1.0}), 0, true), DomainError);
  EXPECT_THROW(q.push(vec({1.0, 0.0, 0.0}), 0, true), StructuralError);
}

TEST(Selection, HandBatchOursAndHcp) {
  const std::vector<PseudoLabel> meta = {{1, true}, {1, true}, {2, true}, {1, false}};
  std::mt19937_64 rng(8);
  RepresentationQueue q(16, 2);
  for (int k = 0; k < 3; ++k) q.push(oracle::random_unit(2, rng), 0, true);  // older history
  for (const auto& m : meta) q.push(oracle::random_unit(2, rng), m.class_index, m.confident);
  const std::size_t a = 3, b = 4, c = 5, d = 6;
  using Set = std::set<std::size_t>;
  auto as_set = [](const std::vector<std::size_t>& v) { return Set(v.begin(), v.end()); };

  const auto ours = select_contrast_sets(0, meta, q, Strategy::ours);
  EXPECT_EQ(as_set(ours.positives), (Set{a, b}));
  EXPECT_EQ(as_set(ours.negatives), (Set{0, 1, 2, c}));
  EXPECT_EQ(ours.ignored, 1u);

  const auto hcp = select_contrast_sets(0, meta, q, Strategy::hcp);
  EXPECT_EQ(as_set(hcp.positives), (Set{a, b}));
  EXPECT_EQ(as_set(hcp.negatives), (Set{0, 1, 2, c, d}));

  for (std::size_t i = 0; i < meta.size(); ++i) {
    const auto u = select_contrast_sets(i, meta, q, Strategy::unsupcon);
    EXPECT_EQ(u.positives, std::vector<std::size_t>{a + i});
    EXPECT_EQ(u.negatives.size(), q.size() - 1);
  }
  EXPECT_FALSE(select_contrast_sets(3, meta, q, Strategy::hcpn).contributes);
}

TEST(Selection, RequiresBatchKeysInQueue) {
  const std::vector<PseudoLabel> meta = {{0, true}, {1, true}};
  RepresentationQueue q(4, 2);
  q.push(vec({1.0, 0.0}), 0, true);
  EXPECT_THROW(select_contrast_sets(0, meta, q, Strategy::ours), StructuralError);
  EXPECT_EQ(parse_strategy("hcpn"), Strategy::hcpn);
  EXPECT_FALSE(parse_strategy("moco"));
}

TEST(TotalLoss, Examples) {
  EXPECT_NEAR(total_loss(0.2, 0.5, 1.0, LossWeights{1.0, 0.1, 0.1}), 0.8, 1e-15);
  EXPECT_EQ(total_loss(0.2, 0.5, 1.0, LossWeights{0.0, 0.0, 0.1}), 0.2);
  const LossWeights w{1.0, 0.1, 0.1};
  EXPECT_NEAR(total_loss(0.2, 0.5, 2.0, w) - total_loss(0.2, 0.5, 1.0, w), 0.1, 1e-15);
  try {
    total_loss(0.2, std::nan(""), 1.0, w);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("l_reg"), std::string::npos);
  }
  EXPECT_THROW((LossWeights{1.0, 0.1, 0.0}.validate()), ConfigError);
}
