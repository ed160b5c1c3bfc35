#include <gtest/gtest.h>

#include <random>

#include "clat/probe.hpp"
#include "fixtures.hpp"

using clat::Mat;
using clat::Vec;

namespace {

struct Labeled {
  Mat x;
  std::vector<int> y;
};

Labeled separable(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.3);
  Labeled d;
  d.x.resize(static_cast<Eigen::Index>(n), 2);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double s = label ? 1.0 : -1.0;
    d.x(static_cast<Eigen::Index>(i), 0) = 2.0 * s + g(rng);
    d.x(static_cast<Eigen::Index>(i), 1) = g(rng);
    d.y.push_back(label);
  }
  return d;
}

clat::ActivationVector act(double v) {
  clat::ActivationVector a;
  a.d_sae = 1;
  if (v > 0) {
    a.indices = {0};
    a.values = {v};
  }
  return a;
}

}  // namespace

TEST(LinearProbe, SeparableToyFitsPerfectly) {
  const auto d = separable(1, 100);
  const auto p = clat::train_linear_probe(d.x, d.y, clat::ProbeTrainConfig{});
  EXPECT_EQ(clat::accuracy(p, d.x, d.y), 1.0);
  EXPECT_GT(p.weights[0], 0.0);
}

TEST(LinearProbe, FlippedLabelsNegateTheSolution) {
  std::mt19937_64 rng(2);
  const Mat x = fixtures::gaussian_matrix(rng, 200, 4);
  std::vector<int> y, flipped;
  std::bernoulli_distribution noise(0.2);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int l = (x(i, 0) + 0.5 * x(i, 2) > 0) != noise(rng) ? 1 : 0;
    y.push_back(l);
    flipped.push_back(1 - l);
  }
  clat::ProbeTrainConfig cfg;
  cfg.l2 = 1e-2;
  const auto a = clat::train_linear_probe(x, y, cfg);
  const auto b = clat::train_linear_probe(x, flipped, cfg);
  EXPECT_LE((a.weights + b.weights).cwiseAbs().maxCoeff(), 1e-4);
  EXPECT_NEAR(a.bias, -b.bias, 1e-4);
}

TEST(LinearProbe, SingleClassRejected) {
  const Mat x = Mat::Ones(4, 2);
  const std::vector<int> y = {1, 1, 1, 1};
  try {
    clat::train_linear_probe(x, y, clat::ProbeTrainConfig{});
    FAIL();
  } catch (const clat::Error& e) {
    EXPECT_EQ(e.code(), clat::ErrorCode::kSingleClass);
  }
}

TEST(LinearProbe, DecisionIgnoresOrthogonalShifts) {
  const auto d = separable(3, 60);
  const auto p = clat::train_linear_probe(d.x, d.y, clat::ProbeTrainConfig{});
  const Vec ortho = Vec(Eigen::Vector2d(-p.weights[1], p.weights[0]));
  for (Eigen::Index i = 0; i < d.x.rows(); ++i) {
    const Vec x = d.x.row(i).transpose();
    EXPECT_NEAR(p.decision(x + 5.0 * ortho), p.decision(x), 1e-9);
  }
}

TEST(LinearProbe, DumpRoundTrip) {
  const auto d = separable(4, 40);
  const auto p = clat::train_linear_probe(d.x, d.y, clat::ProbeTrainConfig{});
  const auto back = clat::probe_from_dump(clat::TensorDump::parse(clat::probe_to_dump(p).serialize()));
  EXPECT_LE((back.weights - p.weights).cwiseAbs().maxCoeff(), 1e-5 * p.weights.cwiseAbs().maxCoeff());
  EXPECT_EQ(back.positive_label, p.positive_label);
  EXPECT_EQ(back.negative_label, p.negative_label);
}

TEST(EstimateDirection, MeanDifferenceAndFilters) {
  Mat x(4, 2);
  x << 0, 0, 2, 0, 4, 2, 6, 2;
  const std::vector<clat::ActivationVector> acts = {act(0.0), act(0.5), act(3.0), act(4.0)};
  const auto d = clat::estimate_direction(x, acts, 0, 1.0, 2.5);
  EXPECT_EQ(d.n_low, 2u);
  EXPECT_EQ(d.n_high, 2u);
  EXPECT_EQ(d.values, Vec(Eigen::Vector2d(4.0, 2.0)));
  const auto filtered = clat::estimate_direction(x, acts, 0, 1.0, 2.5, [](std::size_t i) { return i != 3; });
  EXPECT_EQ(filtered.values, Vec(Eigen::Vector2d(3.0, 2.0)));
  EXPECT_THROW(clat::estimate_direction(x, acts, 0, 1.0, 10.0), clat::Error);
}

TEST(EstimateDirection, SameSetGivesZeroVector) {
  Mat x(3, 2);
  x << 1, 2, 3, 4, 5, 7;
  const std::vector<clat::ActivationVector> acts = {act(1.0), act(2.0), act(3.0)};
  const auto d = clat::estimate_direction(x, acts, 0, 10.0, -1.0);
  EXPECT_EQ(d.values, Vec::Zero(2));
}

TEST(EstimateDirection, RecoversCollinearDirection) {
  std::mt19937_64 rng(5);
  Vec dir = fixtures::gaussian(rng, 12);
  dir.normalize();
  std::uniform_real_distribution<double> u(0.0, 3.0);
  Mat x(400, 12);
  std::vector<clat::ActivationVector> acts;
  for (Eigen::Index i = 0; i < 400; ++i) {
    const double a = u(rng);
    x.row(i) = (a * dir + fixtures::gaussian(rng, 12, 0.3)).transpose();
    acts.push_back(act(a));
  }
  const auto d = clat::estimate_direction(x, acts, 0, 1.0, 2.5);
  EXPECT_GE(d.values.normalized().dot(dir), 0.99);
}

TEST(AugmentLatent, IdentityCasesAndUnbiasedness) {
  std::mt19937_64 rng(6);
  clat::LatentDirection dir;
  dir.values = fixtures::gaussian(rng, 5);
  const Vec x = fixtures::gaussian(rng, 5);
  EXPECT_EQ(clat::augment_latent(x, dir, 0.7, 0.5), x);
  EXPECT_EQ(clat::augment_latent(x, dir, 0.0, 0.9), x);
  EXPECT_LE((clat::augment_latent(x, dir, 2.0, 1.0) - (x + dir.values)).cwiseAbs().maxCoeff(), 1e-15);
  std::uniform_real_distribution<double> p(0.0, 1.0);
  Vec mean = Vec::Zero(5);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) mean += clat::augment_latent(x, dir, 0.5, p(rng)) / draws;
  EXPECT_LE((mean - x).norm(), 1e-2 * 0.5 * dir.values.norm());
}

TEST(RedChannel, FormulaAndClamp) {
  EXPECT_NEAR(clat::augment_red_value(0.5, 0.2), 0.4, 1e-15);
  EXPECT_EQ(clat::augment_red_value(0.37, 0.0), 0.37);
  EXPECT_EQ(clat::augment_red_value(0.8, -0.5), 1.0);
  EXPECT_EQ(clat::augment_red_value(0.8, 1.5), 0.0);
}

TEST(RedChannel, OnlyRedPlaneChanges) {
  clat::Tensor img{"img", {3, 2, 2}, {0.5f, 0.5f, 0.5f, 0.5f, 0.1f, 0.2f, 0.3f, 0.4f, 0.9f, 0.8f, 0.7f, 0.6f}};
  const auto out = clat::augment_red_channel(img, 0.2);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(out.data[static_cast<std::size_t>(i)], 0.4f, 1e-7);
  for (int i = 4; i < 12; ++i) EXPECT_EQ(out.data[static_cast<std::size_t>(i)], img.data[static_cast<std::size_t>(i)]);
  EXPECT_EQ(clat::augment_red_channel(img, 0.0).data, img.data);
  img.data[5] = 1.5f;
  try {
    clat::augment_red_channel(img, 0.1);
    FAIL();
  } catch (const clat::Error& e) {
    EXPECT_EQ(e.code(), clat::ErrorCode::kOutOfRangeInput);
  }
}

TEST(RobustnessSweep, BaselineRequiredAndChanges) {
  const auto d = separable(7, 80);
  const auto p = clat::train_linear_probe(d.x, d.y, clat::ProbeTrainConfig{});
  std::map<double, clat::LabeledEmbeddings> sets;
  sets[0.0] = {d.x, d.y};
  sets[0.1] = {d.x, d.y};
  Mat shifted = d.x;
  shifted.col(0).array() -= 2.0;
  sets[0.5] = {shifted, d.y};
  const auto rows = clat::robustness_sweep(p, sets);
  ASSERT_EQ(rows.size(), 6u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.n, 40u);
    EXPECT_NEAR(r.sem, std::sqrt(r.accuracy * (1 - r.accuracy) / 40.0), 1e-15);
    if (r.delta <= 0.1) EXPECT_EQ(r.change_vs_baseline, 0.0);
  }
  EXPECT_LT(rows[4].change_vs_baseline + rows[5].change_vs_baseline, 0.0);
  sets.erase(0.0);
  try {
    clat::robustness_sweep(p, sets);
    FAIL();
  } catch (const clat::Error& e) {
    EXPECT_EQ(e.code(), clat::ErrorCode::kMissingBaseline);
  }
}
