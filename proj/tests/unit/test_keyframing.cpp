#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gcvd/error.hpp"
#include "gcvd/flow_provider.hpp"
#include "gcvd/keyframing.hpp"
#include "gcvd/synth_oracle.hpp"
#include "fixtures.hpp"

using namespace gcvd;

namespace {

FlowField uniform_flow(int w, int h, double dx, double dy) {
  FlowField f(w, h, 2);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      f(x, y, 0) = dx;
      f(x, y, 1) = dy;
    }
  }
  return f;
}

ImageD random_image(std::mt19937_64& rng, int w, int h) {
  std::uniform_real_distribution<double> u(0.1, 0.8);
  ImageD img(w, h);
  for (auto& v : img.values()) v = u(rng);
  return img;
}

}  // namespace

TEST(MeanStaticFlow, Examples) {
  EXPECT_NEAR(mean_static_flow_magnitude(uniform_flow(10, 10, 3, 4), Mask(10, 10, 1, 1), 100), 0.05, 1e-15);
  EXPECT_EQ(mean_static_flow_magnitude(uniform_flow(10, 10, 0, 0), Mask(10, 10, 1, 1), 100), 0.0);
  FlowField half = uniform_flow(10, 10, 0, 0);
  for (int y = 5; y < 10; ++y)
    for (int x = 0; x < 10; ++x) half(x, y, 1) = 10.0;
  EXPECT_NEAR(mean_static_flow_magnitude(half, Mask(10, 10, 1, 1), 100), 0.05, 1e-15);
}

TEST(MeanStaticFlow, IgnoresMaskedPixels) {
  FlowField f = uniform_flow(4, 4, 0, 0);
  Mask m(4, 4, 1, 1);
  f(0, 0, 0) = 1000.0;
  m(0, 0) = 0;
  EXPECT_EQ(mean_static_flow_magnitude(f, m, 4), 0.0);
}

TEST(MeanStaticFlow, EmptyMask) {
  try {
    mean_static_flow_magnitude(uniform_flow(4, 4, 1, 1), Mask(4, 4, 1, 0), 4);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("no static pixels"), std::string::npos);
  }
}

TEST(SelectKeyframes, ConstantStep) {
  const KeyframeSet ks = select_keyframes(std::vector<double>(30, 0.04), 0.1);
  std::vector<int> expect;
  for (int t = 0; t <= 30; t += 3) expect.push_back(t);
  expect.push_back(30);
  expect.erase(std::unique(expect.begin(), expect.end()), expect.end());
  EXPECT_EQ(ks.indices, expect);
  EXPECT_EQ(ks.accumulation.size(), 31u);
}

TEST(SelectKeyframes, ZeroMotionKeepsEnds) {
  EXPECT_EQ(select_keyframes(std::vector<double>(9, 0.0), 0.1).indices, (std::vector<int>{0, 9}));
}

TEST(SelectKeyframes, SingleFrame) {
  EXPECT_EQ(select_keyframes({}, 0.1).indices, std::vector<int>{0});
}

TEST(SelectKeyframes, StrideIsCeilOfRatio) {
  for (double m : {0.01, 0.03, 0.07, 0.11}) {
    const KeyframeSet ks = select_keyframes(std::vector<double>(100, m), 0.1);
    const int stride = static_cast<int>(std::ceil(0.1 / m - 1e-12));
    for (std::size_t i = 1; i + 1 < ks.indices.size(); ++i) {
      EXPECT_EQ(ks.indices[i] - ks.indices[i - 1], stride) << "m = " << m;
    }
  }
}

TEST(SelectKeyframes, CountNonIncreasingInThreshold) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 0.08);
  std::vector<double> steps(200);
  for (double& s : steps) s = u(rng);
  std::size_t previous = steps.size() + 1;
  for (double delta = 0.01; delta <= 0.5; delta += 0.01) {
    const std::size_t k = select_keyframes(steps, delta).indices.size();
    EXPECT_LE(k, previous) << "delta " << delta;
    previous = k;
  }
}

TEST(UniformKeyframes, EvenlySpaced) {
  EXPECT_EQ(uniform_keyframes(10, 4), (std::vector<int>{0, 3, 6, 9}));
  EXPECT_EQ(uniform_keyframes(5, 2), (std::vector<int>{0, 4}));
  EXPECT_EQ(uniform_keyframes(1, 3), std::vector<int>{0});
}

TEST(Descriptor, Properties) {
  std::mt19937_64 rng(5);
  const ImageD img = random_image(rng, 64, 48);
  const Eigen::VectorXd d = image_descriptor(img);
  EXPECT_EQ(d.size(), kDescriptorGrid * kDescriptorGrid);
  EXPECT_NEAR(d.norm(), 1.0, 1e-12);
  EXPECT_NEAR(d.dot(image_descriptor(img)), 1.0, 1e-12);

  ImageD neg = img, shifted = img;
  for (auto& v : neg.values()) v = 1.0 - v;
  for (auto& v : shifted.values()) v += 0.15;
  EXPECT_NEAR(d.dot(image_descriptor(neg)), -1.0, 1e-12);
  EXPECT_LE((d - image_descriptor(shifted)).norm(), 1e-12);

  const Eigen::VectorXd c = image_descriptor(ImageD(32, 32, 1, 0.4));
  EXPECT_EQ(c, Eigen::VectorXd::Unit(kDescriptorGrid * kDescriptorGrid, 0));
}

TEST(Similarity, Examples) {
  std::vector<Eigen::VectorXd> ortho;
  for (int i = 0; i < 4; ++i) ortho.push_back(Eigen::VectorXd::Unit(4, i));
  EXPECT_EQ(similarity_matrix(ortho), Eigen::MatrixXd::Identity(4, 4));

  std::mt19937_64 rng(8);
  std::vector<Eigen::VectorXd> ds;
  for (int i = 0; i < 6; ++i) ds.push_back(image_descriptor(random_image(rng, 32, 32)));
  ds.push_back(ds[2]);
  const Eigen::MatrixXd a = similarity_matrix(ds);
  EXPECT_LE((a - a.transpose()).cwiseAbs().maxCoeff(), 1e-6);
  for (int i = 0; i < a.rows(); ++i) EXPECT_NEAR(a(i, i), 1.0, 1e-6);
  EXPECT_NEAR(a(2, 6), 1.0, 1e-12);
  EXPECT_LE(a.cwiseAbs().maxCoeff(), 1.0 + 1e-12);
}

TEST(Associate, BelowThresholdIsEmpty) {
  EXPECT_TRUE(associate_candidates(Eigen::MatrixXd::Constant(20, 20, 0.5), 0.9, 8).empty());
}

TEST(Associate, IsolatedEntry) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(50, 50);
  a(2, 40) = a(40, 2) = 0.97;
  const auto pairs = associate_candidates(a, 0.9, 8);
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0].i, 2);
  EXPECT_EQ(pairs[0].j, 40);
  EXPECT_DOUBLE_EQ(pairs[0].similarity, 0.97);
}

TEST(Associate, PlateauKeepsLexicographicallySmallest) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(40, 40);
  for (int i : {5, 6})
    for (int j : {20, 21}) a(i, j) = a(j, i) = 0.95;
  const auto pairs = associate_candidates(a, 0.9, 8);
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0].i, 5);
  EXPECT_EQ(pairs[0].j, 20);
}

TEST(Associate, GapAndTransposeInvariance) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.7, 1.0);
  Eigen::MatrixXd a(30, 30);
  for (int i = 0; i < 30; ++i)
    for (int j = 0; j < 30; ++j) a(i, j) = u(rng);
  const auto p = associate_candidates(a, 0.9, 8);
  const auto q = associate_candidates(a.transpose(), 0.9, 8);
  ASSERT_EQ(p.size(), q.size());
  EXPECT_FALSE(p.empty());
  for (std::size_t n = 0; n < p.size(); ++n) {
    EXPECT_GT(p[n].j - p[n].i, 8);
    EXPECT_EQ(p[n].i, q[n].i);
    EXPECT_EQ(p[n].j, q[n].j);
  }
}

TEST(VerifyPair, GroundTruthFlowsAccepted) {
  SceneSpec s;
  s.frame_count = 30;
  s.width = 48;
  s.height = 36;
  SyntheticScene scene(s);
  OracleFlowProvider oracle(scene);
  const PairFlow ij = oracle.flow(0, 29);
  const PairFlow ji = oracle.flow(29, 0);
  const PairVerification v = verify_pair(ij.flow, ji.flow, scene.frame(0).static_mask, 0.1, 48, 1.0, 0.5);
  EXPECT_TRUE(v.accepted) << v.reason;
  EXPECT_GE(v.fb_inlier_ratio, 0.5);
}

TEST(VerifyPair, InconsistentFlowRejected) {
  const PairVerification v = verify_pair(uniform_flow(20, 20, 2, 0), uniform_flow(20, 20, 0, 0),
                                         Mask(20, 20, 1, 1), 0.1, 20, 1.0, 0.5);
  EXPECT_FALSE(v.accepted);
  EXPECT_EQ(v.fb_inlier_ratio, 0.0);
}

TEST(VerifyPair, HugeConsistentFlowRejected) {
  // 0.3 of the long side; the backward flow undoes it wherever it lands.
  const PairVerification v = verify_pair(uniform_flow(100, 20, 30, 0), uniform_flow(100, 20, -30, 0),
                                         Mask(100, 20, 1, 1), 0.1, 100, 1.0, 0.5);
  EXPECT_FALSE(v.accepted);
  EXPECT_GE(v.fb_inlier_ratio, 0.5);
  EXPECT_NEAR(v.mean_flow, 0.3, 1e-12);
}

TEST(ForwardBackward, OutsideIsInfinite) {
  const ImageD e = forward_backward_error(uniform_flow(8, 8, 3, 0), uniform_flow(8, 8, -3, 0));
  EXPECT_EQ(e(0, 0), 0.0);
  EXPECT_TRUE(std::isinf(e(7, 0)));
}

TEST(FileFlowProvider, MissNamesProvider) {
  const auto dir = gcvd::testing::scratch_dir("flow_miss");
  AdjacentFlows adjacent;
  FileFlowProvider provider{SceneLayout(dir), adjacent};
  try {
    provider.flow(0, 5);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("flow provider miss"), std::string::npos);
  }
}
