#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "fixtures.hpp"
#include "gcvd/error.hpp"
#include "gcvd/evaluation.hpp"
#include "gcvd/pose_graph.hpp"

using namespace gcvd;

namespace {

const std::vector<int> kTaus = {1, 2, 4, 8};

// Measurements consistent with `poses` for every sequential edge and pair.
std::vector<RelativeMeasurement> exact_measurements(const std::vector<Pose>& poses,
                                                    const std::vector<std::pair<int, int>>& pairs) {
  std::vector<RelativeMeasurement> out;
  const int k = static_cast<int>(poses.size());
  for (int tau : kTaus)
    for (int i = 0; i + tau < k; ++i) out.push_back({i, i + tau, poses[i + tau] * poses[i].inverse()});
  for (const auto& [i, j] : pairs) out.push_back({i, j, poses[j] * poses[i].inverse()});
  return out;
}

std::vector<Pose> random_chain(std::mt19937_64& rng, int k) {
  std::vector<Pose> poses{Pose::Identity()};
  for (int i = 1; i < k; ++i) poses.push_back(se3_exp(gcvd::testing::random_twist(rng, 0.3, 0.1)) * poses.back());
  return poses;
}

double pose_distance(const Pose& a, const Pose& b) { return se3_log(a * b.inverse()).norm(); }

}  // namespace

TEST(BuildPoseGraph, FiveKeyframeEnumeration) {
  std::mt19937_64 rng(1);
  const auto poses = random_chain(rng, 5);
  const PoseGraph g = build_pose_graph(5, kTaus, {}, poses, exact_measurements(poses, {}));
  std::set<std::pair<int, int>> edges;
  for (const auto& e : g.edges) {
    edges.insert({e.i, e.j});
    const double w = 1.0 / (e.j - e.i);
    EXPECT_TRUE(e.sequential);
    EXPECT_EQ(e.information, Vec6::Constant(w));
  }
  const std::set<std::pair<int, int>> expect = {{0, 1}, {1, 2}, {2, 3}, {3, 4},
                                                {0, 2}, {1, 3}, {2, 4}, {0, 4}};
  EXPECT_EQ(g.edges.size(), 8u);
  EXPECT_EQ(edges, expect);
  EXPECT_EQ(g.anchor, 0);
}

TEST(BuildPoseGraph, TwoKeyframes) {
  const std::vector<Pose> poses = {Pose::Identity(), se3_exp(Twist::Constant(0.1))};
  const PoseGraph g = build_pose_graph(2, kTaus, {}, poses, exact_measurements(poses, {}));
  ASSERT_EQ(g.edges.size(), 1u);
  EXPECT_EQ(g.edges[0].information, Vec6::Ones());
}

TEST(BuildPoseGraph, CovisiblePairAddsIdentityEdge) {
  std::mt19937_64 rng(2);
  const auto poses = random_chain(rng, 21);
  const PoseGraph g = build_pose_graph(21, kTaus, {{0, 20}}, poses, exact_measurements(poses, {{0, 20}}));
  EXPECT_EQ(g.covisible_edge_count(), 1u);
  const auto& e = g.edges.back();
  EXPECT_FALSE(e.sequential);
  EXPECT_EQ(e.i, 0);
  EXPECT_EQ(e.j, 20);
  EXPECT_EQ(e.information, Vec6::Ones());
}

TEST(BuildPoseGraph, MissingMeasurementThrows) {
  std::mt19937_64 rng(3);
  const auto poses = random_chain(rng, 4);
  auto m = exact_measurements(poses, {});
  m.pop_back();
  EXPECT_THROW(build_pose_graph(4, kTaus, {}, poses, m), DataError);
}

TEST(PoseGraph, DisconnectedGraphRejected) {
  PoseGraph g;
  g.vertices.assign(3, Pose::Identity());
  g.edges.push_back({0, 1, Pose::Identity(), Vec6::Ones(), true});
  EXPECT_THROW(g.validate(), DataError);
  g.edges.push_back({1, 1, Pose::Identity(), Vec6::Ones(), true});
  EXPECT_THROW(g.validate(), DataError);
}

TEST(EdgeResidual, Examples) {
  std::mt19937_64 rng(4);
  const Pose ti = gcvd::testing::random_pose(rng);
  const Pose z = gcvd::testing::random_pose(rng, 1.0, 1.0);
  PoseGraphEdge e{0, 1, z, Vec6::Ones(), true};
  EXPECT_LE(edge_residual(e, ti, z * ti).norm(), 1e-12);

  e.measurement = Pose::Identity();
  const double eps = 1e-3;
  const Pose tj(Mat3::Identity(), Vec3(eps, 0, 0));
  const Vec6 r = edge_residual(e, Pose::Identity(), tj);
  Vec6 expect = Vec6::Zero();
  expect(0) = eps;
  EXPECT_LE((r - expect).norm(), 1e-15);
}

TEST(EdgeResidual, GaugeInvariant) {
  std::mt19937_64 rng(5);
  for (int n = 0; n < 50; ++n) {
    const Pose ti = gcvd::testing::random_pose(rng);
    const Pose tj = gcvd::testing::random_pose(rng);
    const Pose g = gcvd::testing::random_pose(rng);
    const PoseGraphEdge e{0, 1, gcvd::testing::random_pose(rng, 1.0, 1.0), Vec6::Ones(), true};
    EXPECT_NEAR(edge_residual(e, ti, tj).norm(), edge_residual(e, ti * g, tj * g).norm(), 1e-9);
  }
}

TEST(OptimizePoseGraph, ConsistentGraphDoesNotMove) {
  std::mt19937_64 rng(6);
  const auto poses = random_chain(rng, 12);
  const PoseGraph g = build_pose_graph(12, kTaus, {{0, 11}}, poses, exact_measurements(poses, {{0, 11}}));
  const PoseGraphResult r = optimize_pose_graph(g);
  EXPECT_LE(r.final_cost, 1e-18);
  for (int i = 0; i < 12; ++i) EXPECT_LE(pose_distance(r.poses[i], poses[i]), 1e-9);
}

TEST(OptimizePoseGraph, TwoVerticesClosedForm) {
  std::mt19937_64 rng(7);
  PoseGraph g;
  const Pose t0 = gcvd::testing::random_pose(rng);
  const Pose z = gcvd::testing::random_pose(rng, 1.0, 1.0);
  g.vertices = {t0, gcvd::testing::random_pose(rng, 1.0, 1.0) * t0};
  g.edges.push_back({0, 1, z, Vec6::Ones(), true});
  const PoseGraphResult r = optimize_pose_graph(g);
  EXPECT_EQ(r.poses[0].matrix(), t0.matrix());
  EXPECT_LE(pose_distance(r.poses[1], z * t0), 1e-9);
  EXPECT_LE(r.final_cost, r.initial_cost);
}

TEST(OptimizePoseGraph, DriftFixtureTenSeeds) {
  int passed = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto trial = gcvd::testing::pose_graph_drift_trial(seed);
    EXPECT_TRUE(trial.cost_monotone) << "seed " << seed;
    if (trial.ate_after <= 0.5 * trial.ate_before) ++passed;
  }
  EXPECT_GE(passed, 9);
}

namespace {

PoseGraph noisy_graph(std::uint64_t seed, std::vector<Pose>* truth) {
  std::mt19937_64 rng(seed);
  *truth = random_chain(rng, 15);
  auto m = exact_measurements(*truth, {{0, 14}, {2, 13}});
  for (auto& r : m) r.measurement = se3_exp(gcvd::testing::random_twist(rng, 0.02, 0.01)) * r.measurement;
  std::vector<Pose> init = *truth;
  for (std::size_t i = 1; i < init.size(); ++i)
    init[i] = se3_exp(gcvd::testing::random_twist(rng, 0.1, 0.05)) * init[i];
  return build_pose_graph(15, kTaus, {{0, 14}, {2, 13}}, init, m);
}

}  // namespace

TEST(OptimizePoseGraph, MonotoneCostAndFixedAnchor) {
  std::vector<Pose> truth;
  const PoseGraph g = noisy_graph(8, &truth);
  const PoseGraphResult r = optimize_pose_graph(g);
  ASSERT_FALSE(r.cost_history.empty());
  EXPECT_DOUBLE_EQ(r.cost_history.front(), r.initial_cost);
  for (std::size_t i = 1; i < r.cost_history.size(); ++i) EXPECT_LE(r.cost_history[i], r.cost_history[i - 1]);
  EXPECT_LE(r.final_cost, r.initial_cost);
  EXPECT_LE(r.iterations, 100);
  EXPECT_EQ(r.poses[0].matrix(), g.vertices[0].matrix());
}

TEST(OptimizePoseGraph, GaugeEquivariance) {
  std::vector<Pose> truth;
  PoseGraph g = noisy_graph(9, &truth);
  const PoseGraphResult a = optimize_pose_graph(g);
  std::mt19937_64 rng(10);
  const Pose s = gcvd::testing::random_pose(rng);
  for (Pose& v : g.vertices) v = v * s;
  const PoseGraphResult b = optimize_pose_graph(g);
  for (std::size_t i = 0; i < a.poses.size(); ++i) EXPECT_LE(pose_distance(a.poses[i] * s, b.poses[i]), 1e-6);
}

TEST(OptimizePoseGraph, WeightScaleInvariance) {
  std::vector<Pose> truth;
  PoseGraph g = noisy_graph(11, &truth);
  const PoseGraphResult a = optimize_pose_graph(g);
  for (auto& e : g.edges) e.information *= 2.0;
  const PoseGraphResult b = optimize_pose_graph(g);
  for (std::size_t i = 0; i < a.poses.size(); ++i) EXPECT_LE(pose_distance(a.poses[i], b.poses[i]), 1e-6);
  EXPECT_NEAR(b.final_cost, 2.0 * a.final_cost, 1e-6 * a.final_cost + 1e-15);
}

TEST(PoseGraphText, RoundTrip) {
  std::vector<Pose> truth;
  const PoseGraph g = noisy_graph(12, &truth);
  const auto edges = parse_pose_graph_edges(format_pose_graph(g));
  ASSERT_EQ(edges.size(), g.edges.size());
  for (std::size_t n = 0; n < edges.size(); ++n) {
    EXPECT_EQ(edges[n].i, g.edges[n].i);
    EXPECT_EQ(edges[n].j, g.edges[n].j);
    EXPECT_LE((edges[n].measurement.matrix() - g.edges[n].measurement.matrix()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LE((edges[n].information - g.edges[n].information).cwiseAbs().maxCoeff(), 1e-9);
  }
}
