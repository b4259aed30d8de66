#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "gcvd/error.hpp"
#include "gcvd/evaluation.hpp"
#include "gcvd/keyframing.hpp"
#include "gcvd/synth_oracle.hpp"

using namespace gcvd;
namespace fs = std::filesystem;

namespace {

SceneSpec small_spec() {
  SceneSpec s;
  s.frame_count = 12;
  s.width = 48;
  s.height = 36;
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return out;
}

}  // namespace

TEST(SynthOracle, ZeroCorruptionFlowMatchesRigidFlow) {
  SyntheticScene scene(small_spec());
  for (int a : {0, 5}) {
    const int b = a + 1;
    const FlowField f = scene.flow(a, b);
    const auto [rigid, valid] = rigid_flow(scene.frame(a).depth, scene.pose(a), scene.pose(b),
                                           scene.intrinsics());
    double worst = 0.0;
    for (int y = 0; y < f.height(); ++y) {
      for (int x = 0; x < f.width(); ++x) {
        if (!valid(x, y)) continue;
        for (int c = 0; c < 2; ++c) worst = std::max(worst, std::abs(f(x, y, c) - rigid(x, y, c)));
      }
    }
    EXPECT_LE(worst, 1e-6);
  }
}

TEST(SynthOracle, LoopClosesWithinOnePercent) {
  SceneSpec s = small_spec();
  s.frame_count = 60;
  SyntheticScene scene(s);
  std::vector<Pose> c2w;
  for (const Pose& p : scene.poses()) c2w.push_back(p.inverse());
  const double extent = trajectory_extent(c2w);
  ASSERT_GT(extent, 0.0);
  EXPECT_LE((c2w.front().translation() - c2w.back().translation()).norm(), 0.01 * extent);
}

TEST(SynthOracle, BiasedPriorAbsRelInRange) {
  SceneSpec s = small_spec();
  s.prior_bias = 0.2;
  s.prior_scale = 1.7;
  SyntheticScene scene(s);
  std::vector<DepthMap> est, gt;
  for (int t = 0; t < s.frame_count; ++t) {
    est.push_back(scene.prior_depth(t));
    gt.push_back(scene.frame(t).depth);
  }
  const DepthMetrics m = depth_metrics(est, gt);
  EXPECT_GE(m.abs_rel, 0.05);
  EXPECT_LE(m.abs_rel, 0.25);
}

TEST(SynthOracle, PriorWithoutCorruptionIsGroundTruth) {
  SyntheticScene scene(small_spec());
  EXPECT_EQ(scene.prior_depth(3), scene.frame(3).depth);
}

TEST(SynthOracle, AdjacentPairConsistency) {
  SceneSpec s = small_spec();
  s.width = 96;
  s.height = 72;
  SyntheticScene scene(s);
  for (int a = 0; a + 1 < 12; a += 3) {
    const PairConsistency c = render_pair_consistency_check(scene, a, a + 1);
    EXPECT_GT(c.valid_pixels, 0u);
    EXPECT_LE(c.max_residual, 5e-3) << "pair " << a;
  }
}

TEST(SynthOracle, SelfPairHasZeroResidual) {
  SyntheticScene scene(small_spec());
  const PairConsistency c = render_pair_consistency_check(scene, 4, 4);
  EXPECT_GT(c.valid_pixels, 0u);
  EXPECT_LE(c.max_residual, 1e-12);
}

TEST(SynthOracle, NoCovisibilityGivesEmptySet) {
  SceneSpec s = small_spec();
  s.trajectory_radius = 20.0;
  s.look_at_blend = 0.0;
  SyntheticScene scene(s);
  const PairConsistency c = render_pair_consistency_check(scene, 0, s.frame_count / 2);
  EXPECT_EQ(c.valid_pixels, 0u);
  EXPECT_EQ(c.max_residual, 0.0);
}

TEST(SynthOracle, FlowsAreForwardBackwardConsistent) {
  SyntheticScene scene(small_spec());
  const Intrinsics& k = scene.intrinsics();
  for (int a = 0; a + 1 < 12; a += 4) {
    const int b = a + 1;
    const FlowField fab = scene.flow(a, b);
    const ImageD err = forward_backward_error(fab, scene.flow(b, a));
    double worst = 0.0;
    std::size_t checked = 0;
    for (int y = 0; y < k.height; ++y) {
      for (int x = 0; x < k.width; ++x) {
        if (!scene.frame(a).static_mask(x, y)) continue;
        const Reprojection r = reproject(Vec2(x, y), scene.frame(a).depth(x, y), scene.pose(a),
                                         scene.pose(b), k);
        if (!r.in_front || !in_bilinear_support(r.pixel.x(), r.pixel.y(), k.width, k.height)) continue;
        const BilinearTap tap = make_tap(r.pixel.x(), r.pixel.y(), k.width, k.height);
        if (std::abs(sample(scene.frame(b).depth, tap) - r.depth) > 1e-2 * r.depth) continue;
        worst = std::max(worst, err(x, y));
        ++checked;
      }
    }
    EXPECT_GT(checked, 0u);
    EXPECT_LE(worst, 1e-3);
  }
}

TEST(SynthOracle, DynamicDiskIsMaskedAndMoves) {
  SceneSpec s = small_spec();
  s.dynamic_radius = 0.8;
  s.dynamic_velocity = 0.02;
  SyntheticScene scene(s);
  const Mask& m = scene.frame(0).static_mask;
  const std::size_t dynamic = m.size() - count_true(m);
  EXPECT_GT(dynamic, 0u);
  EXPECT_LT(dynamic, m.size());
}

TEST(SynthOracle, GenerationIsDeterministic) {
  SceneSpec s = small_spec();
  s.frame_count = 4;
  s.prior_noise = 0.05;
  const fs::path a = gcvd::testing::scratch_dir("synth_det_a");
  const fs::path b = gcvd::testing::scratch_dir("synth_det_b");
  generate_scene(s, a, true);
  generate_scene(s, b, true);
  const auto ta = tree(a);
  EXPECT_FALSE(ta.empty());
  EXPECT_TRUE(ta == tree(b));
}

TEST(SynthOracle, SceneDirectoryLayout) {
  SceneSpec s = small_spec();
  s.frame_count = 3;
  const fs::path dir = gcvd::testing::scratch_dir("synth_layout");
  generate_scene(s, dir, true);
  SceneLayout layout(dir);
  EXPECT_EQ(layout.read_meta().frame_count, 3);
  for (int t = 0; t < 3; ++t) {
    EXPECT_TRUE(fs::exists(layout.frame(t)));
    EXPECT_TRUE(fs::exists(layout.prior_depth(t)));
    EXPECT_TRUE(fs::exists(layout.static_mask(t)));
    EXPECT_TRUE(fs::exists(layout.descriptor(t)));
    EXPECT_TRUE(fs::exists(layout.gt_depth(t)));
  }
  EXPECT_TRUE(fs::exists(layout.flow_forward(0)));
  EXPECT_FALSE(fs::exists(layout.flow_forward(2)));
  EXPECT_TRUE(fs::exists(layout.flow_backward(2)));
  EXPECT_FALSE(fs::exists(layout.flow_backward(0)));
  EXPECT_EQ(read_trajectory(layout.gt_trajectory()).size(), 3u);

  const Raster desc = read_raster(layout.descriptor(1));
  const Eigen::VectorXd expect = image_descriptor(image_cast<double>(read_raster(layout.frame(1))));
  ASSERT_EQ(static_cast<Eigen::Index>(desc.size()), expect.size());
  for (Eigen::Index i = 0; i < expect.size(); ++i) EXPECT_NEAR(desc[i], expect[i], 1e-6);
}

TEST(SynthOracle, RefusesNonEmptyDirectory) {
  const fs::path dir = gcvd::testing::scratch_dir("synth_refuse");
  write_text_file("x", dir / "keep.txt");
  SceneSpec s = small_spec();
  s.frame_count = 2;
  EXPECT_THROW(generate_scene(s, dir), DataError);
  EXPECT_TRUE(fs::exists(dir / "keep.txt"));
}

TEST(SynthOracle, SpecValidation) {
  SceneSpec s = small_spec();
  s.frame_count = 1;
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_spec();
  s.amplitude = s.base_depth;
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_spec();
  s.prior_bias = 1.0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_spec();
  s.trajectory_radius = 0.0;
  EXPECT_THROW(SyntheticScene{s}, DataError);
}

TEST(SynthOracle, SpecKeyValuesRoundTrip) {
  SceneSpec s = small_spec();
  s.prior_bias = 0.125;
  s.trajectory = TrajectoryStyle::kSmooth;
  s.seed = 99;
  const SceneSpec back = SceneSpec::from_key_values(s.to_key_values());
  EXPECT_EQ(back.to_key_values(), s.to_key_values());
  EXPECT_THROW(SceneSpec::from_key_values({{"bogus", "1"}}), ConfigError);
}
