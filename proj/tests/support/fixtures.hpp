#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "gcvd/geometry.hpp"
#include "gcvd/losses.hpp"
#include "gcvd/synth_oracle.hpp"

namespace gcvd::testing {

// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

Twist random_twist(std::mt19937_64& rng, double max_rho, double max_phi);
Pose random_pose(std::mt19937_64& rng, double max_rho = 1.0, double max_phi = 3.0);

// Random 16x12 loss problem with 2 or 3 frames and a 3x4 mesh.
struct GradientInstance {
  LossProblem problem;
  std::vector<FrameVariables> vars;
};
GradientInstance make_gradient_instance(std::uint64_t seed, int frames);

struct GradientOracleStats {
  int instances = 0;
  int checked = 0;
  int skipped = 0;  // entries whose +-h probe changed a discrete branch
  int failures = 0;
  double worst_relative_error = 0.0;
  double seconds = 0.0;
};
// Central differences (h = 1e-5) against the analytic gradient for every
// parameter of every frame.
GradientOracleStats run_gradient_oracle(int instances, std::uint64_t seed0);

// 40-keyframe loop with noisy odometry and three loop-closure edges.
struct DriftTrial {
  double ate_before = 0.0;
  double ate_after = 0.0;
  bool cost_monotone = true;
  double seconds = 0.0;
};
DriftTrial pose_graph_drift_trial(std::uint64_t seed);

// Scene used by the end-to-end checks.
SceneSpec acceptance_scene(std::uint64_t seed);

std::vector<Pose> to_camera_to_world(const std::vector<Pose>& world_to_camera);

}  // namespace gcvd::testing
