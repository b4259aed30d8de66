#include "fixtures.hpp"

#include <chrono>
#include <cmath>
#include <numbers>

#include "gcvd/evaluation.hpp"
#include "gcvd/pose_graph.hpp"

namespace gcvd::testing {
namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("gcvd_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Twist random_twist(std::mt19937_64& rng, double max_rho, double max_phi) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Twist xi;
  for (int i = 0; i < 3; ++i) xi[i] = max_rho * u(rng);
  Vec3 axis(u(rng), u(rng), u(rng));
  while (axis.norm() < 1e-3) axis = Vec3(u(rng), u(rng), u(rng));
  xi.tail<3>() = axis.normalized() * (max_phi * std::abs(u(rng)));
  return xi;
}

Pose random_pose(std::mt19937_64& rng, double max_rho, double max_phi) {
  return se3_exp(random_twist(rng, max_rho, max_phi));
}

GradientInstance make_gradient_instance(std::uint64_t seed, int frames) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  constexpr int w = 16;
  constexpr int h = 12;
  GradientInstance inst;
  LossProblem& prob = inst.problem;
  prob.k = Intrinsics{14.0, 14.0, 7.5, 5.5, w, h};
  for (int f = 0; f < frames; ++f) {
    ImageD img(w, h), n(w, h), prior(w, h);
    Mask mask(w, h, 1, 1);
    const double p1 = 3.0 * u(rng), p2 = 3.0 * u(rng);
    const double f1 = 0.5 + 0.3 * u(rng), f2 = 0.4 + 0.2 * u(rng);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        img(x, y) = 0.5 + 0.2 * std::sin(f1 * x + p1) * std::cos(f2 * y + p2) +
                    0.1 * std::sin(0.3 * (x + y) + p1);
        n(x, y) = 0.8 * std::sin(0.2 * x + p2) + 0.5 * std::cos(0.25 * y + p1) + 0.1 * u(rng);
        prior(x, y) = std::exp(1.0 + 0.3 * n(x, y));
        if (u(rng) > 0.8) mask(x, y) = 0;
      }
    }
    prob.frames.push_back(make_loss_frame(img, n, prior, mask, 4, 3));
    prob.regularized_frames.push_back(f);
  }
  inst.vars.resize(frames);
  for (auto& v : inst.vars) {
    v.depth.a = 1.0 + 0.1 * u(rng);
    v.depth.b = 0.3 + 0.1 * u(rng);
    v.depth.mesh = Eigen::MatrixXd(3, 4);
    for (int i = 0; i < 12; ++i) v.depth.mesh.data()[i] = 0.1 * u(rng);
    v.base = se3_exp(random_twist(rng, 0.05, 0.05));
    v.xi = random_twist(rng, 0.02, 0.02);
  }
  for (int a = 0; a + 1 < frames; ++a) {
    LossPair p;
    p.a = a;
    p.b = a + 1;
    p.adjacent = true;
    p.flow_ab = FlowField(w, h, 2);
    p.flow_ba = FlowField(w, h, 2);
    for (auto& v : p.flow_ab.values()) v = u(rng);
    for (auto& v : p.flow_ba.values()) v = u(rng);
    p.flow_valid_ab = Mask(w, h, 1, 1);
    p.flow_valid_ba = Mask(w, h, 1, 1);
    prob.pairs.push_back(std::move(p));
  }
  if (frames == 3) {
    LossPair p;
    p.a = 0;
    p.b = 2;
    p.weight = 0.5;
    prob.pairs.push_back(std::move(p));
  }
  return inst;
}

GradientOracleStats run_gradient_oracle(int instances, std::uint64_t seed0) {
  const auto start = std::chrono::steady_clock::now();
  GradientOracleStats stats;
  stats.instances = instances;
  for (int i = 0; i < instances; ++i) {
    GradientInstance inst = make_gradient_instance(seed0 + i, 2 + i % 2);
    std::vector<FrameGradient> grads;
    std::uint64_t signature = 0;
    evaluate_loss(inst.problem, inst.vars, nullptr, &grads, &signature);
    auto check = [&](double* param, double analytic) {
      constexpr double h = 1e-5;
      const double keep = *param;
      std::uint64_t sp = 0, sm = 0;
      *param = keep + h;
      const double fp = evaluate_loss(inst.problem, inst.vars, nullptr, nullptr, &sp);
      *param = keep - h;
      const double fm = evaluate_loss(inst.problem, inst.vars, nullptr, nullptr, &sm);
      *param = keep;
      if (sp != signature || sm != signature) {
        ++stats.skipped;
        return;
      }
      const double fd = (fp - fm) / (2.0 * h);
      const double rel = std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-6});
      ++stats.checked;
      stats.worst_relative_error = std::max(stats.worst_relative_error, rel);
      if (!(rel <= 1e-3)) ++stats.failures;
    };
    for (std::size_t f = 0; f < inst.vars.size(); ++f) {
      FrameVariables& v = inst.vars[f];
      check(&v.depth.a, grads[f].a);
      check(&v.depth.b, grads[f].b);
      for (int m = 0; m < v.depth.mesh.size(); ++m) check(v.depth.mesh.data() + m, grads[f].mesh.data()[m]);
      for (int d = 0; d < 6; ++d) check(&v.xi[d], grads[f].xi[d]);
    }
  }
  stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return stats;
}

std::vector<Pose> to_camera_to_world(const std::vector<Pose>& world_to_camera) {
  std::vector<Pose> out;
  for (const auto& p : world_to_camera) out.push_back(p.inverse());
  return out;
}

DriftTrial pose_graph_drift_trial(std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  constexpr int kKeyframes = 40;
  constexpr double kRadius = 5.0;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Cameras on a circle looking outwards, world-to-camera.
  std::vector<Pose> gt;
  for (int i = 0; i < kKeyframes; ++i) {
    const double theta = 2.0 * std::numbers::pi * i / kKeyframes;
    const Mat3 r_c2w = so3_exp(Vec3(0.0, -theta, 0.0)).toRotationMatrix();
    const Vec3 c(kRadius * std::sin(theta), 0.2 * std::sin(3.0 * theta), kRadius * std::cos(theta));
    gt.push_back(Pose(r_c2w, c).inverse());
  }
  const double step = (gt[1].center() - gt[0].center()).norm();
  const double rot_sigma = 0.5 * std::numbers::pi / 180.0;
  auto noisy = [&](const Pose& z) {
    Twist xi;
    for (int d = 0; d < 3; ++d) xi[d] = 0.01 * step * normal(rng);
    for (int d = 3; d < 6; ++d) xi[d] = rot_sigma * normal(rng);
    return se3_exp(xi) * z;
  };

  // Every edge gets its own noisy measurement; the initial poses chain the
  // tau = 1 measurements.
  std::vector<RelativeMeasurement> measurements;
  const std::vector<int> taus{1, 2, 4, 8};
  for (int tau : taus) {
    for (int i = 0; i + tau < kKeyframes; ++i) {
      measurements.push_back({i, i + tau, noisy(gt[i + tau] * gt[i].inverse())});
    }
  }
  std::vector<Pose> drifted{gt[0]};
  for (int i = 0; i + 1 < kKeyframes; ++i) drifted.push_back(measurements[i].measurement * drifted.back());
  const std::vector<std::pair<int, int>> loops{{0, kKeyframes - 1}, {1, kKeyframes - 1}, {0, kKeyframes - 2}};
  for (const auto& [i, j] : loops) measurements.push_back({i, j, noisy(gt[j] * gt[i].inverse())});

  const PoseGraph graph = build_pose_graph(kKeyframes, taus, loops, drifted, measurements);
  const PoseGraphResult result = optimize_pose_graph(graph, 100);

  DriftTrial trial;
  const auto gt_c2w = to_camera_to_world(gt);
  trial.ate_before = absolute_trajectory_error(to_camera_to_world(drifted), gt_c2w);
  trial.ate_after = absolute_trajectory_error(to_camera_to_world(result.poses), gt_c2w);
  for (std::size_t i = 1; i < result.cost_history.size(); ++i) {
    if (result.cost_history[i] > result.cost_history[i - 1]) trial.cost_monotone = false;
  }
  trial.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return trial;
}

SceneSpec acceptance_scene(std::uint64_t seed) {
  SceneSpec spec;
  spec.seed = seed;
  spec.frame_count = 120;
  spec.trajectory = TrajectoryStyle::kLoop;
  spec.trajectory_radius = 1.5;
  spec.prior_scale = 1.7;
  spec.prior_bias = 0.2;
  spec.prior_noise = 0.02;
  spec.dynamic_radius = 0.6;
  spec.dynamic_velocity = 0.01;
  return spec;
}

}  // namespace gcvd::testing
