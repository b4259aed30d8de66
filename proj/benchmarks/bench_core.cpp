#include <benchmark/benchmark.h>

#include <random>

#include "gcvd/geometry.hpp"
#include "gcvd/losses.hpp"
#include "gcvd/pose_graph.hpp"
#include "gcvd/rasters_io.hpp"
#include "gcvd/synth_oracle.hpp"

using namespace gcvd;

namespace {

SceneSpec bench_spec(int width) {
  SceneSpec spec;
  spec.frame_count = 8;
  spec.width = width;
  spec.height = width * 3 / 4;
  spec.prior_scale = 1.7;
  spec.prior_bias = 0.2;
  return spec;
}

void BM_RigidFlow(benchmark::State& state) {
  const SyntheticScene scene(bench_spec(static_cast<int>(state.range(0))));
  const DepthMap& depth = scene.frame(0).depth;
  for (auto _ : state) {
    auto result = rigid_flow(depth, scene.pose(0), scene.pose(3), scene.intrinsics());
    benchmark::DoNotOptimize(result);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(depth.size()));
}
BENCHMARK(BM_RigidFlow)->Arg(96)->Arg(192)->Arg(384);

struct LossSetup {
  LossProblem problem;
  std::vector<FrameVariables> vars;
};

LossSetup loss_setup(int width, int frames) {
  const SyntheticScene scene(bench_spec(width));
  const auto [gw, gh] = mesh_grid_size(scene.intrinsics().width, scene.intrinsics().height, 16);
  LossSetup s;
  s.problem.k = scene.intrinsics();
  for (int t = 0; t < frames; ++t) {
    const SyntheticFrame& f = scene.frame(t);
    const DepthMap prior = scene.prior_depth(t);
    const NormalizedPrior n = normalize_log_prior(prior, f.static_mask);
    s.problem.frames.push_back(make_loss_frame(f.image, n.normalized, prior, f.static_mask, gw, gh));
    s.problem.regularized_frames.push_back(t);
    FrameVariables v;
    v.depth.a = n.mean;
    v.depth.b = n.stddev;
    v.depth.mesh = Eigen::MatrixXd::Zero(gh, gw);
    v.base = scene.pose(t);
    s.vars.push_back(v);
  }
  for (int t = 0; t + 1 < frames; ++t) {
    LossPair p;
    p.a = t;
    p.b = t + 1;
    p.adjacent = true;
    p.flow_ab = scene.flow(t, t + 1);
    p.flow_ba = scene.flow(t + 1, t);
    p.flow_valid_ab = Mask(p.flow_ab.width(), p.flow_ab.height(), 1, 1);
    p.flow_valid_ba = p.flow_valid_ab;
    s.problem.pairs.push_back(std::move(p));
  }
  return s;
}

void BM_EvaluateLoss(benchmark::State& state) {
  const LossSetup s = loss_setup(static_cast<int>(state.range(0)), 3);
  const bool with_gradient = state.range(1) != 0;
  std::vector<FrameGradient> grads;
  for (auto _ : state) {
    const double v = evaluate_loss(s.problem, s.vars, nullptr, with_gradient ? &grads : nullptr);
    benchmark::DoNotOptimize(v);
  }
}
BENCHMARK(BM_EvaluateLoss)->Args({96, 0})->Args({96, 1})->Args({192, 0})->Args({192, 1})
    ->Unit(benchmark::kMillisecond);

PoseGraph loop_graph(int keyframes) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<Pose> gt;
  for (int i = 0; i < keyframes; ++i) {
    const double a = 2.0 * 3.141592653589793 * i / keyframes;
    Twist xi;
    xi << 3.0 * std::cos(a), 3.0 * std::sin(a), 0.0, 0.0, 0.0, a;
    gt.push_back(se3_exp(xi));
  }
  auto noisy = [&](const Pose& z) {
    Twist e;
    for (int k = 0; k < 3; ++k) e(k) = 0.01 * noise(rng);
    for (int k = 3; k < 6; ++k) e(k) = 0.005 * noise(rng);
    return se3_exp(e) * z;
  };
  std::vector<RelativeMeasurement> meas;
  const std::vector<int> taus{1, 2, 4, 8};
  for (int tau : taus)
    for (int i = 0; i + tau < keyframes; ++i)
      meas.push_back({i, i + tau, noisy(gt[i + tau] * gt[i].inverse())});
  std::vector<std::pair<int, int>> loops{{0, keyframes - 1}, {1, keyframes - 2}, {2, keyframes - 3}};
  for (auto [i, j] : loops) meas.push_back({i, j, noisy(gt[j] * gt[i].inverse())});
  std::vector<Pose> init{gt[0]};
  for (int i = 1; i < keyframes; ++i) {
    for (const auto& m : meas)
      if (m.i == i - 1 && m.j == i) init.push_back(m.measurement * init.back());
  }
  return build_pose_graph(keyframes, taus, loops, init, meas);
}

void BM_PoseGraph(benchmark::State& state) {
  const PoseGraph graph = loop_graph(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    auto result = optimize_pose_graph(graph);
    benchmark::DoNotOptimize(result);
  }
}
BENCHMARK(BM_PoseGraph)->Arg(40)->Arg(160)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
