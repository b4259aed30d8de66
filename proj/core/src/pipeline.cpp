#include "gcvd/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>

#include "gcvd/error.hpp"
#include "gcvd/evaluation.hpp"
#include "gcvd/flow_provider.hpp"
#include "gcvd/keyframing.hpp"
#include "gcvd/pose_graph.hpp"
#include "gcvd/post_filter.hpp"
#include "gcvd/synth_oracle.hpp"

namespace gcvd {
namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

// Rethrows with the stage name prefixed, keeping the error category.
template <typename Fn>
auto staged(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError("[" + stage + "] " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError("[" + stage + "] " + e.what());
  } catch (const DataError& e) {
    throw DataError("[" + stage + "] " + e.what());
  } catch (const Error& e) {
    throw Error("[" + stage + "] " + e.what());
  } catch (const std::exception& e) {
    throw Error("[" + stage + "] " + e.what());
  }
}

Raster read_checked(const fs::path& path, int width, int height, int channels) {
  if (!fs::exists(path)) throw DataError("missing file " + path.string());
  Raster r = read_raster(path);
  if (r.width() != width || r.height() != height || r.channels() != channels) {
    throw DataError("unexpected raster shape in " + path.string());
  }
  return r;
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

constexpr const char* kStages[] = {"sequential", "covisible", "pgo", "nonkeyframe"};

}  // namespace

std::vector<std::string> validate_scene(const fs::path& scene_dir) {
  std::vector<std::string> issues;
  SceneLayout layout(scene_dir);
  SceneMeta meta;
  try {
    meta = layout.read_meta();
    meta.intrinsics.validate();
  } catch (const std::exception& e) {
    issues.push_back(std::string("frames.meta: ") + e.what());
    return issues;
  }
  if (meta.frame_count < 2) issues.push_back("frames.meta: frame_count must be >= 2");
  const int w = meta.intrinsics.width;
  const int h = meta.intrinsics.height;
  auto check = [&](const fs::path& path, int channels, int width, int height,
                   auto&& value_check) -> std::optional<Raster> {
    if (!fs::exists(path)) {
      issues.push_back(path.string() + ": missing");
      return std::nullopt;
    }
    try {
      Raster r = read_raster(path);
      if (r.channels() != channels) {
        issues.push_back(path.string() + ": expected " + std::to_string(channels) + " channel(s)");
      } else if ((width > 0 && r.width() != width) || (height > 0 && r.height() != height)) {
        issues.push_back(path.string() + ": unexpected size");
      } else {
        for (float v : r.values()) {
          if (!value_check(v)) {
            issues.push_back(path.string() + ": value out of range");
            break;
          }
        }
      }
      return r;
    } catch (const std::exception& e) {
      issues.push_back(path.string() + ": " + e.what());
      return std::nullopt;
    }
  };
  auto finite = [](float v) { return std::isfinite(v); };
  int descriptor_length = -1;
  for (int t = 0; t < meta.frame_count; ++t) {
    check(layout.frame(t), 1, w, h, [](float v) { return v >= 0.0f && v <= 1.0f; });
    check(layout.prior_depth(t), 1, w, h, [](float v) { return std::isfinite(v) && v > 0.0f; });
    check(layout.static_mask(t), 1, w, h, [](float v) { return v == 0.0f || v == 1.0f; });
    if (t + 1 < meta.frame_count) check(layout.flow_forward(t), 2, w, h, finite);
    if (t > 0) check(layout.flow_backward(t), 2, w, h, finite);
    if (fs::exists(layout.descriptor(t))) {
      auto d = check(layout.descriptor(t), 1, -1, 1, finite);
      if (d) {
        if (descriptor_length < 0) descriptor_length = d->width();
        if (d->width() != descriptor_length) {
          issues.push_back(layout.descriptor(t).string() + ": descriptor length differs");
        }
      }
    }
  }
  const fs::path pairs = scene_dir / "pairs";
  if (fs::is_directory(pairs)) {
    for (const auto& entry : fs::directory_iterator(pairs)) {
      int i = 0, j = 0;
      char tail[8] = {0};
      const std::string name = entry.path().filename().string();
      if (std::sscanf(name.c_str(), "flow_%d_%d.%7s", &i, &j, tail) != 3 ||
          std::string(tail) != "gcvdr" || i < 0 || j < 0 || i >= meta.frame_count ||
          j >= meta.frame_count) {
        issues.push_back(entry.path().string() + ": unexpected pair file");
        continue;
      }
      check(entry.path(), 2, w, h, finite);
    }
  }
  return issues;
}

VideoData load_video(const SceneLayout& layout) {
  if (!fs::exists(layout.meta())) {
    throw DataError("scene has no frames.meta: " + layout.root().string());
  }
  const SceneMeta meta = layout.read_meta();
  meta.intrinsics.validate();
  if (meta.frame_count < 2) throw DataError("need >= 2 frames");
  const int n = meta.frame_count;
  const int w = meta.intrinsics.width;
  const int h = meta.intrinsics.height;
  VideoData v;
  v.k = meta.intrinsics;
  v.images.resize(n);
  v.priors.resize(n);
  v.masks.resize(n);
  v.normalized.resize(n);
  v.adjacent.forward.resize(n - 1);
  v.adjacent.backward.resize(n);
  for (int t = 0; t < n; ++t) {
    v.images[t] = image_cast<double>(read_checked(layout.frame(t), w, h, 1));
    v.priors[t] = image_cast<double>(read_checked(layout.prior_depth(t), w, h, 1));
    v.masks[t] = mask_from_raster(read_checked(layout.static_mask(t), w, h, 1));
    if (t + 1 < n) v.adjacent.forward[t] = image_cast<double>(read_checked(layout.flow_forward(t), w, h, 2));
    if (t > 0) v.adjacent.backward[t] = image_cast<double>(read_checked(layout.flow_backward(t), w, h, 2));
    try {
      v.normalized[t] = normalize_log_prior(v.priors[t], v.masks[t]);
    } catch (const DataError& e) {
      throw DataError("frame " + std::to_string(t) + ": " + e.what());
    }
  }
  return v;
}

FlowSource flow_source_from_string(const std::string& name) {
  if (name == "auto") return FlowSource::kAuto;
  if (name == "files") return FlowSource::kFiles;
  if (name == "oracle") return FlowSource::kOracle;
  throw ConfigError("unknown flow source '" + name + "'");
}

KeyValues RunReport::to_key_values() const {
  KeyValues kv;
  kv["frame_count"] = std::to_string(frame_count);
  kv["keyframe_count"] = std::to_string(keyframe_count);
  kv["keyframes"] = join(keyframes);
  kv["sequential_edges"] = std::to_string(sequential_edges);
  kv["covisible_edges"] = std::to_string(covisible_edges);
  kv["candidate_pairs"] = std::to_string(candidate_pairs);
  kv["rejected_pairs"] = std::to_string(rejected_pairs);
  kv["pgo_initial_cost"] = fmt(pgo_initial_cost);
  kv["pgo_final_cost"] = fmt(pgo_final_cost);
  kv["pgo_iterations"] = std::to_string(pgo_iterations);
  kv["flow_source"] = flow_source;
  for (const auto& l : losses) {
    kv["loss_" + l.stage + "_entries"] = std::to_string(l.entries);
    kv["loss_" + l.stage + "_first"] = fmt(l.first);
    kv["loss_" + l.stage + "_last"] = fmt(l.last);
  }
  for (const auto& t : timings) kv["time_" + t.stage] = fmt(t.seconds);
  kv["time_total"] = fmt(total_seconds);
  return kv;
}


namespace {

enum Stage { kNone = 0, kSequentialDone, kCovisibleDone, kPgoDone, kNonkeyframeDone };

std::vector<RelativeMeasurement> read_measurements(const fs::path& path) {
  std::vector<RelativeMeasurement> out;
  for (const auto& e : parse_pose_graph_edges(read_text_file(path))) out.push_back({e.i, e.j, e.measurement});
  return out;
}

void write_measurements(const std::vector<RelativeMeasurement>& m, const fs::path& path) {
  PoseGraph g;
  for (const auto& r : m) g.edges.push_back({r.i, r.j, r.measurement, Vec6::Ones(), true});
  write_pose_graph(g, path);
}

std::vector<double> timestamps(const SceneMeta& meta) {
  std::vector<double> ts(meta.frame_count);
  for (int t = 0; t < meta.frame_count; ++t) ts[t] = t / meta.fps;
  return ts;
}

}  // namespace

RunReport run_pipeline(const RunOptions& options) {
  RunReport report;
  const RunConfig& config = options.config;
  Stopwatch sw;
  auto lap = [&](const std::string& stage) {
    report.timings.push_back({stage, sw.seconds()});
    sw = Stopwatch();
  };

  staged("config", [&] { config.validate(); });
  const SceneLayout layout(options.scene);
  const VideoData video = staged("load", [&] { return load_video(layout); });
  const SceneMeta meta = layout.read_meta();
  const int n = video.frame_count();
  const int long_side = video.k.long_side();
  report.frame_count = n;

  std::unique_ptr<SyntheticScene> oracle_scene;
  std::unique_ptr<FlowProvider> provider;
  staged("load", [&] {
    const bool have_spec = fs::exists(layout.gt_scene_spec());
    const bool oracle = options.flow_source == FlowSource::kOracle ||
                        (options.flow_source == FlowSource::kAuto && have_spec);
    if (oracle) {
      if (!have_spec) throw DataError("oracle flows requested but gt/scene.spec is missing");
      oracle_scene = std::make_unique<SyntheticScene>(
          SceneSpec::from_key_values(read_key_values(layout.gt_scene_spec())));
      if (oracle_scene->frame_count() != n || oracle_scene->intrinsics().width != video.k.width ||
          oracle_scene->intrinsics().height != video.k.height) {
        throw DataError("gt/scene.spec does not match frames.meta");
      }
      provider = std::make_unique<OracleFlowProvider>(*oracle_scene);
    } else {
      provider = std::make_unique<FileFlowProvider>(layout, video.adjacent);
    }
  });
  report.flow_source = provider->name();

  fs::create_directories(options.out);
  if (!options.resume) {
    for (const char* stage : kStages) fs::remove(options.out / (std::string("loss_") + stage + ".txt"));
    fs::remove_all(options.out / "checkpoints");
  }
  const fs::path ckpt = options.out / "checkpoints";
  const fs::path progress_path = ckpt / "progress.txt";
  // Each completed stage gets its own directory; progress.txt names the last
  // complete one and is replaced atomically, so a killed run resumes from a
  // consistent snapshot.
  auto stage_dir = [&](int stage) { return ckpt / ("stage_" + std::to_string(stage)); };
  KeyValues progress;
  int completed = kNone;
  if (options.resume && fs::exists(progress_path)) {
    progress = read_key_values(progress_path);
    try {
      completed = std::stoi(progress.at("completed"));
    } catch (const std::exception&) {
      throw DataError("malformed " + progress_path.string());
    }
    spdlog::info("resuming after stage {}", completed);
  }
  JointOptimizer optimizer(video, *provider, config);
  lap("load");

  std::vector<int> keyframes;
  if (completed > kNone) {
    keyframes = split_ints(progress.at("keyframes"));
  } else {
    keyframes = staged("keyframes", [&] {
      std::vector<double> steps(n - 1);
      for (int t = 0; t + 1 < n; ++t) {
        steps[t] = mean_static_flow_magnitude(video.adjacent.forward[t], video.masks[t], long_side);
      }
      std::vector<int> k = select_keyframes(steps, config.keyframe_threshold).indices;
      if (config.uniform_keyframes) k = uniform_keyframes(n, static_cast<int>(k.size()));
      return k;
    });
  }
  const int kcount = static_cast<int>(keyframes.size());
  report.keyframes = keyframes;
  report.keyframe_count = kcount;
  spdlog::info("keyframes: {} of {} frames", kcount, n);
  lap("keyframes");

  std::vector<std::pair<int, int>> accepted;
  if (completed > kNone) {
    const auto flat = split_ints(progress.at("covisible"));
    for (std::size_t i = 0; i + 1 < flat.size(); i += 2) accepted.emplace_back(flat[i], flat[i + 1]);
    report.candidate_pairs = std::stoul(progress.at("candidate_pairs"));
    report.rejected_pairs = std::stoul(progress.at("rejected_pairs"));
  } else {
    staged("association", [&] {
      std::vector<Eigen::VectorXd> desc;
      for (int t : keyframes) {
        if (fs::exists(layout.descriptor(t))) {
          const Raster r = read_raster(layout.descriptor(t));
          Eigen::VectorXd d(r.width());
          for (int i = 0; i < r.width(); ++i) d[i] = r[i];
          desc.push_back(d);
        } else {
          desc.push_back(image_descriptor(video.images[t]));
        }
      }
      const auto candidates = associate_candidates(similarity_matrix(desc), config.association_threshold,
                                                   config.association_gap(), config.nms_window);
      report.candidate_pairs = candidates.size();
      for (const auto& c : candidates) {
        PairVerification v;
        try {
          const PairFlow ij = provider->flow(keyframes[c.i], keyframes[c.j]);
          const PairFlow ji = provider->flow(keyframes[c.j], keyframes[c.i]);
          v = verify_pair(ij.flow, ji.flow, video.masks[keyframes[c.i]], config.keyframe_threshold,
                          long_side, config.fb_tolerance(long_side), config.fb_inlier_ratio);
        } catch (const DataError& e) {
          v.reason = e.what();
        }
        if (v.accepted) {
          accepted.emplace_back(c.i, c.j);
        } else {
          ++report.rejected_pairs;
          spdlog::info("pair ({}, {}) rejected: {}", keyframes[c.i], keyframes[c.j], v.reason);
        }
      }
    });
  }
  spdlog::info("co-visible pairs: {} candidates, {} accepted", report.candidate_pairs, accepted.size());
  lap("association");

  if (completed > kNone) {
    std::vector<FrameVariables> state(n);
    std::vector<bool> initialized(n, false);
    staged("resume", [&] {
      read_checkpoint(stage_dir(completed), &state, &initialized);
      optimizer.restore(std::move(state), std::move(initialized));
    });
  }
  std::vector<RelativeMeasurement> measurements;
  auto save_progress = [&](int stage) {
    const fs::path dir = stage_dir(stage);
    fs::remove_all(dir);
    write_checkpoint(optimizer.state(), optimizer.initialized(), dir);
    write_measurements(measurements, dir / "measurements.txt");
    std::vector<int> flat;
    for (const auto& [i, j] : accepted) {
      flat.push_back(i);
      flat.push_back(j);
    }
    progress["completed"] = std::to_string(stage);
    progress["keyframes"] = join(keyframes);
    progress["covisible"] = join(flat);
    progress["candidate_pairs"] = std::to_string(report.candidate_pairs);
    progress["rejected_pairs"] = std::to_string(report.rejected_pairs);
    const fs::path tmp = ckpt / "progress.txt.tmp";
    write_key_values(progress, tmp);
    fs::rename(tmp, progress_path);
    for (int old = kSequentialDone; old < stage; ++old) fs::remove_all(stage_dir(old));
  };
  auto save_log = [&](const std::string& stage) {
    for (const auto& log : optimizer.logs()) {
      if (log.stage == stage) write_loss_log(log, options.out / ("loss_" + stage + ".txt"));
    }
  };

  if (completed >= kSequentialDone) {
    measurements = staged("resume", [&] { return read_measurements(stage_dir(completed) / "measurements.txt"); });
  } else {
    measurements = staged("sequential", [&] { return optimizer.optimize_sequential_keyframes(keyframes); });
    save_log("sequential");
    save_progress(kSequentialDone);
  }
  lap("sequential");

  if (completed < kCovisibleDone) {
    auto covisible = staged("covisible", [&] { return optimizer.optimize_covisible_pairs(keyframes, accepted); });
    save_log("covisible");
    measurements.insert(measurements.end(), covisible.begin(), covisible.end());
    save_progress(kCovisibleDone);
  }
  lap("covisible");

  staged("pgo", [&] {
    std::vector<Pose> initial;
    for (int t : keyframes) initial.push_back(optimizer.state()[t].pose());
    const PoseGraph graph = build_pose_graph(kcount, config.tau_set, accepted, initial, measurements);
    report.sequential_edges = graph.sequential_edge_count();
    report.covisible_edges = graph.covisible_edge_count();
    write_pose_graph(graph, options.out / "pose_graph.txt");
    if (completed >= kPgoDone) {
      report.pgo_initial_cost = std::stod(progress.at("pgo_initial_cost"));
      report.pgo_final_cost = std::stod(progress.at("pgo_final_cost"));
      report.pgo_iterations = std::stoi(progress.at("pgo_iterations"));
      return;
    }
    if (config.skip_pgo) {
      report.pgo_initial_cost = report.pgo_final_cost = graph_cost(graph, initial);
    } else {
      const PoseGraphResult r = optimize_pose_graph(graph, config.pgo_max_iterations);
      report.pgo_initial_cost = r.initial_cost;
      report.pgo_final_cost = r.final_cost;
      report.pgo_iterations = r.iterations;
      optimizer.set_keyframe_poses(keyframes, r.poses);
    }
    progress["pgo_initial_cost"] = fmt(report.pgo_initial_cost);
    progress["pgo_final_cost"] = fmt(report.pgo_final_cost);
    progress["pgo_iterations"] = std::to_string(report.pgo_iterations);
    save_progress(kPgoDone);
  });
  lap("pgo");

  if (completed < kNonkeyframeDone) {
    staged("nonkeyframe", [&] { optimizer.optimize_nonkeyframes(keyframes); });
    save_log("nonkeyframe");
    save_progress(kNonkeyframeDone);
  }
  lap("nonkeyframe");

  const std::vector<Pose> poses = optimizer.poses();
  std::vector<DepthMap> filtered(n);
  staged("filter", [&] {
    const std::vector<DepthMap> raw = optimizer.depths();
    const FilterParams params{config.filter_span, config.filter_gamma_depth, config.filter_gamma_flow};
    for (int t = 0; t < n; ++t) filtered[t] = filter_depth(t, raw, poses, video.k, video.adjacent, params);
  });
  lap("filter");

  staged("export", [&] {
    write_trajectory(poses, timestamps(meta), options.out / "trajectory.txt");
    fs::create_directories(options.out / "depth");
    for (int t = 0; t < n; ++t) {
      write_raster(image_cast<float>(filtered[t]), options.out / "depth" / indexed_name("depth_", t));
    }
    SceneLayout(options.out).write_meta(meta);
    std::string kf;
    for (int t : keyframes) kf += std::to_string(t) + "\n";
    write_text_file(kf, options.out / "keyframes.txt");
    write_key_values(config.to_key_values(), options.out / "config.txt");
    for (const char* stage : kStages) {
      const fs::path path = options.out / (std::string("loss_") + stage + ".txt");
      if (!fs::exists(path)) continue;
      // Summaries come from the written logs so a resumed run reports the same curves.
      StageLossSummary s{stage, 0, 0.0, 0.0};
      std::istringstream in(read_text_file(path));
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream fields(line);
        int w = 0, it = 0;
        double total = 0.0;
        fields >> w >> it >> total;
        if (s.entries++ == 0) s.first = total;
        s.last = total;
      }
      report.losses.push_back(s);
    }
    for (int t : options.point_cloud_frames) {
      if (t < 0 || t >= n) throw ConfigError("point cloud frame " + std::to_string(t) + " out of range");
    }
    if (!options.point_cloud_frames.empty()) {
      export_point_cloud(options.out, options.point_cloud_frames, options.out / "points.xyz");
    }
  });
  lap("export");

  for (const auto& t : report.timings) report.total_seconds += t.seconds;
  write_key_values(report.to_key_values(), options.out / "report.txt");
  return report;
}

namespace {

void add_line(std::string& out, const std::string& key, double v) { out += key + " = " + fmt(v) + "\n"; }

void add_metrics(std::string& out, const std::string& prefix, const DepthMetrics& m) {
  add_line(out, prefix + "abs_rel", m.abs_rel);
  add_line(out, prefix + "sq_rel", m.sq_rel);
  add_line(out, prefix + "rmse", m.rmse);
  add_line(out, prefix + "delta_1.25", m.delta_125);
  out += prefix + "frames = " + std::to_string(m.frames) + "\n";
  out += prefix + "excluded_frames = " + std::to_string(m.excluded_frames) + "\n";
}

bool metrics_nan(const DepthMetrics& m) {
  return std::isnan(m.abs_rel) || std::isnan(m.sq_rel) || std::isnan(m.rmse) || std::isnan(m.delta_125);
}

std::vector<DepthMap> read_depths(const fs::path& dir, const std::string& prefix, int n, int w, int h) {
  std::vector<DepthMap> out;
  for (int t = 0; t < n; ++t) out.push_back(image_cast<double>(read_checked(dir / indexed_name(prefix, t), w, h, 1)));
  return out;
}

}  // namespace

std::string EvalReport::format() const {
  std::string out;
  out += "frames = " + std::to_string(frames) + "\n";
  add_line(out, "ate", ate);
  add_line(out, "trajectory_extent", trajectory_extent);
  add_line(out, "ate_relative", ate_relative);
  add_line(out, "rpe_translation", rpe_translation);
  add_line(out, "rpe_rotation_deg", rpe_rotation_deg);
  add_metrics(out, "depth_", depth);
  if (has_prior) add_metrics(out, "prior_", prior);
  return out;
}

std::string EvalReport::csv_header() {
  return "frames,ate,trajectory_extent,ate_relative,rpe_translation,rpe_rotation_deg,abs_rel,sq_rel,"
         "rmse,delta_1.25,prior_abs_rel";
}

std::string EvalReport::csv_row() const {
  std::string out = std::to_string(frames);
  for (double v : {ate, trajectory_extent, ate_relative, rpe_translation, rpe_rotation_deg, depth.abs_rel,
                   depth.sq_rel, depth.rmse, depth.delta_125}) {
    out += "," + fmt(v);
  }
  out += "," + (has_prior ? fmt(prior.abs_rel) : std::string());
  return out;
}

bool EvalReport::has_nan() const {
  for (double v : {ate, trajectory_extent, ate_relative, rpe_translation, rpe_rotation_deg}) {
    if (std::isnan(v)) return true;
  }
  return metrics_nan(depth) || (has_prior && metrics_nan(prior));
}

EvalReport evaluate_run(const fs::path& run_dir, const fs::path& scene_dir, int rpe_step) {
  const SceneLayout scene(scene_dir);
  const SceneMeta meta = scene.read_meta();
  const int n = meta.frame_count;
  const int w = meta.intrinsics.width;
  const int h = meta.intrinsics.height;
  if (!fs::exists(scene.gt_trajectory())) throw DataError("scene has no ground truth trajectory");

  std::vector<Pose> est, gt;
  for (const auto& e : read_trajectory(run_dir / "trajectory.txt")) est.push_back(e.camera_to_world);
  for (const auto& e : read_trajectory(scene.gt_trajectory())) gt.push_back(e.camera_to_world);
  if (est.size() != gt.size()) {
    throw DataError("trajectory lengths differ: " + std::to_string(est.size()) + " vs " +
                    std::to_string(gt.size()));
  }
  if (static_cast<int>(gt.size()) != n) throw DataError("ground truth trajectory length differs from frames.meta");

  EvalReport r;
  r.frames = n;
  r.ate = absolute_trajectory_error(est, gt);
  r.trajectory_extent = trajectory_extent(gt);
  r.ate_relative = r.trajectory_extent > 0.0 ? r.ate / r.trajectory_extent
                                             : std::numeric_limits<double>::quiet_NaN();
  const RelativePoseError rpe = relative_pose_error(est, gt, rpe_step);
  r.rpe_translation = rpe.translation_rmse;
  r.rpe_rotation_deg = rpe.rotation_mean_deg;

  std::vector<DepthMap> gt_depth;
  for (int t = 0; t < n; ++t) gt_depth.push_back(image_cast<double>(read_checked(scene.gt_depth(t), w, h, 1)));
  r.depth = depth_metrics(read_depths(run_dir / "depth", "depth_", n, w, h), gt_depth);
  bool priors = true;
  for (int t = 0; t < n && priors; ++t) priors = fs::exists(scene.prior_depth(t));
  if (priors) {
    std::vector<DepthMap> prior;
    for (int t = 0; t < n; ++t) prior.push_back(image_cast<double>(read_checked(scene.prior_depth(t), w, h, 1)));
    r.prior = depth_metrics(prior, gt_depth);
    r.has_prior = true;
  }
  return r;
}

void export_point_cloud(const fs::path& run_dir, const std::vector<int>& frames, const fs::path& out) {
  const SceneLayout run(run_dir);
  const SceneMeta meta = run.read_meta();
  const Intrinsics& k = meta.intrinsics;
  const auto traj = read_trajectory(run_dir / "trajectory.txt");
  if (static_cast<int>(traj.size()) != meta.frame_count) throw DataError("trajectory length differs from frames.meta");
  std::string text;
  char buf[96];
  for (int t : frames) {
    if (t < 0 || t >= meta.frame_count) throw DataError("frame " + std::to_string(t) + " out of range");
    const DepthMap d =
        image_cast<double>(read_checked(run_dir / "depth" / indexed_name("depth_", t), k.width, k.height, 1));
    const Pose& c2w = traj[t].camera_to_world;
    for (int y = 0; y < k.height; ++y) {
      for (int x = 0; x < k.width; ++x) {
        const double z = d(x, y);
        if (!std::isfinite(z) || z <= 0.0) continue;
        const Vec3 p = c2w * backproject(Vec2(x, y), z, k);
        std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g\n", p.x(), p.y(), p.z());
        text += buf;
      }
    }
  }
  write_text_file(text, out);
}

}  // namespace gcvd
