#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gcvd/evaluation.hpp"
#include "gcvd/joint_optimizer.hpp"
#include "gcvd/rasters_io.hpp"
#include "gcvd/run_config.hpp"

namespace gcvd {

// Problems found in a scene directory (empty when the scene is well formed):
// missing files, wrong channel counts or sizes, non-positive depth, non-binary
// masks, out-of-range images, inconsistent descriptor lengths.
std::vector<std::string> validate_scene(const std::filesystem::path& scene_dir);

// Reads frames, priors, masks and adjacent flows. Throws DataError naming the
// missing or malformed file.
VideoData load_video(const SceneLayout& layout);

enum class FlowSource { kAuto, kFiles, kOracle };
FlowSource flow_source_from_string(const std::string& name);

struct RunOptions {
  std::filesystem::path scene;
  std::filesystem::path out;
  RunConfig config;
  FlowSource flow_source = FlowSource::kAuto;
  bool resume = false;
  std::vector<int> point_cloud_frames;
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct StageLossSummary {
  std::string stage;
  std::size_t entries = 0;
  double first = 0.0;
  double last = 0.0;
};

struct RunReport {
  int frame_count = 0;
  int keyframe_count = 0;
  std::vector<int> keyframes;
  std::size_t sequential_edges = 0;
  std::size_t covisible_edges = 0;
  std::size_t candidate_pairs = 0;
  std::size_t rejected_pairs = 0;
  double pgo_initial_cost = 0.0;
  double pgo_final_cost = 0.0;
  int pgo_iterations = 0;
  std::string flow_source;
  std::vector<StageLossSummary> losses;  // full curves go to loss_<stage>.txt
  std::vector<StageTiming> timings;
  double total_seconds = 0.0;  // sum of the stage timings

  KeyValues to_key_values() const;
};

// Keyframes -> association -> sequential keyframes -> co-visible pairs ->
// pose graph -> non-keyframes -> post filter -> exports. Errors are rethrown
// with the failing stage in the message.
RunReport run_pipeline(const RunOptions& options);

struct EvalReport {
  int frames = 0;
  double ate = 0.0;
  double trajectory_extent = 0.0;
  double ate_relative = 0.0;  // ate / extent
  double rpe_translation = 0.0;
  double rpe_rotation_deg = 0.0;
  DepthMetrics depth;
  bool has_prior = false;
  DepthMetrics prior;  // the scene's prior depth against the same ground truth

  // Stable "key = value" lines.
  std::string format() const;
  static std::string csv_header();
  std::string csv_row() const;
  bool has_nan() const;
};

// Compares a run directory (trajectory.txt, depth/) with a scene's gt/.
EvalReport evaluate_run(const std::filesystem::path& run_dir,
                        const std::filesystem::path& scene_dir, int rpe_step = 1);

// One "x y z" line per pixel of the selected frames, in world coordinates.
void export_point_cloud(const std::filesystem::path& run_dir, const std::vector<int>& frames,
                        const std::filesystem::path& out);

}  // namespace gcvd
