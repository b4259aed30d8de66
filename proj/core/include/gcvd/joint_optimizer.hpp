#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gcvd/flow_provider.hpp"
#include "gcvd/geometry.hpp"
#include "gcvd/losses.hpp"
#include "gcvd/pose_graph.hpp"
#include "gcvd/rasters_io.hpp"
#include "gcvd/run_config.hpp"

namespace gcvd {

// Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8 and bias correction.
class Adam {
 public:
  explicit Adam(std::size_t size);
  // Entries with a zero learning rate are left untouched (and keep no state).
  void step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grad,
            const Eigen::VectorXd& lr);
  int iteration() const { return t_; }

 private:
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  int t_ = 0;
};

// Inclusive [first, last] windows of `batch` items advancing by
// batch - overlap; the last window ends at count - 1.
std::vector<std::pair<int, int>> make_windows(int count, int batch, int overlap);

// Relative pose Z (camera a -> camera b) minimising the robust reprojection
// error between the depth-induced motion of pixels in `valid` and the flow.
Pose estimate_relative_pose(const DepthMap& depth_a, const FlowField& flow_ab, const Mask& valid,
                            const Intrinsics& k, const Pose& initial, int iterations = 15);

// Full-resolution inputs of a video.
struct VideoData {
  Intrinsics k;
  std::vector<ImageD> images;
  std::vector<DepthMap> priors;
  std::vector<Mask> masks;
  std::vector<NormalizedPrior> normalized;
  AdjacentFlows adjacent;

  int frame_count() const { return static_cast<int>(images.size()); }
};

struct LossLogEntry {
  int window = 0;
  int iteration = 0;
  LossBreakdown loss;
};

struct StageLog {
  std::string stage;
  std::vector<LossLogEntry> entries;
};

class JointOptimizer {
 public:
  JointOptimizer(const VideoData& video, const FlowProvider& flows, const RunConfig& config);

  // Per-frame variables; poses are world-to-camera.
  std::vector<FrameVariables>& state() { return state_; }
  const std::vector<FrameVariables>& state() const { return state_; }
  const std::vector<bool>& initialized() const { return initialized_; }
  // Loads a checkpointed state (see read_checkpoint).
  void restore(std::vector<FrameVariables> state, std::vector<bool> initialized);

  // Keyframe windows at the reduced loss scale. Returns Z for every sequential
  // edge (i, i + tau), indexed by keyframe position.
  std::vector<RelativeMeasurement> optimize_sequential_keyframes(const std::vector<int>& keyframes);

  // Refines the two poses of every pair (keyframe positions) on a copy of the
  // state and returns the measured Z_ij; the state is not modified.
  std::vector<RelativeMeasurement> optimize_covisible_pairs(
      const std::vector<int>& keyframes, const std::vector<std::pair<int, int>>& pairs);

  // Replaces keyframe poses (e.g. after pose-graph optimisation).
  void set_keyframe_poses(const std::vector<int>& keyframes, const std::vector<Pose>& poses);

  // Interpolates non-keyframe poses, initialises their depth from the nearest
  // keyframe and refines all frames at full resolution with keyframe poses
  // frozen.
  void optimize_nonkeyframes(const std::vector<int>& keyframes);

  std::vector<Pose> poses() const;
  std::vector<DepthMap> depths() const;
  const std::vector<StageLog>& logs() const { return logs_; }

 private:
  struct WindowPair {
    int a = 0;
    int b = 0;
    double weight = 1.0;
    bool adjacent = false;
  };
  struct WindowSpec {
    std::vector<int> frames;
    std::vector<WindowPair> pairs;
    std::vector<bool> depth_trainable;
    std::vector<bool> pose_trainable;
    int scale = 1;
    int iterations = 0;
    double lr = 0.0;
    int window = 0;
  };

  const LossFrame& loss_frame(int t, int scale);
  std::pair<FlowField, Mask> observed_flow(int a, int b, int scale) const;
  void run_window(const WindowSpec& spec, std::vector<FrameVariables>& vars, StageLog& log);
  void init_depth_from(int t, int source);
  void init_prior_depth(int t);
  std::pair<int, int> grid() const { return grid_; }

  const VideoData& video_;
  const FlowProvider& flows_;
  RunConfig config_;
  std::pair<int, int> grid_;  // mesh (width, height)
  std::vector<FrameVariables> state_;
  std::vector<bool> initialized_;
  std::map<std::pair<int, int>, LossFrame> frame_cache_;
  std::vector<StageLog> logs_;
};

// Twist-space interpolation: exp(s * log(P1 P0^-1)) P0.
Pose interpolate_pose(const Pose& p0, const Pose& p1, double s);

// Per-frame checkpoint rasters (a, b, mesh, twist, base pose) stored as
// float32 hi/lo pairs so doubles round-trip to ~1e-14 relative.
void write_checkpoint(const std::vector<FrameVariables>& state, const std::vector<bool>& initialized,
                      const std::filesystem::path& dir);
// `state` and `initialized` must already hold one entry per frame; frames
// without a checkpoint file are marked uninitialised.
void read_checkpoint(const std::filesystem::path& dir, std::vector<FrameVariables>* state,
                     std::vector<bool>* initialized);

void write_loss_log(const StageLog& log, const std::filesystem::path& path);

}  // namespace gcvd
