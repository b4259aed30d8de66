#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gcvd/rasters_io.hpp"

namespace gcvd {

struct LossWeights {
  double photometric = 1.0;
  double flow = 10.0;
  double consistency = 0.5;
  double gradient = 0.1;
  double deform = 0.5;
};

struct RunConfig {
  // Keyframe selection and association.
  double keyframe_threshold = 0.1;     // accumulated normalised flow per keyframe
  double association_threshold = 0.9;  // descriptor cosine similarity
  std::vector<int> tau_set{1, 2, 4, 8};
  int nms_window = 3;
  double fb_inlier_ratio = 0.5;
  // Forward-backward tolerance in pixels; <= 0 selects max(1, 0.01 * long side).
  double fb_epsilon = 0.0;

  LossWeights weights;
  double dynamic_pair_weight = 4.0;

  int iterations_sequential = 300;
  int iterations_covisible = 100;
  int iterations_nonkeyframe = 100;
  double lr_sequential = 2e-4;
  double lr_covisible = 5e-5;
  double lr_nonkeyframe = 1e-4;
  // Per-group step multipliers applied on top of the stage learning rates
  // (parameters here are poses and depth offsets, not network weights).
  double pose_lr_multiplier = 10.0;
  double depth_lr_multiplier = 10.0;

  int batch_size = 40;
  int depth_long_side = 384;
  int mesh_long_side = 17;
  int keyframe_loss_scale = 4;

  int filter_span = 4;
  double filter_gamma_depth = 2.0;
  double filter_gamma_flow = 0.1;

  int pgo_max_iterations = 100;

  std::uint64_t seed = 0;
  int threads = 1;

  // Ablations.
  bool skip_pgo = false;
  bool use_mesh = true;
  bool uniform_keyframes = false;
  // Flow-based relative pose initialisation of new keyframes.
  bool flow_pose_init = true;

  int association_gap() const;  // max of tau_set
  double fb_tolerance(int long_side) const;

  // Throws ConfigError.
  void validate() const;

  // Unknown keys raise ConfigError; missing keys keep their defaults.
  static RunConfig from_key_values(const KeyValues& kv);
  KeyValues to_key_values() const;
};

}  // namespace gcvd
