#pragma once

#include <string>
#include <vector>

#include "gcvd/geometry.hpp"
#include "gcvd/image.hpp"

namespace gcvd {

struct Similarity {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
};

// Least-squares similarity gt ~ s R est + t (closed form, reflection
// corrected). Throws DataError for fewer than 3 points or degenerate
// (coincident / collinear) configurations.
Similarity umeyama_align(const std::vector<Vec3>& est, const std::vector<Vec3>& gt,
                         bool with_scale = true);

// Trajectories are camera-to-world poses (TUM convention).
double absolute_trajectory_error(const std::vector<Pose>& est_c2w,
                                 const std::vector<Pose>& gt_c2w);

struct RelativePoseError {
  double translation_rmse = 0.0;
  double rotation_mean_deg = 0.0;
};

// E_i = (gt_i^-1 gt_{i+step})^-1 (est_i^-1 est_{i+step}) after applying the
// ATE alignment to the estimate. Throws DataError when step >= length.
RelativePoseError relative_pose_error(const std::vector<Pose>& est_c2w,
                                      const std::vector<Pose>& gt_c2w, int step = 1);

struct DepthMetrics {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double delta_125 = 0.0;
  int frames = 0;           // frames that contributed
  int excluded_frames = 0;  // frames skipped for an empty valid set
};

// Per-frame median scaling (median of gt/est over valid pixels), metrics
// averaged over frames. Pixels are valid where the mask is set and both
// depths are positive and finite; an empty `masks` vector means all pixels.
DepthMetrics depth_metrics(const std::vector<DepthMap>& est, const std::vector<DepthMap>& gt,
                           const std::vector<Mask>& masks = {});

// Single-frame metrics after median scaling; returns false for an empty set.
bool frame_depth_metrics(const DepthMap& est, const DepthMap& gt, const Mask* mask,
                         DepthMetrics* out);

double trajectory_extent(const std::vector<Pose>& c2w);

}  // namespace gcvd
