#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gcvd/geometry.hpp"
#include "gcvd/image.hpp"
#include "gcvd/rasters_io.hpp"

namespace gcvd {

enum class TrajectoryStyle { kSmooth, kLoop, kForward };

std::string to_string(TrajectoryStyle style);
TrajectoryStyle trajectory_style_from_string(const std::string& name);

struct SceneSpec {
  std::uint64_t seed = 7;
  int frame_count = 120;
  int width = 96;
  int height = 72;
  double focal = 0.0;  // <= 0: 0.9 * width
  TrajectoryStyle trajectory = TrajectoryStyle::kLoop;
  double trajectory_radius = 1.0;
  // 0 keeps the optical axis on +Z, 1 points every camera at the scene centre.
  double look_at_blend = 0.3;

  double base_depth = 4.0;
  double amplitude = 0.5;
  double surface_frequency = 0.6;  // rad per world unit

  int texture_octaves = 3;
  double texture_contrast = 0.35;
  double texture_frequency = 2.0;

  double prior_scale = 1.0;
  double prior_bias = 0.0;        // beta
  double prior_bias_drift = 0.0;  // bias phase advance per frame, radians
  double prior_noise = 0.0;       // sigma of additive log noise

  // Moving-content disk on the surface (disabled when radius is 0).
  double dynamic_radius = 0.0;
  double dynamic_velocity = 0.0;  // world units per frame along +X
  double dynamic_center_x = 0.0;
  double dynamic_center_y = 0.0;

  double fps = 30.0;

  // Throws ConfigError.
  void validate() const;
  Intrinsics intrinsics() const;

  static SceneSpec from_key_values(const KeyValues& kv);
  KeyValues to_key_values() const;
};

// Per-frame render products.
struct SyntheticFrame {
  ImageD image;       // grayscale in [0, 1]
  DepthMap depth;     // exact z-depth
  Mask static_mask;   // 0 inside the dynamic disk
  std::vector<Vec3> hits;  // world-space surface point per pixel
};

// Deterministic height-field scene. Frames are rendered lazily and cached;
// the cache makes a scene instance unsafe to share between threads.
class SyntheticScene {
 public:
  explicit SyntheticScene(SceneSpec spec);

  const SceneSpec& spec() const { return spec_; }
  const Intrinsics& intrinsics() const { return k_; }
  int frame_count() const { return spec_.frame_count; }

  // World-to-camera.
  Pose pose(int t) const;
  const std::vector<Pose>& poses() const { return poses_; }

  double surface_height(double x, double y) const;
  double texture(double x, double y) const;
  double dynamic_texture(double x, double y) const;
  bool in_dynamic_region(double x, double y) const;

  // First intersection of the ray through `pixel` with the surface. Returns
  // the ray parameter, which equals the z-depth because the ray direction has
  // unit camera-z component.
  std::optional<double> cast_ray(int t, const Vec2& pixel) const;

  const SyntheticFrame& frame(int t) const;

  // Exact image-space motion a -> b: rigid for static pixels, rigid plus the
  // content translation inside the dynamic disk.
  FlowField flow(int a, int b) const;
  // Corrupted prior depth of frame t.
  DepthMap prior_depth(int t) const;

 private:
  void build_surface();
  void build_trajectory();
  SyntheticFrame render(int t) const;

  SceneSpec spec_;
  Intrinsics k_;
  std::vector<Pose> poses_;
  struct Wave {
    double fx, fy, phase, weight;
  };
  std::vector<Wave> surface_waves_;
  std::vector<Wave> texture_waves_;
  std::vector<Wave> dynamic_waves_;
  double bias_phase_u_ = 0.0;
  double bias_phase_v_ = 0.0;
  mutable std::vector<std::optional<SyntheticFrame>> cache_;
};

// Writes the scene layout (frames, priors, masks, descriptors, meta) and the
// ground truth (gt depths, trajectory, scene.spec). Refuses to write into a
// non-empty directory unless `force`.
void generate_scene(const SceneSpec& spec, const std::filesystem::path& out, bool force = false);

struct PairConsistency {
  double max_residual = 0.0;
  double mean_residual = 0.0;
  std::size_t valid_pixels = 0;
};

// Warps frame b into frame a with ground-truth depth and poses and reports the
// L1 residual over valid static pixels; an empty valid set gives zeros.
PairConsistency render_pair_consistency_check(const SyntheticScene& scene, int a, int b);

}  // namespace gcvd
