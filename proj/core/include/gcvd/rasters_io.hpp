#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gcvd/geometry.hpp"
#include "gcvd/image.hpp"

namespace gcvd {

// Raster container: magic "GCVDR1", then width, height, channels as uint32
// little-endian, then a row-major channel-interleaved float32 little-endian
// payload.
inline constexpr char kRasterMagic[6] = {'G', 'C', 'V', 'D', 'R', '1'};
inline constexpr std::size_t kRasterHeaderBytes = 6 + 3 * 4;

std::vector<char> encode_raster(const Raster& raster);
// Throws DataError on bad magic, truncated payload, dimension overflow or
// trailing bytes.
Raster decode_raster(const std::vector<char>& bytes);

void write_raster(const Raster& raster, const std::filesystem::path& path);
Raster read_raster(const std::filesystem::path& path);

// Expected payload size in bytes for the given header, or nullopt when the
// product overflows.
std::optional<std::uint64_t> raster_payload_bytes(std::uint32_t width,
                                                  std::uint32_t height,
                                                  std::uint32_t channels);

struct NormalizedPrior {
  ImageD normalized;  // (log D - mean) / std
  double mean = 0.0;  // over static pixels, of log D
  double stddev = 1.0;
};

// Per-frame normalisation of the log prior depth over static pixels. A
// constant prior yields zeros with stddev 1. Throws DataError with fewer than
// 16 static pixels or non-positive prior depth on a static pixel.
NormalizedPrior normalize_log_prior(const DepthMap& prior, const Mask& static_mask);

// TUM trajectory text: "timestamp tx ty tz qx qy qz qw", camera-to-world.
struct TrajectoryEntry {
  double timestamp = 0.0;
  Pose camera_to_world;
};

std::string format_trajectory_line(const TrajectoryEntry& entry);
// Takes world-to-camera poses and converts them for export.
void write_trajectory(const std::vector<Pose>& world_to_camera,
                      const std::vector<double>& timestamps,
                      const std::filesystem::path& path);
// Returns camera-to-world entries; throws DataError naming the line for bad
// field counts, unparseable numbers or non-unit quaternions.
std::vector<TrajectoryEntry> read_trajectory(const std::filesystem::path& path);
std::vector<TrajectoryEntry> parse_trajectory(const std::string& text);

// Flat "key = value" text used by frames.meta and config files. Lines starting
// with '#' are comments.
using KeyValues = std::map<std::string, std::string>;
KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values(const std::filesystem::path& path);
void write_key_values(const KeyValues& values, const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::string& text, const std::filesystem::path& path);

struct SceneMeta {
  int frame_count = 0;
  Intrinsics intrinsics;
  double fps = 30.0;
  std::string source = "unknown";
};

// Scene directory layout:
//   frames.meta
//   frames/frame_%06d.gcvdr         grayscale image in [0, 1]
//   priors/depth_%06d.gcvdr         prior depth
//   priors/flow_fwd_%06d.gcvdr      flow t -> t+1 (t < N-1)
//   priors/flow_bwd_%06d.gcvdr      flow t -> t-1 (t > 0)
//   priors/mask_%06d.gcvdr          static mask
//   priors/desc_%06d.gcvdr          descriptor (width L, height 1)
//   pairs/flow_%06d_%06d.gcvdr      optional non-adjacent pair flows
//   gt/                             optional ground truth
class SceneLayout {
 public:
  explicit SceneLayout(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path meta() const { return root_ / "frames.meta"; }
  std::filesystem::path frame(int t) const;
  std::filesystem::path prior_depth(int t) const;
  std::filesystem::path flow_forward(int t) const;
  std::filesystem::path flow_backward(int t) const;
  std::filesystem::path static_mask(int t) const;
  std::filesystem::path descriptor(int t) const;
  std::filesystem::path pair_flow(int i, int j) const;
  std::filesystem::path gt_dir() const { return root_ / "gt"; }
  std::filesystem::path gt_depth(int t) const;
  std::filesystem::path gt_trajectory() const { return gt_dir() / "trajectory.txt"; }
  std::filesystem::path gt_scene_spec() const { return gt_dir() / "scene.spec"; }

  SceneMeta read_meta() const;
  void write_meta(const SceneMeta& meta) const;

  // Creates frames/, priors/, pairs/ and gt/.
  void create_directories() const;

 private:
  std::filesystem::path root_;
};

std::string indexed_name(const std::string& prefix, int index,
                         const std::string& suffix = ".gcvdr");

}  // namespace gcvd
