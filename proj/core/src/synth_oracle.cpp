#include "gcvd/synth_oracle.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "gcvd/error.hpp"
#include "gcvd/keyframing.hpp"

namespace gcvd {
namespace fs = std::filesystem;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double parse_real(const std::string& key, const std::string& s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ConfigError("scene key '" + key + "': expected a number, got '" + s + "'");
  }
  return v;
}

long long parse_integer(const std::string& key, const std::string& s) {
  long long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ConfigError("scene key '" + key + "': expected an integer, got '" + s + "'");
  }
  return v;
}

std::string fmt_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

Pose look_pose(const Vec3& center, const Vec3& forward) {
  const Vec3 z = forward.normalized();
  const Vec3 x = Vec3::UnitY().cross(z).normalized();
  const Vec3 y = z.cross(x);
  Mat3 c2w;
  c2w.col(0) = x;
  c2w.col(1) = y;
  c2w.col(2) = z;
  const Mat3 r = c2w.transpose();
  return Pose(r, -r * center);
}

}  // namespace

std::string to_string(TrajectoryStyle style) {
  switch (style) {
    case TrajectoryStyle::kSmooth: return "smooth";
    case TrajectoryStyle::kLoop: return "loop";
    case TrajectoryStyle::kForward: return "forward";
  }
  return "loop";
}

TrajectoryStyle trajectory_style_from_string(const std::string& name) {
  if (name == "smooth") return TrajectoryStyle::kSmooth;
  if (name == "loop") return TrajectoryStyle::kLoop;
  if (name == "forward") return TrajectoryStyle::kForward;
  throw ConfigError("unknown trajectory style '" + name + "'");
}

void SceneSpec::validate() const {
  if (frame_count < 2) throw ConfigError("need >= 2 frames");
  if (width < 8 || height < 8) throw ConfigError("scene image must be at least 8x8");
  if (!(base_depth > amplitude) || amplitude < 0.0) {
    throw ConfigError("scene surface requires base_depth > amplitude >= 0");
  }
  if (!(prior_bias >= 0.0 && prior_bias < 1.0)) throw ConfigError("prior_bias must lie in [0, 1)");
  if (!(prior_scale > 0.0)) throw ConfigError("prior_scale must be positive");
  if (prior_noise < 0.0) throw ConfigError("prior_noise must be non-negative");
  if (texture_octaves < 1) throw ConfigError("texture_octaves must be >= 1");
  if (!(texture_contrast > 0.0 && texture_contrast <= 0.5)) {
    throw ConfigError("texture_contrast must lie in (0, 0.5]");
  }
  if (dynamic_radius < 0.0) throw ConfigError("dynamic_radius must be non-negative");
  if (!(fps > 0.0)) throw ConfigError("fps must be positive");
  if (look_at_blend < 0.0 || look_at_blend > 1.0) throw ConfigError("look_at_blend must lie in [0, 1]");
  if (!(trajectory_radius > 0.0)) throw DataError("degenerate trajectory: zero extent");
}

Intrinsics SceneSpec::intrinsics() const {
  Intrinsics k;
  k.width = width;
  k.height = height;
  k.fx = k.fy = focal > 0.0 ? focal : 0.9 * width;
  k.cx = 0.5 * (width - 1);
  k.cy = 0.5 * (height - 1);
  return k;
}

SceneSpec SceneSpec::from_key_values(const KeyValues& kv) {
  SceneSpec s;
  for (const auto& [key, value] : kv) {
    if (key == "seed") s.seed = static_cast<std::uint64_t>(parse_integer(key, value));
    else if (key == "frame_count") s.frame_count = static_cast<int>(parse_integer(key, value));
    else if (key == "width") s.width = static_cast<int>(parse_integer(key, value));
    else if (key == "height") s.height = static_cast<int>(parse_integer(key, value));
    else if (key == "focal") s.focal = parse_real(key, value);
    else if (key == "trajectory") s.trajectory = trajectory_style_from_string(value);
    else if (key == "trajectory_radius") s.trajectory_radius = parse_real(key, value);
    else if (key == "look_at_blend") s.look_at_blend = parse_real(key, value);
    else if (key == "base_depth") s.base_depth = parse_real(key, value);
    else if (key == "amplitude") s.amplitude = parse_real(key, value);
    else if (key == "surface_frequency") s.surface_frequency = parse_real(key, value);
    else if (key == "texture_octaves") s.texture_octaves = static_cast<int>(parse_integer(key, value));
    else if (key == "texture_contrast") s.texture_contrast = parse_real(key, value);
    else if (key == "texture_frequency") s.texture_frequency = parse_real(key, value);
    else if (key == "prior_scale") s.prior_scale = parse_real(key, value);
    else if (key == "prior_bias") s.prior_bias = parse_real(key, value);
    else if (key == "prior_bias_drift") s.prior_bias_drift = parse_real(key, value);
    else if (key == "prior_noise") s.prior_noise = parse_real(key, value);
    else if (key == "dynamic_radius") s.dynamic_radius = parse_real(key, value);
    else if (key == "dynamic_velocity") s.dynamic_velocity = parse_real(key, value);
    else if (key == "dynamic_center_x") s.dynamic_center_x = parse_real(key, value);
    else if (key == "dynamic_center_y") s.dynamic_center_y = parse_real(key, value);
    else if (key == "fps") s.fps = parse_real(key, value);
    else throw ConfigError("unknown scene key '" + key + "'");
  }
  return s;
}

KeyValues SceneSpec::to_key_values() const {
  KeyValues kv;
  kv["seed"] = std::to_string(seed);
  kv["frame_count"] = std::to_string(frame_count);
  kv["width"] = std::to_string(width);
  kv["height"] = std::to_string(height);
  kv["focal"] = fmt_real(focal);
  kv["trajectory"] = to_string(trajectory);
  kv["trajectory_radius"] = fmt_real(trajectory_radius);
  kv["look_at_blend"] = fmt_real(look_at_blend);
  kv["base_depth"] = fmt_real(base_depth);
  kv["amplitude"] = fmt_real(amplitude);
  kv["surface_frequency"] = fmt_real(surface_frequency);
  kv["texture_octaves"] = std::to_string(texture_octaves);
  kv["texture_contrast"] = fmt_real(texture_contrast);
  kv["texture_frequency"] = fmt_real(texture_frequency);
  kv["prior_scale"] = fmt_real(prior_scale);
  kv["prior_bias"] = fmt_real(prior_bias);
  kv["prior_bias_drift"] = fmt_real(prior_bias_drift);
  kv["prior_noise"] = fmt_real(prior_noise);
  kv["dynamic_radius"] = fmt_real(dynamic_radius);
  kv["dynamic_velocity"] = fmt_real(dynamic_velocity);
  kv["dynamic_center_x"] = fmt_real(dynamic_center_x);
  kv["dynamic_center_y"] = fmt_real(dynamic_center_y);
  kv["fps"] = fmt_real(fps);
  return kv;
}

SyntheticScene::SyntheticScene(SceneSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  k_ = spec_.intrinsics();
  build_surface();
  build_trajectory();
  cache_.resize(spec_.frame_count);
}

void SyntheticScene::build_surface() {
  std::mt19937_64 rng(spec_.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto wave = [&](double freq, double weight) {
    const double angle = kTwoPi * unit(rng);
    const double f = freq * (0.8 + 0.4 * unit(rng));
    return Wave{f * std::cos(angle), f * std::sin(angle), kTwoPi * unit(rng), weight};
  };
  const double sf = spec_.surface_frequency;
  surface_waves_ = {wave(sf, 0.5), wave(1.3 * sf, 0.3), wave(1.9 * sf, 0.2)};

  double total = 0.0;
  for (int o = 0; o < spec_.texture_octaves; ++o) total += std::pow(0.6, o);
  for (int o = 0; o < spec_.texture_octaves; ++o) {
    texture_waves_.push_back(
        wave(spec_.texture_frequency * std::pow(1.7, o), std::pow(0.6, o) / total));
  }
  for (int o = 0; o < 2; ++o) {
    dynamic_waves_.push_back(wave(1.5 * spec_.texture_frequency * (1.0 + o), 0.5));
  }
  bias_phase_u_ = kTwoPi * unit(rng);
  bias_phase_v_ = kTwoPi * unit(rng);
}

void SyntheticScene::build_trajectory() {
  const int n = spec_.frame_count;
  const double r = spec_.trajectory_radius;
  const Vec3 target(spec_.dynamic_center_x, spec_.dynamic_center_y, spec_.base_depth);
  poses_.clear();
  poses_.reserve(n);
  for (int t = 0; t < n; ++t) {
    const double s = static_cast<double>(t) / (n - 1);
    Vec3 c;
    switch (spec_.trajectory) {
      case TrajectoryStyle::kLoop: {
        const double theta = kTwoPi * s;
        c = Vec3(r * std::cos(theta), 0.7 * r * std::sin(theta), 0.1 * r * std::sin(2.0 * theta));
        break;
      }
      case TrajectoryStyle::kSmooth:
        c = Vec3(r * (2.0 * s - 1.0), 0.4 * r * std::sin(kTwoPi * s),
                 0.1 * r * std::sin(1.5 * std::numbers::pi * s));
        break;
      case TrajectoryStyle::kForward:
        c = Vec3(0.3 * r * std::sin(std::numbers::pi * s), 0.1 * r * s, 1.2 * r * s);
        break;
    }
    const Vec3 toward = (target - c).normalized();
    const Vec3 forward =
        (1.0 - spec_.look_at_blend) * Vec3::UnitZ() + spec_.look_at_blend * toward;
    poses_.push_back(look_pose(c, forward));
  }
  double extent = 0.0;
  for (int t = 1; t < n; ++t) {
    extent = std::max(extent, (poses_[t].center() - poses_[0].center()).norm());
  }
  if (extent < 1e-9) throw DataError("degenerate trajectory: zero extent");
}

Pose SyntheticScene::pose(int t) const {
  if (t < 0 || t >= frame_count()) throw DataError("frame index out of range");
  return poses_[t];
}

double SyntheticScene::surface_height(double x, double y) const {
  double h = 0.0;
  for (const auto& w : surface_waves_) h += w.weight * std::sin(w.fx * x + w.fy * y + w.phase);
  return spec_.base_depth + spec_.amplitude * h;
}

double SyntheticScene::texture(double x, double y) const {
  double v = 0.0;
  for (const auto& w : texture_waves_) v += w.weight * std::sin(w.fx * x + w.fy * y + w.phase);
  return 0.5 + spec_.texture_contrast * v;
}

double SyntheticScene::dynamic_texture(double x, double y) const {
  double v = 0.0;
  for (const auto& w : dynamic_waves_) v += w.weight * std::cos(w.fx * x + w.fy * y + w.phase);
  return 0.5 + spec_.texture_contrast * v;
}

bool SyntheticScene::in_dynamic_region(double x, double y) const {
  if (spec_.dynamic_radius <= 0.0) return false;
  const double dx = x - spec_.dynamic_center_x;
  const double dy = y - spec_.dynamic_center_y;
  return dx * dx + dy * dy < spec_.dynamic_radius * spec_.dynamic_radius;
}

std::optional<double> SyntheticScene::cast_ray(int t, const Vec2& pixel) const {
  const Pose& p = poses_.at(t);
  const Vec3 c = p.center();
  const Vec3 d = p.rotation().transpose() *
                 Vec3((pixel.x() - k_.cx) / k_.fx, (pixel.y() - k_.cy) / k_.fy, 1.0);
  auto g = [&](double s) {
    const Vec3 q = c + s * d;
    return q.z() - surface_height(q.x(), q.y());
  };
  const double step = 0.05;
  const double s_max = 10.0 * (spec_.base_depth + spec_.amplitude);
  double lo = 1e-3;
  double g_lo = g(lo);
  if (g_lo >= 0.0) return std::nullopt;
  double hi = lo;
  double g_hi = g_lo;
  while (g_hi < 0.0) {
    lo = hi;
    g_lo = g_hi;
    hi += step;
    if (hi > s_max) return std::nullopt;
    g_hi = g(hi);
  }
  // Safeguarded secant / bisection on the bracket.
  for (int it = 0; it < 100; ++it) {
    double s = lo - g_lo * (hi - lo) / (g_hi - g_lo);
    if (!(s > lo && s < hi)) s = 0.5 * (lo + hi);
    const double gs = g(s);
    if (gs == 0.0) return s;
    if (gs < 0.0) {
      lo = s;
      g_lo = gs;
    } else {
      hi = s;
      g_hi = gs;
    }
    if (hi - lo < 1e-14 * hi || std::abs(gs) < 1e-15) break;
  }
  return std::abs(g_lo) < std::abs(g_hi) ? lo : hi;
}

SyntheticFrame SyntheticScene::render(int t) const {
  const int w = k_.width;
  const int h = k_.height;
  SyntheticFrame f;
  f.image = ImageD(w, h, 1);
  f.depth = DepthMap(w, h, 1);
  f.static_mask = Mask(w, h, 1, 1);
  f.hits.resize(static_cast<std::size_t>(w) * h);
  const Pose& p = poses_[t];
  const Vec3 c = p.center();
  const Mat3 rt = p.rotation().transpose();
  const double shift = spec_.dynamic_velocity * t;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto s = cast_ray(t, Vec2(x, y));
      if (!s) {
        throw DataError("synthetic ray missed the surface at frame " + std::to_string(t));
      }
      const Vec3 d = rt * Vec3((x - k_.cx) / k_.fx, (y - k_.cy) / k_.fy, 1.0);
      const Vec3 hit = c + *s * d;
      f.hits[static_cast<std::size_t>(y) * w + x] = hit;
      f.depth(x, y) = *s;
      if (in_dynamic_region(hit.x(), hit.y())) {
        f.static_mask(x, y) = 0;
        f.image(x, y) = dynamic_texture(hit.x() - shift, hit.y());
      } else {
        f.image(x, y) = texture(hit.x(), hit.y());
      }
    }
  }
  return f;
}

const SyntheticFrame& SyntheticScene::frame(int t) const {
  if (t < 0 || t >= frame_count()) throw DataError("frame index out of range");
  if (!cache_[t]) cache_[t] = render(t);
  return *cache_[t];
}

FlowField SyntheticScene::flow(int a, int b) const {
  const SyntheticFrame& fa = frame(a);
  const Pose& pb = pose(b);
  const int w = k_.width;
  const int h = k_.height;
  FlowField out(w, h, 2);
  const double shift = spec_.dynamic_velocity * (b - a);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      Vec3 pt = fa.hits[static_cast<std::size_t>(y) * w + x];
      if (!fa.static_mask(x, y)) {
        pt.x() += shift;
        pt.z() = surface_height(pt.x(), pt.y());
      }
      const Vec3 q = pb.transform(pt);
      // Points behind camera b still get a finite flow; the z guard keeps it so.
      const double z = std::max(q.z(), kMinDepth);
      out(x, y, 0) = k_.fx * q.x() / z + k_.cx - x;
      out(x, y, 1) = k_.fy * q.y() / z + k_.cy - y;
    }
  }
  return out;
}

DepthMap SyntheticScene::prior_depth(int t) const {
  const SyntheticFrame& f = frame(t);
  const int w = k_.width;
  const int h = k_.height;
  DepthMap out(w, h, 1);
  std::mt19937_64 rng(spec_.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(t) + 1);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double drift = spec_.prior_bias_drift * t;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double bias = 1.0 + spec_.prior_bias *
                                    std::cos(kTwoPi * x / w + bias_phase_u_ + drift) *
                                    std::cos(kTwoPi * y / h + bias_phase_v_);
      const double n = spec_.prior_noise > 0.0 ? spec_.prior_noise * noise(rng) : 0.0;
      out(x, y) = f.depth(x, y) * spec_.prior_scale * bias * std::exp(n);
    }
  }
  return out;
}

void generate_scene(const SceneSpec& spec, const fs::path& out, bool force) {
  spec.validate();
  if (fs::exists(out) && !fs::is_directory(out)) {
    throw DataError("output path exists and is not a directory: " + out.string());
  }
  if (fs::exists(out) && !fs::is_empty(out)) {
    if (!force) throw DataError("refusing to overwrite non-empty directory " + out.string());
    fs::remove_all(out);
  }
  SyntheticScene scene(spec);
  SceneLayout layout(out);
  layout.create_directories();
  SceneMeta meta;
  meta.frame_count = spec.frame_count;
  meta.intrinsics = scene.intrinsics();
  meta.fps = spec.fps;
  meta.source = "synthetic";
  layout.write_meta(meta);

  std::vector<double> stamps;
  for (int t = 0; t < spec.frame_count; ++t) {
    const SyntheticFrame& f = scene.frame(t);
    write_raster(image_cast<float>(f.image), layout.frame(t));
    write_raster(image_cast<float>(f.depth), layout.gt_depth(t));
    write_raster(image_cast<float>(scene.prior_depth(t)), layout.prior_depth(t));
    write_raster(raster_from_mask(f.static_mask), layout.static_mask(t));
    const Eigen::VectorXd d = image_descriptor(f.image);
    Raster desc(static_cast<int>(d.size()), 1, 1);
    for (int i = 0; i < d.size(); ++i) desc[i] = static_cast<float>(d[i]);
    write_raster(desc, layout.descriptor(t));
    if (t + 1 < spec.frame_count) {
      write_raster(image_cast<float>(scene.flow(t, t + 1)), layout.flow_forward(t));
    }
    if (t > 0) write_raster(image_cast<float>(scene.flow(t, t - 1)), layout.flow_backward(t));
    stamps.push_back(t / spec.fps);
  }
  write_trajectory(scene.poses(), stamps, layout.gt_trajectory());
  write_key_values(spec.to_key_values(), layout.gt_scene_spec());
}

PairConsistency render_pair_consistency_check(const SyntheticScene& scene, int a, int b) {
  const SyntheticFrame& fa = scene.frame(a);
  const SyntheticFrame& fb = scene.frame(b);
  const auto [flow, valid] = rigid_flow(fa.depth, scene.pose(a), scene.pose(b), scene.intrinsics());
  const auto [warped, warp_valid] = warp_bilinear(fb.image, flow);
  PairConsistency out;
  double sum = 0.0;
  for (std::size_t p = 0; p < fa.image.size(); ++p) {
    if (!valid[p] || !warp_valid[p] || !fa.static_mask[p]) continue;
    // The target pixel must see the same surface point (no dynamic content).
    const double r = std::abs(warped[p] - fa.image[p]);
    const int x = static_cast<int>(p % fa.image.width());
    const int y = static_cast<int>(p / fa.image.width());
    const double u = x + flow(x, y, 0);
    const double v = y + flow(x, y, 1);
    const BilinearTap tap = make_tap(u, v, fb.image.width(), fb.image.height());
    bool touches_dynamic = false;
    for (int dy = 0; dy <= 1; ++dy)
      for (int dx = 0; dx <= 1; ++dx)
        if (!fb.static_mask(tap.x0 + dx, tap.y0 + dy)) touches_dynamic = true;
    if (touches_dynamic) continue;
    out.max_residual = std::max(out.max_residual, r);
    sum += r;
    ++out.valid_pixels;
  }
  if (out.valid_pixels > 0) out.mean_residual = sum / out.valid_pixels;
  return out;
}

}  // namespace gcvd
