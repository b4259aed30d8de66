#include "gcvd/rasters_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "gcvd/error.hpp"

namespace gcvd {
namespace fs = std::filesystem;

namespace {

void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return v;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& token, double* out) {
  const char* first = token.data();
  const char* last = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(first, last, *out);
  return ec == std::errc() && ptr == last;
}

// Prints with enough digits for a lossless-at-1e-9 round trip and folds -0.
std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v + 0.0);
  return buf;
}

int get_int(const KeyValues& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw DataError("frames.meta: missing key '" + key + "'");
  try {
    std::size_t pos = 0;
    const int v = std::stoi(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw DataError("frames.meta: key '" + key + "' is not an integer");
  }
}

double get_double(const KeyValues& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw DataError("frames.meta: missing key '" + key + "'");
  double v = 0.0;
  if (!parse_double(it->second, &v)) {
    throw DataError("frames.meta: key '" + key + "' is not a number");
  }
  return v;
}

}  // namespace

std::optional<std::uint64_t> raster_payload_bytes(std::uint32_t width,
                                                  std::uint32_t height,
                                                  std::uint32_t channels) {
  __extension__ using u128 = unsigned __int128;
  const u128 n = static_cast<u128>(width) * height * channels * sizeof(float);
  if (n > std::numeric_limits<std::uint64_t>::max()) return std::nullopt;
  return static_cast<std::uint64_t>(n);
}

std::vector<char> encode_raster(const Raster& raster) {
  std::vector<char> out(kRasterMagic, kRasterMagic + 6);
  out.reserve(kRasterHeaderBytes + raster.size() * 4);
  put_u32(out, static_cast<std::uint32_t>(raster.width()));
  put_u32(out, static_cast<std::uint32_t>(raster.height()));
  put_u32(out, static_cast<std::uint32_t>(raster.channels()));
  for (float f : raster.values()) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
  return out;
}

Raster decode_raster(const std::vector<char>& bytes) {
  if (bytes.size() < 6 || std::memcmp(bytes.data(), kRasterMagic, 6) != 0) {
    throw DataError("raster: bad magic");
  }
  if (bytes.size() < kRasterHeaderBytes) throw DataError("raster: truncated header");
  const std::uint32_t w = get_u32(bytes.data() + 6);
  const std::uint32_t h = get_u32(bytes.data() + 10);
  const std::uint32_t c = get_u32(bytes.data() + 14);
  const auto payload = raster_payload_bytes(w, h, c);
  constexpr std::uint32_t kMaxDim = std::numeric_limits<int>::max();
  if (!payload || w > kMaxDim || h > kMaxDim || c > kMaxDim ||
      *payload > std::numeric_limits<std::size_t>::max() - kRasterHeaderBytes) {
    throw DataError("raster: dimension overflow");
  }
  const std::size_t available = bytes.size() - kRasterHeaderBytes;
  if (available < *payload) throw DataError("raster: truncated payload");
  if (available > *payload) throw DataError("raster: trailing bytes after payload");
  Raster raster(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c));
  const char* p = bytes.data() + kRasterHeaderBytes;
  for (std::size_t i = 0; i < raster.size(); ++i, p += 4) {
    const std::uint32_t bits = get_u32(p);
    std::memcpy(&raster[i], &bits, 4);
  }
  return raster;
}

void write_raster(const Raster& raster, const fs::path& path) {
  const auto bytes = encode_raster(raster);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

Raster read_raster(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open raster: " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  try {
    return decode_raster(bytes);
  } catch (const DataError& e) {
    throw DataError(std::string(e.what()) + " (" + path.string() + ")");
  }
}

NormalizedPrior normalize_log_prior(const DepthMap& prior, const Mask& static_mask) {
  if (!prior.same_shape(static_mask)) {
    throw DataError("normalize_log_prior: mask and prior dimensions disagree");
  }
  std::size_t n = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < prior.size(); ++i) {
    if (!static_mask[i]) continue;
    if (!(prior[i] > 0.0)) {
      throw DataError("normalize_log_prior: non-positive prior depth on a static pixel");
    }
    sum += std::log(prior[i]);
    ++n;
  }
  if (n < 16) throw DataError("insufficient static support");
  NormalizedPrior out;
  out.mean = sum / static_cast<double>(n);
  double var = 0.0;
  for (std::size_t i = 0; i < prior.size(); ++i) {
    if (!static_mask[i]) continue;
    const double d = std::log(prior[i]) - out.mean;
    var += d * d;
  }
  var /= static_cast<double>(n);
  const double sd = std::sqrt(var);
  out.stddev = sd > 1e-12 ? sd : 1.0;
  const bool constant = !(sd > 1e-12);
  out.normalized = ImageD(prior.width(), prior.height(), 1);
  for (std::size_t i = 0; i < prior.size(); ++i) {
    if (constant || !(prior[i] > 0.0)) {
      out.normalized[i] = 0.0;
    } else {
      out.normalized[i] = (std::log(prior[i]) - out.mean) / out.stddev;
    }
  }
  return out;
}

std::string format_trajectory_line(const TrajectoryEntry& entry) {
  char ts[64];
  std::snprintf(ts, sizeof(ts), "%.9f", entry.timestamp + 0.0);
  Eigen::Quaterniond q = entry.camera_to_world.quaternion();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Vec3& t = entry.camera_to_world.translation();
  std::string line = ts;
  for (double v : {t.x(), t.y(), t.z(), q.x(), q.y(), q.z(), q.w()}) {
    line += ' ';
    line += format_number(v);
  }
  return line;
}

void write_trajectory(const std::vector<Pose>& world_to_camera,
                      const std::vector<double>& timestamps, const fs::path& path) {
  if (world_to_camera.size() != timestamps.size()) {
    throw DataError("write_trajectory: pose and timestamp counts differ");
  }
  std::string text;
  for (std::size_t i = 0; i < world_to_camera.size(); ++i) {
    text += format_trajectory_line({timestamps[i], world_to_camera[i].inverse()});
    text += '\n';
  }
  write_text_file(text, path);
}

std::vector<TrajectoryEntry> parse_trajectory(const std::string& text) {
  std::vector<TrajectoryEntry> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(line);
    if (body.empty() || body[0] == '#') continue;
    std::istringstream fields(body);
    std::vector<std::string> tokens;
    for (std::string tok; fields >> tok;) tokens.push_back(tok);
    if (tokens.size() != 8) {
      throw DataError("trajectory line " + std::to_string(line_no) + ": expected 8 fields, got " +
                      std::to_string(tokens.size()));
    }
    double v[8];
    for (int i = 0; i < 8; ++i) {
      if (!parse_double(tokens[i], &v[i]) || !std::isfinite(v[i])) {
        throw DataError("trajectory line " + std::to_string(line_no) +
                        ": invalid number '" + tokens[i] + "'");
      }
    }
    Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    if (std::abs(q.norm() - 1.0) > 1e-3) {
      throw DataError("trajectory line " + std::to_string(line_no) + ": non-unit quaternion");
    }
    out.push_back({v[0], Pose(q, Vec3(v[1], v[2], v[3]))});
  }
  return out;
}

std::vector<TrajectoryEntry> read_trajectory(const fs::path& path) {
  return parse_trajectory(read_text_file(path));
}

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(line);
    if (body.empty() || body[0] == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(body.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    kv[key] = trim(body.substr(eq + 1));
  }
  return kv;
}

KeyValues read_key_values(const fs::path& path) {
  return parse_key_values(read_text_file(path));
}

void write_key_values(const KeyValues& values, const fs::path& path) {
  std::string text;
  for (const auto& [k, v] : values) text += k + " = " + v + "\n";
  write_text_file(text, path);
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& text, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

std::string indexed_name(const std::string& prefix, int index, const std::string& suffix) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d", index);
  return prefix + buf + suffix;
}

fs::path SceneLayout::frame(int t) const { return root_ / "frames" / indexed_name("frame_", t); }
fs::path SceneLayout::prior_depth(int t) const { return root_ / "priors" / indexed_name("depth_", t); }
fs::path SceneLayout::flow_forward(int t) const { return root_ / "priors" / indexed_name("flow_fwd_", t); }
fs::path SceneLayout::flow_backward(int t) const { return root_ / "priors" / indexed_name("flow_bwd_", t); }
fs::path SceneLayout::static_mask(int t) const { return root_ / "priors" / indexed_name("mask_", t); }
fs::path SceneLayout::descriptor(int t) const { return root_ / "priors" / indexed_name("desc_", t); }
fs::path SceneLayout::gt_depth(int t) const { return gt_dir() / indexed_name("depth_", t); }

fs::path SceneLayout::pair_flow(int i, int j) const {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "flow_%06d_%06d.gcvdr", i, j);
  return root_ / "pairs" / buf;
}

SceneMeta SceneLayout::read_meta() const {
  if (!fs::exists(meta())) throw DataError("missing scene metadata: " + meta().string());
  KeyValues kv;
  try {
    kv = read_key_values(meta());
  } catch (const ConfigError& e) {
    throw DataError(std::string("frames.meta: ") + e.what());
  }
  SceneMeta m;
  m.frame_count = get_int(kv, "frame_count");
  m.intrinsics.width = get_int(kv, "width");
  m.intrinsics.height = get_int(kv, "height");
  m.intrinsics.fx = get_double(kv, "fx");
  m.intrinsics.fy = get_double(kv, "fy");
  m.intrinsics.cx = get_double(kv, "cx");
  m.intrinsics.cy = get_double(kv, "cy");
  if (kv.count("fps")) m.fps = get_double(kv, "fps");
  if (kv.count("source")) m.source = kv.at("source");
  if (m.frame_count < 1) throw DataError("frames.meta: frame_count must be positive");
  m.intrinsics.validate();
  return m;
}

void SceneLayout::write_meta(const SceneMeta& m) const {
  KeyValues kv;
  kv["frame_count"] = std::to_string(m.frame_count);
  kv["width"] = std::to_string(m.intrinsics.width);
  kv["height"] = std::to_string(m.intrinsics.height);
  kv["fx"] = format_number(m.intrinsics.fx);
  kv["fy"] = format_number(m.intrinsics.fy);
  kv["cx"] = format_number(m.intrinsics.cx);
  kv["cy"] = format_number(m.intrinsics.cy);
  kv["fps"] = format_number(m.fps);
  kv["source"] = m.source;
  write_key_values(kv, meta());
}

void SceneLayout::create_directories() const {
  for (const char* sub : {"frames", "priors", "pairs", "gt"}) {
    fs::create_directories(root_ / sub);
  }
}

}  // namespace gcvd
