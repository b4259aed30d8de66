#include "gcvd/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include "gcvd/error.hpp"

namespace gcvd {
namespace {

double to_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + s + "'");
  }
  return v;
}

long long to_int(const std::string& key, const std::string& s) {
  long long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + s + "'");
  }
  return v;
}

bool to_bool(const std::string& key, const std::string& s) {
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + s + "'");
}

std::vector<int> to_int_list(const std::string& key, const std::string& s) {
  std::vector<int> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    if (b == std::string::npos) throw ConfigError("config key '" + key + "': empty list item");
    out.push_back(static_cast<int>(to_int(key, item.substr(b, e - b + 1))));
  }
  return out;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Binds each config key to a field for both parsing and serialisation.
struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field real_field(T RunConfig::*member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) {
            c.*member = to_double(k, v);
          },
          [member](const RunConfig& c) { return num(c.*member); }};
}

Field weight_field(double LossWeights::*member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) {
            c.weights.*member = to_double(k, v);
          },
          [member](const RunConfig& c) { return num(c.weights.*member); }};
}

template <typename T>
Field int_field(T RunConfig::*member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) {
            c.*member = static_cast<T>(to_int(k, v));
          },
          [member](const RunConfig& c) { return std::to_string(c.*member); }};
}

Field bool_field(bool RunConfig::*member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) {
            c.*member = to_bool(k, v);
          },
          [member](const RunConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"keyframe_threshold", real_field(&RunConfig::keyframe_threshold)},
      {"association_threshold", real_field(&RunConfig::association_threshold)},
      {"tau_set",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.tau_set = to_int_list(k, v);
        },
        [](const RunConfig& c) {
          std::string s;
          for (std::size_t i = 0; i < c.tau_set.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(c.tau_set[i]);
          }
          return s;
        }}},
      {"nms_window", int_field(&RunConfig::nms_window)},
      {"fb_inlier_ratio", real_field(&RunConfig::fb_inlier_ratio)},
      {"fb_epsilon", real_field(&RunConfig::fb_epsilon)},
      {"lambda_photo", weight_field(&LossWeights::photometric)},
      {"lambda_flow", weight_field(&LossWeights::flow)},
      {"lambda_const", weight_field(&LossWeights::consistency)},
      {"lambda_grad", weight_field(&LossWeights::gradient)},
      {"lambda_deform", weight_field(&LossWeights::deform)},
      {"dynamic_pair_weight", real_field(&RunConfig::dynamic_pair_weight)},
      {"iterations_sequential", int_field(&RunConfig::iterations_sequential)},
      {"iterations_covisible", int_field(&RunConfig::iterations_covisible)},
      {"iterations_nonkeyframe", int_field(&RunConfig::iterations_nonkeyframe)},
      {"lr_sequential", real_field(&RunConfig::lr_sequential)},
      {"lr_covisible", real_field(&RunConfig::lr_covisible)},
      {"lr_nonkeyframe", real_field(&RunConfig::lr_nonkeyframe)},
      {"pose_lr_multiplier", real_field(&RunConfig::pose_lr_multiplier)},
      {"depth_lr_multiplier", real_field(&RunConfig::depth_lr_multiplier)},
      {"batch_size", int_field(&RunConfig::batch_size)},
      {"depth_long_side", int_field(&RunConfig::depth_long_side)},
      {"mesh_long_side", int_field(&RunConfig::mesh_long_side)},
      {"keyframe_loss_scale", int_field(&RunConfig::keyframe_loss_scale)},
      {"filter_span", int_field(&RunConfig::filter_span)},
      {"filter_gamma_depth", real_field(&RunConfig::filter_gamma_depth)},
      {"filter_gamma_flow", real_field(&RunConfig::filter_gamma_flow)},
      {"pgo_max_iterations", int_field(&RunConfig::pgo_max_iterations)},
      {"seed", int_field(&RunConfig::seed)},
      {"threads", int_field(&RunConfig::threads)},
      {"skip_pgo", bool_field(&RunConfig::skip_pgo)},
      {"use_mesh", bool_field(&RunConfig::use_mesh)},
      {"uniform_keyframes", bool_field(&RunConfig::uniform_keyframes)},
      {"flow_pose_init", bool_field(&RunConfig::flow_pose_init)},
  };
  return table;
}

}  // namespace

int RunConfig::association_gap() const {
  return tau_set.empty() ? 0 : *std::max_element(tau_set.begin(), tau_set.end());
}

double RunConfig::fb_tolerance(int long_side) const {
  if (fb_epsilon > 0.0) return fb_epsilon;
  return std::max(1.0, 0.01 * long_side);
}

void RunConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("invalid config: ") + what);
  };
  require(keyframe_threshold > 0.0, "keyframe_threshold must be positive");
  require(association_threshold > 0.0 && association_threshold <= 1.0,
          "association_threshold must lie in (0, 1]");
  require(!tau_set.empty(), "tau_set must not be empty");
  for (std::size_t i = 0; i < tau_set.size(); ++i) {
    require(tau_set[i] > 0, "tau_set entries must be positive");
    if (i > 0) require(tau_set[i] > tau_set[i - 1], "tau_set must be strictly ascending");
  }
  require(nms_window >= 1 && nms_window % 2 == 1, "nms_window must be a positive odd number");
  require(fb_inlier_ratio > 0.0 && fb_inlier_ratio <= 1.0, "fb_inlier_ratio must lie in (0, 1]");
  require(weights.photometric >= 0 && weights.flow >= 0 && weights.consistency >= 0 &&
              weights.gradient >= 0 && weights.deform >= 0,
          "loss weights must be non-negative");
  require(dynamic_pair_weight > 0.0, "dynamic_pair_weight must be positive");
  require(iterations_sequential >= 0 && iterations_covisible >= 0 &&
              iterations_nonkeyframe >= 0,
          "iteration counts must be non-negative");
  require(lr_sequential > 0 && lr_covisible > 0 && lr_nonkeyframe > 0,
          "learning rates must be positive");
  require(pose_lr_multiplier > 0 && depth_lr_multiplier > 0,
          "learning-rate multipliers must be positive");
  require(batch_size > association_gap(), "batch_size must exceed max(tau_set)");
  require(depth_long_side > 0, "depth_long_side must be positive");
  require(mesh_long_side >= 2, "mesh_long_side must be at least 2");
  require(keyframe_loss_scale >= 1, "keyframe_loss_scale must be >= 1");
  require(filter_span >= 0, "filter_span must be non-negative");
  require(filter_gamma_depth > 0 && filter_gamma_flow > 0, "filter gammas must be positive");
  require(pgo_max_iterations >= 0, "pgo_max_iterations must be non-negative");
  require(threads >= 1, "threads must be >= 1");
}

RunConfig RunConfig::from_key_values(const KeyValues& kv) {
  RunConfig c;
  const auto& table = fields();
  for (const auto& [key, value] : kv) {
    auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(c, key, value);
  }
  return c;
}

KeyValues RunConfig::to_key_values() const {
  KeyValues kv;
  for (const auto& [key, field] : fields()) kv[key] = field.get(*this);
  return kv;
}

}  // namespace gcvd
