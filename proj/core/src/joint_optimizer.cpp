#include "gcvd/joint_optimizer.hpp"

#include <spdlog/spdlog.h>

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "gcvd/error.hpp"
#include "gcvd/keyframing.hpp"

namespace gcvd {
namespace fs = std::filesystem;

Adam::Adam(std::size_t size)
    : m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size))),
      v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size))) {}

void Adam::step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grad,
                const Eigen::VectorXd& lr) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  if (params.size() != m_.size() || grad.size() != m_.size() || lr.size() != m_.size()) {
    throw DataError("adam: size mismatch");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(kBeta1, t_);
  const double c2 = 1.0 - std::pow(kBeta2, t_);
  for (Eigen::Index i = 0; i < m_.size(); ++i) {
    if (lr[i] == 0.0) continue;
    m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grad[i];
    v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grad[i] * grad[i];
    const double mhat = m_[i] / c1;
    const double vhat = v_[i] / c2;
    params[i] -= lr[i] * mhat / (std::sqrt(vhat) + kEps);
  }
}

std::vector<std::pair<int, int>> make_windows(int count, int batch, int overlap) {
  if (count <= 0) return {};
  if (batch < 2) throw ConfigError("batch size must be >= 2");
  const int stride = std::max(1, batch - overlap);
  std::vector<std::pair<int, int>> out;
  int first = 0;
  for (;;) {
    const int last = std::min(first + batch - 1, count - 1);
    out.emplace_back(first, last);
    if (last == count - 1) break;
    first += stride;
  }
  return out;
}

namespace {

struct Correspondences {
  std::vector<Vec3> points;  // backprojected in camera a
  std::vector<Vec3> ray_a;   // normalised image coordinates (z = 1)
  std::vector<Vec3> ray_b;
  std::vector<Vec2> targets;  // pixels in b
};

double huber(double r) { return r <= 1.0 ? 0.5 * r * r : r - 0.5; }

double reprojection_cost(const Correspondences& c, const Pose& z, const Intrinsics& k) {
  double cost = 0.0;
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    const Vec3 q = z.transform(c.points[i]);
    cost += q.z() <= kMinDepth ? 1e6 : huber((project(q, k) - c.targets[i]).norm());
  }
  return cost;
}

Pose refine_reprojection(const Correspondences& c, const Intrinsics& k, const Pose& initial,
                         int iterations) {
  Pose z = initial;
  double current = reprojection_cost(c, z, k);
  for (int it = 0; it < iterations; ++it) {
    Mat6 hess = Mat6::Zero();
    Vec6 grad = Vec6::Zero();
    for (std::size_t i = 0; i < c.points.size(); ++i) {
      const Vec3 q = z.transform(c.points[i]);
      if (q.z() <= kMinDepth) continue;
      const Vec2 r = project(q, k) - c.targets[i];
      const double norm = r.norm();
      const double wgt = norm <= 1.0 ? 1.0 : 1.0 / norm;
      Eigen::Matrix<double, 2, 3> jp;
      jp << k.fx / q.z(), 0.0, -k.fx * q.x() / (q.z() * q.z()), 0.0, k.fy / q.z(),
          -k.fy * q.y() / (q.z() * q.z());
      Mat36 jq;
      jq.leftCols<3>() = Mat3::Identity();
      jq.rightCols<3>() = -skew(q);
      const Eigen::Matrix<double, 2, 6> j = jp * jq;
      hess += wgt * j.transpose() * j;
      grad += wgt * j.transpose() * r;
    }
    Mat6 damped = hess;
    damped.diagonal().array() += 1e-9 + 1e-6 * hess.diagonal().array();
    const Vec6 delta = -damped.ldlt().solve(grad);
    if (!delta.allFinite()) break;
    double step = 1.0;
    bool improved = false;
    for (int tries = 0; tries < 8; ++tries) {
      const Pose trial = se3_exp(step * delta) * z;
      const double cost = reprojection_cost(c, trial, k);
      if (cost < current) {
        z = trial;
        current = cost;
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved || step * delta.norm() < 1e-12) break;
  }
  return z;
}

// Sampson distances in pixels (approximately: normalised units times focal).
double sampson_cost(const Correspondences& c, const Mat3& r, const Vec3& t, double focal,
                    std::vector<double>* residuals = nullptr) {
  const Mat3 e = skew(t.normalized()) * r;
  double cost = 0.0;
  if (residuals) residuals->resize(c.ray_a.size());
  for (std::size_t i = 0; i < c.ray_a.size(); ++i) {
    const Vec3 ea = e * c.ray_a[i];
    const Vec3 eb = e.transpose() * c.ray_b[i];
    const double num = c.ray_b[i].dot(ea);
    const double den = ea.head<2>().squaredNorm() + eb.head<2>().squaredNorm();
    const double d = den > 0.0 ? focal * num / std::sqrt(den) : 0.0;
    if (residuals) (*residuals)[i] = d;
    cost += huber(std::abs(d));
  }
  return cost;
}

// Levenberg-Marquardt on the Sampson error over rotation and translation
// direction; the translation norm is a gauge and stays 1.
std::pair<Mat3, Vec3> refine_epipolar(const Correspondences& c, Mat3 r, Vec3 t, double focal) {
  t.normalize();
  double current = sampson_cost(c, r, t, focal);
  double lambda = 1e-3;
  const int n = static_cast<int>(c.ray_a.size());
  std::vector<double> base, plus, minus;
  for (int it = 0; it < 50; ++it) {
    sampson_cost(c, r, t, focal, &base);
    Eigen::MatrixXd jac(n, 6);
    auto perturb = [&](int d, double h) {
      Vec6 delta = Vec6::Zero();
      delta[d] = h;
      const Mat3 rr = so3_exp(delta.tail<3>()).toRotationMatrix() * r;
      const Vec3 tt = (t + delta.head<3>()).normalized();
      return std::make_pair(rr, tt);
    };
    constexpr double h = 1e-6;
    for (int d = 0; d < 6; ++d) {
      auto [rp, tp] = perturb(d, h);
      auto [rm, tm] = perturb(d, -h);
      sampson_cost(c, rp, tp, focal, &plus);
      sampson_cost(c, rm, tm, focal, &minus);
      for (int i = 0; i < n; ++i) jac(i, d) = (plus[i] - minus[i]) / (2.0 * h);
    }
    Mat6 hess = Mat6::Zero();
    Vec6 grad = Vec6::Zero();
    for (int i = 0; i < n; ++i) {
      const double a = std::abs(base[i]);
      const double wgt = a <= 1.0 ? 1.0 : 1.0 / a;
      const Eigen::Matrix<double, 1, 6> row = jac.row(i);
      hess += wgt * row.transpose() * row;
      grad += wgt * row.transpose() * base[i];
    }
    bool improved = false;
    for (int tries = 0; tries < 10; ++tries) {
      Mat6 damped = hess;
      damped.diagonal().array() += lambda * (hess.diagonal().array() + 1e-12);
      const Vec6 delta = -damped.ldlt().solve(grad);
      if (!delta.allFinite()) break;
      const Mat3 rr = so3_exp(delta.tail<3>()).toRotationMatrix() * r;
      const Vec3 tt = (t + delta.head<3>()).normalized();
      const double cost = sampson_cost(c, rr, tt, focal);
      if (cost < current) {
        const double gain = current - cost;
        r = rr;
        t = tt;
        current = cost;
        lambda = std::max(lambda * 0.3, 1e-9);
        improved = gain > 1e-12 * (1.0 + current);
        break;
      }
      lambda *= 10.0;
    }
    if (!improved) break;
  }
  return {r, t};
}

// Scale of the unit translation that best explains the flow with depth_a.
double fit_translation_scale(const Correspondences& c, const Mat3& r, const Vec3& t,
                             const Intrinsics& k, double initial) {
  double s = initial;
  for (int it = 0; it < 20; ++it) {
    double hh = 0.0, g = 0.0;
    for (std::size_t i = 0; i < c.points.size(); ++i) {
      const Vec3 q = r * c.points[i] + s * t;
      if (q.z() <= kMinDepth) continue;
      const Vec2 res = project(q, k) - c.targets[i];
      const double norm = res.norm();
      const double wgt = norm <= 1.0 ? 1.0 : 1.0 / norm;
      Eigen::Matrix<double, 2, 3> jp;
      jp << k.fx / q.z(), 0.0, -k.fx * q.x() / (q.z() * q.z()), 0.0, k.fy / q.z(),
          -k.fy * q.y() / (q.z() * q.z());
      const Vec2 j = jp * t;
      hh += wgt * j.squaredNorm();
      g += wgt * j.dot(res);
    }
    if (!(hh > 0.0)) break;
    const double step = -g / hh;
    s += step;
    if (std::abs(step) < 1e-12 * (1.0 + std::abs(s))) break;
  }
  return s;
}

}  // namespace

Pose estimate_relative_pose(const DepthMap& depth_a, const FlowField& flow_ab, const Mask& valid,
                            const Intrinsics& k, const Pose& initial, int iterations) {
  const int w = depth_a.width();
  const int h = depth_a.height();
  Correspondences c;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!valid(x, y) || !(depth_a(x, y) > 0.0)) continue;
      const Vec2 target(x + flow_ab(x, y, 0), y + flow_ab(x, y, 1));
      c.points.push_back(backproject(Vec2(x, y), depth_a(x, y), k));
      c.ray_a.push_back(backproject(Vec2(x, y), 1.0, k));
      c.ray_b.push_back(backproject(target, 1.0, k));
      c.targets.push_back(target);
    }
  }
  if (c.points.size() < 6) return initial;

  const Pose reprojected = refine_reprojection(c, k, initial, iterations);
  // The depth of frame a may be distorted; the epipolar constraint does not
  // depend on it, so the rotation and translation direction are re-fitted on
  // the Sampson error and only the translation length comes from the depth.
  const double focal = 0.5 * (k.fx + k.fy);
  const double length = reprojected.translation().norm();
  double median_depth = 0.0;
  {
    std::vector<double> z;
    for (const auto& p : c.points) z.push_back(p.z());
    std::nth_element(z.begin(), z.begin() + z.size() / 2, z.end());
    median_depth = z[z.size() / 2];
  }
  // Too little parallax to trust the epipolar geometry.
  if (length * focal < 0.5 * median_depth) return reprojected;
  auto [r, t] = refine_epipolar(c, reprojected.rotation(), reprojected.translation(), focal);
  double s = fit_translation_scale(c, r, t, k, length);
  if (s < 0.0) {
    t = -t;
    s = -s;
  }
  const Pose epipolar(r, s * t);
  const double before = sampson_cost(c, reprojected.rotation(), reprojected.translation(), focal);
  const double after = sampson_cost(c, epipolar.rotation(), epipolar.translation(), focal);
  return after < before ? epipolar : reprojected;
}

Pose interpolate_pose(const Pose& p0, const Pose& p1, double s) {
  return se3_exp(s * se3_log(p1 * p0.inverse())) * p0;
}

JointOptimizer::JointOptimizer(const VideoData& video, const FlowProvider& flows,
                               const RunConfig& config)
    : video_(video), flows_(flows), config_(config) {
  config_.validate();
  const int n = video_.frame_count();
  if (n < 2) throw DataError("need >= 2 frames");
  if (static_cast<int>(video_.priors.size()) != n || static_cast<int>(video_.masks.size()) != n ||
      static_cast<int>(video_.normalized.size()) != n) {
    throw DataError("video inputs have inconsistent frame counts");
  }
  grid_ = mesh_grid_size(video_.k.width, video_.k.height, config_.mesh_long_side);
  state_.resize(n);
  initialized_.assign(n, false);
}

void JointOptimizer::restore(std::vector<FrameVariables> state, std::vector<bool> initialized) {
  if (state.size() != state_.size() || initialized.size() != state_.size()) {
    throw DataError("checkpoint frame count differs");
  }
  for (std::size_t t = 0; t < state.size(); ++t) {
    if (!initialized[t]) continue;
    if (state[t].depth.mesh.rows() != grid_.second || state[t].depth.mesh.cols() != grid_.first) {
      throw DataError("checkpoint mesh size differs from the configuration");
    }
  }
  state_ = std::move(state);
  initialized_ = std::move(initialized);
}

const LossFrame& JointOptimizer::loss_frame(int t, int scale) {
  const auto key = std::make_pair(t, scale);
  auto it = frame_cache_.find(key);
  if (it != frame_cache_.end()) return it->second;
  ImageD image = video_.images[t];
  ImageD normalized = video_.normalized[t].normalized;
  DepthMap prior = video_.priors[t];
  Mask mask = video_.masks[t];
  if (scale > 1) {
    image = downsample_area(image, scale);
    normalized = downsample_area(normalized, scale);
    prior = downsample_area(prior, scale);
    mask = downsample_mask(mask, scale);
  }
  auto [pos, inserted] = frame_cache_.emplace(
      key, make_loss_frame(std::move(image), std::move(normalized), std::move(prior),
                           std::move(mask), grid_.first, grid_.second));
  return pos->second;
}

std::pair<FlowField, Mask> JointOptimizer::observed_flow(int a, int b, int scale) const {
  PairFlow ab = flows_.flow(a, b);
  PairFlow ba = flows_.flow(b, a);
  FlowField fab = scale > 1 ? downsample_flow(ab.flow, scale) : ab.flow;
  FlowField fba = scale > 1 ? downsample_flow(ba.flow, scale) : ba.flow;
  Mask valid = scale > 1 ? downsample_mask(ab.valid, scale) : ab.valid;
  const ImageD err = forward_backward_error(fab, fba);
  const double eps = config_.fb_tolerance(std::max(fab.width(), fab.height()));
  for (std::size_t p = 0; p < valid.size(); ++p) {
    if (!(err[p] <= eps)) valid[p] = 0;
  }
  return {std::move(fab), std::move(valid)};
}

void JointOptimizer::init_prior_depth(int t) {
  DepthParams& d = state_[t].depth;
  d.a = video_.normalized[t].mean;
  d.b = video_.normalized[t].stddev;
  d.mesh = Eigen::MatrixXd::Zero(grid_.second, grid_.first);
}

void JointOptimizer::init_depth_from(int t, int source) {
  const DepthParams& s = state_[source].depth;
  const NormalizedPrior& ns = video_.normalized[source];
  const NormalizedPrior& nt = video_.normalized[t];
  DepthParams& d = state_[t].depth;
  d.a = nt.mean + (s.a - ns.mean);
  d.b = nt.stddev * (s.b / ns.stddev);
  d.mesh = s.mesh.size() > 0 ? s.mesh : Eigen::MatrixXd::Zero(grid_.second, grid_.first);
}

void JointOptimizer::run_window(const WindowSpec& spec, std::vector<FrameVariables>& vars,
                                StageLog& log) {
  const int nf = static_cast<int>(spec.frames.size());
  LossProblem problem;
  problem.k = spec.scale > 1 ? video_.k.downsampled(spec.scale) : video_.k;
  problem.weights = config_.weights;
  problem.dynamic_pair_weight = config_.dynamic_pair_weight;
  problem.use_mesh = config_.use_mesh;
  problem.threads = config_.threads;
  std::map<int, int> local;
  for (int i = 0; i < nf; ++i) {
    local[spec.frames[i]] = i;
    problem.frames.push_back(loss_frame(spec.frames[i], spec.scale));
    if (spec.depth_trainable[i]) problem.regularized_frames.push_back(i);
  }
  for (const WindowPair& wp : spec.pairs) {
    LossPair p;
    p.a = local.at(wp.a);
    p.b = local.at(wp.b);
    p.weight = wp.weight;
    p.adjacent = wp.adjacent;
    if (wp.adjacent && config_.weights.flow != 0.0) {
      std::tie(p.flow_ab, p.flow_valid_ab) = observed_flow(wp.a, wp.b, spec.scale);
      std::tie(p.flow_ba, p.flow_valid_ba) = observed_flow(wp.b, wp.a, spec.scale);
    }
    problem.pairs.push_back(std::move(p));
  }

  for (auto& v : vars) {
    v.base = v.pose();
    v.xi.setZero();
  }
  const int grid_size = grid_.first * grid_.second;
  const int dim = 2 + grid_size + 6;
  std::vector<Adam> adam(nf, Adam(dim));
  std::vector<Eigen::VectorXd> rates(nf, Eigen::VectorXd::Zero(dim));
  for (int i = 0; i < nf; ++i) {
    if (spec.depth_trainable[i]) {
      const double lr = spec.lr * config_.depth_lr_multiplier;
      rates[i].head(2).setConstant(lr);
      if (config_.use_mesh) rates[i].segment(2, grid_size).setConstant(lr);
    }
    if (spec.pose_trainable[i]) rates[i].tail(6).setConstant(spec.lr * config_.pose_lr_multiplier);
  }

  std::vector<FrameGradient> grads;
  Eigen::VectorXd params(dim);
  Eigen::VectorXd g(dim);
  for (int it = 0; it <= spec.iterations; ++it) {
    LossBreakdown breakdown;
    const bool last = it == spec.iterations;
    evaluate_loss(problem, vars, &breakdown, last ? nullptr : &grads);
    log.entries.push_back({spec.window, it, breakdown});
    if (!std::isfinite(breakdown.total())) {
      throw NumericalError(log.stage + ": non-finite loss in window " + std::to_string(spec.window));
    }
    if (last) break;
    for (int i = 0; i < nf; ++i) {
      if (rates[i].isZero()) continue;
      FrameVariables& v = vars[i];
      params[0] = v.depth.a;
      params[1] = v.depth.b;
      params.segment(2, grid_size) = Eigen::Map<const Eigen::VectorXd>(v.depth.mesh.data(), grid_size);
      params.tail(6) = v.xi;
      g[0] = grads[i].a;
      g[1] = grads[i].b;
      g.segment(2, grid_size) = Eigen::Map<const Eigen::VectorXd>(grads[i].mesh.data(), grid_size);
      g.tail(6) = grads[i].xi;
      adam[i].step(params, g, rates[i]);
      v.depth.a = params[0];
      v.depth.b = params[1];
      Eigen::Map<Eigen::VectorXd>(v.depth.mesh.data(), grid_size) = params.segment(2, grid_size);
      v.xi = params.tail<6>();
    }
  }
}

std::vector<RelativeMeasurement> JointOptimizer::optimize_sequential_keyframes(
    const std::vector<int>& keyframes) {
  const int k = static_cast<int>(keyframes.size());
  if (k < 1) throw DataError("sequential stage: no keyframes");
  const int scale = config_.keyframe_loss_scale;
  const int max_tau = config_.association_gap();
  StageLog log{"sequential", {}};
  std::vector<bool> finalized(k, false);

  const auto windows = make_windows(k, config_.batch_size, max_tau);
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const auto [first, last] = windows[w];
    // Initialise new keyframes from their predecessor.
    for (int i = first; i <= last; ++i) {
      const int t = keyframes[i];
      if (initialized_[t]) continue;
      if (i == 0) {
        init_prior_depth(t);
        state_[t].base = Pose::Identity();
      } else {
        const int s = keyframes[i - 1];
        init_depth_from(t, s);
        Pose start = state_[s].pose();
        if (config_.flow_pose_init) {
          const LossFrame& fs = loss_frame(s, scale);
          const DepthMap ds = depth_from_params(fs.normalized_prior, state_[s].depth, config_.use_mesh);
          auto [flow, valid] = observed_flow(s, t, scale);
          for (std::size_t p = 0; p < valid.size(); ++p) valid[p] &= fs.static_mask[p];
          const Pose z = estimate_relative_pose(ds, flow, valid, video_.k.downsampled(scale),
                                                Pose::Identity());
          start = z * start;
        }
        state_[t].base = start;
      }
      state_[t].xi.setZero();
      initialized_[t] = true;
    }
    if (last - first + 1 < 2) {
      spdlog::warn("sequential stage: window {} has fewer than 2 keyframes; poses left at initialisation", w);
      for (int i = first; i <= last; ++i) finalized[i] = true;
      continue;
    }

    WindowSpec spec;
    spec.scale = scale;
    spec.iterations = config_.iterations_sequential;
    spec.lr = config_.lr_sequential;
    spec.window = static_cast<int>(w);
    for (int i = first; i <= last; ++i) {
      spec.frames.push_back(keyframes[i]);
      spec.depth_trainable.push_back(!finalized[i]);
      spec.pose_trainable.push_back(!finalized[i] && i != 0);
    }
    for (int tau : config_.tau_set) {
      for (int i = first; i + tau <= last; ++i) {
        if (finalized[i] && finalized[i + tau]) continue;
        spec.pairs.push_back({keyframes[i], keyframes[i + tau], 1.0 / tau, tau == 1});
      }
    }
    std::vector<FrameVariables> vars;
    for (int t : spec.frames) vars.push_back(state_[t]);
    run_window(spec, vars, log);
    for (std::size_t i = 0; i < spec.frames.size(); ++i) state_[spec.frames[i]] = vars[i];
    for (int i = first; i <= last; ++i) finalized[i] = true;
  }
  logs_.push_back(std::move(log));

  std::vector<RelativeMeasurement> out;
  for (int tau : config_.tau_set) {
    for (int i = 0; i + tau < k; ++i) {
      const Pose pi = state_[keyframes[i]].pose();
      const Pose pj = state_[keyframes[i + tau]].pose();
      out.push_back({i, i + tau, pj * pi.inverse()});
    }
  }
  return out;
}

std::vector<RelativeMeasurement> JointOptimizer::optimize_covisible_pairs(
    const std::vector<int>& keyframes, const std::vector<std::pair<int, int>>& pairs) {
  std::vector<RelativeMeasurement> out;
  if (pairs.empty()) return out;
  const int scale = config_.keyframe_loss_scale;
  StageLog log{"covisible", {}};
  int index = 0;
  for (const auto& [i, j] : pairs) {
    const int ti = keyframes.at(i);
    const int tj = keyframes.at(j);
    std::vector<FrameVariables> vars{state_[ti], state_[tj]};
    if (config_.flow_pose_init) {
      const LossFrame& fi = loss_frame(ti, scale);
      const DepthMap di = depth_from_params(fi.normalized_prior, vars[0].depth, config_.use_mesh);
      auto [flow, valid] = observed_flow(ti, tj, scale);
      for (std::size_t p = 0; p < valid.size(); ++p) valid[p] &= fi.static_mask[p];
      const Pose pi = vars[0].pose();
      const Pose drifted = vars[1].pose() * pi.inverse();
      const Pose z = estimate_relative_pose(di, flow, valid, video_.k.downsampled(scale), drifted);
      vars[1].base = z * pi;
      vars[1].xi.setZero();
    }
    WindowSpec spec;
    spec.frames = {ti, tj};
    spec.depth_trainable = {false, false};
    spec.pose_trainable = {true, true};
    spec.pairs.push_back({ti, tj, 1.0, false});
    spec.scale = scale;
    spec.iterations = config_.iterations_covisible;
    spec.lr = config_.lr_covisible;
    spec.window = index++;
    run_window(spec, vars, log);
    out.push_back({i, j, vars[1].pose() * vars[0].pose().inverse()});
  }
  logs_.push_back(std::move(log));
  return out;
}

void JointOptimizer::set_keyframe_poses(const std::vector<int>& keyframes,
                                        const std::vector<Pose>& poses) {
  if (keyframes.size() != poses.size()) throw DataError("keyframe pose count differs");
  for (std::size_t i = 0; i < keyframes.size(); ++i) {
    state_[keyframes[i]].base = poses[i];
    state_[keyframes[i]].xi.setZero();
  }
}

void JointOptimizer::optimize_nonkeyframes(const std::vector<int>& keyframes) {
  const int n = video_.frame_count();
  std::vector<bool> is_key(n, false);
  for (int t : keyframes) {
    if (!initialized_[t]) throw DataError("non-keyframe stage: keyframe " + std::to_string(t) + " not optimised");
    is_key[t] = true;
  }
  if (!is_key.front() || !is_key.back()) {
    throw DataError("non-keyframe stage: first and last frames must be keyframes");
  }
  for (std::size_t q = 0; q + 1 < keyframes.size(); ++q) {
    const int k0 = keyframes[q];
    const int k1 = keyframes[q + 1];
    const Pose p0 = state_[k0].pose();
    const Pose p1 = state_[k1].pose();
    for (int t = k0 + 1; t < k1; ++t) {
      const double s = static_cast<double>(t - k0) / (k1 - k0);
      state_[t].base = interpolate_pose(p0, p1, s);
      state_[t].xi.setZero();
      init_depth_from(t, t - k0 <= k1 - t ? k0 : k1);
      initialized_[t] = true;
    }
  }

  StageLog log{"nonkeyframe", {}};
  std::vector<bool> finalized(n, false);
  const auto windows = make_windows(n, config_.batch_size, config_.association_gap());
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const auto [first, last] = windows[w];
    WindowSpec spec;
    spec.scale = 1;
    spec.iterations = config_.iterations_nonkeyframe;
    spec.lr = config_.lr_nonkeyframe;
    spec.window = static_cast<int>(w);
    for (int t = first; t <= last; ++t) {
      spec.frames.push_back(t);
      spec.depth_trainable.push_back(!finalized[t]);
      spec.pose_trainable.push_back(!finalized[t] && !is_key[t]);
    }
    for (int tau : config_.tau_set) {
      for (int t = first; t + tau <= last; ++t) {
        if (finalized[t] && finalized[t + tau]) continue;
        spec.pairs.push_back({t, t + tau, 1.0, tau == 1});
      }
    }
    if (spec.pairs.empty()) continue;
    std::vector<FrameVariables> vars;
    for (int t : spec.frames) vars.push_back(state_[t]);
    run_window(spec, vars, log);
    for (std::size_t i = 0; i < spec.frames.size(); ++i) state_[spec.frames[i]] = vars[i];
    for (int t = first; t <= last; ++t) finalized[t] = true;
  }
  logs_.push_back(std::move(log));
}

std::vector<Pose> JointOptimizer::poses() const {
  std::vector<Pose> out;
  out.reserve(state_.size());
  for (const auto& v : state_) out.push_back(v.pose());
  return out;
}

std::vector<DepthMap> JointOptimizer::depths() const {
  std::vector<DepthMap> out;
  out.reserve(state_.size());
  for (std::size_t t = 0; t < state_.size(); ++t) {
    out.push_back(depth_from_params(video_.normalized[t].normalized, state_[t].depth, config_.use_mesh));
  }
  return out;
}

namespace {

void put_split(Raster& r, int i, double v) {
  const float hi = static_cast<float>(v);
  r(i, 0) = hi;
  r(i, 1) = static_cast<float>(v - static_cast<double>(hi));
}

double get_split(const Raster& r, int i) {
  return static_cast<double>(r(i, 0)) + static_cast<double>(r(i, 1));
}

}  // namespace

void write_checkpoint(const std::vector<FrameVariables>& state, const std::vector<bool>& initialized,
                      const fs::path& dir) {
  fs::create_directories(dir);
  for (std::size_t t = 0; t < state.size(); ++t) {
    const fs::path path = dir / indexed_name("state_", static_cast<int>(t));
    if (!initialized[t]) {
      fs::remove(path);
      continue;
    }
    const FrameVariables& v = state[t];
    const int g = static_cast<int>(v.depth.mesh.size());
    Raster r(4 + g + 6 + 7, 2, 1);
    int i = 0;
    put_split(r, i++, v.depth.a);
    put_split(r, i++, v.depth.b);
    put_split(r, i++, static_cast<double>(v.depth.mesh.cols()));
    put_split(r, i++, static_cast<double>(v.depth.mesh.rows()));
    for (int m = 0; m < g; ++m) put_split(r, i++, v.depth.mesh.data()[m]);
    for (int m = 0; m < 6; ++m) put_split(r, i++, v.xi[m]);
    const auto& q = v.base.quaternion();
    put_split(r, i++, q.x());
    put_split(r, i++, q.y());
    put_split(r, i++, q.z());
    put_split(r, i++, q.w());
    for (int m = 0; m < 3; ++m) put_split(r, i++, v.base.translation()[m]);
    write_raster(r, path);
  }
}

void read_checkpoint(const fs::path& dir, std::vector<FrameVariables>* state,
                     std::vector<bool>* initialized) {
  for (std::size_t t = 0; t < state->size(); ++t) {
    const fs::path path = dir / indexed_name("state_", static_cast<int>(t));
    if (!fs::exists(path)) {
      (*initialized)[t] = false;
      continue;
    }
    const Raster r = read_raster(path);
    if (r.height() != 2 || r.width() < 4) throw DataError("malformed checkpoint " + path.string());
    FrameVariables v;
    int i = 0;
    v.depth.a = get_split(r, i++);
    v.depth.b = get_split(r, i++);
    const int gw = static_cast<int>(std::lround(get_split(r, i++)));
    const int gh = static_cast<int>(std::lround(get_split(r, i++)));
    if (gw < 0 || gh < 0 || r.width() != 4 + gw * gh + 13) {
      throw DataError("malformed checkpoint " + path.string());
    }
    v.depth.mesh = Eigen::MatrixXd(gh, gw);
    for (int m = 0; m < gw * gh; ++m) v.depth.mesh.data()[m] = get_split(r, i++);
    for (int m = 0; m < 6; ++m) v.xi[m] = get_split(r, i++);
    Eigen::Quaterniond q;
    q.x() = get_split(r, i++);
    q.y() = get_split(r, i++);
    q.z() = get_split(r, i++);
    q.w() = get_split(r, i++);
    Vec3 tr;
    for (int m = 0; m < 3; ++m) tr[m] = get_split(r, i++);
    v.base = Pose(q.normalized(), tr);
    (*state)[t] = v;
    (*initialized)[t] = true;
  }
}

void write_loss_log(const StageLog& log, const fs::path& path) {
  std::string text = "# stage " + log.stage +
                     "\n# window iteration total photometric flow consistency gradient deform\n";
  char buf[256];
  for (const auto& e : log.entries) {
    std::snprintf(buf, sizeof(buf), "%d %d %.10g %.10g %.10g %.10g %.10g %.10g\n", e.window,
                  e.iteration, e.loss.total(), e.loss.photometric, e.loss.flow, e.loss.consistency,
                  e.loss.gradient, e.loss.deform);
    text += buf;
  }
  write_text_file(text, path);
}

}  // namespace gcvd
