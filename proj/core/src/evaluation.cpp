#include "gcvd/evaluation.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "gcvd/error.hpp"

namespace gcvd {

Similarity umeyama_align(const std::vector<Vec3>& est, const std::vector<Vec3>& gt,
                         bool with_scale) {
  if (est.size() != gt.size()) throw DataError("umeyama: point counts differ");
  const std::size_t n = est.size();
  if (n < 3) throw DataError("umeyama: need at least 3 correspondences");
  Vec3 mu_e = Vec3::Zero();
  Vec3 mu_g = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    mu_e += est[i];
    mu_g += gt[i];
  }
  mu_e /= static_cast<double>(n);
  mu_g /= static_cast<double>(n);
  Mat3 cov = Mat3::Zero();
  double var_e = 0.0;
  double var_g = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 de = est[i] - mu_e;
    const Vec3 dg = gt[i] - mu_g;
    cov += dg * de.transpose();
    var_e += de.squaredNorm();
    var_g += dg.squaredNorm();
  }
  cov /= static_cast<double>(n);
  var_e /= static_cast<double>(n);
  var_g /= static_cast<double>(n);
  if (var_e < 1e-18 || var_g < 1e-18) throw DataError("umeyama: coincident points");

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d sv = svd.singularValues();
  // Rank < 2 means the points are collinear and the rotation is unconstrained.
  if (sv[1] < 1e-12 * std::max(sv[0], 1e-300)) throw DataError("umeyama: collinear points");
  Mat3 s = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s(2, 2) = -1.0;

  Similarity sim;
  sim.rotation = svd.matrixU() * s * svd.matrixV().transpose();
  sim.scale = with_scale ? (sv.asDiagonal() * s).trace() / var_e : 1.0;
  sim.translation = mu_g - sim.scale * sim.rotation * mu_e;
  return sim;
}

namespace {

std::vector<Vec3> positions(const std::vector<Pose>& c2w) {
  std::vector<Vec3> out;
  out.reserve(c2w.size());
  for (const auto& p : c2w) out.push_back(p.translation());
  return out;
}

}  // namespace

double absolute_trajectory_error(const std::vector<Pose>& est_c2w,
                                 const std::vector<Pose>& gt_c2w) {
  if (est_c2w.size() != gt_c2w.size()) throw DataError("ATE: trajectory lengths differ");
  const auto pe = positions(est_c2w);
  const auto pg = positions(gt_c2w);
  const Similarity sim = umeyama_align(pe, pg, true);
  double sum = 0.0;
  for (std::size_t i = 0; i < pe.size(); ++i) {
    sum += (pg[i] - sim.apply(pe[i])).squaredNorm();
  }
  return std::sqrt(sum / static_cast<double>(pe.size()));
}

RelativePoseError relative_pose_error(const std::vector<Pose>& est_c2w,
                                      const std::vector<Pose>& gt_c2w, int step) {
  if (est_c2w.size() != gt_c2w.size()) throw DataError("RPE: trajectory lengths differ");
  const int n = static_cast<int>(est_c2w.size());
  if (step < 1 || step >= n) throw DataError("RPE: step must be in [1, length)");
  const Similarity sim = umeyama_align(positions(est_c2w), positions(gt_c2w), true);
  std::vector<Pose> aligned;
  aligned.reserve(n);
  for (const auto& p : est_c2w) {
    aligned.emplace_back(Mat3(sim.rotation * p.rotation()), sim.apply(p.translation()));
  }
  RelativePoseError out;
  double trans_sq = 0.0;
  double rot = 0.0;
  for (int i = 0; i + step < n; ++i) {
    const Pose gt_rel = gt_c2w[i].inverse() * gt_c2w[i + step];
    const Pose est_rel = aligned[i].inverse() * aligned[i + step];
    const Pose e = gt_rel.inverse() * est_rel;
    trans_sq += e.translation().squaredNorm();
    const Eigen::AngleAxisd aa(e.quaternion());
    double angle = std::abs(aa.angle());
    if (angle > std::numbers::pi) angle = 2.0 * std::numbers::pi - angle;
    rot += angle;
  }
  const int m = n - step;
  out.translation_rmse = std::sqrt(trans_sq / m);
  out.rotation_mean_deg = rot / m * 180.0 / std::numbers::pi;
  return out;
}

bool frame_depth_metrics(const DepthMap& est, const DepthMap& gt, const Mask* mask,
                         DepthMetrics* out) {
  if (!est.same_shape(gt)) throw DataError("depth metrics: dimensions disagree");
  std::vector<std::size_t> valid;
  std::vector<double> ratios;
  for (std::size_t p = 0; p < gt.size(); ++p) {
    if (mask && !(*mask)[p]) continue;
    const double e = est[p];
    const double g = gt[p];
    if (!(e > 0.0) || !(g > 0.0) || !std::isfinite(e) || !std::isfinite(g)) continue;
    valid.push_back(p);
    ratios.push_back(g / e);
  }
  if (valid.empty()) return false;
  const std::size_t mid = ratios.size() / 2;
  std::nth_element(ratios.begin(), ratios.begin() + mid, ratios.end());
  double scale = ratios[mid];
  if (ratios.size() % 2 == 0) {
    const double lower = *std::max_element(ratios.begin(), ratios.begin() + mid);
    scale = 0.5 * (scale + lower);
  }
  double abs_rel = 0.0, sq_rel = 0.0, sq = 0.0, good = 0.0;
  for (std::size_t p : valid) {
    const double e = est[p] * scale;
    const double g = gt[p];
    const double d = e - g;
    abs_rel += std::abs(d) / g;
    sq_rel += d * d / g;
    sq += d * d;
    if (std::max(e / g, g / e) < 1.25) good += 1.0;
  }
  const double n = static_cast<double>(valid.size());
  out->abs_rel = abs_rel / n;
  out->sq_rel = sq_rel / n;
  out->rmse = std::sqrt(sq / n);
  out->delta_125 = good / n;
  out->frames = 1;
  return true;
}

DepthMetrics depth_metrics(const std::vector<DepthMap>& est, const std::vector<DepthMap>& gt,
                           const std::vector<Mask>& masks) {
  if (est.size() != gt.size()) throw DataError("depth metrics: frame counts differ");
  if (!masks.empty() && masks.size() != gt.size()) {
    throw DataError("depth metrics: mask count differs");
  }
  DepthMetrics total;
  for (std::size_t f = 0; f < est.size(); ++f) {
    DepthMetrics m;
    if (!frame_depth_metrics(est[f], gt[f], masks.empty() ? nullptr : &masks[f], &m)) {
      ++total.excluded_frames;
      continue;
    }
    total.abs_rel += m.abs_rel;
    total.sq_rel += m.sq_rel;
    total.rmse += m.rmse;
    total.delta_125 += m.delta_125;
    ++total.frames;
  }
  if (total.frames > 0) {
    total.abs_rel /= total.frames;
    total.sq_rel /= total.frames;
    total.rmse /= total.frames;
    total.delta_125 /= total.frames;
  }
  return total;
}

double trajectory_extent(const std::vector<Pose>& c2w) {
  double extent = 0.0;
  for (std::size_t i = 0; i < c2w.size(); ++i) {
    for (std::size_t j = i + 1; j < c2w.size(); ++j) {
      extent = std::max(extent, (c2w[i].translation() - c2w[j].translation()).norm());
    }
  }
  return extent;
}

}  // namespace gcvd
