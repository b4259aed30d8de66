#include "gcvd/keyframing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "gcvd/error.hpp"
#include "gcvd/geometry.hpp"

namespace gcvd {

double mean_static_flow_magnitude(const FlowField& flow, const Mask& mask, int long_side) {
  if (!flow.same_shape(mask)) throw DataError("flow and mask dimensions disagree");
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < flow.height(); ++y) {
    for (int x = 0; x < flow.width(); ++x) {
      if (!mask(x, y)) continue;
      sum += std::hypot(flow(x, y, 0), flow(x, y, 1));
      ++n;
    }
  }
  if (n == 0) throw DataError("no static pixels");
  return sum / static_cast<double>(n) / long_side;
}

KeyframeSet select_keyframes(const std::vector<double>& step_magnitudes, double threshold) {
  KeyframeSet set;
  set.step_magnitudes = step_magnitudes;
  const int n = static_cast<int>(step_magnitudes.size()) + 1;
  set.indices.push_back(0);
  set.accumulation.assign(n, 0.0);
  double acc = 0.0;
  for (int t = 1; t < n; ++t) {
    acc += step_magnitudes[t - 1];
    set.accumulation[t] = acc;
    // relative slack so that e.g. ten steps of 0.01 reach 0.1
    if (acc >= threshold * (1.0 - 1e-12)) {
      set.indices.push_back(t);
      acc = 0.0;
    }
  }
  if (set.indices.back() != n - 1) set.indices.push_back(n - 1);
  return set;
}

std::vector<int> uniform_keyframes(int frame_count, int count) {
  std::vector<int> out;
  if (frame_count <= 0) return out;
  count = std::clamp(count, 1, frame_count);
  if (count == 1 || frame_count == 1) return {0};
  for (int i = 0; i < count; ++i) {
    const int idx = static_cast<int>(std::lround(
        static_cast<double>(i) * (frame_count - 1) / (count - 1)));
    if (out.empty() || idx > out.back()) out.push_back(idx);
  }
  return out;
}

Eigen::VectorXd image_descriptor(const ImageD& image) {
  constexpr int g = kDescriptorGrid;
  const int w = image.width();
  const int h = image.height();
  Eigen::VectorXd d = Eigen::VectorXd::Zero(g * g);
  const double cell_w = static_cast<double>(w) / g;
  const double cell_h = static_cast<double>(h) / g;
  for (int cy = 0; cy < g; ++cy) {
    const double y0 = cy * cell_h;
    const double y1 = (cy + 1) * cell_h;
    for (int cx = 0; cx < g; ++cx) {
      const double x0 = cx * cell_w;
      const double x1 = (cx + 1) * cell_w;
      double sum = 0.0;
      double area = 0.0;
      for (int y = static_cast<int>(std::floor(y0)); y < static_cast<int>(std::ceil(y1)) && y < h; ++y) {
        const double wy = std::min(y1, y + 1.0) - std::max(y0, static_cast<double>(y));
        if (wy <= 0.0) continue;
        for (int x = static_cast<int>(std::floor(x0)); x < static_cast<int>(std::ceil(x1)) && x < w; ++x) {
          const double wx = std::min(x1, x + 1.0) - std::max(x0, static_cast<double>(x));
          if (wx <= 0.0) continue;
          sum += wx * wy * image(x, y);
          area += wx * wy;
        }
      }
      d[cy * g + cx] = area > 0.0 ? sum / area : 0.0;
    }
  }
  d.array() -= d.mean();
  const double norm = d.norm();
  if (norm < 1e-12) {
    d.setZero();
    d[0] = 1.0;
    return d;
  }
  return d / norm;
}

Eigen::MatrixXd similarity_matrix(const std::vector<Eigen::VectorXd>& descriptors) {
  const int k = static_cast<int>(descriptors.size());
  Eigen::MatrixXd a(k, k);
  for (int i = 0; i < k; ++i) {
    for (int j = i; j < k; ++j) {
      if (descriptors[i].size() != descriptors[j].size()) {
        throw DataError("similarity_matrix: descriptor lengths differ");
      }
      const double s = descriptors[i].dot(descriptors[j]);
      a(i, j) = s;
      a(j, i) = s;
    }
  }
  return a;
}

std::vector<CandidatePair> associate_candidates(const Eigen::MatrixXd& similarity,
                                                double threshold, int gap, int window) {
  const int k = static_cast<int>(similarity.rows());
  const int r = window / 2;
  auto score = [&](int i, int j) { return 0.5 * (similarity(i, j) + similarity(j, i)); };
  auto admissible = [&](int i, int j) {
    return i >= 0 && j < k && i < j && j - i > gap;
  };
  std::vector<CandidatePair> out;
  for (int i = 0; i < k; ++i) {
    for (int j = i + gap + 1; j < k; ++j) {
      const double s = score(i, j);
      if (s < threshold) continue;
      bool is_max = true;
      for (int di = -r; di <= r && is_max; ++di) {
        for (int dj = -r; dj <= r; ++dj) {
          if (di == 0 && dj == 0) continue;
          const int ni = i + di;
          const int nj = j + dj;
          if (!admissible(ni, nj)) continue;
          const double ns = score(ni, nj);
          if (ns > s || (ns == s && std::tie(ni, nj) < std::tie(i, j))) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) out.push_back({i, j, s});
    }
  }
  return out;
}

ImageD forward_backward_error(const FlowField& flow_ab, const FlowField& flow_ba) {
  if (!flow_ab.same_shape(flow_ba)) throw DataError("flow dimensions disagree");
  const int w = flow_ab.width();
  const int h = flow_ab.height();
  ImageD err(w, h, 1, std::numeric_limits<double>::infinity());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double u = x + flow_ab(x, y, 0);
      const double v = y + flow_ab(x, y, 1);
      if (!in_bilinear_support(u, v, w, h)) continue;
      const BilinearTap tap = make_tap(u, v, w, h);
      const double ex = flow_ab(x, y, 0) + sample(flow_ba, tap, 0);
      const double ey = flow_ab(x, y, 1) + sample(flow_ba, tap, 1);
      err(x, y) = std::hypot(ex, ey);
    }
  }
  return err;
}

PairVerification verify_pair(const FlowField& flow_ij, const FlowField& flow_ji,
                             const Mask& mask_i, double keyframe_threshold,
                             int long_side, double fb_epsilon, double min_inlier_ratio) {
  PairVerification result;
  if (flow_ij.empty() || flow_ji.empty()) throw DataError("flow provider miss");
  const ImageD err = forward_backward_error(flow_ij, flow_ji);
  std::size_t n = 0;
  std::size_t inliers = 0;
  for (std::size_t p = 0; p < mask_i.size(); ++p) {
    if (!mask_i[p]) continue;
    ++n;
    if (err[p] <= fb_epsilon) ++inliers;
  }
  if (n == 0) throw DataError("no static pixels");
  result.fb_inlier_ratio = static_cast<double>(inliers) / static_cast<double>(n);
  result.mean_flow = mean_static_flow_magnitude(flow_ij, mask_i, long_side);
  if (result.fb_inlier_ratio < min_inlier_ratio) {
    result.reason = "forward-backward inlier ratio below threshold";
  } else if (result.mean_flow > keyframe_threshold) {
    result.reason = "mean flow magnitude exceeds keyframe threshold";
  } else {
    result.accepted = true;
  }
  return result;
}

}  // namespace gcvd
