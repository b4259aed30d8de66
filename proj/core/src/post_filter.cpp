#include "gcvd/post_filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gcvd/error.hpp"

namespace gcvd {

ChainedFlow chain_flow(const AdjacentFlows& flows, int i, int t) {
  const FlowField* any = nullptr;
  if (!flows.forward.empty()) any = &flows.forward.front();
  if (!any) throw DataError("chain_flow: no adjacent flows");
  const int w = any->width();
  const int h = any->height();
  ChainedFlow out{FlowField(w, h, 2), Mask(w, h, 1, 1)};
  const int step = t > i ? 1 : -1;
  for (int cur = i; cur != t; cur += step) {
    const FlowField& hop = step > 0 ? flows.forward.at(cur) : flows.backward.at(cur);
    if (!hop.same_shape(w, h)) throw DataError("chain_flow: flow dimensions disagree");
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!out.valid(x, y)) continue;
        const double u = x + out.flow(x, y, 0);
        const double v = y + out.flow(x, y, 1);
        if (!in_bilinear_support(u, v, w, h)) {
          out.valid(x, y) = 0;
          continue;
        }
        const BilinearTap tap = make_tap(u, v, w, h);
        out.flow(x, y, 0) += sample(hop, tap, 0);
        out.flow(x, y, 1) += sample(hop, tap, 1);
      }
    }
  }
  // The final position must also be addressable.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (out.valid(x, y) &&
          !in_bilinear_support(x + out.flow(x, y, 0), y + out.flow(x, y, 1), w, h)) {
        out.valid(x, y) = 0;
      }
    }
  }
  return out;
}

ImageD fb_inconsistency(const ChainedFlow& forward, const ChainedFlow& backward) {
  const int w = forward.flow.width();
  const int h = forward.flow.height();
  ImageD diff(w, h, 1, std::numeric_limits<double>::infinity());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!forward.valid(x, y)) continue;
      const double u = x + forward.flow(x, y, 0);
      const double v = y + forward.flow(x, y, 1);
      if (!in_bilinear_support(u, v, w, h)) continue;
      const BilinearTap tap = make_tap(u, v, w, h);
      // Every support pixel of the backward lookup must be valid.
      bool ok = true;
      for (int dy = 0; dy <= 1 && ok; ++dy) {
        for (int dx = 0; dx <= 1; ++dx) {
          const double wgt = (dx ? tap.fx : 1.0 - tap.fx) * (dy ? tap.fy : 1.0 - tap.fy);
          if (wgt > 0.0 && !backward.valid(tap.x0 + dx, tap.y0 + dy)) {
            ok = false;
            break;
          }
        }
      }
      if (!ok) continue;
      const double ex = forward.flow(x, y, 0) + sample(backward.flow, tap, 0);
      const double ey = forward.flow(x, y, 1) + sample(backward.flow, tap, 1);
      diff(x, y) = std::hypot(ex, ey);
    }
  }
  return diff;
}

DepthMap filter_depth(int t, const std::vector<DepthMap>& depths, const std::vector<Pose>& poses,
                      const Intrinsics& k, const AdjacentFlows& flows,
                      const FilterParams& params) {
  const int n = static_cast<int>(depths.size());
  if (t < 0 || t >= n) throw DataError("filter_depth: frame index out of range");
  if (static_cast<int>(poses.size()) != n) throw DataError("filter_depth: pose count differs");
  const DepthMap& base = depths[t];
  const int w = base.width();
  const int h = base.height();
  const int lo = std::max(0, t - params.span);
  const int hi = std::min(n - 1, t + params.span);
  if (lo == hi) return base;

  ImageD weight_sum(w, h, 1, 0.0);
  ImageD value_sum(w, h, 1, 0.0);
  const double self_weight = std::exp(-params.gamma_depth);
  for (std::size_t p = 0; p < base.size(); ++p) {
    weight_sum[p] = self_weight;
    value_sum[p] = self_weight * base[p];
  }

  for (int i = lo; i <= hi; ++i) {
    if (i == t) continue;
    const ChainedFlow to_i = chain_flow(flows, t, i);
    const ChainedFlow to_t = chain_flow(flows, i, t);
    const ImageD diff = fb_inconsistency(to_i, to_t);
    const Pose rel = poses[t] * poses[i].inverse();
    const DepthMap& di = depths[i];
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!std::isfinite(diff(x, y))) continue;
        const double u = x + to_i.flow(x, y, 0);
        const double v = y + to_i.flow(x, y, 1);
        const BilinearTap tap = make_tap(u, v, w, h);
        const double d = sample(di, tap);
        if (!(d > 0.0)) continue;
        const Vec3 pt = rel.transform(Vec3(d * (u - k.cx) / k.fx, d * (v - k.cy) / k.fy, d));
        if (!(pt.z() > kMinDepth)) continue;
        const double projected = pt.z();
        const double dt = base(x, y);
        const double ratio = std::max(dt, projected) / std::min(dt, projected);
        const double wgt =
            std::exp(-params.gamma_depth * ratio - params.gamma_flow * diff(x, y));
        weight_sum(x, y) += wgt;
        value_sum(x, y) += wgt * projected;
      }
    }
  }
  DepthMap out(w, h, 1);
  for (std::size_t p = 0; p < out.size(); ++p) out[p] = value_sum[p] / weight_sum[p];
  return out;
}

}  // namespace gcvd
