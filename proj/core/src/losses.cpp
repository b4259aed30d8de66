#include "gcvd/losses.hpp"

#include <cmath>

#include "gcvd/error.hpp"
#include "parallel.hpp"

namespace gcvd {
namespace {

constexpr double kC1 = 1e-4;
constexpr double kC2 = 9e-4;
constexpr double kMinGradientNorm = 1e-8;

struct Hash {
  std::uint64_t h = 1469598103934665603ULL;
  void add(std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ULL;
  }
};

int sign_code(double v) { return v > 0.0 ? 1 : (v < 0.0 ? 2 : 0); }
double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

// 3x3 mean with replicate padding.
ImageD box3(const ImageD& src) {
  const int w = src.width();
  const int h = src.height();
  ImageD out(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        const int yy = clampi(y + dy, 0, h - 1);
        for (int dx = -1; dx <= 1; ++dx) s += src(clampi(x + dx, 0, w - 1), yy);
      }
      out(x, y) = s / 9.0;
    }
  }
  return out;
}

void box3_adjoint(const ImageD& g, ImageD* out) {
  const int w = g.width();
  const int h = g.height();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = g(x, y) / 9.0;
      if (v == 0.0) continue;
      for (int dy = -1; dy <= 1; ++dy) {
        const int yy = clampi(y + dy, 0, h - 1);
        for (int dx = -1; dx <= 1; ++dx) (*out)(clampi(x + dx, 0, w - 1), yy) += v;
      }
    }
  }
}

struct DirectionInput {
  const ImageD* image_a = nullptr;
  const ImageD* image_b = nullptr;
  const DepthMap* depth_a = nullptr;
  const DepthMap* depth_b = nullptr;
  const Mask* static_a = nullptr;
  Pose pose_a;
  Pose pose_b;
  const Intrinsics* k = nullptr;
  const FlowField* flow = nullptr;
  const Mask* flow_valid = nullptr;
  bool photometric = true;
  bool consistency = true;
};

struct DirectionScales {
  double photometric = 0.0;
  double flow = 0.0;
  double consistency = 0.0;
};

struct DirectionResult {
  LossValue photometric;
  LossValue flow;
  LossValue consistency;
  ImageD grad_depth_a;
  ImageD grad_depth_b;
  Vec6 raw_a = Vec6::Zero();
  Vec6 raw_b = Vec6::Zero();
  std::uint64_t signature = 0;
};

struct PixelGeometry {
  Vec3 ray;     // R_rel K^-1 [x, 1]
  Vec3 point;   // in camera b
  double u = 0.0;
  double v = 0.0;
  BilinearTap tap;
  bool valid = false;
};

struct SsimParts {
  double value = 0.0;
  double d_ew = 0.0;   // dSSIM / dE[w]
  double d_eww = 0.0;  // dSSIM / dE[w^2]
  double d_ewa = 0.0;  // dSSIM / dE[w a]
};

SsimParts ssim(double ew, double ea, double eww, double eaa, double ewa) {
  const double mx = ew;
  const double my = ea;
  const double sx = eww - mx * mx;
  const double sy = eaa - my * my;
  const double sxy = ewa - mx * my;
  const double a = 2.0 * mx * my + kC1;
  const double b = 2.0 * sxy + kC2;
  const double c = mx * mx + my * my + kC1;
  const double d = sx + sy + kC2;
  SsimParts out;
  out.value = a * b / (c * d);
  const double d_mx = out.value * (2.0 * my / a - 2.0 * mx / c);
  const double d_sx = -out.value / d;
  const double d_sxy = 2.0 * out.value / b;
  out.d_ew = d_mx + d_sx * (-2.0 * mx) + d_sxy * (-my);
  out.d_eww = d_sx;
  out.d_ewa = d_sxy;
  return out;
}

void run_direction(const DirectionInput& in, const DirectionScales* scales,
                   DirectionResult* out) {
  const ImageD& ia = *in.image_a;
  const ImageD& ib = *in.image_b;
  const DepthMap& da = *in.depth_a;
  const DepthMap& db = *in.depth_b;
  const Intrinsics& k = *in.k;
  const int w = da.width();
  const int h = da.height();
  const std::size_t n = da.size();
  Hash hash;

  const Pose rel = in.pose_b * in.pose_a.inverse();
  const Mat3 r = rel.rotation();
  const Vec3 t = rel.translation();

  std::vector<PixelGeometry> geo(n);
  ImageD warped = ia;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      PixelGeometry& g = geo[static_cast<std::size_t>(y) * w + x];
      g.ray = r * Vec3((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
      g.point = da(x, y) * g.ray + t;
      const double z = g.point.z();
      g.valid = z > kMinDepth;
      if (g.valid) {
        g.u = k.fx * g.point.x() / z + k.cx;
        g.v = k.fy * g.point.y() / z + k.cy;
        g.valid = in_bilinear_support(g.u, g.v, w, h);
      }
      if (g.valid) {
        g.tap = make_tap(g.u, g.v, w, h);
        if (in.photometric) warped(x, y) = sample(ib, g.tap);
        hash.add(static_cast<std::uint64_t>(g.tap.x0) << 32 | static_cast<std::uint32_t>(g.tap.y0));
      } else {
        hash.add(0xFFFFFFFFFFFFFFFFULL);
      }
    }
  }

  // Photometric term.
  ImageD ew, ea, eww, eaa, ewa;
  if (in.photometric) {
    ImageD w2(w, h, 1), a2(w, h, 1), wa(w, h, 1);
    for (std::size_t p = 0; p < n; ++p) {
      w2[p] = warped[p] * warped[p];
      a2[p] = ia[p] * ia[p];
      wa[p] = warped[p] * ia[p];
    }
    ew = box3(warped);
    ea = box3(ia);
    eww = box3(w2);
    eaa = box3(a2);
    ewa = box3(wa);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t p = 0; p < n; ++p) {
      if (!geo[p].valid || !(*in.static_a)[p]) continue;
      const SsimParts s = ssim(ew[p], ea[p], eww[p], eaa[p], ewa[p]);
      sum += std::abs(warped[p] - ia[p]) + 0.5 * (1.0 - s.value);
      ++count;
      hash.add(sign_code(warped[p] - ia[p]));
    }
    out->photometric = {count ? sum / count : 0.0, count};
  }

  // Flow term.
  if (in.flow) {
    double sum = 0.0;
    std::size_t count = 0;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * w + x;
        if (!geo[p].valid || !(*in.flow_valid)[p]) continue;
        const double rx = geo[p].u - x - (*in.flow)(x, y, 0);
        const double ry = geo[p].v - y - (*in.flow)(x, y, 1);
        sum += std::abs(rx) + std::abs(ry);
        ++count;
        hash.add(sign_code(rx) * 3 + sign_code(ry));
      }
    }
    out->flow = {count ? sum / count : 0.0, count};
  }

  // Depth consistency term.
  std::vector<double> sampled;
  if (in.consistency) {
    sampled.assign(n, 0.0);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t p = 0; p < n; ++p) {
      if (!geo[p].valid) continue;
      const double s = sample(db, geo[p].tap);
      sampled[p] = s;
      const double z = geo[p].point.z();
      sum += std::abs(z - s) / (z + s);
      ++count;
      hash.add(sign_code(z - s));
    }
    out->consistency = {count ? sum / count : 0.0, count};
  }
  out->signature = hash.h;

  if (!scales) return;

  // Backward pass: accumulate dL/d(u, v) and dL/dz per pixel of frame a.
  const double cp = out->photometric.count ? scales->photometric / out->photometric.count : 0.0;
  const double cf = out->flow.count ? scales->flow / out->flow.count : 0.0;
  const double cc = out->consistency.count ? scales->consistency / out->consistency.count : 0.0;

  ImageD d_warped(w, h, 1, 0.0);
  if (in.photometric && cp != 0.0) {
    ImageD g_w(w, h, 1, 0.0), g_ww(w, h, 1, 0.0), g_wa(w, h, 1, 0.0);
    for (std::size_t p = 0; p < n; ++p) {
      if (!geo[p].valid || !(*in.static_a)[p]) continue;
      const SsimParts s = ssim(ew[p], ea[p], eww[p], eaa[p], ewa[p]);
      d_warped[p] += cp * sgn(warped[p] - ia[p]);
      g_w[p] = -0.5 * cp * s.d_ew;
      g_ww[p] = -0.5 * cp * s.d_eww;
      g_wa[p] = -0.5 * cp * s.d_ewa;
    }
    ImageD a_w(w, h, 1, 0.0), a_ww(w, h, 1, 0.0), a_wa(w, h, 1, 0.0);
    box3_adjoint(g_w, &a_w);
    box3_adjoint(g_ww, &a_ww);
    box3_adjoint(g_wa, &a_wa);
    for (std::size_t p = 0; p < n; ++p) {
      d_warped[p] += a_w[p] + 2.0 * warped[p] * a_ww[p] + ia[p] * a_wa[p];
    }
  }

  out->grad_depth_a = ImageD(w, h, 1, 0.0);
  out->grad_depth_b = ImageD(w, h, 1, 0.0);
  const Mat3 rt = r.transpose();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      const PixelGeometry& g = geo[p];
      if (!g.valid) continue;
      double gu = 0.0;
      double gv = 0.0;
      double gz = 0.0;
      if (d_warped[p] != 0.0) {
        double du = 0.0, dv = 0.0;
        sample_with_gradient(ib, g.tap, &du, &dv);
        gu += d_warped[p] * du;
        gv += d_warped[p] * dv;
      }
      if (in.flow && cf != 0.0 && (*in.flow_valid)[p]) {
        gu += cf * sgn(g.u - x - (*in.flow)(x, y, 0));
        gv += cf * sgn(g.v - y - (*in.flow)(x, y, 1));
      }
      if (in.consistency && cc != 0.0) {
        const double z = g.point.z();
        const double s = sampled[p];
        const double diff = z - s;
        const double total = z + s;
        const double sg = sgn(diff);
        const double inv2 = 1.0 / (total * total);
        gz += cc * (sg * total - std::abs(diff)) * inv2;
        const double gs = cc * (-sg * total - std::abs(diff)) * inv2;
        double du = 0.0, dv = 0.0;
        sample_with_gradient(db, g.tap, &du, &dv);
        gu += gs * du;
        gv += gs * dv;
        const BilinearTap& tp = g.tap;
        out->grad_depth_b(tp.x0, tp.y0) += gs * (1.0 - tp.fx) * (1.0 - tp.fy);
        out->grad_depth_b(tp.x0 + 1, tp.y0) += gs * tp.fx * (1.0 - tp.fy);
        out->grad_depth_b(tp.x0, tp.y0 + 1) += gs * (1.0 - tp.fx) * tp.fy;
        out->grad_depth_b(tp.x0 + 1, tp.y0 + 1) += gs * tp.fx * tp.fy;
      }
      if (gu == 0.0 && gv == 0.0 && gz == 0.0) continue;
      const double z = g.point.z();
      const Vec3 gx(k.fx / z * gu, k.fy / z * gv,
                    gz - (k.fx * g.point.x() * gu + k.fy * g.point.y() * gv) / (z * z));
      out->grad_depth_a[p] += gx.dot(g.ray);
      out->raw_b.head<3>() += gx;
      out->raw_b.tail<3>() += g.point.cross(gx);
      const Vec3 xa = da[p] * Vec3((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
      const Vec3 hvec = -(rt * gx);
      out->raw_a.head<3>() += hvec;
      out->raw_a.tail<3>() += xa.cross(hvec);
    }
  }
}

// Forward differences, valid for x < w-1, y < h-1 (2 channels).
ImageD forward_gradients(const ImageD& d) {
  ImageD g(d.width(), d.height(), 2, 0.0);
  for (int y = 0; y + 1 < d.height(); ++y) {
    for (int x = 0; x + 1 < d.width(); ++x) {
      g(x, y, 0) = d(x + 1, y) - d(x, y);
      g(x, y, 1) = d(x, y + 1) - d(x, y);
    }
  }
  return g;
}

std::array<ImageD, kGradientScales> prior_pyramid_gradients(const DepthMap& prior) {
  std::array<ImageD, kGradientScales> out;
  for (int s = 0; s < kGradientScales; ++s) {
    const int f = 1 << s;
    if (prior.width() / f < 2 || prior.height() / f < 2) break;
    out[s] = forward_gradients(s == 0 ? prior : downsample_area(prior, f));
  }
  return out;
}

// coef * sum over scales of the mean (1 - cos)^2. Adds coef-scaled dL/dD to
// grad when non-null.
double gradient_term(const DepthMap& depth, const std::array<ImageD, kGradientScales>& prior_grad,
                     double coef, ImageD* grad, Hash* hash) {
  double total = 0.0;
  for (int s = 0; s < kGradientScales; ++s) {
    if (prior_grad[s].empty()) break;
    const int f = 1 << s;
    const DepthMap ds = s == 0 ? depth : downsample_area(depth, f);
    const int w = ds.width();
    const int h = ds.height();
    double sum = 0.0;
    std::size_t count = 0;
    ImageD d_ds;
    std::vector<std::uint8_t> used(static_cast<std::size_t>(w) * h, 0);
    for (int y = 0; y + 1 < h; ++y) {
      for (int x = 0; x + 1 < w; ++x) {
        const double gx = ds(x + 1, y) - ds(x, y);
        const double gy = ds(x, y + 1) - ds(x, y);
        const double px = prior_grad[s](x, y, 0);
        const double py = prior_grad[s](x, y, 1);
        const double n1 = std::hypot(gx, gy);
        const double n2 = std::hypot(px, py);
        const bool use = n1 >= kMinGradientNorm && n2 >= kMinGradientNorm;
        if (hash) hash->add(use ? 1 : 0);
        if (!use) continue;
        used[static_cast<std::size_t>(y) * w + x] = 1;
        const double cosv = (gx * px + gy * py) / (n1 * n2);
        sum += (1.0 - cosv) * (1.0 - cosv);
        ++count;
      }
    }
    if (count == 0) continue;
    total += sum / count;
    if (!grad || coef == 0.0) continue;
    d_ds = ImageD(w, h, 1, 0.0);
    const double c = coef / count;
    for (int y = 0; y + 1 < h; ++y) {
      for (int x = 0; x + 1 < w; ++x) {
        if (!used[static_cast<std::size_t>(y) * w + x]) continue;
        const double gx = ds(x + 1, y) - ds(x, y);
        const double gy = ds(x, y + 1) - ds(x, y);
        const double px = prior_grad[s](x, y, 0);
        const double py = prior_grad[s](x, y, 1);
        const double n1 = std::hypot(gx, gy);
        const double n2 = std::hypot(px, py);
        const double cosv = (gx * px + gy * py) / (n1 * n2);
        const double outer = -2.0 * (1.0 - cosv) * c;
        const double dgx = outer * (px / (n1 * n2) - cosv * gx / (n1 * n1));
        const double dgy = outer * (py / (n1 * n2) - cosv * gy / (n1 * n1));
        d_ds(x + 1, y) += dgx;
        d_ds(x, y + 1) += dgy;
        d_ds(x, y) -= dgx + dgy;
      }
    }
    // Adjoint of the area mean.
    const double inv = 1.0 / (f * f);
    for (int y = 0; y < h * f; ++y) {
      for (int x = 0; x < w * f; ++x) (*grad)(x, y) += d_ds(x / f, y / f) * inv;
    }
  }
  return coef * total;
}

double deform_term(const Eigen::MatrixXd& mesh, const std::vector<std::uint8_t>& dynamic,
                   double dynamic_weight, double coef, Eigen::MatrixXd* grad) {
  const int gh = static_cast<int>(mesh.rows());
  const int gw = static_cast<int>(mesh.cols());
  double sum = 0.0;
  std::size_t count = 0;
  auto weight = [&](int r0, int c0, int r1, int c1) {
    if (dynamic.empty()) return 1.0;
    return dynamic[r0 * gw + c0] || dynamic[r1 * gw + c1] ? dynamic_weight : 1.0;
  };
  for (int r = 0; r < gh; ++r) {
    for (int c = 0; c < gw; ++c) {
      if (c + 1 < gw) {
        const double d = mesh(r, c) - mesh(r, c + 1);
        sum += weight(r, c, r, c + 1) * d * d;
        ++count;
      }
      if (r + 1 < gh) {
        const double d = mesh(r, c) - mesh(r + 1, c);
        sum += weight(r, c, r + 1, c) * d * d;
        ++count;
      }
    }
  }
  if (count == 0) return 0.0;
  if (grad && coef != 0.0) {
    const double k = 2.0 * coef / count;
    for (int r = 0; r < gh; ++r) {
      for (int c = 0; c < gw; ++c) {
        if (c + 1 < gw) {
          const double g = k * weight(r, c, r, c + 1) * (mesh(r, c) - mesh(r, c + 1));
          (*grad)(r, c) += g;
          (*grad)(r, c + 1) -= g;
        }
        if (r + 1 < gh) {
          const double g = k * weight(r, c, r + 1, c) * (mesh(r, c) - mesh(r + 1, c));
          (*grad)(r, c) += g;
          (*grad)(r + 1, c) -= g;
        }
      }
    }
  }
  return coef * sum / count;
}

}  // namespace

std::pair<int, int> mesh_grid_size(int width, int height, int long_side) {
  if (long_side < 2) throw ConfigError("mesh long side must be >= 2");
  const int lo = std::min(width, height);
  const int hi = std::max(width, height);
  const int short_side =
      std::max(2, static_cast<int>(std::lround((long_side - 1.0) * lo / hi)) + 1);
  return width >= height ? std::pair{long_side, short_side} : std::pair{short_side, long_side};
}

namespace {

struct AxisTap {
  int i0;
  double f;
};

std::vector<AxisTap> axis_taps(int pixels, int vertices) {
  std::vector<AxisTap> taps(pixels);
  for (int x = 0; x < pixels; ++x) {
    const double s = pixels > 1 ? static_cast<double>(x) * (vertices - 1) / (pixels - 1) : 0.0;
    int i0 = static_cast<int>(std::floor(s));
    if (i0 > vertices - 2) i0 = vertices - 2;
    if (i0 < 0) i0 = 0;
    taps[x] = {i0, s - i0};
  }
  return taps;
}

}  // namespace

ImageD upsample_mesh(const Eigen::MatrixXd& mesh, int width, int height) {
  const int gh = static_cast<int>(mesh.rows());
  const int gw = static_cast<int>(mesh.cols());
  if (gw < 2 || gh < 2) throw DataError("mesh must be at least 2x2");
  const auto tx = axis_taps(width, gw);
  const auto ty = axis_taps(height, gh);
  ImageD out(width, height, 1);
  for (int y = 0; y < height; ++y) {
    const AxisTap b = ty[y];
    for (int x = 0; x < width; ++x) {
      const AxisTap a = tx[x];
      const double top = (1.0 - a.f) * mesh(b.i0, a.i0) + a.f * mesh(b.i0, a.i0 + 1);
      const double bottom = (1.0 - a.f) * mesh(b.i0 + 1, a.i0) + a.f * mesh(b.i0 + 1, a.i0 + 1);
      out(x, y) = (1.0 - b.f) * top + b.f * bottom;
    }
  }
  return out;
}

Eigen::MatrixXd upsample_mesh_adjoint(const ImageD& pixel_grad, int grid_w, int grid_h) {
  const int width = pixel_grad.width();
  const int height = pixel_grad.height();
  const auto tx = axis_taps(width, grid_w);
  const auto ty = axis_taps(height, grid_h);
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(grid_h, grid_w);
  for (int y = 0; y < height; ++y) {
    const AxisTap b = ty[y];
    for (int x = 0; x < width; ++x) {
      const double v = pixel_grad(x, y);
      if (v == 0.0) continue;
      const AxisTap a = tx[x];
      g(b.i0, a.i0) += v * (1.0 - a.f) * (1.0 - b.f);
      g(b.i0, a.i0 + 1) += v * a.f * (1.0 - b.f);
      g(b.i0 + 1, a.i0) += v * (1.0 - a.f) * b.f;
      g(b.i0 + 1, a.i0 + 1) += v * a.f * b.f;
    }
  }
  return g;
}

DepthMap depth_from_params(const ImageD& normalized_prior, const DepthParams& params,
                           bool use_mesh) {
  const int w = normalized_prior.width();
  const int h = normalized_prior.height();
  DepthMap out(w, h, 1);
  const bool mesh = use_mesh && params.mesh.size() > 0;
  ImageD offsets;
  if (mesh) offsets = upsample_mesh(params.mesh, w, h);
  for (std::size_t p = 0; p < out.size(); ++p) {
    out[p] = std::exp(params.a + params.b * normalized_prior[p] + (mesh ? offsets[p] : 0.0));
  }
  return out;
}

std::vector<std::uint8_t> dynamic_vertices(const Mask& static_mask, int grid_w, int grid_h) {
  const int w = static_mask.width();
  const int h = static_mask.height();
  std::vector<int> total(static_cast<std::size_t>(grid_w) * grid_h, 0);
  std::vector<int> still(total.size(), 0);
  for (int y = 0; y < h; ++y) {
    const int r = h > 1 ? static_cast<int>(std::lround(static_cast<double>(y) * (grid_h - 1) / (h - 1))) : 0;
    for (int x = 0; x < w; ++x) {
      const int c = w > 1 ? static_cast<int>(std::lround(static_cast<double>(x) * (grid_w - 1) / (w - 1))) : 0;
      ++total[r * grid_w + c];
      still[r * grid_w + c] += static_mask(x, y) ? 1 : 0;
    }
  }
  std::vector<std::uint8_t> out(total.size(), 0);
  for (std::size_t v = 0; v < out.size(); ++v) {
    out[v] = total[v] > 0 && 2 * still[v] < total[v] ? 1 : 0;
  }
  return out;
}

LossValue photometric_loss(const ImageD& image_a, const ImageD& image_b, const DepthMap& depth_a,
                           const Pose& pose_a, const Pose& pose_b, const Intrinsics& k,
                           const Mask& static_a) {
  DirectionInput in;
  in.image_a = &image_a;
  in.image_b = &image_b;
  in.depth_a = &depth_a;
  in.depth_b = &depth_a;
  in.static_a = &static_a;
  in.pose_a = pose_a;
  in.pose_b = pose_b;
  in.k = &k;
  in.consistency = false;
  DirectionResult out;
  run_direction(in, nullptr, &out);
  return out.photometric;
}

LossValue flow_loss(const FlowField& rigid, const Mask& rigid_valid, const FlowField& observed,
                    const Mask& observed_valid) {
  if (!rigid.same_shape(observed)) throw DataError("flow loss: dimensions disagree");
  LossValue out;
  double sum = 0.0;
  for (std::size_t p = 0; p < rigid_valid.size(); ++p) {
    if (!rigid_valid[p] || !observed_valid[p]) continue;
    sum += std::abs(rigid[2 * p] - observed[2 * p]) + std::abs(rigid[2 * p + 1] - observed[2 * p + 1]);
    ++out.count;
  }
  out.value = out.count ? sum / out.count : 0.0;
  return out;
}

LossValue depth_consistency_loss(const DepthMap& depth_a, const DepthMap& depth_b,
                                 const Pose& pose_a, const Pose& pose_b, const Intrinsics& k) {
  DirectionInput in;
  in.image_a = &depth_a;
  in.image_b = &depth_b;
  in.depth_a = &depth_a;
  in.depth_b = &depth_b;
  in.pose_a = pose_a;
  in.pose_b = pose_b;
  in.k = &k;
  in.photometric = false;
  DirectionResult out;
  run_direction(in, nullptr, &out);
  return out.consistency;
}

double depth_gradient_loss(const DepthMap& depth, const DepthMap& prior) {
  if (!depth.same_shape(prior)) throw DataError("gradient loss: dimensions disagree");
  return gradient_term(depth, prior_pyramid_gradients(prior), 1.0, nullptr, nullptr);
}

double deform_regularizer(const Eigen::MatrixXd& mesh, const std::vector<std::uint8_t>& dynamic,
                          double dynamic_weight) {
  return deform_term(mesh, dynamic, dynamic_weight, 1.0, nullptr);
}

LossFrame make_loss_frame(ImageD image, ImageD normalized_prior, DepthMap prior_depth,
                          Mask static_mask, int grid_w, int grid_h) {
  LossFrame f;
  f.prior_gradients = prior_pyramid_gradients(prior_depth);
  f.dynamic_vertex = dynamic_vertices(static_mask, grid_w, grid_h);
  f.image = std::move(image);
  f.normalized_prior = std::move(normalized_prior);
  f.prior_depth = std::move(prior_depth);
  f.static_mask = std::move(static_mask);
  return f;
}

double evaluate_loss(const LossProblem& problem, const std::vector<FrameVariables>& vars,
                     LossBreakdown* breakdown, std::vector<FrameGradient>* gradients,
                     std::uint64_t* signature) {
  const int nf = static_cast<int>(problem.frames.size());
  if (static_cast<int>(vars.size()) != nf) throw DataError("evaluate_loss: variable count differs");
  const LossWeights& lw = problem.weights;

  std::vector<DepthMap> depths(nf);
  std::vector<Pose> poses(nf);
  for (int f = 0; f < nf; ++f) {
    depths[f] = depth_from_params(problem.frames[f].normalized_prior, vars[f].depth, problem.use_mesh);
    poses[f] = vars[f].pose();
  }

  const int tasks = static_cast<int>(problem.pairs.size()) * 2;
  std::vector<DirectionResult> results(tasks);
  const bool want_grad = gradients != nullptr;
  detail::parallel_for(tasks, problem.threads, [&](int i) {
    const LossPair& pair = problem.pairs[i / 2];
    const bool forward = i % 2 == 0;
    const int a = forward ? pair.a : pair.b;
    const int b = forward ? pair.b : pair.a;
    DirectionInput in;
    in.image_a = &problem.frames[a].image;
    in.image_b = &problem.frames[b].image;
    in.depth_a = &depths[a];
    in.depth_b = &depths[b];
    in.static_a = &problem.frames[a].static_mask;
    in.pose_a = poses[a];
    in.pose_b = poses[b];
    in.k = &problem.k;
    in.photometric = lw.photometric != 0.0;
    in.consistency = lw.consistency != 0.0;
    if (pair.adjacent && lw.flow != 0.0) {
      in.flow = forward ? &pair.flow_ab : &pair.flow_ba;
      in.flow_valid = forward ? &pair.flow_valid_ab : &pair.flow_valid_ba;
    }
    DirectionScales scales{pair.weight * lw.photometric, pair.weight * lw.flow,
                           pair.weight * lw.consistency};
    run_direction(in, want_grad ? &scales : nullptr, &results[i]);
  });

  LossBreakdown local;
  Hash hash;
  std::vector<ImageD> grad_depth;
  std::vector<Vec6> raw(nf, Vec6::Zero());
  if (want_grad) {
    grad_depth.resize(nf);
    for (int f = 0; f < nf; ++f) grad_depth[f] = ImageD(depths[f].width(), depths[f].height(), 1, 0.0);
  }
  for (int i = 0; i < tasks; ++i) {
    const LossPair& pair = problem.pairs[i / 2];
    const bool forward = i % 2 == 0;
    const int a = forward ? pair.a : pair.b;
    const int b = forward ? pair.b : pair.a;
    const DirectionResult& r = results[i];
    hash.add(r.signature);
    local.photometric += pair.weight * lw.photometric * r.photometric.value;
    if (lw.photometric != 0.0 && r.photometric.count == 0) ++local.empty_sets;
    if (pair.adjacent && lw.flow != 0.0) {
      local.flow += pair.weight * lw.flow * r.flow.value;
      if (r.flow.count == 0) ++local.empty_sets;
    }
    local.consistency += pair.weight * lw.consistency * r.consistency.value;
    if (lw.consistency != 0.0 && r.consistency.count == 0) ++local.empty_sets;
    if (want_grad) {
      for (std::size_t p = 0; p < r.grad_depth_a.size(); ++p) {
        grad_depth[a][p] += r.grad_depth_a[p];
        grad_depth[b][p] += r.grad_depth_b[p];
      }
      raw[a] += r.raw_a;
      raw[b] += r.raw_b;
    }
  }

  std::vector<Eigen::MatrixXd> mesh_grad(nf);
  for (int f = 0; f < nf; ++f) {
    if (want_grad) mesh_grad[f] = Eigen::MatrixXd::Zero(vars[f].depth.mesh.rows(), vars[f].depth.mesh.cols());
  }
  for (int f : problem.regularized_frames) {
    if (f < 0 || f >= nf) throw DataError("evaluate_loss: regularised frame out of range");
    if (lw.gradient != 0.0) {
      local.gradient += gradient_term(depths[f], problem.frames[f].prior_gradients, lw.gradient,
                                      want_grad ? &grad_depth[f] : nullptr, &hash);
    }
    if (lw.deform != 0.0 && problem.use_mesh && vars[f].depth.mesh.size() > 0) {
      local.deform += deform_term(vars[f].depth.mesh, problem.frames[f].dynamic_vertex,
                                  problem.dynamic_pair_weight, lw.deform,
                                  want_grad ? &mesh_grad[f] : nullptr);
    }
  }

  if (want_grad) {
    gradients->assign(nf, FrameGradient{});
    for (int f = 0; f < nf; ++f) {
      FrameGradient& g = (*gradients)[f];
      const ImageD& n = problem.frames[f].normalized_prior;
      ImageD scaled(depths[f].width(), depths[f].height(), 1);
      for (std::size_t p = 0; p < scaled.size(); ++p) {
        scaled[p] = grad_depth[f][p] * depths[f][p];
        g.a += scaled[p];
        g.b += scaled[p] * n[p];
      }
      const Eigen::MatrixXd& mesh = vars[f].depth.mesh;
      if (problem.use_mesh && mesh.size() > 0) {
        g.mesh = upsample_mesh_adjoint(scaled, static_cast<int>(mesh.cols()),
                                       static_cast<int>(mesh.rows())) +
                 mesh_grad[f];
      } else {
        g.mesh = Eigen::MatrixXd::Zero(mesh.rows(), mesh.cols());
      }
      g.xi = se3_left_jacobian(vars[f].xi).transpose() * raw[f];
    }
  }
  if (breakdown) *breakdown = local;
  if (signature) *signature = hash.h;
  return local.total();
}

}  // namespace gcvd
