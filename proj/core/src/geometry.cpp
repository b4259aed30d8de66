#include "gcvd/geometry.hpp"

#include <cmath>
#include <numbers>

#include "gcvd/error.hpp"

namespace gcvd {
namespace {

// Below this angle the trigonometric coefficients switch to Taylor series.
constexpr double kSeriesAngle = 0.1;

// (1 - cos t) / t^2
double coeff_b(double t) {
  const double s = std::sin(0.5 * t);
  if (t < 1e-8) return 0.5;
  return 2.0 * s * s / (t * t);
}

// (t - sin t) / t^3
double coeff_c(double t) {
  if (t < kSeriesAngle) {
    const double t2 = t * t;
    return 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0 - t2 * t2 * t2 / 362880.0;
  }
  return (t - std::sin(t)) / (t * t * t);
}

// (1 - (t/2) cot(t/2)) / t^2
double coeff_vinv(double t) {
  if (t < kSeriesAngle) {
    const double t2 = t * t;
    return 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0 +
           t2 * t2 * t2 / 1209600.0;
  }
  const double half = 0.5 * t;
  return (1.0 - half * std::cos(half) / std::sin(half)) / (t * t);
}

}  // namespace

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw DataError("intrinsics: focal lengths must be positive");
  }
  if (width < 1 || height < 1) {
    throw DataError("intrinsics: image size must be positive");
  }
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
    throw DataError("intrinsics: principal point outside the image");
  }
}

Intrinsics Intrinsics::downsampled(int factor) const {
  Intrinsics k = *this;
  const double f = factor;
  k.fx = fx / f;
  k.fy = fy / f;
  k.cx = (cx + 0.5) / f - 0.5;
  k.cy = (cy + 0.5) / f - 0.5;
  k.width = width / factor;
  k.height = height / factor;
  return k;
}

Mat3 Intrinsics::matrix() const {
  Mat3 k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

Pose::Pose(const Eigen::Quaterniond& rotation, const Vec3& translation)
    : rotation_(rotation.normalized()), translation_(translation) {}

Pose::Pose(const Mat3& rotation, const Vec3& translation)
    : rotation_(Eigen::Quaterniond(rotation).normalized()),
      translation_(translation) {}

Pose Pose::inverse() const {
  const Eigen::Quaterniond inv = rotation_.conjugate();
  return Pose(inv, -(inv * translation_));
}

Pose Pose::operator*(const Pose& other) const {
  return Pose(rotation_ * other.rotation_,
              rotation_ * other.translation_ + translation_);
}

Eigen::Matrix4d Pose::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation();
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return s;
}

Eigen::Quaterniond so3_exp(const Vec3& phi) {
  const double theta = phi.norm();
  const double half = 0.5 * theta;
  // sin(t/2) / t, stable for t -> 0
  const double k = theta < 1e-8 ? 0.5 - theta * theta / 48.0
                                 : std::sin(half) / theta;
  Eigen::Quaterniond q(std::cos(half), k * phi.x(), k * phi.y(), k * phi.z());
  return q.normalized();
}

Vec3 so3_log(const Eigen::Quaterniond& q_in) {
  Eigen::Quaterniond q = q_in.normalized();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Vec3 v = q.vec();
  const double vn = v.norm();
  const double theta = 2.0 * std::atan2(vn, q.w());
  if (std::abs(theta - std::numbers::pi) < 1e-9) {
    throw NumericalError("logarithm near branch cut");
  }
  if (vn < 1e-12) {
    // theta ~ 2 vn / w
    return (2.0 / q.w()) * v;
  }
  return (theta / vn) * v;
}

Mat3 so3_left_jacobian(const Vec3& phi) {
  const double t = phi.norm();
  const Mat3 p = skew(phi);
  return Mat3::Identity() + coeff_b(t) * p + coeff_c(t) * p * p;
}

Mat3 so3_left_jacobian_inverse(const Vec3& phi) {
  const double t = phi.norm();
  const Mat3 p = skew(phi);
  return Mat3::Identity() - 0.5 * p + coeff_vinv(t) * p * p;
}

Pose se3_exp(const Twist& xi) {
  const Vec3 rho = xi.head<3>();
  const Vec3 phi = xi.tail<3>();
  return Pose(so3_exp(phi), so3_left_jacobian(phi) * rho);
}

Twist se3_log(const Pose& pose) {
  const Vec3 phi = so3_log(pose.quaternion());
  Twist xi;
  xi.head<3>() = so3_left_jacobian_inverse(phi) * pose.translation();
  xi.tail<3>() = phi;
  return xi;
}

Mat6 se3_left_jacobian(const Twist& xi) {
  const Vec3 rho = xi.head<3>();
  const Vec3 phi = xi.tail<3>();
  const double t = phi.norm();
  const Mat3 r = skew(rho);
  const Mat3 p = skew(phi);
  const Mat3 pr = p * r;
  const Mat3 rp = r * p;
  const Mat3 prp = pr * p;

  double c1, c2, c3;
  if (t < kSeriesAngle) {
    const double t2 = t * t;
    const double t4 = t2 * t2;
    c1 = 1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0 - t4 * t2 / 362880.0;
    c2 = 1.0 / 24.0 - t2 / 720.0 + t4 / 40320.0 - t4 * t2 / 3628800.0;
    c3 = 1.0 / 120.0 - t2 / 2520.0 + t4 / 120960.0;
  } else {
    const double s = std::sin(t);
    const double c = std::cos(t);
    const double t2 = t * t;
    c1 = (t - s) / (t2 * t);
    c2 = (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2);
    c3 = (2.0 * t - 3.0 * s + t * c) / (2.0 * t2 * t2 * t);
  }
  const Mat3 q = 0.5 * r + c1 * (pr + rp + prp) +
                 c2 * (p * pr + rp * p - 3.0 * prp) +
                 c3 * (prp * p + p * prp);

  Mat6 j = Mat6::Zero();
  const Mat3 jl = so3_left_jacobian(phi);
  j.topLeftCorner<3, 3>() = jl;
  j.bottomRightCorner<3, 3>() = jl;
  j.topRightCorner<3, 3>() = q;
  return j;
}

Mat6 se3_adjoint(const Pose& pose) {
  const Mat3 r = pose.rotation();
  Mat6 ad = Mat6::Zero();
  ad.topLeftCorner<3, 3>() = r;
  ad.bottomRightCorner<3, 3>() = r;
  ad.topRightCorner<3, 3>() = skew(pose.translation()) * r;
  return ad;
}

Vec3 backproject(const Vec2& pixel, double depth, const Intrinsics& k) {
  if (!(depth > 0.0)) throw DataError("non-positive depth");
  return Vec3(depth * (pixel.x() - k.cx) / k.fx,
              depth * (pixel.y() - k.cy) / k.fy, depth);
}

Vec2 project(const Vec3& point, const Intrinsics& k) {
  return Vec2(k.fx * point.x() / point.z() + k.cx,
              k.fy * point.y() / point.z() + k.cy);
}

Reprojection reproject(const Vec2& pixel_a, double depth_a, const Pose& pose_a,
                       const Pose& pose_b, const Intrinsics& k) {
  const Vec3 xa = backproject(pixel_a, depth_a, k);
  const Vec3 xb = pose_b.transform(pose_a.inverse().transform(xa));
  Reprojection r;
  r.depth = xb.z();
  r.in_front = xb.z() > kMinDepth;
  r.pixel = r.in_front ? project(xb, k) : Vec2(pixel_a);
  return r;
}

std::pair<FlowField, Mask> rigid_flow(const DepthMap& depth_a,
                                      const Pose& pose_a, const Pose& pose_b,
                                      const Intrinsics& k) {
  const int w = depth_a.width();
  const int h = depth_a.height();
  FlowField flow(w, h, 2);
  Mask valid(w, h, 1);
  const Pose rel = pose_b * pose_a.inverse();
  const Mat3 r = rel.rotation();
  const Vec3 t = rel.translation();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double d = depth_a(x, y);
      if (!(d > 0.0)) continue;
      const Vec3 xa(d * (x - k.cx) / k.fx, d * (y - k.cy) / k.fy, d);
      const Vec3 xb = r * xa + t;
      if (!(xb.z() > kMinDepth)) continue;
      const double u = k.fx * xb.x() / xb.z() + k.cx;
      const double v = k.fy * xb.y() / xb.z() + k.cy;
      flow(x, y, 0) = u - x;
      flow(x, y, 1) = v - y;
      valid(x, y) = in_bilinear_support(u, v, w, h) ? 1 : 0;
    }
  }
  return {std::move(flow), std::move(valid)};
}

std::pair<ImageD, Mask> warp_bilinear(const ImageD& src, const FlowField& flow) {
  if (!src.same_shape(flow) || flow.channels() != 2) {
    throw DataError("warp_bilinear: raster and flow dimensions disagree");
  }
  const int w = src.width();
  const int h = src.height();
  const int c = src.channels();
  ImageD out(w, h, c);
  Mask valid(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double u = x + flow(x, y, 0);
      const double v = y + flow(x, y, 1);
      if (!in_bilinear_support(u, v, w, h)) continue;
      const BilinearTap tap = make_tap(u, v, w, h);
      for (int ch = 0; ch < c; ++ch) out(x, y, ch) = sample(src, tap, ch);
      valid(x, y) = 1;
    }
  }
  return {std::move(out), std::move(valid)};
}

}  // namespace gcvd
