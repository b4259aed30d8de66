#pragma once

#include <cmath>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <utility>

#include "gcvd/image.hpp"

namespace gcvd {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat36 = Eigen::Matrix<double, 3, 6>;

// Tangent vector of SE(3), ordered (rho, phi): translational part first,
// rotational part (axis-angle, radians) second.
using Twist = Vec6;

// Points closer than this along the optical axis are treated as behind the
// camera.
inline constexpr double kMinDepth = 1e-6;

// Pinhole intrinsics. Pixel centres sit at integer coordinates.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  // Throws gcvd::DataError on violated invariants.
  void validate() const;

  // Intrinsics of the image obtained by area-mean downsampling by `factor`.
  Intrinsics downsampled(int factor) const;

  int long_side() const { return width > height ? width : height; }

  Mat3 matrix() const;
};

// Rigid transform stored as unit quaternion + translation. Poses are
// world-to-camera throughout the library: X_cam = R * X_world + t.
class Pose {
 public:
  Pose() : rotation_(Eigen::Quaterniond::Identity()), translation_(Vec3::Zero()) {}
  Pose(const Eigen::Quaterniond& rotation, const Vec3& translation);
  Pose(const Mat3& rotation, const Vec3& translation);

  static Pose Identity() { return Pose(); }

  const Eigen::Quaterniond& quaternion() const { return rotation_; }
  Mat3 rotation() const { return rotation_.toRotationMatrix(); }
  const Vec3& translation() const { return translation_; }

  Pose inverse() const;
  Pose operator*(const Pose& other) const;
  Vec3 operator*(const Vec3& point) const { return transform(point); }
  Vec3 transform(const Vec3& point) const {
    return rotation_ * point + translation_;
  }

  // Camera centre in world coordinates (valid for world-to-camera poses).
  Vec3 center() const { return -(rotation_.conjugate() * translation_); }

  Eigen::Matrix4d matrix() const;

 private:
  Eigen::Quaterniond rotation_;
  Vec3 translation_;
};

Mat3 skew(const Vec3& v);

Eigen::Quaterniond so3_exp(const Vec3& phi);
// Throws NumericalError when the angle is within 1e-9 of pi.
Vec3 so3_log(const Eigen::Quaterniond& q);
// Left Jacobian of SO(3); equals the V matrix of the SE(3) exponential.
Mat3 so3_left_jacobian(const Vec3& phi);
Mat3 so3_left_jacobian_inverse(const Vec3& phi);

Pose se3_exp(const Twist& xi);
// Throws NumericalError("logarithm near branch cut") when the rotation angle
// is within 1e-9 of pi.
Twist se3_log(const Pose& pose);
// exp(xi + d) ~= exp(J_l(xi) d) * exp(xi)
Mat6 se3_left_jacobian(const Twist& xi);
// Ad_T such that T * exp(xi) * T^-1 = exp(Ad_T xi).
Mat6 se3_adjoint(const Pose& pose);

// d * K^-1 * [x, 1]. Throws DataError("non-positive depth") for d <= 0.
Vec3 backproject(const Vec2& pixel, double depth, const Intrinsics& k);
// Dehomogenised K * X. The caller is responsible for X.z() > 0.
Vec2 project(const Vec3& point, const Intrinsics& k);

struct Reprojection {
  Vec2 pixel;
  // Depth of the point in the target camera (before dehomogenisation).
  double depth = 0.0;
  // False when the point lies behind the target camera.
  bool in_front = false;
};

// x_b ~ K P_b P_a^-1 D_a(x_a) K^-1 x_a
Reprojection reproject(const Vec2& pixel_a, double depth_a, const Pose& pose_a,
                       const Pose& pose_b, const Intrinsics& k);

// True when bilinear sampling at (u, v) only touches pixels inside the
// [0, W-1] x [0, H-1] grid, with 1e-9 px of slack for round-off at the edges.
inline bool in_bilinear_support(double u, double v, int width, int height) {
  constexpr double kSlack = 1e-9;
  return u >= -kSlack && v >= -kSlack && u <= width - 1.0 + kSlack && v <= height - 1.0 + kSlack;
}

// Bilinear tap: top-left integer corner plus fractional offsets. The corner
// is clamped so that a sample exactly on the last row/column uses weight one
// on that row/column.
struct BilinearTap {
  int x0 = 0;
  int y0 = 0;
  double fx = 0.0;
  double fy = 0.0;
};

inline BilinearTap make_tap(double u, double v, int width, int height) {
  BilinearTap tap;
  int x0 = static_cast<int>(std::floor(u));
  int y0 = static_cast<int>(std::floor(v));
  if (x0 > width - 2) x0 = width - 2;
  if (y0 > height - 2) y0 = height - 2;
  if (x0 < 0) x0 = 0;
  if (y0 < 0) y0 = 0;
  tap.x0 = x0;
  tap.y0 = y0;
  tap.fx = u - x0;
  tap.fy = v - y0;
  return tap;
}

// Samples channel `c` of `img` at the tap. Requires width, height >= 2.
template <typename T>
double sample(const Image<T>& img, const BilinearTap& tap, int c = 0) {
  const double v00 = img(tap.x0, tap.y0, c);
  const double v10 = img(tap.x0 + 1, tap.y0, c);
  const double v01 = img(tap.x0, tap.y0 + 1, c);
  const double v11 = img(tap.x0 + 1, tap.y0 + 1, c);
  return (1.0 - tap.fy) * ((1.0 - tap.fx) * v00 + tap.fx * v10) +
         tap.fy * ((1.0 - tap.fx) * v01 + tap.fx * v11);
}

// Value plus partial derivatives with respect to u and v.
template <typename T>
double sample_with_gradient(const Image<T>& img, const BilinearTap& tap,
                            double* du, double* dv, int c = 0) {
  const double v00 = img(tap.x0, tap.y0, c);
  const double v10 = img(tap.x0 + 1, tap.y0, c);
  const double v01 = img(tap.x0, tap.y0 + 1, c);
  const double v11 = img(tap.x0 + 1, tap.y0 + 1, c);
  const double top = (1.0 - tap.fx) * v00 + tap.fx * v10;
  const double bottom = (1.0 - tap.fx) * v01 + tap.fx * v11;
  *du = (1.0 - tap.fy) * (v10 - v00) + tap.fy * (v11 - v01);
  *dv = bottom - top;
  return (1.0 - tap.fy) * top + tap.fy * bottom;
}

// Flow from frame a to frame b induced by depth D_a and the two poses, with
// validity (in front of camera b and inside the bilinear support of b).
std::pair<FlowField, Mask> rigid_flow(const DepthMap& depth_a,
                                      const Pose& pose_a, const Pose& pose_b,
                                      const Intrinsics& k);

// out(x) = src(x + flow(x)), bilinear. Invalid where the sample leaves the
// bilinear support; invalid pixels are set to zero.
std::pair<ImageD, Mask> warp_bilinear(const ImageD& src, const FlowField& flow);

}  // namespace gcvd
