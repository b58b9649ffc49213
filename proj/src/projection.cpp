#include "spherecal/projection.hpp"

#include <cmath>

namespace spherecal {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

Vec2 project_point(const Vec3& p, const CameraIntrinsics& K) {
  if (!(p.z() > 0))
    throw CalibError("NonPositiveDepth", "point is not in front of camera");
  return {K.fx * p.x() / p.z() + K.cx, K.fy * p.y() / p.z() + K.cy};
}

Ellipse sphere_outline_ellipse(const SphereParams& sphere,
                               const CameraIntrinsics& K) {
  const Vec3& m = sphere.center;
  const double r = sphere.radius;
  if (m.norm() <= r)
    throw CalibError("SphereEnclosesCamera", "camera center inside sphere");
  if (m.z() <= r)
    throw CalibError("SphereBehindCamera", "sphere not fully in front");

  // Tangent-ray cone: d^T (m m^T - (|m|^2 - r^2) I) d = 0. Cutting it with
  // the normalized image plane z = 1 gives the outline conic directly.
  const double k = m.squaredNorm() - r * r;
  Conic n;
  n.A = m.x() * m.x() - k;
  n.B = 2 * m.x() * m.y();
  n.C = m.y() * m.y() - k;
  n.D = 2 * m.x() * m.z();
  n.E = 2 * m.y() * m.z();
  n.F = m.z() * m.z() - k;
  // Back to pixels: x = (u - cx)/fx, y = (v - cy)/fy.
  const Conic px = n.transformed(1.0 / K.fx, 1.0 / K.fy, -K.cx / K.fx,
                                 -K.cy / K.fy);
  return conic_to_ellipse(px);
}

double rotation_geodesic_deg(const Mat3& ra, const Mat3& rb) {
  const double tr = (ra.transpose() * rb).trace();
  const double c = std::clamp((tr - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / kPi;
}

Mat3 so3_exp(const Vec3& w) {
  const double th = w.norm();
  Mat3 wx;
  wx << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  if (th < 1e-12) return Mat3::Identity() + wx;
  return Mat3::Identity() + std::sin(th) / th * wx +
         (1 - std::cos(th)) / (th * th) * (wx * wx);
}

Vec3 so3_log(const Mat3& r) {
  const double c = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
  const double th = std::acos(c);
  if (th < 1e-12) {
    return 0.5 * Vec3(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  }
  if (th > kPi - 1e-6) {
    // Near pi the off-diagonal formula degenerates; recover the axis from
    // the symmetric part.
    Mat3 s = 0.5 * (r + Mat3::Identity());
    Vec3 axis(std::sqrt(std::max(0.0, s(0, 0))),
              std::sqrt(std::max(0.0, s(1, 1))),
              std::sqrt(std::max(0.0, s(2, 2))));
    // Fix signs from the largest component.
    int i = 0;
    axis.cwiseAbs().maxCoeff(&i);
    if (axis(i) > 0) {
      const int j = (i + 1) % 3, l = (i + 2) % 3;
      if (s(i, j) < 0) axis(j) = -axis(j);
      if (s(i, l) < 0) axis(l) = -axis(l);
    }
    return th * axis.normalized();
  }
  Vec3 v(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  return th / (2 * std::sin(th)) * v;
}

}  // namespace spherecal
