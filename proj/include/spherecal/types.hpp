#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <stdexcept>
#include <string>

namespace spherecal {

// 2D image point in pixels.
using Vec2 = Eigen::Vector2d;
// 3D point in meters.
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Error with a stable machine-readable code (e.g. "EmptyMask",
/// "NoCircleFound") in addition to the human message.
class CalibError : public std::runtime_error {
 public:
  CalibError(std::string code, const std::string& msg)
      : std::runtime_error(code + ": " + msg), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

/// Pinhole camera, distortion-free. Pixel coordinates are assumed already
/// undistorted upstream.
struct CameraIntrinsics {
  double fx = 0, fy = 0;  // focal lengths, pixels
  double cx = 0, cy = 0;  // principal point, pixels
  int width = 0, height = 0;

  void validate() const {
    if (!(fx > 0) || !(fy > 0))
      throw CalibError("BadIntrinsics", "focal lengths must be positive");
    if (!(cx > 0 && cx < width) || !(cy > 0 && cy < height))
      throw CalibError("BadIntrinsics", "principal point outside image");
  }
};

/// Ellipse in canonical center/axes/angle form. a >= b > 0 and the major-axis
/// angle lies in [0, pi); circles (a == b) use angle 0 so the representation
/// is unique.
struct Ellipse {
  Vec2 center = Vec2::Zero();
  double a = 0;      // semi-major, pixels
  double b = 0;      // semi-minor, pixels
  double angle = 0;  // major-axis orientation, radians in [0, pi)
};

struct SphereParams {
  Vec3 center = Vec3::Zero();
  double radius = 0;  // meters
};

/// Rigid transform: x' = rotation * x + translation.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  RigidTransform inverse() const {
    RigidTransform out;
    out.rotation = rotation.transpose();
    out.translation = -(rotation.transpose() * translation);
    return out;
  }

  RigidTransform operator*(const RigidTransform& rhs) const {
    RigidTransform out;
    out.rotation = rotation * rhs.rotation;
    out.translation = rotation * rhs.translation + translation;
    return out;
  }

  bool is_valid(double tol = 1e-9) const {
    const Mat3 err = rotation.transpose() * rotation - Mat3::Identity();
    return err.cwiseAbs().maxCoeff() <= tol &&
           std::abs(rotation.determinant() - 1.0) <= tol &&
           translation.allFinite();
  }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
  }
};

}  // namespace spherecal
