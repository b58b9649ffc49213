#pragma once

#include "spherecal/conic.hpp"
#include "spherecal/types.hpp"

namespace spherecal {

/// Pinhole projection. Throws CalibError("NonPositiveDepth") if p.z <= 0.
Vec2 project_point(const Vec3& p, const CameraIntrinsics& K);

/// Exact outline of a sphere under perspective projection: the conic traced
/// by rays from the camera center tangent to the sphere, in pixels.
/// The sphere center is given in the camera frame.
/// Throws SphereBehindCamera (center depth <= radius) and
/// SphereEnclosesCamera (|center| <= radius).
Ellipse sphere_outline_ellipse(const SphereParams& sphere,
                               const CameraIntrinsics& K);

/// Geodesic distance between two rotations, degrees in [0, 180].
double rotation_geodesic_deg(const Mat3& ra, const Mat3& rb);

/// Rodrigues exponential: axis-angle vector -> rotation matrix.
Mat3 so3_exp(const Vec3& w);

/// Logarithm of a rotation matrix as an axis-angle vector.
Vec3 so3_log(const Mat3& r);

}  // namespace spherecal
