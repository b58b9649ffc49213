#pragma once

#include "spherecal/types.hpp"

#include <array>

namespace spherecal {

/// General conic A x^2 + B xy + C y^2 + D x + E y + F = 0. Coefficients are
/// scale-free: {A..F} and {kA..kF} describe the same curve.
struct Conic {
  double A = 0, B = 0, C = 0, D = 0, E = 0, F = 0;

  double eval(const Vec2& p) const {
    const double x = p.x(), y = p.y();
    return A * x * x + B * x * y + C * y * y + D * x + E * y + F;
  }

  /// Coefficients of the conic after the substitution x = sx*x' + tx,
  /// y = sy*y' + ty (axis-aligned affine change of variables).
  Conic transformed(double sx, double sy, double tx, double ty) const;
};

Conic ellipse_to_conic(const Ellipse& e);

/// Throws CalibError("DegenerateConfiguration") when the conic is not a real
/// ellipse. Round-trips with ellipse_to_conic to 1e-9 relative error.
Ellipse conic_to_ellipse(const Conic& c);

bool conic_is_ellipse(const Conic& c);

/// Scaled radius of p in the ellipse frame: 1 on the boundary, < 1 inside.
double ellipse_scaled_radius(const Ellipse& e, const Vec2& p);

/// Approximate signed distance (pixels) from p to the ellipse boundary,
/// measured radially from the center. Negative inside, positive outside.
double ellipse_boundary_distance(const Ellipse& e, const Vec2& p);

/// Parametric angle in [0, 2pi) of the point on the ellipse hit by the ray
/// from the center through p.
double ellipse_param_angle(const Ellipse& e, const Vec2& p);

/// Boundary point at parametric angle t.
Vec2 ellipse_point_at(const Ellipse& e, double t);

/// Ramanujan's perimeter approximation.
double ellipse_perimeter(const Ellipse& e);

/// Signed line parameters s (p = origin + s*dir, |dir| = 1) of the two
/// intersections of the line with the ellipse, sorted ascending.
/// Throws CalibError("DegenerateGeometry") when the line misses the ellipse.
std::array<double, 2> intersect_line_ellipse(const Ellipse& e,
                                             const Vec2& origin,
                                             const Vec2& dir);

}  // namespace spherecal
