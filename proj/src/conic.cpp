#include "spherecal/conic.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace spherecal {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

Conic Conic::transformed(double sx, double sy, double tx, double ty) const {
  // Substitute x = sx*x' + tx, y = sy*y' + ty and collect terms.
  Conic out;
  out.A = A * sx * sx;
  out.B = B * sx * sy;
  out.C = C * sy * sy;
  out.D = 2 * A * sx * tx + B * sx * ty + D * sx;
  out.E = 2 * C * sy * ty + B * sy * tx + E * sy;
  out.F = A * tx * tx + B * tx * ty + C * ty * ty + D * tx + E * ty + F;
  return out;
}

Conic ellipse_to_conic(const Ellipse& e) {
  const double c = std::cos(e.angle), s = std::sin(e.angle);
  const double ia2 = 1.0 / (e.a * e.a), ib2 = 1.0 / (e.b * e.b);
  Conic q;
  q.A = c * c * ia2 + s * s * ib2;
  q.B = 2 * c * s * (ia2 - ib2);
  q.C = s * s * ia2 + c * c * ib2;
  const double x0 = e.center.x(), y0 = e.center.y();
  q.D = -2 * q.A * x0 - q.B * y0;
  q.E = -2 * q.C * y0 - q.B * x0;
  q.F = q.A * x0 * x0 + q.B * x0 * y0 + q.C * y0 * y0 - 1.0;
  return q;
}

bool conic_is_ellipse(const Conic& c) {
  const double disc = c.B * c.B - 4 * c.A * c.C;
  if (!(disc < 0)) return false;
  // Real (non-imaginary) ellipse: the full 3x3 determinant must have the
  // opposite sign of (A + C).
  Eigen::Matrix3d m;
  m << c.A, c.B / 2, c.D / 2, c.B / 2, c.C, c.E / 2, c.D / 2, c.E / 2, c.F;
  const double det3 = m.determinant();
  return det3 != 0 && det3 * (c.A + c.C) < 0;
}

Ellipse conic_to_ellipse(const Conic& q) {
  const double disc = q.B * q.B - 4 * q.A * q.C;
  if (!(disc < 0))
    throw CalibError("DegenerateConfiguration", "conic is not an ellipse");

  // Center solves the 2x2 gradient system.
  const double x0 = (2 * q.C * q.D - q.B * q.E) / disc;
  const double y0 = (2 * q.A * q.E - q.B * q.D) / disc;
  // Conic value at the center; must be nonzero with the right sign.
  const double fc = q.eval(Vec2(x0, y0));
  if (!(fc * (q.A + q.C) < 0))
    throw CalibError("DegenerateConfiguration", "imaginary or point ellipse");

  // Eigen-decompose the quadratic part scaled by -1/fc so the ellipse is
  // x^T M x = 1 about the center; semi-axes are 1/sqrt(eigenvalues).
  Eigen::Matrix2d m;
  m << q.A, q.B / 2, q.B / 2, q.C;
  m /= -fc;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(m);
  const double l0 = es.eigenvalues()(0), l1 = es.eigenvalues()(1);
  if (!(l0 > 0 && l1 > 0))
    throw CalibError("DegenerateConfiguration", "non-positive axis lengths");

  Ellipse e;
  e.center = Vec2(x0, y0);
  // Smallest eigenvalue -> largest axis.
  e.a = 1.0 / std::sqrt(l0);
  e.b = 1.0 / std::sqrt(l1);
  Eigen::Vector2d major = es.eigenvectors().col(0);
  double ang = std::atan2(major.y(), major.x());
  if (ang < 0) ang += kPi;
  if (ang >= kPi) ang -= kPi;
  const double rel_gap = (e.a - e.b) / e.a;
  e.angle = rel_gap < 1e-12 ? 0.0 : ang;
  return e;
}

double ellipse_scaled_radius(const Ellipse& e, const Vec2& p) {
  const double c = std::cos(e.angle), s = std::sin(e.angle);
  const Vec2 d = p - e.center;
  const double xr = (c * d.x() + s * d.y()) / e.a;
  const double yr = (-s * d.x() + c * d.y()) / e.b;
  return std::sqrt(xr * xr + yr * yr);
}

double ellipse_boundary_distance(const Ellipse& e, const Vec2& p) {
  const double rho = ellipse_scaled_radius(e, p);
  const double dist = (p - e.center).norm();
  if (rho < 1e-12) return -std::min(e.a, e.b);
  // Radial distance to the boundary point along the center->p ray.
  return dist * (rho - 1.0) / rho;
}

double ellipse_param_angle(const Ellipse& e, const Vec2& p) {
  const double c = std::cos(e.angle), s = std::sin(e.angle);
  const Vec2 d = p - e.center;
  const double xr = (c * d.x() + s * d.y()) / e.a;
  const double yr = (-s * d.x() + c * d.y()) / e.b;
  double t = std::atan2(yr, xr);
  if (t < 0) t += 2 * kPi;
  return t;
}

double ellipse_perimeter(const Ellipse& e) {
  const double a = e.a, b = e.b;
  return kPi * (3 * (a + b) - std::sqrt((3 * a + b) * (a + 3 * b)));
}

Vec2 ellipse_point_at(const Ellipse& e, double t) {
  const double c = std::cos(e.angle), s = std::sin(e.angle);
  const double xr = e.a * std::cos(t), yr = e.b * std::sin(t);
  return e.center + Vec2(c * xr - s * yr, s * xr + c * yr);
}

std::array<double, 2> intersect_line_ellipse(const Ellipse& e,
                                             const Vec2& origin,
                                             const Vec2& dir) {
  const Conic q = ellipse_to_conic(e);
  // Quadratic in s for q.eval(origin + s*dir) = 0.
  const double x = origin.x(), y = origin.y(), dx = dir.x(), dy = dir.y();
  const double qa = q.A * dx * dx + q.B * dx * dy + q.C * dy * dy;
  const double qb =
      2 * q.A * x * dx + q.B * (x * dy + y * dx) + 2 * q.C * y * dy +
      q.D * dx + q.E * dy;
  const double qc = q.eval(origin);
  const double d = qb * qb - 4 * qa * qc;
  if (!(d >= 0) || qa == 0)
    throw CalibError("DegenerateGeometry", "line does not cross the ellipse");
  const double sq = std::sqrt(d);
  double s0 = (-qb - sq) / (2 * qa), s1 = (-qb + sq) / (2 * qa);
  if (s0 > s1) std::swap(s0, s1);
  return {s0, s1};
}

}  // namespace spherecal
