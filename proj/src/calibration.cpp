#include "spherecal/calibration.hpp"

#include "spherecal/projection.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace spherecal {

namespace {

double robust_cost(double s, RobustKernel k, double scale) {
  switch (k) {
    case RobustKernel::None:
      return 0.5 * s * s;
    case RobustKernel::Huber:
      return s <= scale ? 0.5 * s * s : scale * (s - 0.5 * scale);
    case RobustKernel::Cauchy: {
      const double q = s / scale;
      return 0.5 * scale * scale * std::log1p(q * q);
    }
  }
  return 0;
}

// IRLS weight rho'(s)/s.
double robust_weight(double s, RobustKernel k, double scale) {
  if (s < 1e-12) return 1.0;
  switch (k) {
    case RobustKernel::None:
      return 1.0;
    case RobustKernel::Huber:
      return s <= scale ? 1.0 : scale / s;
    case RobustKernel::Cauchy: {
      const double q = s / scale;
      return 1.0 / (1.0 + q * q);
    }
  }
  return 1.0;
}

struct Residuals {
  Eigen::VectorXd norms;  // per-pair residual norm, pixels
  double cost = 0;        // robust objective
  bool finite = true;
};

Residuals compute_residuals(const std::vector<CenterPair>& pairs,
                            const CameraIntrinsics& K, const RigidTransform& t,
                            const SolverConfig& cfg) {
  Residuals out;
  out.norms.resize(pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    const Vec3 pc = t.apply(pairs[i].p_lidar);
    if (!(pc.z() > 1e-9)) {
      out.finite = false;
      return out;
    }
    const Vec2 proj(K.fx * pc.x() / pc.z() + K.cx,
                    K.fy * pc.y() / pc.z() + K.cy);
    const double s = (proj - pairs[i].p_cam).norm();
    if (!std::isfinite(s)) {
      out.finite = false;
      return out;
    }
    out.norms(i) = s;
    out.cost += robust_cost(s, cfg.kernel, cfg.huber_px);
  }
  return out;
}

}  // namespace

RobustKernel kernel_from_string(const std::string& s) {
  if (s == "none") return RobustKernel::None;
  if (s == "huber") return RobustKernel::Huber;
  if (s == "cauchy") return RobustKernel::Cauchy;
  throw CalibError("BadConfig", "unknown robust kernel: " + s);
}

const char* to_string(RobustKernel k) {
  switch (k) {
    case RobustKernel::None: return "none";
    case RobustKernel::Huber: return "huber";
    default: return "cauchy";
  }
}

double pair_residual(const CenterPair& pair, const CameraIntrinsics& K,
                     const RigidTransform& t) {
  const Vec3 pc = t.apply(pair.p_lidar);
  if (!(pc.z() > 0)) return std::numeric_limits<double>::infinity();
  const Vec2 proj(K.fx * pc.x() / pc.z() + K.cx, K.fy * pc.y() / pc.z() + K.cy);
  return (proj - pair.p_cam).norm();
}

RigidTransform solve_pnp_init(const std::vector<CenterPair>& pairs,
                              const CameraIntrinsics& K) {
  const int n = static_cast<int>(pairs.size());
  if (n < 6)
    throw CalibError("DegenerateConfiguration", "DLT needs at least 6 pairs");

  // Collinear 3D points leave the pose underdetermined.
  {
    Vec3 centroid = Vec3::Zero();
    for (const auto& p : pairs) centroid += p.p_lidar;
    centroid /= n;
    Mat3 cov = Mat3::Zero();
    for (const auto& p : pairs) {
      const Vec3 q = p.p_lidar - centroid;
      cov += q * q.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
    if (es.eigenvalues()(1) < 1e-10 * std::max(es.eigenvalues()(2), 1e-300))
      throw CalibError("DegenerateConfiguration", "3D points collinear");
  }

  // Hartley-normalize the 3D side (centroid to origin, mean norm sqrt(3)).
  Vec3 centroid3 = Vec3::Zero();
  for (const auto& pr : pairs) centroid3 += pr.p_lidar;
  centroid3 /= n;
  double spread = 0;
  for (const auto& pr : pairs) spread += (pr.p_lidar - centroid3).norm();
  spread /= n;
  const double s3 = spread > 1e-12 ? std::sqrt(3.0) / spread : 1.0;

  // DLT on normalized image coordinates: x_hat ~ [R|t] X.
  Eigen::MatrixXd a(2 * n, 12);
  a.setZero();
  for (int i = 0; i < n; ++i) {
    const Vec3 X = s3 * (pairs[i].p_lidar - centroid3);
    const double xh = (pairs[i].p_cam.x() - K.cx) / K.fx;
    const double yh = (pairs[i].p_cam.y() - K.cy) / K.fy;
    const Eigen::Vector4d Xh(X.x(), X.y(), X.z(), 1.0);
    a.block<1, 4>(2 * i, 0) = Xh.transpose();
    a.block<1, 4>(2 * i, 8) = -xh * Xh.transpose();
    a.block<1, 4>(2 * i + 1, 4) = Xh.transpose();
    a.block<1, 4>(2 * i + 1, 8) = -yh * Xh.transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv(10) < 1e-12 * sv(0))
    throw CalibError("DegenerateConfiguration",
                     "DLT null space has dimension > 1 (coplanar points?)");
  const Eigen::VectorXd p = svd.matrixV().col(11);
  Eigen::Matrix<double, 3, 4> P;
  P << p(0), p(1), p(2), p(3), p(4), p(5), p(6), p(7), p(8), p(9), p(10), p(11);
  // Undo the 3D normalization: X_norm = s3 * (X - centroid3).
  Eigen::Matrix4d denorm = Eigen::Matrix4d::Identity();
  denorm.topLeftCorner<3, 3>() *= s3;
  denorm.topRightCorner<3, 1>() = -s3 * centroid3;
  P = P * denorm;

  const auto recover = [&](const Eigen::Matrix<double, 3, 4>& pm) {
    Eigen::JacobiSVD<Mat3> msvd(pm.leftCols<3>(),
                                Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 u = msvd.matrixU(), v = msvd.matrixV();
    Mat3 d = Mat3::Identity();
    d(2, 2) = (u * v.transpose()).determinant();
    RigidTransform t;
    t.rotation = u * d * v.transpose();
    const double scale = msvd.singularValues().mean();
    if (scale < 1e-12)
      throw CalibError("DegenerateConfiguration", "zero-scale DLT solution");
    t.translation = pm.col(3) / scale;
    // The raw column is scale-coupled with the noisy M; re-solving the
    // translation linearly for the projected rotation is markedly better:
    // [x_hat]_x (R X + t) = 0 gives two equations per pair.
    Eigen::MatrixXd at(3 * n, 3);
    Eigen::VectorXd bt(3 * n);
    for (int i = 0; i < n; ++i) {
      const Vec3 xh((pairs[i].p_cam.x() - K.cx) / K.fx,
                    (pairs[i].p_cam.y() - K.cy) / K.fy, 1.0);
      Mat3 xx;
      xx << 0, -xh.z(), xh.y(), xh.z(), 0, -xh.x(), -xh.y(), xh.x(), 0;
      at.middleRows<3>(3 * i) = xx;
      bt.segment<3>(3 * i) = -xx * (t.rotation * pairs[i].p_lidar);
    }
    const Vec3 refined =
        at.colPivHouseholderQr().solve(bt);
    if (refined.allFinite()) t.translation = refined;
    return t;
  };
  // The sign of the null vector is arbitrary and the polar factor of -M is
  // not -R, so both signs are recovered and the one that actually reprojects
  // wins.
  const auto mean_residual = [&](const RigidTransform& t) {
    double sum = 0;
    for (const auto& pr : pairs) {
      const double r = pair_residual(pr, K, t);
      sum += std::isfinite(r) ? r : 1e9;
    }
    return sum / pairs.size();
  };
  const RigidTransform t1 = recover(P);
  const RigidTransform t2 = recover(-P);
  const double r1 = mean_residual(t1), r2 = mean_residual(t2);
  if (std::min(r1, r2) >= 1e9)
    throw CalibError("DegenerateConfiguration", "all points behind camera");
  return r1 <= r2 ? t1 : t2;
}

CalibrationResult solve_pnp_lm(const std::vector<CenterPair>& pairs,
                               const CameraIntrinsics& K,
                               const RigidTransform& init,
                               const SolverConfig& cfg) {
  if (pairs.size() < 4)
    throw CalibError("TooFewPairs", "LM needs at least 4 pairs");
  RigidTransform cur = init;
  Residuals res = compute_residuals(pairs, K, cur, cfg);
  if (!res.finite)
    throw CalibError("NonFiniteResidual",
                     "initial transform puts a point at non-positive depth");

  double lambda = cfg.lambda0;
  bool converged = false;
  int iter = 0;
  for (; iter < cfg.max_iter; ++iter) {
    // Accumulate the weighted normal equations about the current state.
    Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
    for (size_t i = 0; i < pairs.size(); ++i) {
      const Vec3 pc = cur.apply(pairs[i].p_lidar);
      const double iz = 1.0 / pc.z();
      const Vec2 proj(K.fx * pc.x() * iz + K.cx, K.fy * pc.y() * iz + K.cy);
      const Vec2 r = proj - pairs[i].p_cam;
      // d(proj)/d(pc), then pc perturbed as exp(dw) * pc + dt.
      Eigen::Matrix<double, 2, 3> jproj;
      jproj << K.fx * iz, 0, -K.fx * pc.x() * iz * iz, 0, K.fy * iz,
          -K.fy * pc.y() * iz * iz;
      Eigen::Matrix<double, 3, 6> jpc;
      Mat3 px;
      px << 0, -pc.z(), pc.y(), pc.z(), 0, -pc.x(), -pc.y(), pc.x(), 0;
      jpc.leftCols<3>() = -px;
      jpc.rightCols<3>() = Mat3::Identity();
      const Eigen::Matrix<double, 2, 6> j = jproj * jpc;
      const double w = robust_weight(res.norms(i), cfg.kernel, cfg.huber_px);
      h += w * j.transpose() * j;
      g += w * j.transpose() * r;
    }

    if (g.lpNorm<Eigen::Infinity>() < cfg.g_tol) {
      converged = true;
      break;
    }

    bool stepped = false;
    for (int attempt = 0; attempt < 16; ++attempt) {
      Eigen::Matrix<double, 6, 6> damped = h;
      damped.diagonal() += lambda * h.diagonal();
      const Eigen::Matrix<double, 6, 1> delta = -damped.ldlt().solve(g);
      if (!delta.allFinite()) {
        lambda *= 10;
        continue;
      }
      RigidTransform cand;
      const Mat3 dr = so3_exp(delta.head<3>());
      cand.rotation = dr * cur.rotation;
      cand.translation = dr * cur.translation + delta.tail<3>();
      const Residuals cand_res = compute_residuals(pairs, K, cand, cfg);
      if (cand_res.finite && cand_res.cost < res.cost) {
        cur = cand;
        res = cand_res;
        lambda = std::max(1e-12, lambda * 0.5);
        stepped = true;
        if (delta.norm() < cfg.x_tol) converged = true;
        break;
      }
      lambda *= 10;
    }
    if (converged) {
      ++iter;
      break;
    }
    if (!stepped) {
      // Damping saturated: we are at a (local) minimum for all practical
      // purposes.
      converged = true;
      break;
    }
  }

  CalibrationResult out;
  out.transform = cur;
  out.iterations = iter;
  out.converged = converged;
  out.per_pair_residual.resize(pairs.size());
  double ss = 0;
  for (size_t i = 0; i < pairs.size(); ++i) {
    out.per_pair_residual[i] = res.norms(i);
    ss += res.norms(i) * res.norms(i);
  }
  out.rms_reprojection = std::sqrt(ss / pairs.size());
  return out;
}

CalibrationResult reject_and_resolve(const CalibrationResult& result,
                                     const std::vector<CenterPair>& pairs,
                                     const CameraIntrinsics& K,
                                     double thresh_px,
                                     const SolverConfig& cfg) {
  CalibrationResult cur = result;
  std::vector<CenterPair> active = pairs;
  std::set<std::string> rejected;

  for (;;) {
    std::vector<CenterPair> survivors;
    for (size_t i = 0; i < active.size(); ++i) {
      if (pair_residual(active[i], K, cur.transform) > thresh_px)
        rejected.insert(active[i].scene_id);
      else
        survivors.push_back(active[i]);
    }
    if (static_cast<int>(survivors.size()) < cfg.min_pairs)
      throw CalibError("TooFewPairs",
                       "only " + std::to_string(survivors.size()) +
                           " pairs under the rejection threshold");
    const bool fixed_point = survivors.size() == active.size();
    active = std::move(survivors);
    if (fixed_point) break;
    cur = solve_pnp_lm(active, K, cur.transform, cfg);
  }

  // Final bookkeeping against the original pair list.
  CalibrationResult out;
  out.transform = cur.transform;
  out.iterations = cur.iterations;
  out.converged = cur.converged;
  out.per_pair_residual.resize(pairs.size());
  double ss = 0;
  int accepted = 0;
  for (size_t i = 0; i < pairs.size(); ++i) {
    if (rejected.count(pairs[i].scene_id)) {
      out.per_pair_residual[i] = -1;
      continue;
    }
    const double r = pair_residual(pairs[i], K, cur.transform);
    out.per_pair_residual[i] = r;
    ss += r * r;
    ++accepted;
  }
  out.rejected_ids.assign(rejected.begin(), rejected.end());
  out.rms_reprojection = accepted > 0 ? std::sqrt(ss / accepted) : 0;
  return out;
}

CalibrationResult calibrate(const std::vector<CenterPair>& pairs,
                            const CameraIntrinsics& K,
                            const SolverConfig& cfg) {
  if (static_cast<int>(pairs.size()) < cfg.min_pairs)
    throw CalibError("TooFewPairs", "need at least " +
                                        std::to_string(cfg.min_pairs) +
                                        " pairs");
  RigidTransform init;
  try {
    init = solve_pnp_init(pairs, K);
  } catch (const CalibError&) {
    // Identity rotation, translation from the centroid pushed to a plausible
    // depth in front of the camera.
    Vec3 centroid = Vec3::Zero();
    for (const auto& p : pairs) centroid += p.p_lidar;
    centroid /= static_cast<double>(pairs.size());
    init.rotation = Mat3::Identity();
    init.translation = Vec3(0, 0, std::max(1.0, centroid.norm())) - centroid;
  }
  const CalibrationResult lm = solve_pnp_lm(pairs, K, init, cfg);
  return reject_and_resolve(lm, pairs, K, cfg.reject_thresh_px, cfg);
}

TruthMetrics evaluate_against_truth(const CalibrationResult& result,
                                    const RigidTransform& truth) {
  TruthMetrics m;
  m.trans_err_m = (result.transform.translation - truth.translation).norm();
  m.rot_err_deg =
      rotation_geodesic_deg(result.transform.rotation, truth.rotation);
  m.rms_px = result.rms_reprojection;
  return m;
}

}  // namespace spherecal
