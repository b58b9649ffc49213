#pragma once

#include "spherecal/types.hpp"

#include <string>
#include <vector>

namespace spherecal {

/// One paired observation: the sphere center seen by both sensors.
struct CenterPair {
  Vec3 p_lidar;  // 3D center, LiDAR frame, meters
  Vec2 p_cam;    // compensated 2D center, pixels
  std::string scene_id;
};

enum class RobustKernel { None, Huber, Cauchy };

RobustKernel kernel_from_string(const std::string& s);
const char* to_string(RobustKernel k);

struct SolverConfig {
  RobustKernel kernel = RobustKernel::Huber;
  double huber_px = 2.0;        // kernel scale, pixels
  double reject_thresh_px = 5.0;
  int min_pairs = 4;
  int max_iter = 100;
  double g_tol = 1e-10;
  double x_tol = 1e-12;
  double lambda0 = 1e-3;
};

struct CalibrationResult {
  RigidTransform transform;            // T^C_L
  std::vector<double> per_pair_residual;  // pixels, input order, rejected = -1
  std::vector<std::string> rejected_ids;
  double rms_reprojection = 0;  // over accepted pairs
  int iterations = 0;
  bool converged = false;
};

/// Linear DLT pose from >= 6 pairs, rotation projected onto SO(3).
/// Throws DegenerateConfiguration.
RigidTransform solve_pnp_init(const std::vector<CenterPair>& pairs,
                              const CameraIntrinsics& K);

/// Levenberg-Marquardt minimization of the robust reprojection cost over a
/// local axis-angle + translation parameterization. A result is always
/// returned; converged is false when the iteration budget ran out.
/// Throws NonFiniteResidual when the initial state puts a point at
/// non-positive depth.
CalibrationResult solve_pnp_lm(const std::vector<CenterPair>& pairs,
                               const CameraIntrinsics& K,
                               const RigidTransform& init,
                               const SolverConfig& cfg);

/// Drops pairs whose residual exceeds thresh_px and re-solves (warm started)
/// until a fixed point. Throws TooFewPairs when fewer than cfg.min_pairs
/// survive.
CalibrationResult reject_and_resolve(const CalibrationResult& result,
                                     const std::vector<CenterPair>& pairs,
                                     const CameraIntrinsics& K,
                                     double thresh_px,
                                     const SolverConfig& cfg);

/// DLT when feasible, else identity rotation with a centroid-depth
/// translation; then LM and threshold rejection.
CalibrationResult calibrate(const std::vector<CenterPair>& pairs,
                            const CameraIntrinsics& K,
                            const SolverConfig& cfg);

struct TruthMetrics {
  double trans_err_m = 0;
  double rot_err_deg = 0;
  double rms_px = 0;
};

TruthMetrics evaluate_against_truth(const CalibrationResult& result,
                                    const RigidTransform& truth);

/// Reprojection residual (pixels) of one pair under a transform.
double pair_residual(const CenterPair& pair, const CameraIntrinsics& K,
                     const RigidTransform& t);

}  // namespace spherecal
