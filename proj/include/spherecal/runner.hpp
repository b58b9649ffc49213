#pragma once

#include "spherecal/calibration.hpp"
#include "spherecal/camera_pipeline.hpp"
#include "spherecal/config.hpp"
#include "spherecal/simulator.hpp"

#include <optional>
#include <string>
#include <vector>

namespace spherecal {

/// Per-scene diagnostics from a batch calibration run. Scene failures are
/// recorded, never fatal; only the final pair count gates the solve.
struct SceneOutcome {
  std::string id;
  bool ok = false;
  std::string fail_reason;
  Verdict verdict = Verdict::Invalid;
  Vec3 lidar_center = Vec3::Zero();
  Vec2 cam_center = Vec2::Zero();
  int representatives = 0;
  int hypotheses = 0;
  double mean_residual_px = 0;
};

struct CalibrationReport {
  CalibrationResult result;
  std::vector<CenterPair> pairs;  // the accepted input pairs, scene order
  std::vector<SceneOutcome> scenes;
  std::optional<TruthMetrics> truth;  // present when the manifest has t_gt
  std::map<std::string, std::string> config_snapshot;
};

/// Full batch pipeline over a dataset manifest: both center extractions per
/// scene (in parallel up to `jobs`), then solve + threshold rejection.
CalibrationReport run_calibration(const std::string& manifest_path,
                                  const RunConfig& cfg, int jobs = 1);

/// Solve directly from prepared center pairs.
CalibrationReport run_calibration_on_pairs(const std::vector<CenterPair>& pairs,
                                           const CameraIntrinsics& K,
                                           const RunConfig& cfg);

/// Pairs file: either a bare JSON array of {scene_id, lidar, cam} or an
/// object {"intrinsics": {...}, "pairs": [...]}.
struct PairsFile {
  std::vector<CenterPair> pairs;
  std::optional<CameraIntrinsics> intrinsics;
};
PairsFile read_pairs_json(const std::string& path);

void write_report(const CalibrationReport& report, const std::string& path);

struct ReportSummary {
  RigidTransform transform;
  double rms_reprojection = 0;
  bool converged = false;
};
ReportSummary read_report(const std::string& path);

/// Reads t_gt from a manifest or truth JSON.
RigidTransform read_truth_transform(const std::string& path);

struct EvalRow {
  std::string name;
  TruthMetrics metrics;
};

EvalRow evaluate_report(const std::string& report_path,
                        const std::string& truth_path);

void write_metrics_csv(const std::vector<EvalRow>& rows,
                       const std::string& path);

}  // namespace spherecal
