#include "spherecal/runner.hpp"

#include "spherecal/image.hpp"
#include "spherecal/point_cloud.hpp"
#include "spherecal/projection.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

namespace spherecal {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

RigidTransform transform_from_flat(const json& j) {
  if (!j.is_array() || j.size() != 16)
    throw CalibError("SchemaMismatch", "transform must be 16 row-major values");
  RigidTransform t;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) t.rotation(r, c) = j[4 * r + c].get<double>();
    t.translation(r) = j[4 * r + 3].get<double>();
  }
  return t;
}

json transform_to_flat(const RigidTransform& t) {
  const Eigen::Matrix4d m = t.matrix();
  json out = json::array();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) out.push_back(m(r, c));
  return out;
}

SceneOutcome process_scene(const fs::path& dir, const SceneRecord& rec,
                           const DatasetManifest& manifest,
                           const CameraConfig& cam_cfg,
                           const LidarConfig& lidar_cfg) {
  SceneOutcome out;
  out.id = rec.id;
  try {
    const PointCloud cloud = read_point_cloud((dir / rec.cloud_file).string());
    const LidarExtraction lx =
        extract_sphere_center_detailed(cloud, manifest.mode, lidar_cfg);
    out.lidar_center = lx.center;
    out.representatives = lx.representatives;
    out.hypotheses = lx.hypotheses;

    // Binary masks are consumed directly; grayscale images go through the
    // threshold + connected-components segmenter, one candidate mask per
    // component.
    const ImageU8 img = read_image((dir / rec.mask_file).string());
    bool binary = true;
    for (const auto v : img.data)
      if (v != 0 && v != 255) {
        binary = false;
        break;
      }
    const std::vector<ImageU8> masks =
        binary ? std::vector<ImageU8>{img} : segment_by_threshold(img, 128);
    const auto cam = extract_center_2d(masks, manifest.intrinsics, cam_cfg);
    if (!cam) {
      out.fail_reason = "InvalidMask";
      return out;
    }
    out.verdict = cam->detection.verdict;
    out.cam_center = cam->center;
    out.mean_residual_px = cam->detection.mean_residual_px;
    out.ok = true;
  } catch (const CalibError& e) {
    out.fail_reason = e.code();
  }
  return out;
}

}  // namespace

CalibrationReport run_calibration(const std::string& manifest_path,
                                  const RunConfig& cfg, int jobs) {
  const DatasetManifest manifest = read_manifest(manifest_path);
  const fs::path dir = fs::path(manifest_path).parent_path();

  const CameraConfig cam_cfg = cfg.camera_config();
  LidarConfig lidar_cfg = cfg.lidar_config();
  // The cluster binning follows the dataset's beam grid unless overridden.
  if (!cfg.was_set("lidar.az_res"))
    lidar_cfg.az_res_deg = manifest.cluster_az_res_deg;
  if (!cfg.was_set("lidar.el_res"))
    lidar_cfg.el_res_deg = manifest.cluster_el_res_deg;
  if (!cfg.was_set("lidar.radius_known"))
    lidar_cfg.radius_known = manifest.sphere_radius;

  const int n = static_cast<int>(manifest.scenes.size());
  std::vector<SceneOutcome> outcomes(n);
  std::atomic<int> next{0};
  const int workers = std::max(1, std::min(jobs, n));
  auto work = [&] {
    for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1))
      outcomes[i] = process_scene(dir, manifest.scenes[i], manifest, cam_cfg,
                                  lidar_cfg);
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  std::vector<CenterPair> pairs;
  for (const auto& o : outcomes)
    if (o.ok) pairs.push_back({o.lidar_center, o.cam_center, o.id});

  CalibrationReport report = run_calibration_on_pairs(
      pairs, manifest.intrinsics, cfg);
  report.scenes = std::move(outcomes);
  if (manifest.t_gt.is_valid(1e-6))
    report.truth = evaluate_against_truth(report.result, manifest.t_gt);
  return report;
}

CalibrationReport run_calibration_on_pairs(const std::vector<CenterPair>& pairs,
                                           const CameraIntrinsics& K,
                                           const RunConfig& cfg) {
  CalibrationReport report;
  report.pairs = pairs;
  report.config_snapshot = cfg.values();
  report.result = calibrate(pairs, K, cfg.solver_config());
  return report;
}

PairsFile read_pairs_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CalibError("IoFailure", "cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw CalibError("SchemaMismatch", std::string("bad pairs JSON: ") + e.what());
  }
  PairsFile out;
  const json* arr = &j;
  if (j.is_object()) {
    if (j.contains("intrinsics")) {
      const auto& k = j["intrinsics"];
      out.intrinsics = CameraIntrinsics{
          k["fx"].get<double>(), k["fy"].get<double>(), k["cx"].get<double>(),
          k["cy"].get<double>(), k.value("width", 0), k.value("height", 0)};
    }
    if (!j.contains("pairs"))
      throw CalibError("SchemaMismatch", "pairs object lacks \"pairs\"");
    arr = &j["pairs"];
  }
  if (!arr->is_array())
    throw CalibError("SchemaMismatch", "pairs must be a JSON array");
  for (const auto& e : *arr) {
    if (!e.contains("scene_id") || !e.contains("lidar") || !e.contains("cam"))
      throw CalibError("SchemaMismatch",
                       "pair needs scene_id, lidar [x,y,z], cam [u,v]");
    CenterPair p;
    p.scene_id = e["scene_id"].is_string()
                     ? e["scene_id"].get<std::string>()
                     : e["scene_id"].dump();
    p.p_lidar = Vec3(e["lidar"][0].get<double>(), e["lidar"][1].get<double>(),
                     e["lidar"][2].get<double>());
    p.p_cam = Vec2(e["cam"][0].get<double>(), e["cam"][1].get<double>());
    out.pairs.push_back(p);
  }
  return out;
}

void write_report(const CalibrationReport& report, const std::string& path) {
  json j;
  j["format"] = "spherecal-report-v1";
  j["config"] = report.config_snapshot;
  j["transform"] = transform_to_flat(report.result.transform);
  j["rms_reprojection"] = report.result.rms_reprojection;
  j["iterations"] = report.result.iterations;
  j["converged"] = report.result.converged;
  j["rejected_ids"] = report.result.rejected_ids;

  json pairs = json::array();
  for (size_t i = 0; i < report.pairs.size(); ++i) {
    const auto& p = report.pairs[i];
    json e;
    e["scene_id"] = p.scene_id;
    e["lidar"] = {p.p_lidar.x(), p.p_lidar.y(), p.p_lidar.z()};
    e["cam"] = {p.p_cam.x(), p.p_cam.y()};
    if (i < report.result.per_pair_residual.size())
      e["residual_px"] = report.result.per_pair_residual[i];
    pairs.push_back(e);
  }
  j["pairs"] = pairs;

  json scenes = json::array();
  for (const auto& s : report.scenes) {
    json e;
    e["id"] = s.id;
    e["ok"] = s.ok;
    if (s.ok) {
      e["verdict"] = to_string(s.verdict);
      e["lidar_center"] = {s.lidar_center.x(), s.lidar_center.y(),
                           s.lidar_center.z()};
      e["cam_center"] = {s.cam_center.x(), s.cam_center.y()};
      e["representatives"] = s.representatives;
      e["hypotheses"] = s.hypotheses;
      e["mean_residual_px"] = s.mean_residual_px;
    } else {
      e["reason"] = s.fail_reason;
    }
    scenes.push_back(e);
  }
  j["scenes"] = scenes;

  if (report.truth) {
    j["truth_metrics"] = {{"trans_err_m", report.truth->trans_err_m},
                          {"rot_err_deg", report.truth->rot_err_deg},
                          {"rms_px", report.truth->rms_px}};
  }

  std::ofstream out(path);
  if (!out) throw CalibError("IoFailure", "cannot write " + path);
  out << j.dump(2) << "\n";
}

ReportSummary read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CalibError("IoFailure", "cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw CalibError("SchemaMismatch", std::string("bad report JSON: ") + e.what());
  }
  if (!j.contains("transform"))
    throw CalibError("SchemaMismatch", "report lacks transform");
  ReportSummary out;
  out.transform = transform_from_flat(j["transform"]);
  out.rms_reprojection = j.value("rms_reprojection", 0.0);
  out.converged = j.value("converged", false);
  return out;
}

RigidTransform read_truth_transform(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CalibError("SchemaMismatch", "cannot open truth " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw CalibError("SchemaMismatch", std::string("bad truth JSON: ") + e.what());
  }
  if (!j.contains("t_gt"))
    throw CalibError("SchemaMismatch", "truth file lacks t_gt");
  return transform_from_flat(j["t_gt"]);
}

EvalRow evaluate_report(const std::string& report_path,
                        const std::string& truth_path) {
  const ReportSummary rep = read_report(report_path);
  const RigidTransform truth = read_truth_transform(truth_path);
  EvalRow row;
  row.name = fs::path(report_path).filename().string();
  row.metrics.trans_err_m = (rep.transform.translation - truth.translation).norm();
  row.metrics.rot_err_deg =
      rotation_geodesic_deg(rep.transform.rotation, truth.rotation);
  row.metrics.rms_px = rep.rms_reprojection;
  return row;
}

void write_metrics_csv(const std::vector<EvalRow>& rows,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw CalibError("IoFailure", "cannot write " + path);
  out << "report,trans_m,rot_deg,proj_px\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), ",%.6f,%.6f,%.6f", r.metrics.trans_err_m,
                  r.metrics.rot_err_deg, r.metrics.rms_px);
    out << r.name << buf << "\n";
  }
}

}  // namespace spherecal
