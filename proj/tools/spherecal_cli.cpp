#include "spherecal/config.hpp"
#include "spherecal/runner.hpp"
#include "spherecal/simulator.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

namespace {

using namespace spherecal;
namespace fs = std::filesystem;

// Exit codes: 0 success, 1 calibration-quality failure, 2 I/O or schema.
constexpr int kOk = 0;
constexpr int kQualityFailure = 1;
constexpr int kIoFailure = 2;

int classify(const CalibError& e) {
  const std::string& c = e.code();
  if (c == "TooFewPairs" || c == "NotConverged") return kQualityFailure;
  return kIoFailure;
}

void print_error(const CalibError& e) {
  nlohmann::json j;
  j["error"] = e.code();
  j["message"] = e.what();
  std::cerr << j.dump() << "\n";
}

struct CommonOpts {
  std::string config_file;
  std::vector<std::string> overrides;
  std::int64_t seed = -1;

  RunConfig build() const {
    RunConfig cfg;
    if (!config_file.empty()) cfg.load_file(config_file);
    for (const auto& kv : overrides) cfg.set(kv);
    if (seed >= 0) cfg.set_seed(static_cast<std::uint64_t>(seed));
    return cfg;
  }
};

void add_common(CLI::App* app, CommonOpts& opts) {
  app->add_option("--config", opts.config_file, "Config file (key = value lines)");
  app->add_option("--set", opts.overrides, "Override: key=value (repeatable)");
  app->add_option("--seed", opts.seed, "Override every rng seed");
}

int cmd_simulate(const CommonOpts& opts, const std::string& out_dir) {
  const RunConfig cfg = opts.build();
  const auto specs = make_dataset_specs(cfg.sim_config());
  const std::string manifest = generate_dataset(specs, out_dir);
  std::cout << manifest << "\n";
  return kOk;
}

int cmd_calibrate(const CommonOpts& opts, const std::string& manifest,
                  const std::string& pairs_file, const std::string& out_path,
                  int jobs) {
  const RunConfig cfg = opts.build();
  CalibrationReport report;
  if (!pairs_file.empty()) {
    PairsFile pf = read_pairs_json(pairs_file);
    CameraIntrinsics k;
    if (pf.intrinsics) {
      k = *pf.intrinsics;
    } else {
      const SimConfig sim = cfg.sim_config();
      k = sim.k;
    }
    report = run_calibration_on_pairs(pf.pairs, k, cfg);
  } else {
    report = run_calibration(manifest, cfg, jobs);
  }

  std::string path = out_path;
  if (path.empty()) path = "calibration_report.json";
  write_report(report, path);

  for (const auto& s : report.scenes) {
    std::printf("%-10s %s%s\n", s.id.c_str(),
                s.ok ? to_string(s.verdict) : "skipped: ",
                s.ok ? "" : s.fail_reason.c_str());
  }
  std::printf("pairs=%zu rejected=%zu rms=%.3f px iterations=%d %s\n",
              report.pairs.size(), report.result.rejected_ids.size(),
              report.result.rms_reprojection, report.result.iterations,
              report.result.converged ? "converged" : "NOT converged");
  if (report.truth)
    std::printf("vs truth: trans=%.4f m rot=%.4f deg\n",
                report.truth->trans_err_m, report.truth->rot_err_deg);
  std::cout << path << "\n";
  return report.result.converged ? kOk : kQualityFailure;
}

int cmd_evaluate(const std::vector<std::string>& reports,
                 const std::string& truth, const std::string& out_csv) {
  std::vector<EvalRow> rows;
  rows.reserve(reports.size());
  for (const auto& r : reports) rows.push_back(evaluate_report(r, truth));
  std::printf("%-32s %10s %10s %10s\n", "report", "trans (m)", "rot (deg)",
              "proj (px)");
  for (const auto& row : rows)
    std::printf("%-32s %10.4f %10.4f %10.4f\n", row.name.c_str(),
                row.metrics.trans_err_m, row.metrics.rot_err_deg,
                row.metrics.rms_px);
  if (!out_csv.empty()) write_metrics_csv(rows, out_csv);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spherical-target LiDAR-camera extrinsic calibration"};
  app.require_subcommand(1);

  CommonOpts sim_opts, cal_opts;
  std::string out_dir = "dataset";
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset");
  add_common(sim, sim_opts);
  sim->add_option("--out", out_dir, "Output directory");

  std::string manifest, pairs_file, report_out;
  int jobs = 2;
  auto* cal = app.add_subcommand("calibrate", "Run the calibration pipeline");
  add_common(cal, cal_opts);
  cal->add_option("--manifest", manifest, "Dataset manifest JSON");
  cal->add_option("--pairs", pairs_file, "Solve directly from a pairs JSON");
  cal->add_option("--out", report_out, "Report output path");
  cal->add_option("--jobs", jobs, "Concurrent scenes");

  std::vector<std::string> reports;
  std::string truth, out_csv;
  auto* ev = app.add_subcommand("evaluate", "Compare reports against truth");
  ev->add_option("reports", reports, "Report JSON file(s)")->required();
  ev->add_option("--truth", truth, "Manifest or truth JSON with t_gt")
      ->required();
  ev->add_option("--out", out_csv, "CSV output path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmd_simulate(sim_opts, out_dir);
    if (cal->parsed()) {
      if (manifest.empty() && pairs_file.empty()) {
        std::cerr << "calibrate needs --manifest or --pairs\n";
        return kIoFailure;
      }
      return cmd_calibrate(cal_opts, manifest, pairs_file, report_out, jobs);
    }
    if (ev->parsed()) return cmd_evaluate(reports, truth, out_csv);
  } catch (const CalibError& e) {
    print_error(e);
    return classify(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoFailure;
  }
  return kOk;
}
