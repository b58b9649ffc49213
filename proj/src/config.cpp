#include "spherecal/config.hpp"

#include <fstream>
#include <sstream>

namespace spherecal {

namespace {

const std::map<std::string, std::string>& default_values() {
  static const std::map<std::string, std::string> defaults = {
      // camera pipeline
      {"camera.sample_size", "6"},
      {"camera.inlier_tol_px", "2.0"},
      {"camera.histogram_bins", "12"},
      {"camera.min_bin_frac", "0.25"},
      {"camera.rectify_iters", "50"},
      {"camera.region_samples", "4"},
      {"camera.outside_frac", "0.1"},
      {"camera.rng_seed", "1"},
      // lidar pipeline
      {"lidar.sor_k", "8"},
      {"lidar.sor_m", "1.0"},
      {"lidar.ground_dist_thresh", "0.02"},
      {"lidar.range_image_res_deg", "0.2"},
      {"lidar.roi_margin_px", "2.0"},
      {"lidar.hough_min_score", "0.4"},
      {"lidar.az_res", "0.25"},    // degrees
      {"lidar.el_res", "0.6452"},  // degrees
      {"lidar.extent_thresh", "0"},
      {"lidar.min_cluster_pts", "3"},
      {"lidar.cells_M", "16"},
      {"lidar.voxel_size", "0.02"},
      {"lidar.radius_known", "0.1"},
      {"lidar.radius_tol", "0.02"},
      {"lidar.combo_cap", "200000"},
      {"lidar.fuse_bin", "0.005"},
      {"lidar.fuse_radius", "0.02"},
      {"lidar.coplanar_tol", "1e-6"},
      {"lidar.rng_seed", "1"},
      // solver
      {"solver.kernel", "huber"},
      {"solver.huber_px", "2.0"},
      {"solver.reject_thresh_px", "5.0"},
      {"solver.min_pairs", "4"},
      {"solver.max_iter", "100"},
      {"solver.g_tol", "1e-10"},
      {"solver.x_tol", "1e-12"},
      {"solver.lambda0", "1e-3"},
      // simulator
      {"sim.n_scenes", "10"},
      {"sim.mode", "spinning"},
      {"sim.frames", "100"},
      {"sim.rings", "32"},
      {"sim.az_res_deg", "0.25"},
      {"sim.az_min_deg", "-20"},
      {"sim.az_max_deg", "20"},
      {"sim.el_min_deg", "-10"},
      {"sim.el_max_deg", "10"},
      {"sim.grid_az_res_deg", "0.4"},
      {"sim.grid_el_res_deg", "0.4"},
      {"sim.rosette_samples", "6000"},
      {"sim.sphere_radius", "0.1"},
      {"sim.range_min", "2.0"},
      {"sim.range_max", "5.0"},
      {"sim.ground_z", "-0.5"},
      {"sim.max_range", "30.0"},
      {"sim.clutter_boxes", "0"},
      {"sim.sigma0", "0"},
      {"sim.incidence_gain", "0"},
      {"sim.sigma_max", "0.05"},
      {"sim.clutter_rate", "0"},
      {"sim.mask_jitter_px", "0"},
      {"sim.truncation_frac", "0"},
      {"sim.occluder_blobs", "0"},
      {"sim.scratch_lines", "0"},
      {"sim.blur_erosion_px", "0"},
      {"sim.mud_mask_frac", "0"},
      {"sim.image_width", "1024"},
      {"sim.image_height", "768"},
      {"sim.fx", "700"},
      {"sim.fy", "700"},
      {"sim.cx", "512"},
      {"sim.cy", "384"},
      {"sim.seed", "1"},
  };
  return defaults;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig::RunConfig() : values_(default_values()) {}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CalibError("IoFailure", "cannot open config " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw CalibError("BadConfig", path + ":" + std::to_string(lineno) +
                                        ": expected key = value");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void RunConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw CalibError("BadConfig", "expected key=value, got " + assignment);
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!values_.count(key)) throw CalibError("BadConfig", "unknown key " + key);
  values_[key] = value;
  explicit_.insert(key);
}

void RunConfig::set_seed(std::uint64_t seed) {
  set("camera.rng_seed", std::to_string(seed));
  set("lidar.rng_seed", std::to_string(seed));
  set("sim.seed", std::to_string(seed));
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw CalibError("BadConfig", "unknown key " + key);
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  try {
    return std::stod(get(key));
  } catch (const std::exception&) {
    throw CalibError("BadConfig", key + " is not a number: " + get(key));
  }
}

int RunConfig::get_int(const std::string& key) const {
  return static_cast<int>(get_int64(key));
}

std::int64_t RunConfig::get_int64(const std::string& key) const {
  try {
    return std::stoll(get(key));
  } catch (const std::exception&) {
    throw CalibError("BadConfig", key + " is not an integer: " + get(key));
  }
}

std::uint64_t RunConfig::get_uint64(const std::string& key) const {
  try {
    return std::stoull(get(key));
  } catch (const std::exception&) {
    throw CalibError("BadConfig", key + " is not an integer: " + get(key));
  }
}

CameraConfig RunConfig::camera_config() const {
  CameraConfig c;
  c.sample_size = get_int("camera.sample_size");
  c.inlier_tol_px = get_double("camera.inlier_tol_px");
  c.histogram_bins = get_int("camera.histogram_bins");
  c.min_bin_frac = get_double("camera.min_bin_frac");
  c.rectify_iters = get_int("camera.rectify_iters");
  c.region_samples = get_int("camera.region_samples");
  c.outside_frac = get_double("camera.outside_frac");
  c.rng_seed = get_uint64("camera.rng_seed");
  return c;
}

LidarConfig RunConfig::lidar_config() const {
  LidarConfig c;
  c.sor_k = get_int("lidar.sor_k");
  c.sor_m = get_double("lidar.sor_m");
  c.ground_dist_thresh = get_double("lidar.ground_dist_thresh");
  c.range_image_res_deg = get_double("lidar.range_image_res_deg");
  c.roi_margin_px = get_double("lidar.roi_margin_px");
  c.hough_min_score = get_double("lidar.hough_min_score");
  c.az_res_deg = get_double("lidar.az_res");
  c.el_res_deg = get_double("lidar.el_res");
  c.extent_thresh = get_double("lidar.extent_thresh");
  c.min_cluster_pts = get_int("lidar.min_cluster_pts");
  c.cells_m = get_int("lidar.cells_M");
  c.voxel_size = get_double("lidar.voxel_size");
  c.radius_known = get_double("lidar.radius_known");
  c.radius_tol = get_double("lidar.radius_tol");
  c.combo_cap = get_int64("lidar.combo_cap");
  c.fuse_bin = get_double("lidar.fuse_bin");
  c.fuse_radius = get_double("lidar.fuse_radius");
  c.coplanar_tol = get_double("lidar.coplanar_tol");
  c.rng_seed = get_uint64("lidar.rng_seed");
  return c;
}

SolverConfig RunConfig::solver_config() const {
  SolverConfig c;
  c.kernel = kernel_from_string(get("solver.kernel"));
  c.huber_px = get_double("solver.huber_px");
  c.reject_thresh_px = get_double("solver.reject_thresh_px");
  c.min_pairs = get_int("solver.min_pairs");
  c.max_iter = get_int("solver.max_iter");
  c.g_tol = get_double("solver.g_tol");
  c.x_tol = get_double("solver.x_tol");
  c.lambda0 = get_double("solver.lambda0");
  return c;
}

SimConfig RunConfig::sim_config() const {
  SimConfig c;
  c.n_scenes = get_int("sim.n_scenes");
  c.mode = scan_mode_from_string(get("sim.mode"));
  c.pattern.mode = c.mode;
  c.pattern.rings = get_int("sim.rings");
  c.pattern.az_res_deg = get_double("sim.az_res_deg");
  c.pattern.az_min_deg = get_double("sim.az_min_deg");
  c.pattern.az_max_deg = get_double("sim.az_max_deg");
  c.pattern.el_min_deg = get_double("sim.el_min_deg");
  c.pattern.el_max_deg = get_double("sim.el_max_deg");
  c.pattern.grid_az_res_deg = get_double("sim.grid_az_res_deg");
  c.pattern.grid_el_res_deg = get_double("sim.grid_el_res_deg");
  c.pattern.rosette_samples = get_int("sim.rosette_samples");
  c.frames = get_int("sim.frames");
  c.noise.sigma0 = get_double("sim.sigma0");
  c.noise.incidence_gain = get_double("sim.incidence_gain");
  c.noise.sigma_max = get_double("sim.sigma_max");
  c.noise.clutter_rate = get_double("sim.clutter_rate");
  c.noise.mask_jitter_px = get_double("sim.mask_jitter_px");
  c.corruption.truncation_frac = get_double("sim.truncation_frac");
  c.random_occluder_blobs = get_int("sim.occluder_blobs");
  c.corruption.scratch_lines = get_int("sim.scratch_lines");
  c.corruption.blur_erosion_px = get_int("sim.blur_erosion_px");
  c.corruption.mud_mask_frac = get_double("sim.mud_mask_frac");
  c.k.fx = get_double("sim.fx");
  c.k.fy = get_double("sim.fy");
  c.k.cx = get_double("sim.cx");
  c.k.cy = get_double("sim.cy");
  c.k.width = get_int("sim.image_width");
  c.k.height = get_int("sim.image_height");
  c.sphere_radius = get_double("sim.sphere_radius");
  c.range_min = get_double("sim.range_min");
  c.range_max = get_double("sim.range_max");
  c.ground_z = get_double("sim.ground_z");
  c.max_range = get_double("sim.max_range");
  c.clutter_boxes = get_int("sim.clutter_boxes");
  c.seed = get_uint64("sim.seed");
  return c;
}

}  // namespace spherecal
