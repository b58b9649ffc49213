#include "spherecal/simulator.hpp"

#include "spherecal/projection.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

namespace spherecal {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;

Vec3 beam_dir(double az, double el) {
  return {std::cos(el) * std::cos(az), std::cos(el) * std::sin(az),
          std::sin(el)};
}

struct Hit {
  double t = -1;
  Vec3 normal = Vec3::Zero();
  int label = -1;
};

// Nearest positive intersection among sphere, ground plane and boxes.
Hit cast_ray(const SceneSpec& spec, const Vec3& d) {
  Hit best;
  // Sphere |t d - c|^2 = r^2.
  {
    const Vec3& c = spec.sphere.center;
    const double b = d.dot(c);
    const double disc = b * b - c.squaredNorm() +
                        spec.sphere.radius * spec.sphere.radius;
    if (disc >= 0) {
      const double t = b - std::sqrt(disc);
      if (t > 1e-6 && (best.t < 0 || t < best.t)) {
        best.t = t;
        best.normal = (t * d - c).normalized();
        best.label = kLabelSphere;
      }
    }
  }
  if (spec.with_ground && d.z() < -1e-9) {
    const double t = spec.ground_z / d.z();
    if (t > 1e-6 && (best.t < 0 || t < best.t)) {
      best.t = t;
      best.normal = Vec3(0, 0, 1);
      best.label = kLabelGround;
    }
  }
  for (const auto& box : spec.clutter) {
    // Slab intersection from the origin.
    double t0 = 0, t1 = 1e30;
    int axis_hit = -1;
    for (int a = 0; a < 3; ++a) {
      const double inv = 1.0 / d(a);
      double lo = (box.min(a)) * inv, hi = (box.max(a)) * inv;
      if (inv < 0) std::swap(lo, hi);
      if (lo > t0) {
        t0 = lo;
        axis_hit = a;
      }
      t1 = std::min(t1, hi);
      if (t0 > t1) break;
    }
    if (t0 <= t1 && t0 > 1e-6 && axis_hit >= 0 &&
        (best.t < 0 || t0 < best.t)) {
      best.t = t0;
      best.normal = Vec3::Zero();
      best.normal(axis_hit) = d(axis_hit) < 0 ? 1.0 : -1.0;
      best.label = kLabelClutter;
    }
  }
  return best;
}

double incidence_sigma(const NoiseModel& nm, const Vec3& d, const Vec3& n) {
  const double c = std::abs(d.dot(n));
  const double tan_theta = c > 1e-6 ? std::sqrt(std::max(0.0, 1 - c * c)) / c
                                    : 1e6;
  return std::min(nm.sigma_max, nm.sigma0 * (1 + nm.incidence_gain * tan_theta));
}

std::vector<Vec3> frame_beams(const ScanPattern& p, int frame) {
  std::vector<Vec3> dirs;
  const double az0 = p.az_min_deg * kDegToRad, az1 = p.az_max_deg * kDegToRad;
  const double el0 = p.el_min_deg * kDegToRad, el1 = p.el_max_deg * kDegToRad;
  switch (p.mode) {
    case ScanMode::Spinning: {
      const double az_step = p.az_res_deg * kDegToRad;
      const double el_step =
          p.rings > 1 ? (el1 - el0) / (p.rings - 1) : 0.0;
      for (int r = 0; r < p.rings; ++r)
        for (double az = az0; az <= az1 + 1e-12; az += az_step)
          dirs.push_back(beam_dir(az, el0 + r * el_step));
      break;
    }
    case ScanMode::SolidState: {
      const double az_step = p.grid_az_res_deg * kDegToRad;
      const double el_step = p.grid_el_res_deg * kDegToRad;
      for (double el = el0; el <= el1 + 1e-12; el += el_step)
        for (double az = az0; az <= az1 + 1e-12; az += az_step)
          dirs.push_back(beam_dir(az, el));
      break;
    }
    case ScanMode::NonRepetitive: {
      // Two incommensurate frequencies; the phase keeps advancing across
      // frames so no frame repeats the previous pattern.
      const double az_c = 0.5 * (az0 + az1), el_c = 0.5 * (el0 + el1);
      const double az_amp = 0.5 * (az1 - az0), el_amp = 0.5 * (el1 - el0);
      const double dt = 1.0 / p.rosette_samples;
      for (int i = 0; i < p.rosette_samples; ++i) {
        const double t = (frame + i * dt);
        const double az = az_c + az_amp * std::cos(2 * kPi * p.rosette_f1 * t);
        const double el = el_c + el_amp * std::sin(2 * kPi * p.rosette_f2 * t);
        dirs.push_back(beam_dir(az, el));
      }
      break;
    }
  }
  return dirs;
}

// Smooth periodic boundary wobble used for mask jitter.
struct JitterField {
  std::vector<double> amp_cos, amp_sin;
  double eval(double angle) const {
    double v = 0;
    for (size_t k = 0; k < amp_cos.size(); ++k) {
      const double f = static_cast<double>(k + 2);
      v += amp_cos[k] * std::cos(f * angle) + amp_sin[k] * std::sin(f * angle);
    }
    return v;
  }
};

JitterField make_jitter(double sigma_px, std::mt19937_64& rng) {
  JitterField f;
  if (sigma_px <= 0) return f;
  constexpr int kHarmonics = 5;
  std::normal_distribution<double> g(0.0, sigma_px / std::sqrt(kHarmonics));
  for (int k = 0; k < kHarmonics; ++k) {
    f.amp_cos.push_back(g(rng));
    f.amp_sin.push_back(g(rng));
  }
  return f;
}

std::vector<int> foreground_pixels(const ImageU8& m) {
  std::vector<int> idx;
  for (int i = 0; i < static_cast<int>(m.data.size()); ++i)
    if (is_foreground(m.data[i])) idx.push_back(i);
  return idx;
}

void remove_disk(ImageU8& m, const Vec2& c, double radius) {
  const int x0 = std::max(0, static_cast<int>(c.x() - radius) - 1);
  const int x1 = std::min(m.width - 1, static_cast<int>(c.x() + radius) + 1);
  const int y0 = std::max(0, static_cast<int>(c.y() - radius) - 1);
  const int y1 = std::min(m.height - 1, static_cast<int>(c.y() + radius) + 1);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (std::hypot(x - c.x(), y - c.y()) <= radius) m.at(x, y) = 0;
}

json transform_to_json(const RigidTransform& t) {
  const Eigen::Matrix4d m = t.matrix();
  json rows = json::array();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) rows.push_back(m(r, c));
  return rows;
}

RigidTransform transform_from_json(const json& j) {
  if (!j.is_array() || j.size() != 16)
    throw CalibError("SchemaMismatch", "transform must be 16 row-major values");
  RigidTransform t;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) t.rotation(r, c) = j[4 * r + c].get<double>();
    t.translation(r) = j[4 * r + 3].get<double>();
  }
  return t;
}

}  // namespace

PointCloud generate_scan(const SceneSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  PointCloud cloud;
  bool sphere_seen = false;
  for (int f = 0; f < spec.frames; ++f) {
    for (const Vec3& d : frame_beams(spec.pattern, f)) {
      const Hit hit = cast_ray(spec, d);
      if (hit.t > 0 && hit.t <= spec.max_range) {
        double range = hit.t;
        const double sigma = incidence_sigma(spec.noise, d, hit.normal);
        if (sigma > 0) range += sigma * gauss(rng);
        cloud.push_back(range * d, f, hit.label);
        sphere_seen = sphere_seen || hit.label == kLabelSphere;
      }
      if (spec.noise.clutter_rate > 0 && uni(rng) < spec.noise.clutter_rate) {
        const double range = 0.5 + uni(rng) * (spec.max_range - 0.5);
        cloud.push_back(range * d, f, kLabelClutter);
      }
    }
  }
  if (!sphere_seen)
    throw CalibError("SphereNotVisible", "no beam intersects the sphere");
  return cloud;
}

RenderedMask render_mask(const SceneSpec& spec) {
  RenderedMask out;
  const Vec3 c_cam = spec.t_gt.apply(spec.sphere.center);
  SphereParams cam_sphere{c_cam, spec.sphere.radius};
  out.outline = sphere_outline_ellipse(cam_sphere, spec.k);
  out.true_center_px = project_point(c_cam, spec.k);

  std::mt19937_64 rng(spec.seed ^ 0xC0FFEE);
  const JitterField jitter = make_jitter(spec.noise.mask_jitter_px, rng);

  ImageU8 m(spec.k.width, spec.k.height, 0);
  const double pad = 3 * spec.noise.mask_jitter_px + 2;
  const double reach = out.outline.a + pad;
  const int x0 = std::max(0, static_cast<int>(out.outline.center.x() - reach));
  const int x1 = std::min(m.width - 1,
                          static_cast<int>(out.outline.center.x() + reach) + 1);
  const int y0 = std::max(0, static_cast<int>(out.outline.center.y() - reach));
  const int y1 = std::min(m.height - 1,
                          static_cast<int>(out.outline.center.y() + reach) + 1);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const Vec2 p(x, y);
      const double dist = ellipse_boundary_distance(out.outline, p);
      const double wobble =
          jitter.amp_cos.empty()
              ? 0.0
              : jitter.eval(ellipse_param_angle(out.outline, p));
      if (dist <= wobble) m.at(x, y) = kForeground;
    }
  }

  const auto& cor = spec.corruption;
  if (cor.truncation_frac > 0) {
    // Cut a segment off with a seeded half-plane whose offset is the exact
    // pixel-count quantile, so the removed area fraction is exact.
    std::uniform_real_distribution<double> angle(0.0, 2 * kPi);
    const double a = angle(rng);
    const Vec2 w(std::cos(a), std::sin(a));
    auto fg = foreground_pixels(m);
    std::vector<double> proj(fg.size());
    for (size_t i = 0; i < fg.size(); ++i)
      proj[i] = w.dot(Vec2(fg[i] % m.width, fg[i] / m.width));
    std::vector<double> sorted = proj;
    const size_t cut =
        static_cast<size_t>((1.0 - cor.truncation_frac) * sorted.size());
    std::nth_element(sorted.begin(), sorted.begin() + cut, sorted.end());
    const double cutoff = sorted[std::min(cut, sorted.size() - 1)];
    for (size_t i = 0; i < fg.size(); ++i)
      if (proj[i] >= cutoff) m.data[fg[i]] = 0;
  }
  for (const auto& [gamma, half_extent] : cor.occluder_blobs) {
    const Vec2 rim = ellipse_point_at(out.outline, gamma);
    const Vec2 edge = ellipse_point_at(out.outline, gamma + half_extent);
    remove_disk(m, rim, (edge - rim).norm());
  }
  if (cor.scratch_lines > 0) {
    std::uniform_real_distribution<double> angle(0.0, 2 * kPi);
    for (int s = 0; s < cor.scratch_lines; ++s) {
      const Vec2 p0 = ellipse_point_at(out.outline, angle(rng));
      const Vec2 p1 = ellipse_point_at(out.outline, angle(rng));
      const double len = (p1 - p0).norm();
      if (len < 2) continue;
      const Vec2 dir = (p1 - p0) / len;
      for (double s2 = 0; s2 <= len; s2 += 0.5) {
        const Vec2 q = p0 + s2 * dir;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int qx = static_cast<int>(q.x()) + dx;
            const int qy = static_cast<int>(q.y()) + dy;
            if (m.in_bounds(qx, qy) &&
                std::hypot(qx - q.x(), qy - q.y()) <= 1.0)
              m.at(qx, qy) = 0;
          }
      }
    }
  }
  if (cor.mud_mask_frac > 0) {
    auto fg = foreground_pixels(m);
    if (!fg.empty()) {
      std::uniform_int_distribution<size_t> pick(0, fg.size() - 1);
      const int at = fg[pick(rng)];
      const Vec2 c(at % m.width, at / m.width);
      const size_t target = static_cast<size_t>(cor.mud_mask_frac * fg.size());
      double lo = 0, hi = 2.0 * out.outline.a + 4;
      for (int it = 0; it < 24; ++it) {
        const double mid = 0.5 * (lo + hi);
        size_t covered = 0;
        for (int i : fg) {
          const Vec2 q(i % m.width, i / m.width);
          if ((q - c).norm() <= mid) ++covered;
        }
        (covered < target ? lo : hi) = mid;
      }
      remove_disk(m, c, hi);
    }
  }
  if (cor.blur_erosion_px > 0) m = erode(m, cor.blur_erosion_px);

  out.mask = std::move(m);
  return out;
}

void write_ply(const PointCloud& cloud, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CalibError("IoFailure", "cannot write " + path);
  const bool has_label = cloud.label.size() == cloud.size();
  const bool has_frame = cloud.frame.size() == cloud.size();
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n";
  if (has_label) out << "property int label\n";
  if (has_frame) out << "property int frame\n";
  out << "end_header\n";
  char buf[160];
  for (size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    int len = std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g", p.x(), p.y(),
                            p.z());
    out.write(buf, len);
    if (has_label) out << " " << cloud.label[i];
    if (has_frame) out << " " << cloud.frame[i];
    out << "\n";
  }
  if (!out) throw CalibError("IoFailure", "short write to " + path);
}

PointCloud read_ply(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CalibError("IoFailure", "cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line != "ply") throw CalibError("IoFailure", "not a PLY file: " + path);
  size_t count = 0;
  std::vector<std::string> props;
  bool ascii = false;
  while (std::getline(in, line)) {
    if (line.rfind("format ascii", 0) == 0) ascii = true;
    if (line.rfind("element vertex", 0) == 0)
      count = std::stoul(line.substr(15));
    if (line.rfind("property", 0) == 0)
      props.push_back(line.substr(line.rfind(' ') + 1));
    if (line == "end_header") break;
  }
  if (!ascii) throw CalibError("IoFailure", "only ASCII PLY is supported");
  int ix = -1, iy = -1, iz = -1, ilabel = -1, iframe = -1;
  for (int i = 0; i < static_cast<int>(props.size()); ++i) {
    if (props[i] == "x") ix = i;
    if (props[i] == "y") iy = i;
    if (props[i] == "z") iz = i;
    if (props[i] == "label") ilabel = i;
    if (props[i] == "frame") iframe = i;
  }
  if (ix < 0 || iy < 0 || iz < 0)
    throw CalibError("IoFailure", "PLY lacks x/y/z: " + path);
  PointCloud cloud;
  cloud.points.reserve(count);
  std::vector<double> vals(props.size());
  for (size_t i = 0; i < count; ++i) {
    for (auto& v : vals)
      if (!(in >> v)) throw CalibError("IoFailure", "truncated PLY: " + path);
    cloud.points.emplace_back(vals[ix], vals[iy], vals[iz]);
    if (ilabel >= 0) cloud.label.push_back(static_cast<int>(vals[ilabel]));
    if (iframe >= 0) cloud.frame.push_back(static_cast<int>(vals[iframe]));
  }
  return cloud;
}

PointCloud read_xyz_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CalibError("IoFailure", "cannot open " + path);
  PointCloud cloud;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    for (auto& c : line)
      if (c == ',') c = ' ';
    std::istringstream ss(line);
    double x, y, z;
    if (!(ss >> x >> y >> z)) continue;  // header or malformed line
    int frame = -1;
    ss >> frame;
    cloud.push_back(Vec3(x, y, z), frame);
  }
  if (cloud.empty()) throw CalibError("IoFailure", "no points in " + path);
  if (cloud.frame.size() != cloud.size()) cloud.frame.clear();
  return cloud;
}

PointCloud read_point_cloud(const std::string& path) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".ply")
    return read_ply(path);
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv")
    return read_xyz_csv(path);
  throw CalibError("IoFailure", "unknown point cloud format: " + path);
}

std::string generate_dataset(const std::vector<SceneSpec>& specs,
                             const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw CalibError("IoFailure", "cannot create " + out_dir);

  json manifest;
  manifest["format"] = "spherecal-dataset-v1";
  json scene_list = json::array();
  for (size_t i = 0; i < specs.size(); ++i) {
    const SceneSpec& spec = specs[i];
    char id[32];
    std::snprintf(id, sizeof(id), "scene_%03zu", i);
    const std::string cloud_file = std::string(id) + ".ply";
    const std::string mask_file = std::string(id) + ".pgm";
    const std::string truth_file = std::string(id) + "_truth.json";

    const PointCloud cloud = generate_scan(spec);
    write_ply(cloud, (fs::path(out_dir) / cloud_file).string());
    const RenderedMask rm = render_mask(spec);
    write_pgm(rm.mask, (fs::path(out_dir) / mask_file).string());

    const Vec3 c_cam = spec.t_gt.apply(spec.sphere.center);
    json truth;
    truth["scene_id"] = id;
    truth["t_gt"] = transform_to_json(spec.t_gt);
    truth["sphere_center_lidar"] = {spec.sphere.center.x(),
                                    spec.sphere.center.y(),
                                    spec.sphere.center.z()};
    truth["sphere_center_camera"] = {c_cam.x(), c_cam.y(), c_cam.z()};
    truth["true_center_px"] = {rm.true_center_px.x(), rm.true_center_px.y()};
    truth["radius"] = spec.sphere.radius;
    truth["seed"] = spec.seed;
    std::ofstream tf(fs::path(out_dir) / truth_file);
    if (!tf) throw CalibError("IoFailure", "cannot write " + truth_file);
    tf << truth.dump(2) << "\n";

    json rec;
    rec["id"] = id;
    rec["cloud"] = cloud_file;
    rec["mask"] = mask_file;
    rec["truth"] = truth_file;
    rec["seed"] = spec.seed;
    scene_list.push_back(rec);
  }
  manifest["scenes"] = scene_list;

  if (!specs.empty()) {
    const SceneSpec& s0 = specs.front();
    manifest["intrinsics"] = {{"fx", s0.k.fx},         {"fy", s0.k.fy},
                              {"cx", s0.k.cx},         {"cy", s0.k.cy},
                              {"width", s0.k.width},   {"height", s0.k.height}};
    manifest["t_gt"] = transform_to_json(s0.t_gt);
    manifest["mode"] = to_string(s0.pattern.mode);
    manifest["radius"] = s0.sphere.radius;
    const double el_res = s0.pattern.mode == ScanMode::SolidState
                              ? s0.pattern.grid_el_res_deg
                              : s0.pattern.ring_spacing_deg();
    const double az_res = s0.pattern.mode == ScanMode::SolidState
                              ? s0.pattern.grid_az_res_deg
                              : s0.pattern.az_res_deg;
    manifest["cluster_az_res_deg"] = az_res;
    manifest["cluster_el_res_deg"] = el_res;
  }

  const std::string manifest_path = (fs::path(out_dir) / "manifest.json").string();
  std::ofstream mf(manifest_path);
  if (!mf) throw CalibError("IoFailure", "cannot write " + manifest_path);
  mf << manifest.dump(2) << "\n";
  return manifest_path;
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CalibError("IoFailure", "cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw CalibError("SchemaMismatch", std::string("bad manifest JSON: ") + e.what());
  }
  if (!j.contains("scenes"))
    throw CalibError("SchemaMismatch", "manifest lacks scenes");
  if (!j["scenes"].empty() && !j.contains("intrinsics"))
    throw CalibError("SchemaMismatch", "manifest lacks intrinsics");
  DatasetManifest m;
  if (j.contains("intrinsics")) {
    const auto& k = j["intrinsics"];
    m.intrinsics = {k["fx"].get<double>(), k["fy"].get<double>(),
                    k["cx"].get<double>(), k["cy"].get<double>(),
                    k["width"].get<int>(), k["height"].get<int>()};
  }
  if (j.contains("t_gt")) m.t_gt = transform_from_json(j["t_gt"]);
  if (j.contains("mode")) m.mode = scan_mode_from_string(j["mode"]);
  if (j.contains("cluster_az_res_deg"))
    m.cluster_az_res_deg = j["cluster_az_res_deg"].get<double>();
  if (j.contains("cluster_el_res_deg"))
    m.cluster_el_res_deg = j["cluster_el_res_deg"].get<double>();
  if (j.contains("radius")) m.sphere_radius = j["radius"].get<double>();
  for (const auto& rec : j["scenes"]) {
    SceneRecord r;
    r.id = rec["id"].get<std::string>();
    r.cloud_file = rec["cloud"].get<std::string>();
    r.mask_file = rec["mask"].get<std::string>();
    r.truth_file = rec.value("truth", "");
    r.seed = rec.value("seed", 0ULL);
    m.scenes.push_back(r);
  }
  return m;
}

std::vector<SceneSpec> make_dataset_specs(const SimConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  // One rig per dataset: LiDAR x-forward/z-up to camera z-forward/y-down,
  // with a small random attitude offset and baseline.
  RigidTransform rig;
  Mat3 axes;
  axes << 0, -1, 0, 0, 0, -1, 1, 0, 0;
  const Vec3 pert(0.06 * (uni(rng) - 0.5), 0.06 * (uni(rng) - 0.5),
                  0.06 * (uni(rng) - 0.5));
  rig.rotation = so3_exp(pert) * axes;
  rig.translation = Vec3(0.25 * (uni(rng) - 0.5), 0.25 * (uni(rng) - 0.5),
                         0.25 * (uni(rng) - 0.5));

  std::vector<SceneSpec> specs;
  for (int i = 0; i < cfg.n_scenes; ++i) {
    SceneSpec s;
    s.t_gt = rig;
    s.k = cfg.k;
    s.pattern = cfg.pattern;
    s.pattern.mode = cfg.mode;
    s.frames = cfg.frames;
    s.noise = cfg.noise;
    s.corruption = cfg.corruption;
    s.ground_z = cfg.ground_z;
    s.max_range = cfg.max_range;
    s.seed = cfg.seed * 1000003ULL + 7919ULL * (i + 1);
    s.sphere.radius = cfg.sphere_radius;

    // Rejection-sample a placement visible to both sensors.
    bool placed = false;
    for (int attempt = 0; attempt < 256 && !placed; ++attempt) {
      const double range = cfg.range_min + uni(rng) * (cfg.range_max - cfg.range_min);
      const double az_span = (cfg.pattern.az_max_deg - cfg.pattern.az_min_deg);
      const double az =
          (cfg.pattern.az_min_deg + (0.15 + 0.7 * uni(rng)) * az_span) * kDegToRad;
      const double el_span = (cfg.pattern.el_max_deg - cfg.pattern.el_min_deg);
      const double el =
          (cfg.pattern.el_min_deg + (0.25 + 0.55 * uni(rng)) * el_span) * kDegToRad;
      const Vec3 c = range * beam_dir(az, el);
      if (c.z() - cfg.sphere_radius < cfg.ground_z + 0.15) continue;
      s.sphere.center = c;
      // Camera-side visibility: full outline inside the image.
      const Vec3 c_cam = s.t_gt.apply(c);
      if (c_cam.z() <= cfg.sphere_radius + 0.2) continue;
      try {
        const Ellipse outline =
            sphere_outline_ellipse({c_cam, cfg.sphere_radius}, s.k);
        const double margin = outline.a + 6;
        if (outline.center.x() < margin || outline.center.y() < margin ||
            outline.center.x() > s.k.width - margin ||
            outline.center.y() > s.k.height - margin)
          continue;
      } catch (const CalibError&) {
        continue;
      }
      placed = true;
    }
    if (!placed)
      throw CalibError("SphereNotVisible",
                       "could not place sphere for scene " + std::to_string(i));

    if (cfg.random_occluder_blobs > 0) {
      std::uniform_real_distribution<double> angle(0.0, 2 * kPi);
      std::uniform_real_distribution<double> extent(8 * kDegToRad,
                                                    20 * kDegToRad);
      for (int b = 0; b < cfg.random_occluder_blobs; ++b)
        s.corruption.occluder_blobs.push_back({angle(rng), extent(rng)});
    }
    for (int b = 0; b < cfg.clutter_boxes; ++b) {
      // Boxes placed to the side of the target, resting on the ground.
      const double range = cfg.range_min + uni(rng) * (cfg.range_max - cfg.range_min);
      const double az = (cfg.pattern.az_min_deg +
                         uni(rng) * (cfg.pattern.az_max_deg - cfg.pattern.az_min_deg)) *
                        kDegToRad;
      const Vec3 base = range * Vec3(std::cos(az), std::sin(az), 0);
      const double w = 0.2 + 0.4 * uni(rng), h = 0.3 + 0.5 * uni(rng);
      ClutterBox box;
      box.min = Vec3(base.x() - w / 2, base.y() - w / 2, cfg.ground_z);
      box.max = Vec3(base.x() + w / 2, base.y() + w / 2, cfg.ground_z + h);
      if ((base.head<2>() - s.sphere.center.head<2>()).norm() < 1.0) continue;
      s.clutter.push_back(box);
    }
    specs.push_back(std::move(s));
  }
  return specs;
}

}  // namespace spherecal
