#pragma once

#include "spherecal/image.hpp"
#include "spherecal/lidar_pipeline.hpp"
#include "spherecal/point_cloud.hpp"
#include "spherecal/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace spherecal {

/// Beam pattern of one scanner. Spinning: rings x azimuth steps.
/// SolidState: a dense az/el grid. NonRepetitive: a two-frequency rosette
/// whose phase advances across frames, so coverage never repeats.
struct ScanPattern {
  ScanMode mode = ScanMode::Spinning;
  double az_min_deg = -20, az_max_deg = 20;
  double el_min_deg = -10, el_max_deg = 10;
  int rings = 32;              // spinning
  double az_res_deg = 0.25;    // spinning azimuth step
  double grid_az_res_deg = 0.4, grid_el_res_deg = 0.4;  // solid state
  int rosette_samples = 6000;  // non-repetitive, per frame
  double rosette_f1 = 181.0, rosette_f2 = 17.35;

  /// Elevation spacing between spinning rings, degrees.
  double ring_spacing_deg() const {
    return rings > 1 ? (el_max_deg - el_min_deg) / (rings - 1) : 1.0;
  }
};

/// Range noise grows with incidence angle:
/// sigma(theta) = sigma0 * (1 + incidence_gain * tan(theta)), capped.
struct NoiseModel {
  double sigma0 = 0;          // m, at normal incidence
  double incidence_gain = 0;
  double sigma_max = 0.05;    // m, cap
  double clutter_rate = 0;    // fraction of beams adding a spurious return
  double mask_jitter_px = 0;  // radial boundary wobble of rendered masks
};

/// Target/sensor degradations applied to the rendered mask.
struct CorruptionSpec {
  double truncation_frac = 0;  // [0, 0.5): foreground area fraction removed
  // (rim position angle, angular half-extent), radians.
  std::vector<std::pair<double, double>> occluder_blobs;
  int scratch_lines = 0;
  int blur_erosion_px = 0;
  double mud_mask_frac = 0;  // [0, 1): foreground fraction hidden by one blob
};

struct ClutterBox {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();
};

struct SceneSpec {
  SphereParams sphere;    // LiDAR frame
  RigidTransform t_gt;    // LiDAR -> camera
  CameraIntrinsics k;
  ScanPattern pattern;
  int frames = 100;
  NoiseModel noise;
  CorruptionSpec corruption;
  double ground_z = -0.5;  // ground plane height in the LiDAR frame
  double max_range = 30.0;
  std::vector<ClutterBox> clutter;
  bool with_ground = true;
  std::uint64_t seed = 0;
};

/// Casts every beam of every frame: nearest hit among sphere, ground and
/// clutter boxes, plus Gaussian range noise along the beam. Labels are kept
/// per point. Throws SphereNotVisible when no beam intersects the sphere.
PointCloud generate_scan(const SceneSpec& spec);

struct RenderedMask {
  ImageU8 mask;
  Vec2 true_center_px;  // projection of the sphere center (the ground truth)
  Ellipse outline;      // analytic outline before corruption
};

/// Rasterizes the analytic sphere outline and applies the corruption spec.
/// Throws SphereBehindCamera.
RenderedMask render_mask(const SceneSpec& spec);

struct SceneRecord {
  std::string id;
  std::string cloud_file;
  std::string mask_file;
  std::string truth_file;
  std::uint64_t seed = 0;
};

struct DatasetManifest {
  CameraIntrinsics intrinsics;
  RigidTransform t_gt;
  ScanMode mode = ScanMode::Spinning;
  double cluster_az_res_deg = 0.25;  // beam grid resolutions, for clustering
  double cluster_el_res_deg = 0.645;
  double sphere_radius = 0.1;
  std::vector<SceneRecord> scenes;
};

/// Writes clouds (PLY), masks (PGM), per-scene truth (JSON) and the manifest
/// (JSON). Byte-reproducible for fixed seeds. Returns the manifest path.
std::string generate_dataset(const std::vector<SceneSpec>& specs,
                             const std::string& out_dir);

DatasetManifest read_manifest(const std::string& path);

/// Dataset-level knobs expanded into per-scene SceneSpecs: a random rig
/// transform plus randomized sphere placements, all derived from the seed.
struct SimConfig {
  int n_scenes = 10;
  ScanMode mode = ScanMode::Spinning;
  ScanPattern pattern;
  int frames = 100;
  NoiseModel noise;
  CorruptionSpec corruption;
  int random_occluder_blobs = 0;  // placed per scene from the seed
  CameraIntrinsics k{700, 700, 512, 384, 1024, 768};
  double sphere_radius = 0.1;
  double range_min = 2.0, range_max = 5.0;
  double ground_z = -0.5;
  double max_range = 30.0;
  int clutter_boxes = 0;
  std::uint64_t seed = 0;
};

std::vector<SceneSpec> make_dataset_specs(const SimConfig& cfg);

}  // namespace spherecal
