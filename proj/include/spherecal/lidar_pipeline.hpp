#pragma once

#include "spherecal/point_cloud.hpp"
#include "spherecal/types.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace spherecal {

enum class ScanMode { Spinning, SolidState, NonRepetitive };

ScanMode scan_mode_from_string(const std::string& s);
const char* to_string(ScanMode m);

struct LidarConfig {
  int sor_k = 8;
  double sor_m = 1.0;
  double ground_dist_thresh = 0.02;  // m
  double range_image_res_deg = 0.2;  // ROI projection, deg per pixel
  double roi_margin_px = 2.0;
  double hough_min_score = 0.4;      // circle support fraction
  double az_res_deg = 0.25;          // ray-cluster bin width
  double el_res_deg = 0.6452;
  double extent_thresh = 0.0;        // 0 = adaptive (3 x median, floor 2 cm)
  int min_cluster_pts = 3;
  int cells_m = 16;                  // cells per cluster
  double voxel_size = 0.02;          // m, non-repetitive branch
  double radius_known = 0.1;         // m, target sphere radius
  double radius_tol = 0.02;          // m, hypothesis gate
  std::int64_t combo_cap = 200000;   // max 4-point combinations
  double fuse_bin = 0.005;           // m, center-fusion grid
  double fuse_radius = 0.02;         // m, neighborhood of the modal bin
  double coplanar_tol = 1e-6;
  std::uint64_t rng_seed = 0;
};

/// Keeps points whose mean k-NN distance is within m standard deviations of
/// the cloud-wide mean. Throws TooFewPoints when the cloud has <= k points.
PointCloud remove_statistical_outliers(const PointCloud& cloud, int k,
                                       double m);

struct GroundSegmentation {
  PointCloud ground;
  PointCloud nonground;
  bool plane_found = false;
  Eigen::Vector4d plane = Eigen::Vector4d::Zero();  // n.x*x+...+d = 0
};

/// RANSAC plane restricted to near-horizontal normals (elevation >= 60 deg).
/// When no such plane reaches consensus the whole cloud passes through as
/// nonground with plane_found = false.
GroundSegmentation segment_ground(const PointCloud& cloud, double dist_thresh,
                                  std::mt19937_64& rng);

struct RoiDetection {
  PointCloud roi;
  double center_az_px = 0, center_el_px = 0;
  double radius_px = 0;
  double score = 0;  // fraction of the circle perimeter supported
};

/// Projects the cloud to a spherical-coordinate occupancy/range image and
/// finds the sphere as the best circle over the apparent-radius band implied
/// by radius_hint. Throws NoCircleFound below cfg.hough_min_score.
RoiDetection detect_sphere_roi(const PointCloud& nonground,
                               const LidarConfig& cfg, double radius_hint);

struct RayCluster {
  Vec3 direction = Vec3::Zero();  // unit, azimuth/elevation bin center
  std::vector<Vec3> members;
  double radial_extent = 0;  // max - min range along direction
};

/// Bins points by (azimuth, elevation); each nonempty bin is one cluster of
/// returns accumulated along one beam direction.
std::vector<RayCluster> cluster_along_rays(const PointCloud& roi,
                                           double az_res_rad,
                                           double el_res_rad);

/// Drops long (noisy) clusters and clusters with too few members.
/// extent_thresh <= 0 selects the adaptive threshold. Throws
/// AllClustersRemoved when nothing survives.
std::vector<RayCluster> filter_noisy_clusters(
    const std::vector<RayCluster>& clusters, double extent_thresh,
    int min_cluster_pts);

struct CellGrid {
  int cells = 0;
  std::vector<Vec3> cell_centers;
  std::vector<int> counts;
};

CellGrid build_cell_grid(const RayCluster& cluster, int cells);

/// Frequency-weighted mean of the occupied cells: sum(n_i c_i) / sum(n_i).
Vec3 representative_point(const RayCluster& cluster, int cells);

/// Centroid per occupied voxel, ordered by voxel key.
std::vector<Vec3> voxel_representatives(const PointCloud& roi, double voxel);

struct SphereHypothesis {
  SphereParams params;
  std::array<int, 4> source{};  // indices into the representative set
};

/// Exact sphere through 4 points. nullopt when the quadruple is coplanar
/// within coplanar_tol (determinant normalized by the cube of the RMS
/// pairwise distance) or yields a non-positive squared radius.
std::optional<SphereParams> fit_sphere_4pts(const std::array<Vec3, 4>& pts,
                                            double coplanar_tol = 1e-6);

/// All C(n,4) combinations when that count is within cap, otherwise a seeded
/// uniform subset of cap distinct combinations. Hypotheses outside
/// |radius - known_r| <= r_tol are discarded; throws NoHypotheses when none
/// survive.
std::vector<SphereHypothesis> enumerate_sphere_hypotheses(
    const std::vector<Vec3>& reps, double known_r, double r_tol,
    std::int64_t cap, double coplanar_tol, std::mt19937_64& rng);

/// Frequency-weighted fusion: averages the hypothesis centers inside the
/// fuse_radius ball around the high-density core (anchored at the spatial
/// median, so the result commutes with rigid motions of the inputs).
/// bin sets the convergence tolerance of the median iteration.
Vec3 fuse_centers(const std::vector<SphereHypothesis>& hyps, double bin,
                  double fuse_radius);

struct LidarExtraction {
  Vec3 center = Vec3::Zero();
  bool ground_plane_found = false;
  double roi_score = 0;
  int points_after_sor = 0;
  int roi_points = 0;
  int clusters_total = 0;
  int clusters_kept = 0;
  int representatives = 0;
  int hypotheses = 0;
};

/// Full pipeline: SOR -> ground removal -> ROI -> representatives (ray
/// clustering or voxels, by mode) -> 4-point hypotheses -> fused center.
/// Stage failures propagate as CalibError with the stage named in the
/// message.
LidarExtraction extract_sphere_center_detailed(const PointCloud& cloud,
                                               ScanMode mode,
                                               const LidarConfig& cfg);

Vec3 extract_sphere_center(const PointCloud& cloud, ScanMode mode,
                           const LidarConfig& cfg);

}  // namespace spherecal
