#include "spherecal/lidar_pipeline.hpp"

#include "spherecal/conic.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <queue>
#include <unordered_map>
#include <unordered_set>

namespace spherecal {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;

// Compact kd-tree for k-NN queries; nodes are a permutation of the input.
class KdTree3 {
 public:
  explicit KdTree3(const std::vector<Vec3>& pts) : pts_(pts) {
    idx_.resize(pts.size());
    std::iota(idx_.begin(), idx_.end(), 0);
    if (!idx_.empty()) build(0, static_cast<int>(idx_.size()));
  }

  // k nearest neighbors of pts_[query], excluding query itself.
  // Returns distances (not squared).
  std::vector<double> knn_distances(int query, int k) const {
    std::priority_queue<double> heap;  // max-heap of squared distances
    knn_rec(0, static_cast<int>(idx_.size()), 0, query, k, heap);
    std::vector<double> out;
    out.reserve(heap.size());
    while (!heap.empty()) {
      out.push_back(std::sqrt(heap.top()));
      heap.pop();
    }
    return out;
  }

 private:
  void build(int lo, int hi) {
    if (hi - lo <= 1) return;
    const int mid = (lo + hi) / 2;
    const int axis = pick_axis(lo, hi);
    axes_[mid] = axis;
    std::nth_element(idx_.begin() + lo, idx_.begin() + mid, idx_.begin() + hi,
                     [&](int a, int b) { return pts_[a](axis) < pts_[b](axis); });
    build(lo, mid);
    build(mid + 1, hi);
  }

  int pick_axis(int lo, int hi) {
    Vec3 mn = pts_[idx_[lo]], mx = mn;
    const int stride = std::max(1, (hi - lo) / 32);
    for (int i = lo; i < hi; i += stride) {
      mn = mn.cwiseMin(pts_[idx_[i]]);
      mx = mx.cwiseMax(pts_[idx_[i]]);
    }
    int axis = 0;
    (mx - mn).maxCoeff(&axis);
    return axis;
  }

  void knn_rec(int lo, int hi, int depth, int query, int k,
               std::priority_queue<double>& heap) const {
    if (hi <= lo) return;
    if (hi - lo == 1) {
      visit(idx_[lo], query, k, heap);
      return;
    }
    const int mid = (lo + hi) / 2;
    const int axis = axes_.at(mid);
    visit(idx_[mid], query, k, heap);
    const double delta = pts_[query](axis) - pts_[idx_[mid]](axis);
    const int near_lo = delta < 0 ? lo : mid + 1;
    const int near_hi = delta < 0 ? mid : hi;
    const int far_lo = delta < 0 ? mid + 1 : lo;
    const int far_hi = delta < 0 ? hi : mid;
    knn_rec(near_lo, near_hi, depth + 1, query, k, heap);
    if (static_cast<int>(heap.size()) < k || delta * delta < heap.top())
      knn_rec(far_lo, far_hi, depth + 1, query, k, heap);
  }

  void visit(int i, int query, int k,
             std::priority_queue<double>& heap) const {
    if (i == query) return;
    const double d2 = (pts_[i] - pts_[query]).squaredNorm();
    if (static_cast<int>(heap.size()) < k) {
      heap.push(d2);
    } else if (d2 < heap.top()) {
      heap.pop();
      heap.push(d2);
    }
  }

  const std::vector<Vec3>& pts_;
  std::vector<int> idx_;
  std::unordered_map<int, int> axes_;
};

struct VoxelKey {
  int x, y, z;
  bool operator==(const VoxelKey& o) const {
    return x == o.x && y == o.y && z == o.z;
  }
  bool operator<(const VoxelKey& o) const {
    return std::tie(x, y, z) < std::tie(o.x, o.y, o.z);
  }
};

struct VoxelKeyHash {
  size_t operator()(const VoxelKey& k) const {
    size_t h = static_cast<size_t>(k.x) * 73856093u;
    h ^= static_cast<size_t>(k.y) * 19349669u;
    h ^= static_cast<size_t>(k.z) * 83492791u;
    return h;
  }
};

VoxelKey voxel_of(const Vec3& p, double s) {
  return {static_cast<int>(std::floor(p.x() / s)),
          static_cast<int>(std::floor(p.y() / s)),
          static_cast<int>(std::floor(p.z() / s))};
}

struct VoxelAccum {
  Vec3 sum = Vec3::Zero();
  int count = 0;
};

}  // namespace

ScanMode scan_mode_from_string(const std::string& s) {
  if (s == "spinning") return ScanMode::Spinning;
  if (s == "solid_state") return ScanMode::SolidState;
  if (s == "non_repetitive") return ScanMode::NonRepetitive;
  throw CalibError("BadConfig", "unknown scan mode: " + s);
}

const char* to_string(ScanMode m) {
  switch (m) {
    case ScanMode::Spinning: return "spinning";
    case ScanMode::SolidState: return "solid_state";
    default: return "non_repetitive";
  }
}

PointCloud remove_statistical_outliers(const PointCloud& cloud, int k,
                                       double m) {
  const int n = static_cast<int>(cloud.size());
  if (n <= k)
    throw CalibError("TooFewPoints",
                     "SOR needs more than k=" + std::to_string(k) + " points");
  KdTree3 tree(cloud.points);
  std::vector<double> mean_dist(n);
  for (int i = 0; i < n; ++i) {
    const auto d = tree.knn_distances(i, k);
    mean_dist[i] = std::accumulate(d.begin(), d.end(), 0.0) / d.size();
  }
  const double mu =
      std::accumulate(mean_dist.begin(), mean_dist.end(), 0.0) / n;
  double var = 0;
  for (double d : mean_dist) var += (d - mu) * (d - mu);
  const double sigma = std::sqrt(var / n);
  const double cutoff = mu + m * sigma;
  std::vector<int> keep;
  keep.reserve(n);
  for (int i = 0; i < n; ++i)
    if (mean_dist[i] <= cutoff) keep.push_back(i);
  return cloud.select(keep);
}

GroundSegmentation segment_ground(const PointCloud& cloud, double dist_thresh,
                                  std::mt19937_64& rng) {
  GroundSegmentation out;
  const int n = static_cast<int>(cloud.size());
  if (n < 3) {
    out.nonground = cloud;
    return out;
  }

  // Score hypotheses on a deterministic subsample, then split the full cloud.
  std::vector<int> sub;
  const int stride = std::max(1, n / 20000);
  for (int i = 0; i < n; i += stride) sub.push_back(i);
  const double min_elev_cos = std::cos(30.0 * kDegToRad);  // |nz| for 60 deg

  int best_count = 0;
  Eigen::Vector4d best_plane = Eigen::Vector4d::Zero();
  std::uniform_int_distribution<int> pick(0, static_cast<int>(sub.size()) - 1);
  for (int it = 0; it < 200; ++it) {
    const Vec3& p0 = cloud.points[sub[pick(rng)]];
    const Vec3& p1 = cloud.points[sub[pick(rng)]];
    const Vec3& p2 = cloud.points[sub[pick(rng)]];
    Vec3 nrm = (p1 - p0).cross(p2 - p0);
    const double len = nrm.norm();
    if (len < 1e-12) continue;
    nrm /= len;
    if (std::abs(nrm.z()) < min_elev_cos) continue;  // not near-horizontal
    const double d = -nrm.dot(p0);
    int count = 0;
    for (int i : sub)
      if (std::abs(nrm.dot(cloud.points[i]) + d) <= dist_thresh) ++count;
    if (count > best_count) {
      best_count = count;
      best_plane << nrm.x(), nrm.y(), nrm.z(), d;
    }
  }

  if (best_count < std::max<int>(16, static_cast<int>(0.2 * sub.size()))) {
    out.nonground = cloud;
    return out;  // NoPlaneFound: passthrough, flagged
  }

  // Refine on the consensus set (centroid + smallest covariance eigenvector).
  Vec3 nrm = best_plane.head<3>();
  double d = best_plane(3);
  for (int pass = 0; pass < 2; ++pass) {
    Vec3 centroid = Vec3::Zero();
    Mat3 cov = Mat3::Zero();
    int count = 0;
    for (int i : sub) {
      if (std::abs(nrm.dot(cloud.points[i]) + d) > dist_thresh) continue;
      centroid += cloud.points[i];
      ++count;
    }
    if (count < 3) break;
    centroid /= count;
    for (int i : sub) {
      if (std::abs(nrm.dot(cloud.points[i]) + d) > dist_thresh) continue;
      const Vec3 q = cloud.points[i] - centroid;
      cov += q * q.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
    Vec3 refined = es.eigenvectors().col(0);
    if (std::abs(refined.z()) < min_elev_cos) break;
    nrm = refined;
    d = -nrm.dot(centroid);
  }

  out.plane_found = true;
  out.plane << nrm.x(), nrm.y(), nrm.z(), d;
  std::vector<int> ground_idx, nonground_idx;
  for (int i = 0; i < n; ++i) {
    if (std::abs(nrm.dot(cloud.points[i]) + d) <= dist_thresh)
      ground_idx.push_back(i);
    else
      nonground_idx.push_back(i);
  }
  out.ground = cloud.select(ground_idx);
  out.nonground = cloud.select(nonground_idx);
  return out;
}

RoiDetection detect_sphere_roi(const PointCloud& nonground,
                               const LidarConfig& cfg, double radius_hint) {
  if (nonground.empty())
    throw CalibError("NoCircleFound", "empty nonground cloud");
  // Pixels must not be finer than the beam grid or the target disk shreds
  // into isolated pixels. The grid can be anisotropic (few rings, dense
  // azimuth), so the Hough geometry runs in angle space where the target
  // stays a circle.
  const double res_az =
      std::max(cfg.range_image_res_deg, cfg.az_res_deg) * kDegToRad;
  const double res_el =
      std::max(cfg.range_image_res_deg, cfg.el_res_deg) * kDegToRad;

  const int n = static_cast<int>(nonground.size());
  std::vector<double> az(n), el(n), range(n);
  double az_min = 1e30, az_max = -1e30, el_min = 1e30, el_max = -1e30;
  for (int i = 0; i < n; ++i) {
    const Vec3& p = nonground.points[i];
    range[i] = p.norm();
    if (range[i] < 1e-9) {
      az[i] = el[i] = 0;
      continue;
    }
    az[i] = std::atan2(p.y(), p.x());
    el[i] = std::asin(std::clamp(p.z() / range[i], -1.0, 1.0));
    az_min = std::min(az_min, az[i]);
    az_max = std::max(az_max, az[i]);
    el_min = std::min(el_min, el[i]);
    el_max = std::max(el_max, el[i]);
  }
  const int w = static_cast<int>((az_max - az_min) / res_az) + 3;
  const int h = static_cast<int>((el_max - el_min) / res_el) + 3;
  if (static_cast<std::int64_t>(w) * h > 16 * 1000 * 1000)
    throw CalibError("NoCircleFound", "range image too large");

  std::vector<double> min_range(static_cast<size_t>(w) * h, -1.0);
  std::vector<int> px(n), py(n);
  for (int i = 0; i < n; ++i) {
    px[i] = std::clamp(static_cast<int>((az[i] - az_min) / res_az) + 1, 0,
                       w - 1);
    py[i] = std::clamp(static_cast<int>((el[i] - el_min) / res_el) + 1, 0,
                       h - 1);
    const size_t at = static_cast<size_t>(py[i]) * w + px[i];
    if (min_range[at] < 0 || range[i] < min_range[at])
      min_range[at] = range[i];
  }

  const auto occupied = [&](int x, int y) {
    return x >= 0 && x < w && y >= 0 && y < h &&
           min_range[static_cast<size_t>(y) * w + x] > 0;
  };
  const auto angle_of = [&](int x, int y) {
    return Eigen::Vector2d(az_min + (x - 0.5) * res_az,
                           el_min + (y - 0.5) * res_el);
  };
  std::vector<std::pair<int, int>> boundary;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!occupied(x, y)) continue;
      bool edge = false;
      for (int dy = -1; !edge && dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          if ((dx || dy) && !occupied(x + dx, y + dy)) {
            edge = true;
            break;
          }
      if (edge) boundary.push_back({x, y});
    }
  }
  if (boundary.empty()) throw CalibError("NoCircleFound", "no boundary pixels");

  // Each boundary pixel votes for circle centers at its expected apparent
  // angular radius.
  std::vector<int> acc(static_cast<size_t>(w) * h, 0);
  std::vector<double> rho_of(boundary.size(), 0.0);
  const double coarse = std::max(res_az, res_el);
  for (size_t b = 0; b < boundary.size(); ++b) {
    const auto [x, y] = boundary[b];
    const double r = min_range[static_cast<size_t>(y) * w + x];
    if (r <= radius_hint) continue;
    const double rho = std::asin(radius_hint / r);  // radians
    rho_of[b] = rho;
    if (rho < 0.5 * coarse) continue;  // target far smaller than a pixel
    const Eigen::Vector2d ang = angle_of(x, y);
    const int steps = std::max(
        32, static_cast<int>(std::ceil(2 * kPi * rho / std::min(res_az, res_el) * 1.5)));
    for (int s = 0; s < steps; ++s) {
      const double a = 2 * kPi * s / steps;
      const int cx = static_cast<int>(
          std::lround((ang.x() + rho * std::cos(a) - az_min) / res_az + 0.5));
      const int cy = static_cast<int>(
          std::lround((ang.y() + rho * std::sin(a) - el_min) / res_el + 0.5));
      if (cx >= 0 && cx < w && cy >= 0 && cy < h)
        ++acc[static_cast<size_t>(cy) * w + cx];
    }
  }

  int best_at = -1, best_votes = 0;
  for (size_t i = 0; i < acc.size(); ++i)
    if (acc[i] > best_votes) {
      best_votes = acc[i];
      best_at = static_cast<int>(i);
    }
  if (best_at < 0) throw CalibError("NoCircleFound", "empty accumulator");
  const Eigen::Vector2d center = angle_of(best_at % w, best_at / w);

  // Support: boundary pixels whose angular distance to the center matches
  // their own expected radius, normalized by the disk's rasterized boundary
  // length in this (possibly anisotropic) grid.
  const double band = 1.5 * coarse;
  double rho_sum = 0;
  int support = 0;
  for (size_t b = 0; b < boundary.size(); ++b) {
    if (rho_of[b] <= 0) continue;
    const auto [x, y] = boundary[b];
    const double dist = (angle_of(x, y) - center).norm();
    if (std::abs(dist - rho_of[b]) <= band) {
      rho_sum += rho_of[b];
      ++support;
    }
  }
  if (support == 0) throw CalibError("NoCircleFound", "no supporting pixels");
  const double rho_hat = rho_sum / support;
  Ellipse disk;
  disk.a = std::max(rho_hat / res_az, rho_hat / res_el);
  disk.b = std::min(rho_hat / res_az, rho_hat / res_el);
  const double expected = std::max(4.0, ellipse_perimeter(disk));
  const double score = support / expected;
  if (score < cfg.hough_min_score)
    throw CalibError("NoCircleFound",
                     "best circle support " + std::to_string(score) +
                         " below threshold");

  RoiDetection out;
  out.center_az_px = (center.x() - az_min) / res_az + 0.5;
  out.center_el_px = (center.y() - el_min) / res_el + 0.5;
  out.radius_px = rho_hat / coarse;
  out.score = score;
  std::vector<int> keep;
  const double margin = cfg.roi_margin_px * coarse;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d ang(az[i], el[i]);
    if ((ang - center).norm() <= rho_hat + margin) keep.push_back(i);
  }
  out.roi = nonground.select(keep);
  return out;
}

std::vector<RayCluster> cluster_along_rays(const PointCloud& roi,
                                           double az_res_rad,
                                           double el_res_rad) {
  std::map<std::pair<int, int>, std::vector<int>> bins;
  const int n = static_cast<int>(roi.size());
  for (int i = 0; i < n; ++i) {
    const Vec3& p = roi.points[i];
    const double r = p.norm();
    if (r < 1e-9) continue;
    const double az = std::atan2(p.y(), p.x());
    const double el = std::asin(std::clamp(p.z() / r, -1.0, 1.0));
    bins[{static_cast<int>(std::floor(az / az_res_rad)),
          static_cast<int>(std::floor(el / el_res_rad))}]
        .push_back(i);
  }
  std::vector<RayCluster> out;
  out.reserve(bins.size());
  for (const auto& [key, idx] : bins) {
    RayCluster c;
    const double az = (key.first + 0.5) * az_res_rad;
    const double el = (key.second + 0.5) * el_res_rad;
    c.direction = Vec3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az),
                       std::sin(el));
    c.members.reserve(idx.size());
    double lo = 1e30, hi = -1e30;
    for (int i : idx) {
      c.members.push_back(roi.points[i]);
      const double r = roi.points[i].dot(c.direction);
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
    c.radial_extent = hi - lo;
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<RayCluster> filter_noisy_clusters(
    const std::vector<RayCluster>& clusters, double extent_thresh,
    int min_cluster_pts) {
  double thresh = extent_thresh;
  if (thresh <= 0) {
    std::vector<double> extents;
    extents.reserve(clusters.size());
    for (const auto& c : clusters) extents.push_back(c.radial_extent);
    if (!extents.empty()) {
      std::nth_element(extents.begin(), extents.begin() + extents.size() / 2,
                       extents.end());
      thresh = std::max(3.0 * extents[extents.size() / 2], 0.02);
    }
  }
  std::vector<RayCluster> out;
  for (const auto& c : clusters)
    if (c.radial_extent <= thresh &&
        static_cast<int>(c.members.size()) >= min_cluster_pts)
      out.push_back(c);
  if (out.empty())
    throw CalibError("AllClustersRemoved", "no cluster passed the filters");
  return out;
}

CellGrid build_cell_grid(const RayCluster& cluster, int cells) {
  CellGrid grid;
  grid.cells = std::max(1, cells);
  grid.cell_centers.resize(grid.cells);
  grid.counts.assign(grid.cells, 0);

  // Reconstruct along the mean member direction: range noise spreads points
  // along the beam, so this is the beam axis.
  Vec3 dir = Vec3::Zero();
  for (const auto& p : cluster.members) dir += p.normalized();
  dir = dir.norm() > 1e-12 ? Vec3(dir.normalized()) : cluster.direction;

  double lo = 1e30, hi = -1e30;
  std::vector<double> ranges(cluster.members.size());
  for (size_t i = 0; i < cluster.members.size(); ++i) {
    ranges[i] = cluster.members[i].dot(dir);
    lo = std::min(lo, ranges[i]);
    hi = std::max(hi, ranges[i]);
  }
  const double span = hi - lo;
  if (span <= 0) {
    // All members at one range: a single degenerate cell.
    for (int i = 0; i < grid.cells; ++i) grid.cell_centers[i] = dir * lo;
    grid.counts[0] = static_cast<int>(ranges.size());
    return grid;
  }
  const double width = span / grid.cells;
  for (int i = 0; i < grid.cells; ++i)
    grid.cell_centers[i] = dir * (lo + (i + 0.5) * width);
  for (double r : ranges) {
    const int cell =
        std::clamp(static_cast<int>((r - lo) / width), 0, grid.cells - 1);
    ++grid.counts[cell];
  }
  return grid;
}

Vec3 representative_point(const RayCluster& cluster, int cells) {
  const CellGrid grid = build_cell_grid(cluster, cells);
  Vec3 num = Vec3::Zero();
  double den = 0;
  for (int i = 0; i < grid.cells; ++i) {
    num += grid.counts[i] * grid.cell_centers[i];
    den += grid.counts[i];
  }
  return num / den;
}

std::vector<Vec3> voxel_representatives(const PointCloud& roi, double voxel) {
  if (roi.empty()) return {};
  std::map<VoxelKey, VoxelAccum> cells;
  for (const auto& p : roi.points) {
    auto& acc = cells[voxel_of(p, voxel)];
    acc.sum += p;
    ++acc.count;
  }
  std::vector<Vec3> out;
  out.reserve(cells.size());
  for (const auto& [key, acc] : cells) out.push_back(acc.sum / acc.count);
  return out;
}

std::optional<SphereParams> fit_sphere_4pts(const std::array<Vec3, 4>& pts,
                                            double coplanar_tol) {
  Eigen::Matrix4d x;
  Eigen::Vector4d f;
  for (int i = 0; i < 4; ++i) {
    x.row(i) << pts[i].x(), pts[i].y(), pts[i].z(), 1.0;
    f(i) = pts[i].squaredNorm();
  }
  // Coplanarity gate: |det| scales like volume, normalize by distance^3.
  double rms = 0;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) rms += (pts[i] - pts[j]).squaredNorm();
  rms = std::sqrt(rms / 6.0);
  if (rms < 1e-12) return std::nullopt;
  const double det = x.determinant();
  if (std::abs(det) / (rms * rms * rms) <= coplanar_tol) return std::nullopt;

  const Eigen::Vector4d abcd = x.partialPivLu().solve(f);
  SphereParams s;
  s.center = 0.5 * abcd.head<3>();
  const double r2 = abcd(3) + s.center.squaredNorm();
  if (!(r2 > 0)) return std::nullopt;
  s.radius = std::sqrt(r2);
  return s;
}

std::vector<SphereHypothesis> enumerate_sphere_hypotheses(
    const std::vector<Vec3>& reps, double known_r, double r_tol,
    std::int64_t cap, double coplanar_tol, std::mt19937_64& rng) {
  const int n = static_cast<int>(reps.size());
  if (n < 4)
    throw CalibError("NoHypotheses", "fewer than 4 representative points");

  const auto try_combo = [&](int a, int b, int c, int d,
                             std::vector<SphereHypothesis>& out) {
    const auto fit =
        fit_sphere_4pts({reps[a], reps[b], reps[c], reps[d]}, coplanar_tol);
    if (!fit) return;
    if (std::abs(fit->radius - known_r) > r_tol) return;
    out.push_back({*fit, {a, b, c, d}});
  };

  std::vector<SphereHypothesis> out;
  const std::int64_t total = static_cast<std::int64_t>(n) * (n - 1) *
                             (n - 2) * (n - 3) / 24;
  if (total <= cap) {
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b)
        for (int c = b + 1; c < n; ++c)
          for (int d = c + 1; d < n; ++d) try_combo(a, b, c, d, out);
  } else {
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(static_cast<size_t>(cap) * 2);
    std::uniform_int_distribution<int> pick(0, n - 1);
    std::int64_t attempts = 10 * cap;
    while (static_cast<std::int64_t>(seen.size()) < cap && attempts-- > 0) {
      int ix[4];
      ix[0] = pick(rng);
      bool distinct = true;
      for (int j = 1; j < 4; ++j) {
        ix[j] = pick(rng);
        for (int l = 0; l < j; ++l) distinct &= ix[j] != ix[l];
      }
      if (!distinct) continue;
      std::sort(ix, ix + 4);
      const std::uint64_t key = ((std::uint64_t)ix[0] << 48) |
                                ((std::uint64_t)ix[1] << 32) |
                                ((std::uint64_t)ix[2] << 16) |
                                (std::uint64_t)ix[3];
      if (!seen.insert(key).second) continue;
      try_combo(ix[0], ix[1], ix[2], ix[3], out);
    }
  }
  if (out.empty())
    throw CalibError("NoHypotheses", "all combinations failed the radius gate");
  return out;
}

Vec3 fuse_centers(const std::vector<SphereHypothesis>& hyps, double bin,
                  double fuse_radius) {
  if (hyps.empty()) throw CalibError("NoHypotheses", "nothing to fuse");
  // Frequency-weighted fusion via the high-density core: the spatial median
  // (Weiszfeld) lands inside the dominant cluster of centers, then the mean
  // over its fuse_radius ball averages that cluster. Unlike an axis-aligned
  // grid mode, every step here uses only distances, so the result commutes
  // with rigid motions of the inputs.
  Vec3 med = Vec3::Zero();
  for (const auto& h : hyps) med += h.params.center;
  med /= static_cast<double>(hyps.size());
  const double tol = std::max(1e-12, 1e-4 * bin);
  for (int iter = 0; iter < 200; ++iter) {
    Vec3 num = Vec3::Zero();
    double den = 0;
    for (const auto& h : hyps) {
      const double d = std::max((h.params.center - med).norm(), 1e-12);
      num += h.params.center / d;
      den += 1.0 / d;
    }
    const Vec3 next = num / den;
    const double step = (next - med).norm();
    med = next;
    if (step < tol) break;
  }
  Vec3 num = Vec3::Zero();
  double den = 0;
  for (const auto& h : hyps) {
    if ((h.params.center - med).norm() > fuse_radius) continue;
    num += h.params.center;
    den += 1;
  }
  if (den == 0) return med;
  return num / den;
}

namespace {

template <typename Fn>
auto stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const CalibError& e) {
    throw CalibError(e.code(), std::string(name) + " failed: " + e.what());
  }
}

}  // namespace

LidarExtraction extract_sphere_center_detailed(const PointCloud& cloud,
                                               ScanMode mode,
                                               const LidarConfig& cfg) {
  if (cloud.empty()) throw CalibError("TooFewPoints", "empty cloud");
  LidarExtraction out;
  std::mt19937_64 rng(cfg.rng_seed);

  const PointCloud denoised = stage("remove_statistical_outliers", [&] {
    return remove_statistical_outliers(cloud, cfg.sor_k, cfg.sor_m);
  });
  out.points_after_sor = static_cast<int>(denoised.size());

  const GroundSegmentation seg = stage("segment_ground", [&] {
    return segment_ground(denoised, cfg.ground_dist_thresh, rng);
  });
  out.ground_plane_found = seg.plane_found;

  const RoiDetection roi = stage("detect_sphere_roi", [&] {
    return detect_sphere_roi(seg.nonground, cfg, cfg.radius_known);
  });
  out.roi_score = roi.score;
  out.roi_points = static_cast<int>(roi.roi.size());

  std::vector<Vec3> reps;
  if (mode == ScanMode::NonRepetitive) {
    reps = stage("voxel_representatives",
                 [&] { return voxel_representatives(roi.roi, cfg.voxel_size); });
  } else {
    const auto clusters = stage("cluster_along_rays", [&] {
      return cluster_along_rays(roi.roi, cfg.az_res_deg * kDegToRad,
                                cfg.el_res_deg * kDegToRad);
    });
    out.clusters_total = static_cast<int>(clusters.size());
    const auto kept = stage("filter_noisy_clusters", [&] {
      return filter_noisy_clusters(clusters, cfg.extent_thresh,
                                   cfg.min_cluster_pts);
    });
    out.clusters_kept = static_cast<int>(kept.size());
    reps.reserve(kept.size());
    for (const auto& c : kept)
      reps.push_back(representative_point(c, cfg.cells_m));
  }
  out.representatives = static_cast<int>(reps.size());

  const auto hyps = stage("enumerate_sphere_hypotheses", [&] {
    return enumerate_sphere_hypotheses(reps, cfg.radius_known, cfg.radius_tol,
                                       cfg.combo_cap, cfg.coplanar_tol, rng);
  });
  out.hypotheses = static_cast<int>(hyps.size());
  out.center = fuse_centers(hyps, cfg.fuse_bin, cfg.fuse_radius);
  return out;
}

Vec3 extract_sphere_center(const PointCloud& cloud, ScanMode mode,
                           const LidarConfig& cfg) {
  return extract_sphere_center_detailed(cloud, mode, cfg).center;
}

}  // namespace spherecal
