#include "spherecal/camera_pipeline.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace spherecal {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Draw k distinct elements from pool (partial Fisher-Yates on a copy).
std::vector<int> sample_without_replacement(std::vector<int> pool, int k,
                                            std::mt19937_64& rng) {
  const int n = static_cast<int>(pool.size());
  k = std::min(k, n);
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> d(i, n - 1);
    std::swap(pool[i], pool[d(rng)]);
  }
  pool.resize(k);
  return pool;
}

std::vector<int> inliers_of(const Ellipse& e, const std::vector<Vec2>& pts,
                            double tol) {
  std::vector<int> idx;
  for (int i = 0; i < static_cast<int>(pts.size()); ++i)
    if (std::abs(ellipse_boundary_distance(e, pts[i])) <= tol)
      idx.push_back(i);
  return idx;
}

// Re-fit on the boundary band a few times; each round recomputes the band
// from the previous fit, converging onto the dominant boundary structure.
Ellipse refit_on_band(Ellipse e, const std::vector<Vec2>& pts, double tol,
                      int rounds) {
  for (int r = 0; r < rounds; ++r) {
    std::vector<Vec2> band;
    for (const auto& p : pts)
      if (std::abs(ellipse_boundary_distance(e, p)) <= tol) band.push_back(p);
    if (band.size() < 5) break;
    try {
      e = fit_ellipse_direct(band);
    } catch (const CalibError&) {
      break;
    }
  }
  return e;
}

}  // namespace

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::ValidIntact: return "ValidIntact";
    case Verdict::ValidCorrupted: return "ValidCorrupted";
    default: return "Invalid";
  }
}

EdgePointSet extract_edge_points(const ImageU8& mask,
                                 const std::string& mask_id) {
  EdgePointSet out;
  out.source_mask_id = mask_id;
  bool any_fg = false;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!is_foreground(mask.at(x, y))) continue;
      any_fg = true;
      bool boundary = false;
      for (int dy = -1; !boundary && dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int nx = x + dx, ny = y + dy;
          if (!mask.in_bounds(nx, ny) || !is_foreground(mask.at(nx, ny))) {
            boundary = true;
            break;
          }
        }
      }
      if (boundary) out.points.push_back(Vec2(x, y));
    }
  }
  if (!any_fg) throw CalibError("EmptyMask", "no foreground pixels");
  if (out.points.size() < 5)
    throw CalibError("TooFewEdgePoints",
                     "only " + std::to_string(out.points.size()) +
                         " boundary pixels");
  return out;
}

Ellipse fit_ellipse_direct(const std::vector<Vec2>& points) {
  const int n = static_cast<int>(points.size());
  if (n < 5)
    throw CalibError("DegenerateConfiguration", "need at least 5 points");

  // Center and scale for conditioning; the conic is mapped back afterwards.
  Vec2 mean = Vec2::Zero();
  for (const auto& p : points) mean += p;
  mean /= n;
  double scale = 0;
  for (const auto& p : points) scale += (p - mean).squaredNorm();
  scale = std::sqrt(scale / n / 2.0);
  if (scale < 1e-12)
    throw CalibError("DegenerateConfiguration", "coincident points");

  // Halir-Flusser partitioned solve of the Fitzgibbon problem
  // (4AC - B^2 = 1 constraint keeps the conic an ellipse).
  Eigen::MatrixXd d1(n, 3), d2(n, 3);
  for (int i = 0; i < n; ++i) {
    const double x = (points[i].x() - mean.x()) / scale;
    const double y = (points[i].y() - mean.y()) / scale;
    d1.row(i) << x * x, x * y, y * y;
    d2.row(i) << x, y, 1.0;
  }
  const Eigen::Matrix3d s1 = d1.transpose() * d1;
  const Eigen::Matrix3d s2 = d1.transpose() * d2;
  const Eigen::Matrix3d s3 = d2.transpose() * d2;
  Eigen::FullPivLU<Eigen::Matrix3d> lu(s3);
  if (!lu.isInvertible())
    throw CalibError("DegenerateConfiguration", "rank-deficient scatter");
  const Eigen::Matrix3d t = -lu.solve(s2.transpose());
  Eigen::Matrix3d m = s1 + s2 * t;
  Eigen::Matrix3d c1inv;
  c1inv << 0, 0, 0.5, 0, -1, 0, 0.5, 0, 0;
  m = c1inv * m;

  Eigen::EigenSolver<Eigen::Matrix3d> es(m);
  int best = -1;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(es.eigenvalues()(i).imag()) > 1e-9) continue;
    const Eigen::Vector3d v = es.eigenvectors().col(i).real();
    if (4 * v(0) * v(2) - v(1) * v(1) > 0) best = i;
  }
  if (best < 0)
    throw CalibError("DegenerateConfiguration", "no elliptical solution");
  const Eigen::Vector3d a1 = es.eigenvectors().col(best).real();
  const Eigen::Vector3d a2 = t * a1;

  Conic cn{a1(0), a1(1), a1(2), a2(0), a2(1), a2(2)};
  const Conic cpix = cn.transformed(1.0 / scale, 1.0 / scale,
                                    -mean.x() / scale, -mean.y() / scale);
  return conic_to_ellipse(cpix);
}

std::optional<InitialDetection> initial_ellipse_detection(
    const EdgePointSet& edges, const CameraConfig& cfg, std::mt19937_64& rng) {
  const auto& pts = edges.points;
  const int n = static_cast<int>(pts.size());
  std::vector<int> active(n);
  std::iota(active.begin(), active.end(), 0);

  // Degenerate fits neither succeed nor shrink the active set, so a fixed
  // attempt budget guards termination.
  int attempts = std::max(500, 8 * n);
  // After the first acceptable ellipse, a few more draws may still produce a
  // better-supported one.
  int countdown = -1;

  std::optional<Ellipse> best;
  double best_score = 0;

  while (static_cast<int>(active.size()) >= cfg.sample_size && attempts-- > 0) {
    if (countdown == 0) break;
    if (countdown > 0) --countdown;

    const auto sample_idx =
        sample_without_replacement(active, cfg.sample_size, rng);
    std::vector<Vec2> sample;
    sample.reserve(sample_idx.size());
    for (int i : sample_idx) sample.push_back(pts[i]);

    Ellipse fit;
    try {
      fit = fit_ellipse_direct(sample);
    } catch (const CalibError&) {
      continue;
    }

    // Mask boundaries are dense pixel curves, so any fit that matters
    // (whether it excludes interior points or gets accepted) must trace real
    // boundary structure over a good share of its own perimeter. Without
    // this gate, wild sample fits erode the active set or get accepted as
    // ballooned/sliver detections.
    const auto inl = inliers_of(fit, pts, cfg.inlier_tol_px);
    if (static_cast<double>(inl.size()) < 0.35 * ellipse_perimeter(fit))
      continue;

    // Corruption intrusions sit deep inside the boundary, so exclusion
    // triggers at twice the tolerance: points only marginally inside a
    // wobbly sample fit are genuine boundary, and excluding them would
    // erode the active set fit by fit.
    const double exclusion_margin = 2.0 * cfg.inlier_tol_px;
    std::vector<int> deep_interior;
    int outside = 0;
    for (int i : active) {
      const double d = ellipse_boundary_distance(fit, pts[i]);
      if (d < -exclusion_margin) deep_interior.push_back(i);
      if (d > cfg.inlier_tol_px) ++outside;
    }
    if (!deep_interior.empty()) {
      // Exclusion is destructive, so only fits tracing most of their own
      // perimeter may drive it. Corrupted regions are also a minority of
      // the boundary (the target stays majority-visible), so a fit that
      // swallows more than half the active set must not exclude anything.
      if (static_cast<double>(inl.size()) < 0.5 * ellipse_perimeter(fit))
        continue;
      if (deep_interior.size() > active.size() / 2) continue;
      std::vector<int> kept;
      kept.reserve(active.size() - deep_interior.size());
      std::set_difference(active.begin(), active.end(), deep_interior.begin(),
                          deep_interior.end(), std::back_inserter(kept));
      active = std::move(kept);
      // The exclusion has not settled; give the draw clock a fresh start.
      if (countdown > 0) countdown = 40;
      continue;
    }
    // Undersized fits leave part of the active set outside instead of
    // inside; accepting one would cut the exclusion loop short while
    // corrupted-region points are still active.
    if (outside > cfg.outside_frac * static_cast<double>(active.size()))
      continue;

    int active_inl = 0;
    {
      auto it = active.begin();
      for (int i : inl) {
        it = std::lower_bound(it, active.end(), i);
        if (it != active.end() && *it == i) ++active_inl;
      }
    }
    if (active_inl <
        std::max(cfg.sample_size, static_cast<int>(0.5 * active.size())))
      continue;

    // Acceptable. Keep drawing briefly: the candidate explaining the longest
    // boundary stretch with the tightest band wins.
    double residual = 0;
    for (int i : inl)
      residual += std::abs(ellipse_boundary_distance(fit, pts[i]));
    residual /= static_cast<double>(inl.size());
    // Low-eccentricity prior: a truncated disk is also explained by an
    // eccentric ellipse hugging both the arc and the cut, with nearly the
    // same support. Sphere outlines under perspective stay near-circular,
    // so compactness breaks the tie. The settled (band-refit) version of
    // the fit competes as well.
    const double score = static_cast<double>(inl.size()) *
                         (1.0 - 0.25 * residual / cfg.inlier_tol_px) *
                         (fit.b / fit.a) * (fit.b / fit.a);
    if (!best || score > best_score) {
      best = fit;
      best_score = score;
    }
    if (countdown < 0) countdown = 40;
  }
  if (!best) return std::nullopt;

  Ellipse fit = refit_on_band(*best, pts, cfg.inlier_tol_px, 3);
  if (!conic_is_ellipse(ellipse_to_conic(fit))) fit = *best;

  InitialDetection det;
  det.ellipse = fit;
  det.inlier_idx = inliers_of(fit, pts, cfg.inlier_tol_px);
  det.inliers.reserve(det.inlier_idx.size());
  for (int i : det.inlier_idx) det.inliers.push_back(pts[i]);
  return det;
}

EllipseEvaluation evaluate_ellipse(const InitialDetection& det,
                                   const CameraConfig& cfg) {
  const int b = cfg.histogram_bins;
  const int n = static_cast<int>(det.inliers.size());
  if (n < b)
    throw CalibError("TooFewInliers",
                     std::to_string(n) + " inliers for " + std::to_string(b) +
                         " bins");
  EllipseEvaluation ev;
  ev.histogram.bins = b;
  ev.histogram.counts.assign(b, 0);
  ev.point_bins.resize(n);
  for (int i = 0; i < n; ++i) {
    const double t = ellipse_param_angle(det.ellipse, det.inliers[i]);
    int bin = std::min(b - 1, static_cast<int>(t / (2 * kPi) * b));
    ev.point_bins[i] = bin;
    ++ev.histogram.counts[bin];
  }
  const double thresh = cfg.min_bin_frac * static_cast<double>(n) / b;
  std::vector<bool> occupied(b);
  bool all_occupied = true;
  for (int i = 0; i < b; ++i) {
    occupied[i] = ev.histogram.counts[i] >= thresh;
    all_occupied = all_occupied && occupied[i];
  }
  ev.intact = all_occupied;
  if (ev.intact) return ev;

  // Maximal circular runs of occupied bins.
  int start = 0;
  while (start < b && occupied[start == 0 ? b - 1 : start - 1] &&
         occupied[start])
    ++start;  // rotate to a run boundary
  for (int i = 0; i < b;) {
    const int bin = (start + i) % b;
    if (!occupied[bin]) {
      ++i;
      continue;
    }
    BinRun run{bin, 0};
    while (i < b && occupied[(start + i) % b]) {
      ++run.length;
      ++i;
    }
    ev.regions.push_back(run);
  }
  return ev;
}

std::optional<Ellipse> rectify_ellipse(const EdgePointSet& edges,
                                       const InitialDetection& det,
                                       const EllipseEvaluation& eval,
                                       const CameraConfig& cfg,
                                       std::mt19937_64& rng) {
  const auto& pts = edges.points;
  std::vector<bool> in_pe(pts.size(), false);
  for (int i : det.inlier_idx) in_pe[i] = true;
  std::vector<int> exterior;
  for (int i = 0; i < static_cast<int>(pts.size()); ++i)
    if (!in_pe[i]) exterior.push_back(i);
  if (exterior.empty())
    throw CalibError("NoExteriorCandidates", "P_s \\ P_e is empty");

  // Inlier indices per concentration region.
  std::vector<std::vector<int>> region_members(eval.regions.size());
  for (int i = 0; i < static_cast<int>(det.inliers.size()); ++i) {
    const int bin = eval.point_bins[i];
    for (size_t r = 0; r < eval.regions.size(); ++r) {
      const auto& run = eval.regions[r];
      const int off = (bin - run.first + eval.histogram.bins) %
                      eval.histogram.bins;
      if (off < run.length) {
        region_members[r].push_back(i);
        break;
      }
    }
  }

  const auto outside_fraction = [&](const Ellipse& e) {
    int outside = 0;
    for (const auto& p : pts)
      if (ellipse_boundary_distance(e, p) > cfg.inlier_tol_px) ++outside;
    return static_cast<double>(outside) / static_cast<double>(pts.size());
  };
  // The outside test alone cannot reject a ballooned ellipse enclosing the
  // whole edge set, so a candidate must also keep explaining at least half
  // of the initial inlier support and a band proportional to its perimeter.
  const int base_support =
      std::max(5, static_cast<int>(0.5 * det.inlier_idx.size()));
  const auto min_support = [&](const Ellipse& e) {
    return std::max(base_support,
                    static_cast<int>(0.35 * ellipse_perimeter(e)));
  };

  // Region draws are stratified across the run so one clustered draw cannot
  // produce a degenerate candidate.
  const auto sample_region = [&](const std::vector<int>& members, int count,
                                 std::vector<Vec2>& sample) {
    const int n = static_cast<int>(members.size());
    if (n == 0) return;
    count = std::min(count, n);
    for (int s = 0; s < count; ++s) {
      const int lo = s * n / count;
      const int hi = std::max(lo + 1, (s + 1) * n / count);
      std::uniform_int_distribution<int> d(lo, hi - 1);
      sample.push_back(det.inliers[members[d(rng)]]);
    }
  };
  // Sort each region's members by their bin offset inside the run.
  for (size_t r = 0; r < region_members.size(); ++r) {
    const auto& run = eval.regions[r];
    std::stable_sort(region_members[r].begin(), region_members[r].end(),
                     [&](int a, int b) {
                       const int oa = (eval.point_bins[a] - run.first +
                                       eval.histogram.bins) %
                                      eval.histogram.bins;
                       const int ob = (eval.point_bins[b] - run.first +
                                       eval.histogram.bins) %
                                      eval.histogram.bins;
                       return oa < ob;
                     });
  }

  std::optional<Ellipse> best;
  double best_score = 0;
  const auto consider = [&](const Ellipse& fit) {
    if (outside_fraction(fit) > cfg.outside_frac) return;
    const auto inl = inliers_of(fit, pts, cfg.inlier_tol_px);
    if (static_cast<int>(inl.size()) < min_support(fit)) return;
    double residual = 0;
    for (int i : inl)
      residual += std::abs(ellipse_boundary_distance(fit, pts[i]));
    residual /= static_cast<double>(inl.size());
    // The true boundary explains the longest stretch of edge points; biased
    // candidates hug shorter arcs. Residual breaks near-ties, and the same
    // low-eccentricity prior as in the initial detection keeps arc+cut
    // huggers from outscoring the compact interpretation.
    const double score = static_cast<double>(inl.size()) *
                         (1.0 - 0.25 * residual / cfg.inlier_tol_px) *
                         (fit.b / fit.a) * (fit.b / fit.a);
    if (!best || score > best_score) {
      best = fit;
      best_score = score;
    }
  };
  // The initial (interior-excluded) ellipse competes as a baseline: on a
  // corrupted sphere it already hugs the intact boundary, and on
  // non-elliptical objects it fails the outside test just like any other
  // candidate.
  consider(det.ellipse);

  std::uniform_int_distribution<int> pick_ext(
      0, static_cast<int>(exterior.size()) - 1);
  for (int iter = 0; iter < cfg.rectify_iters; ++iter) {
    std::vector<Vec2> sample;
    sample.push_back(pts[exterior[pick_ext(rng)]]);
    for (const auto& members : region_members)
      sample_region(members, cfg.region_samples, sample);
    if (static_cast<int>(sample.size()) < 5) continue;

    // Passing candidates are ranked by support and tightness.
    try {
      consider(fit_ellipse_direct(sample));
    } catch (const CalibError&) {
    }
  }
  if (!best) return std::nullopt;

  const Ellipse refined = refit_on_band(*best, pts, cfg.inlier_tol_px, 3);
  if (outside_fraction(refined) <= cfg.outside_frac &&
      static_cast<int>(inliers_of(refined, pts, cfg.inlier_tol_px).size()) >=
          min_support(refined))
    return refined;
  return best;
}

Vec2 compensate_center(const Ellipse& e, const CameraIntrinsics& K) {
  // Work where pixels are pre-divided by (fx, fy); the tangent-angle
  // bisection then runs with focal length 1 and stays exact for fx != fy.
  const Conic cn =
      ellipse_to_conic(e).transformed(K.fx, K.fy, K.cx, K.cy);
  const Ellipse en = conic_to_ellipse(cn);
  const Vec2 h = en.center;
  const double oh = h.norm();
  if (oh < 1e-9) return e.center;  // circle centered at O: zero shift
  const Vec2 u = h / oh;
  const auto s = intersect_line_ellipse(en, Vec2::Zero(), u);
  // Signed tangent angles; their bisector points at the sphere center in
  // both the O-outside and O-inside cases.
  const double theta_c = 0.5 * (std::atan(s[0]) + std::atan(s[1]));
  const Vec2 c = std::tan(theta_c) * u;
  return {K.cx + K.fx * c.x(), K.cy + K.fy * c.y()};
}

EllipseDetection detect_ellipse(const ImageU8& mask, const CameraConfig& cfg,
                                std::mt19937_64& rng) {
  EllipseDetection out;
  EdgePointSet edges;
  try {
    edges = extract_edge_points(mask);
  } catch (const CalibError& err) {
    out.reason = err.code();
    return out;
  }

  const auto det = initial_ellipse_detection(edges, cfg, rng);
  if (!det) {
    out.reason = "Exhausted";
    return out;
  }

  EllipseEvaluation eval;
  try {
    eval = evaluate_ellipse(*det, cfg);
  } catch (const CalibError& err) {
    out.reason = err.code();
    return out;
  }

  Ellipse final_ellipse;
  if (eval.intact) {
    out.verdict = Verdict::ValidIntact;
    final_ellipse = det->ellipse;
  } else {
    if (eval.regions.empty()) {
      out.reason = "NoConcentrationRegions";
      return out;
    }
    std::optional<Ellipse> rect;
    try {
      rect = rectify_ellipse(edges, *det, eval, cfg, rng);
    } catch (const CalibError& err) {
      out.reason = err.code();
      return out;
    }
    if (!rect) {
      out.reason = "RectificationFailed";
      return out;
    }
    out.verdict = Verdict::ValidCorrupted;
    final_ellipse = *rect;
  }

  out.ellipse = final_ellipse;
  double residual_sum = 0;
  for (const auto& p : edges.points) {
    const double d = std::abs(ellipse_boundary_distance(final_ellipse, p));
    if (d <= cfg.inlier_tol_px) {
      out.inliers.push_back(p);
      residual_sum += d;
    }
  }
  out.mean_residual_px =
      out.inliers.empty() ? 0 : residual_sum / out.inliers.size();
  return out;
}

std::optional<CenterDetection2D> extract_center_2d(
    const std::vector<ImageU8>& masks, const CameraIntrinsics& K,
    const CameraConfig& cfg) {
  std::optional<CenterDetection2D> best;
  for (int i = 0; i < static_cast<int>(masks.size()); ++i) {
    // Per-mask generator so results do not depend on processing order.
    std::mt19937_64 rng(cfg.rng_seed + 0x9e3779b97f4a7c15ULL * (i + 1));
    EllipseDetection det = detect_ellipse(masks[i], cfg, rng);
    if (det.verdict == Verdict::Invalid) continue;
    if (!best || det.mean_residual_px < best->detection.mean_residual_px) {
      CenterDetection2D cd;
      cd.center = compensate_center(det.ellipse, K);
      cd.detection = std::move(det);
      cd.mask_index = i;
      best = std::move(cd);
    }
  }
  return best;
}

}  // namespace spherecal
