#pragma once

#include "spherecal/conic.hpp"
#include "spherecal/image.hpp"
#include "spherecal/types.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace spherecal {

struct CameraConfig {
  int sample_size = 6;        // points per fit draw (5 minimum + 1)
  double inlier_tol_px = 2.0; // boundary-band half width
  int histogram_bins = 12;
  double min_bin_frac = 0.25; // bin occupancy threshold vs |Pe|/B
  int rectify_iters = 50;
  int region_samples = 4;     // draws per concentration region
  double outside_frac = 0.1;  // rejection threshold in rectification
  std::uint64_t rng_seed = 0;
};

/// Boundary pixels of a mask, in raster order.
struct EdgePointSet {
  std::vector<Vec2> points;
  std::string source_mask_id;
};

/// Foreground pixels 8-adjacent to at least one background pixel (image
/// border counts as background). Throws EmptyMask / TooFewEdgePoints.
EdgePointSet extract_edge_points(const ImageU8& mask,
                                 const std::string& mask_id = "");

/// Direct least-squares conic fit constrained to an ellipse
/// (Fitzgibbon/Halir-Flusser). Throws DegenerateConfiguration.
Ellipse fit_ellipse_direct(const std::vector<Vec2>& points);

struct InitialDetection {
  Ellipse ellipse;
  std::vector<int> inlier_idx;  // indices into the edge set (the set P_e)
  std::vector<Vec2> inliers;
};

/// Iterative sample-fit-exclude loop. Points of corrupted regions fall
/// inside the true ellipse, so removing interior points from the active set
/// converges onto the intact boundary. Returns nullopt when the active set
/// is exhausted before a stable ellipse is found.
std::optional<InitialDetection> initial_ellipse_detection(
    const EdgePointSet& edges, const CameraConfig& cfg, std::mt19937_64& rng);

struct AngleHistogram {
  std::vector<int> counts;
  int bins = 0;
};

struct BinRun {
  int first = 0;  // starting bin of a circular run
  int length = 0;
};

struct EllipseEvaluation {
  bool intact = false;
  AngleHistogram histogram;
  std::vector<int> point_bins;  // bin index per inlier
  std::vector<BinRun> regions;  // maximal circular runs of occupied bins
};

/// Angle-based histogram test: the detection is intact iff the inliers are
/// evenly distributed along the perimeter (every bin at least
/// min_bin_frac * |Pe| / B). Throws TooFewInliers when |Pe| < B.
EllipseEvaluation evaluate_ellipse(const InitialDetection& det,
                                   const CameraConfig& cfg);

/// Re-fits from one point outside P_e plus samples of each concentration
/// region; accepts the first ellipse that leaves at most outside_frac of
/// the edge set strictly outside. Returns nullopt when every iteration
/// fails (non-elliptical object). Throws NoExteriorCandidates.
std::optional<Ellipse> rectify_ellipse(const EdgePointSet& edges,
                                       const InitialDetection& det,
                                       const EllipseEvaluation& eval,
                                       const CameraConfig& cfg,
                                       std::mt19937_64& rng);

/// Moves the ellipse center to the true projection of the sphere center by
/// bisecting the tangent-ray angles along the line through the principal
/// point (computed in normalized coordinates, so fx != fy is handled).
Vec2 compensate_center(const Ellipse& e, const CameraIntrinsics& K);

enum class Verdict { ValidIntact, ValidCorrupted, Invalid };

const char* to_string(Verdict v);

struct EllipseDetection {
  Verdict verdict = Verdict::Invalid;
  Ellipse ellipse;
  std::vector<Vec2> inliers;
  double mean_residual_px = 0;
  std::string reason;  // failure code when Invalid
};

/// Full per-mask pipeline: edges -> initial detection -> evaluation ->
/// (rectification). Never throws for data-dependent failures; they land in
/// verdict = Invalid with a reason code.
EllipseDetection detect_ellipse(const ImageU8& mask, const CameraConfig& cfg,
                                std::mt19937_64& rng);

struct CenterDetection2D {
  Vec2 center;  // compensated sphere-center estimate, pixels
  EllipseDetection detection;
  int mask_index = -1;
};

/// Runs detect_ellipse on each candidate mask and compensates the best
/// valid detection (smallest mean boundary residual).
std::optional<CenterDetection2D> extract_center_2d(
    const std::vector<ImageU8>& masks, const CameraIntrinsics& K,
    const CameraConfig& cfg);

}  // namespace spherecal
