#include "spherecal/calibration.hpp"
#include "spherecal/camera_pipeline.hpp"
#include "spherecal/config.hpp"
#include "spherecal/image.hpp"
#include "spherecal/lidar_pipeline.hpp"
#include "spherecal/projection.hpp"
#include "spherecal/runner.hpp"
#include "spherecal/simulator.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace spherecal;

namespace {

ImageU8 image_from_array(const py::array_t<std::uint8_t>& arr) {
  if (arr.ndim() != 2) throw py::value_error("mask must be a 2D uint8 array");
  ImageU8 img(static_cast<int>(arr.shape(1)), static_cast<int>(arr.shape(0)));
  auto a = arr.unchecked<2>();
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) img.at(x, y) = a(y, x);
  return img;
}

py::array_t<std::uint8_t> image_to_array(const ImageU8& img) {
  py::array_t<std::uint8_t> arr({img.height, img.width});
  auto a = arr.mutable_unchecked<2>();
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) a(y, x) = img.at(x, y);
  return arr;
}

PointCloud cloud_from_array(const py::array_t<double>& pts) {
  if (pts.ndim() != 2 || pts.shape(1) != 3)
    throw py::value_error("points must be an Nx3 array");
  PointCloud cloud;
  auto a = pts.unchecked<2>();
  cloud.points.reserve(pts.shape(0));
  for (py::ssize_t i = 0; i < pts.shape(0); ++i)
    cloud.points.emplace_back(a(i, 0), a(i, 1), a(i, 2));
  return cloud;
}

py::array_t<double> cloud_to_array(const PointCloud& cloud) {
  py::array_t<double> arr({static_cast<py::ssize_t>(cloud.size()),
                           static_cast<py::ssize_t>(3)});
  auto a = arr.mutable_unchecked<2>();
  for (size_t i = 0; i < cloud.size(); ++i)
    for (int c = 0; c < 3; ++c) a(i, c) = cloud.points[i](c);
  return arr;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Spherical-target LiDAR-camera extrinsic calibration";

  py::register_exception<CalibError>(m, "CalibrationError");

  py::class_<CameraIntrinsics>(m, "CameraIntrinsics")
      .def(py::init([](double fx, double fy, double cx, double cy, int width,
                       int height) {
             return CameraIntrinsics{fx, fy, cx, cy, width, height};
           }),
           py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"),
           py::arg("width"), py::arg("height"))
      .def_readwrite("fx", &CameraIntrinsics::fx)
      .def_readwrite("fy", &CameraIntrinsics::fy)
      .def_readwrite("cx", &CameraIntrinsics::cx)
      .def_readwrite("cy", &CameraIntrinsics::cy)
      .def_readwrite("width", &CameraIntrinsics::width)
      .def_readwrite("height", &CameraIntrinsics::height);

  py::class_<Ellipse>(m, "Ellipse")
      .def(py::init<>())
      .def_readwrite("center", &Ellipse::center)
      .def_readwrite("a", &Ellipse::a)
      .def_readwrite("b", &Ellipse::b)
      .def_readwrite("angle", &Ellipse::angle)
      .def("__repr__", [](const Ellipse& e) {
        char buf[128];
        std::snprintf(buf, sizeof(buf),
                      "Ellipse(center=(%.2f, %.2f), a=%.2f, b=%.2f, angle=%.4f)",
                      e.center.x(), e.center.y(), e.a, e.b, e.angle);
        return std::string(buf);
      });

  py::class_<SphereParams>(m, "SphereParams")
      .def(py::init([](const Vec3& center, double radius) {
             return SphereParams{center, radius};
           }),
           py::arg("center"), py::arg("radius"))
      .def_readwrite("center", &SphereParams::center)
      .def_readwrite("radius", &SphereParams::radius);

  py::class_<RigidTransform>(m, "RigidTransform")
      .def(py::init<>())
      .def_readwrite("rotation", &RigidTransform::rotation)
      .def_readwrite("translation", &RigidTransform::translation)
      .def("apply", &RigidTransform::apply)
      .def("inverse", &RigidTransform::inverse)
      .def("matrix", &RigidTransform::matrix)
      .def("__mul__", &RigidTransform::operator*);

  // Core geometry.
  m.def("project_point", &project_point, py::arg("point"), py::arg("K"));
  m.def("sphere_outline_ellipse", &sphere_outline_ellipse, py::arg("sphere"),
        py::arg("K"));
  m.def("compensate_center", &compensate_center, py::arg("ellipse"),
        py::arg("K"));
  m.def("rotation_geodesic_deg", &rotation_geodesic_deg, py::arg("ra"),
        py::arg("rb"));

  // Camera pipeline.
  py::enum_<Verdict>(m, "Verdict")
      .value("ValidIntact", Verdict::ValidIntact)
      .value("ValidCorrupted", Verdict::ValidCorrupted)
      .value("Invalid", Verdict::Invalid);

  py::class_<CameraConfig>(m, "CameraConfig")
      .def(py::init<>())
      .def_readwrite("sample_size", &CameraConfig::sample_size)
      .def_readwrite("inlier_tol_px", &CameraConfig::inlier_tol_px)
      .def_readwrite("histogram_bins", &CameraConfig::histogram_bins)
      .def_readwrite("min_bin_frac", &CameraConfig::min_bin_frac)
      .def_readwrite("rectify_iters", &CameraConfig::rectify_iters)
      .def_readwrite("region_samples", &CameraConfig::region_samples)
      .def_readwrite("outside_frac", &CameraConfig::outside_frac)
      .def_readwrite("rng_seed", &CameraConfig::rng_seed);

  py::class_<EllipseDetection>(m, "EllipseDetection")
      .def_readonly("verdict", &EllipseDetection::verdict)
      .def_readonly("ellipse", &EllipseDetection::ellipse)
      .def_readonly("mean_residual_px", &EllipseDetection::mean_residual_px)
      .def_readonly("reason", &EllipseDetection::reason)
      .def_property_readonly("inliers", [](const EllipseDetection& d) {
        py::array_t<double> arr({static_cast<py::ssize_t>(d.inliers.size()),
                                 static_cast<py::ssize_t>(2)});
        auto a = arr.mutable_unchecked<2>();
        for (size_t i = 0; i < d.inliers.size(); ++i) {
          a(i, 0) = d.inliers[i].x();
          a(i, 1) = d.inliers[i].y();
        }
        return arr;
      });

  m.def(
      "fit_ellipse_direct",
      [](const py::array_t<double>& pts) {
        if (pts.ndim() != 2 || pts.shape(1) != 2)
          throw py::value_error("points must be an Nx2 array");
        auto a = pts.unchecked<2>();
        std::vector<Vec2> v;
        v.reserve(pts.shape(0));
        for (py::ssize_t i = 0; i < pts.shape(0); ++i)
          v.emplace_back(a(i, 0), a(i, 1));
        return fit_ellipse_direct(v);
      },
      py::arg("points"));

  m.def(
      "detect_ellipse",
      [](const py::array_t<std::uint8_t>& mask, const CameraConfig& cfg) {
        std::mt19937_64 rng(cfg.rng_seed);
        return detect_ellipse(image_from_array(mask), cfg, rng);
      },
      py::arg("mask"), py::arg("config") = CameraConfig{});

  m.def(
      "extract_center_2d",
      [](const std::vector<py::array_t<std::uint8_t>>& masks,
         const CameraIntrinsics& k, const CameraConfig& cfg) -> py::object {
        std::vector<ImageU8> imgs;
        imgs.reserve(masks.size());
        for (const auto& mask : masks) imgs.push_back(image_from_array(mask));
        const auto result = extract_center_2d(imgs, k, cfg);
        if (!result) return py::none();
        return py::make_tuple(result->center, result->detection,
                              result->mask_index);
      },
      py::arg("masks"), py::arg("K"), py::arg("config") = CameraConfig{});

  // LiDAR pipeline.
  py::class_<LidarConfig>(m, "LidarConfig")
      .def(py::init<>())
      .def_readwrite("sor_k", &LidarConfig::sor_k)
      .def_readwrite("sor_m", &LidarConfig::sor_m)
      .def_readwrite("ground_dist_thresh", &LidarConfig::ground_dist_thresh)
      .def_readwrite("range_image_res_deg", &LidarConfig::range_image_res_deg)
      .def_readwrite("roi_margin_px", &LidarConfig::roi_margin_px)
      .def_readwrite("hough_min_score", &LidarConfig::hough_min_score)
      .def_readwrite("az_res_deg", &LidarConfig::az_res_deg)
      .def_readwrite("el_res_deg", &LidarConfig::el_res_deg)
      .def_readwrite("extent_thresh", &LidarConfig::extent_thresh)
      .def_readwrite("min_cluster_pts", &LidarConfig::min_cluster_pts)
      .def_readwrite("cells_m", &LidarConfig::cells_m)
      .def_readwrite("voxel_size", &LidarConfig::voxel_size)
      .def_readwrite("radius_known", &LidarConfig::radius_known)
      .def_readwrite("radius_tol", &LidarConfig::radius_tol)
      .def_readwrite("combo_cap", &LidarConfig::combo_cap)
      .def_readwrite("fuse_bin", &LidarConfig::fuse_bin)
      .def_readwrite("fuse_radius", &LidarConfig::fuse_radius)
      .def_readwrite("coplanar_tol", &LidarConfig::coplanar_tol)
      .def_readwrite("rng_seed", &LidarConfig::rng_seed);

  py::class_<LidarExtraction>(m, "LidarExtraction")
      .def_readonly("center", &LidarExtraction::center)
      .def_readonly("ground_plane_found", &LidarExtraction::ground_plane_found)
      .def_readonly("roi_score", &LidarExtraction::roi_score)
      .def_readonly("points_after_sor", &LidarExtraction::points_after_sor)
      .def_readonly("roi_points", &LidarExtraction::roi_points)
      .def_readonly("clusters_total", &LidarExtraction::clusters_total)
      .def_readonly("clusters_kept", &LidarExtraction::clusters_kept)
      .def_readonly("representatives", &LidarExtraction::representatives)
      .def_readonly("hypotheses", &LidarExtraction::hypotheses);

  m.def(
      "fit_sphere_4pts",
      [](const py::array_t<double>& pts, double coplanar_tol) -> py::object {
        if (pts.ndim() != 2 || pts.shape(0) != 4 || pts.shape(1) != 3)
          throw py::value_error("expected a 4x3 array");
        auto a = pts.unchecked<2>();
        const auto fit = fit_sphere_4pts(
            {Vec3(a(0, 0), a(0, 1), a(0, 2)), Vec3(a(1, 0), a(1, 1), a(1, 2)),
             Vec3(a(2, 0), a(2, 1), a(2, 2)), Vec3(a(3, 0), a(3, 1), a(3, 2))},
            coplanar_tol);
        if (!fit) return py::none();
        return py::cast(*fit);
      },
      py::arg("points"), py::arg("coplanar_tol") = 1e-6);

  m.def(
      "extract_sphere_center",
      [](const py::array_t<double>& pts, const std::string& mode,
         const LidarConfig& cfg) {
        return extract_sphere_center_detailed(cloud_from_array(pts),
                                              scan_mode_from_string(mode), cfg);
      },
      py::arg("points"), py::arg("mode") = "spinning",
      py::arg("config") = LidarConfig{});

  // Calibration solver.
  py::class_<SolverConfig>(m, "SolverConfig")
      .def(py::init<>())
      .def_property(
          "kernel",
          [](const SolverConfig& c) { return std::string(to_string(c.kernel)); },
          [](SolverConfig& c, const std::string& s) {
            c.kernel = kernel_from_string(s);
          })
      .def_readwrite("huber_px", &SolverConfig::huber_px)
      .def_readwrite("reject_thresh_px", &SolverConfig::reject_thresh_px)
      .def_readwrite("min_pairs", &SolverConfig::min_pairs)
      .def_readwrite("max_iter", &SolverConfig::max_iter)
      .def_readwrite("g_tol", &SolverConfig::g_tol)
      .def_readwrite("x_tol", &SolverConfig::x_tol)
      .def_readwrite("lambda0", &SolverConfig::lambda0);

  py::class_<CalibrationResult>(m, "CalibrationResult")
      .def_readonly("transform", &CalibrationResult::transform)
      .def_readonly("per_pair_residual", &CalibrationResult::per_pair_residual)
      .def_readonly("rejected_ids", &CalibrationResult::rejected_ids)
      .def_readonly("rms_reprojection", &CalibrationResult::rms_reprojection)
      .def_readonly("iterations", &CalibrationResult::iterations)
      .def_readonly("converged", &CalibrationResult::converged);

  py::class_<TruthMetrics>(m, "TruthMetrics")
      .def_readonly("trans_err_m", &TruthMetrics::trans_err_m)
      .def_readonly("rot_err_deg", &TruthMetrics::rot_err_deg)
      .def_readonly("rms_px", &TruthMetrics::rms_px);

  m.def(
      "calibrate",
      [](const py::array_t<double>& lidar, const py::array_t<double>& cam,
         const CameraIntrinsics& k, const SolverConfig& cfg) {
        if (lidar.ndim() != 2 || lidar.shape(1) != 3)
          throw py::value_error("lidar must be Nx3");
        if (cam.ndim() != 2 || cam.shape(1) != 2 ||
            cam.shape(0) != lidar.shape(0))
          throw py::value_error("cam must be Nx2, matching lidar");
        auto al = lidar.unchecked<2>();
        auto ac = cam.unchecked<2>();
        std::vector<CenterPair> pairs;
        for (py::ssize_t i = 0; i < lidar.shape(0); ++i) {
          CenterPair p;
          p.p_lidar = Vec3(al(i, 0), al(i, 1), al(i, 2));
          p.p_cam = Vec2(ac(i, 0), ac(i, 1));
          p.scene_id = std::to_string(i);
          pairs.push_back(p);
        }
        return calibrate(pairs, k, cfg);
      },
      py::arg("lidar_centers"), py::arg("cam_centers"), py::arg("K"),
      py::arg("config") = SolverConfig{});

  m.def("evaluate_against_truth", &evaluate_against_truth, py::arg("result"),
        py::arg("truth"));

  // Simulator.
  py::class_<NoiseModel>(m, "NoiseModel")
      .def(py::init<>())
      .def_readwrite("sigma0", &NoiseModel::sigma0)
      .def_readwrite("incidence_gain", &NoiseModel::incidence_gain)
      .def_readwrite("sigma_max", &NoiseModel::sigma_max)
      .def_readwrite("clutter_rate", &NoiseModel::clutter_rate)
      .def_readwrite("mask_jitter_px", &NoiseModel::mask_jitter_px);

  py::class_<CorruptionSpec>(m, "CorruptionSpec")
      .def(py::init<>())
      .def_readwrite("truncation_frac", &CorruptionSpec::truncation_frac)
      .def_readwrite("occluder_blobs", &CorruptionSpec::occluder_blobs)
      .def_readwrite("scratch_lines", &CorruptionSpec::scratch_lines)
      .def_readwrite("blur_erosion_px", &CorruptionSpec::blur_erosion_px)
      .def_readwrite("mud_mask_frac", &CorruptionSpec::mud_mask_frac);

  py::class_<ScanPattern>(m, "ScanPattern")
      .def(py::init<>())
      .def_readwrite("az_min_deg", &ScanPattern::az_min_deg)
      .def_readwrite("az_max_deg", &ScanPattern::az_max_deg)
      .def_readwrite("el_min_deg", &ScanPattern::el_min_deg)
      .def_readwrite("el_max_deg", &ScanPattern::el_max_deg)
      .def_readwrite("rings", &ScanPattern::rings)
      .def_readwrite("az_res_deg", &ScanPattern::az_res_deg)
      .def_readwrite("grid_az_res_deg", &ScanPattern::grid_az_res_deg)
      .def_readwrite("grid_el_res_deg", &ScanPattern::grid_el_res_deg)
      .def_readwrite("rosette_samples", &ScanPattern::rosette_samples)
      .def("ring_spacing_deg", &ScanPattern::ring_spacing_deg);

  py::class_<SceneSpec>(m, "SceneSpec")
      .def(py::init<>())
      .def_readwrite("sphere", &SceneSpec::sphere)
      .def_readwrite("t_gt", &SceneSpec::t_gt)
      .def_readwrite("k", &SceneSpec::k)
      .def_readwrite("pattern", &SceneSpec::pattern)
      .def_readwrite("frames", &SceneSpec::frames)
      .def_readwrite("noise", &SceneSpec::noise)
      .def_readwrite("corruption", &SceneSpec::corruption)
      .def_readwrite("ground_z", &SceneSpec::ground_z)
      .def_readwrite("max_range", &SceneSpec::max_range)
      .def_readwrite("with_ground", &SceneSpec::with_ground)
      .def_readwrite("seed", &SceneSpec::seed)
      .def_property(
          "mode",
          [](const SceneSpec& s) {
            return std::string(to_string(s.pattern.mode));
          },
          [](SceneSpec& s, const std::string& mode) {
            s.pattern.mode = scan_mode_from_string(mode);
          });

  m.def(
      "generate_scan",
      [](const SceneSpec& spec) {
        const PointCloud cloud = generate_scan(spec);
        py::array_t<int> labels(static_cast<py::ssize_t>(cloud.size()));
        auto l = labels.mutable_unchecked<1>();
        for (size_t i = 0; i < cloud.size(); ++i) l(i) = cloud.label[i];
        return py::make_tuple(cloud_to_array(cloud), labels);
      },
      py::arg("spec"));

  m.def(
      "render_mask",
      [](const SceneSpec& spec) {
        const RenderedMask rm = render_mask(spec);
        return py::make_tuple(image_to_array(rm.mask), rm.true_center_px,
                              rm.outline);
      },
      py::arg("spec"));

  m.attr("__version__") = "0.1.0";
}
