#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "spherecal/lidar_pipeline.hpp"
#include "spherecal/simulator.hpp"
#include "test_support.hpp"

#include <numeric>
#include <random>

using namespace spherecal;
using namespace spherecal::testing;

namespace {

constexpr double kPi = 3.14159265358979323846;

PointCloud cloud_of(const std::vector<Vec3>& pts) {
  PointCloud c;
  c.points = pts;
  return c;
}

std::vector<Vec3> sphere_surface(const SphereParams& s, int n,
                                 std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Vec3> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    Vec3 d(g(rng), g(rng), g(rng));
    out.push_back(s.center + s.radius * d.normalized());
  }
  return out;
}

SceneSpec basic_scene() {
  SceneSpec spec;
  spec.sphere = {Vec3(3.0, 0.3, 0.2), 0.1};
  spec.k = {700, 700, 512, 384, 1024, 768};
  Mat3 axes;
  axes << 0, -1, 0, 0, 0, -1, 1, 0, 0;
  spec.t_gt.rotation = axes;
  spec.t_gt.translation = Vec3(0.05, -0.1, 0.1);
  spec.frames = 60;
  spec.pattern.mode = ScanMode::Spinning;
  spec.seed = 99;
  return spec;
}

}  // namespace

TEST_CASE("SOR removes an isolated far point from a dense cluster") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 0.02);
  std::vector<Vec3> pts;
  for (int i = 0; i < 300; ++i) pts.push_back(Vec3(g(rng), g(rng), g(rng)));
  pts.push_back(Vec3(1.0, 1.0, 1.0));  // ~10x the cluster span away
  const PointCloud out = remove_statistical_outliers(cloud_of(pts), 8, 1.0);
  CHECK(out.size() < pts.size());
  for (const auto& p : out.points) CHECK(p.norm() < 0.5);
}

TEST_CASE("SOR keeps a uniform grid except boundary effects") {
  // Brute-force oracle: interior points all share the same mean k-NN
  // distance, so only boundary rows/columns can be cut (<= 5% of a 100x100
  // planar grid).
  std::vector<Vec3> pts;
  for (int y = 0; y < 100; ++y)
    for (int x = 0; x < 100; ++x) pts.push_back(Vec3(x, y, 0.0));
  for (double m : {0.5, 1.0, 2.0}) {
    const PointCloud out =
        remove_statistical_outliers(cloud_of(pts), 8, m);
    CHECK(out.size() >= 0.95 * pts.size());
  }
}

TEST_CASE("SOR mean k-NN distances match a brute-force oracle") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vec3> pts;
  for (int i = 0; i < 150; ++i) pts.push_back(Vec3(u(rng), u(rng), u(rng)));
  const int k = 8;
  // Oracle: exact mean k-NN by full pairwise sort, then apply the same rule.
  std::vector<double> mean_dist(pts.size());
  for (size_t i = 0; i < pts.size(); ++i) {
    std::vector<double> d;
    for (size_t j = 0; j < pts.size(); ++j)
      if (i != j) d.push_back((pts[i] - pts[j]).norm());
    std::sort(d.begin(), d.end());
    mean_dist[i] = std::accumulate(d.begin(), d.begin() + k, 0.0) / k;
  }
  const double mu =
      std::accumulate(mean_dist.begin(), mean_dist.end(), 0.0) / pts.size();
  double var = 0;
  for (double d : mean_dist) var += (d - mu) * (d - mu);
  const double cutoff = mu + 1.0 * std::sqrt(var / pts.size());
  std::vector<Vec3> expect;
  for (size_t i = 0; i < pts.size(); ++i)
    if (mean_dist[i] <= cutoff) expect.push_back(pts[i]);

  const PointCloud out = remove_statistical_outliers(cloud_of(pts), k, 1.0);
  REQUIRE(out.size() == expect.size());
  for (size_t i = 0; i < expect.size(); ++i)
    CHECK((out.points[i] - expect[i]).norm() == 0.0);
}

TEST_CASE("SOR rejects clouds no larger than k") {
  std::vector<Vec3> pts(8, Vec3(0, 0, 0));
  CHECK_THROWS_WITH_AS(remove_statistical_outliers(cloud_of(pts), 8, 1.0),
                       doctest::Contains("TooFewPoints"), CalibError);
}

TEST_CASE("ground segmentation splits a flat scene") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  PointCloud cloud;
  for (int i = 0; i < 4000; ++i)
    cloud.push_back(Vec3(u(rng) + 6, u(rng), 0.0), -1, kLabelGround);
  std::mt19937_64 srng(11);
  for (const auto& p :
       sphere_surface({Vec3(3, 0, 0.5), 0.1}, 500, srng))
    cloud.push_back(p, -1, kLabelSphere);

  std::mt19937_64 seg_rng(5);
  const auto seg = segment_ground(cloud, 0.02, seg_rng);
  REQUIRE(seg.plane_found);
  int sphere_in_nonground = 0;
  for (size_t i = 0; i < seg.nonground.size(); ++i)
    if (seg.nonground.label[i] == kLabelSphere) ++sphere_in_nonground;
  CHECK(sphere_in_nonground == 500);
  int ground_left = 0;
  for (size_t i = 0; i < seg.nonground.size(); ++i)
    if (seg.nonground.label[i] == kLabelGround) ++ground_left;
  CHECK(ground_left <= 0.01 * 4000);
}

TEST_CASE("ground segmentation handles a 10-degree slope") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  const double slope = 10.0 * kPi / 180.0;
  PointCloud cloud;
  for (int i = 0; i < 3000; ++i) {
    const double x = u(rng) + 6, y = u(rng);
    cloud.push_back(Vec3(x, y, std::tan(slope) * x), -1, kLabelGround);
  }
  std::mt19937_64 srng(13);
  for (const auto& p : sphere_surface({Vec3(3, 0, 3 * std::tan(slope) + 0.6), 0.1},
                                      400, srng))
    cloud.push_back(p, -1, kLabelSphere);
  std::mt19937_64 seg_rng(7);
  const auto seg = segment_ground(cloud, 0.02, seg_rng);
  REQUIRE(seg.plane_found);
  int ground_left = 0;
  for (size_t i = 0; i < seg.nonground.size(); ++i)
    if (seg.nonground.label[i] == kLabelGround) ++ground_left;
  CHECK(ground_left <= 0.01 * 3000);
}

TEST_CASE("ground segmentation without a dominant plane passes through") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 1.0);
  PointCloud cloud;
  for (int i = 0; i < 500; ++i)
    cloud.push_back(Vec3(g(rng), g(rng), g(rng)));
  std::mt19937_64 seg_rng(1);
  const auto seg = segment_ground(cloud, 0.02, seg_rng);
  CHECK_FALSE(seg.plane_found);
  CHECK(seg.nonground.size() == cloud.size());
}

TEST_CASE("ROI detection isolates the sphere from clutter") {
  SceneSpec spec = basic_scene();
  spec.clutter.push_back(
      {Vec3(2.5, -1.6, -0.5), Vec3(3.0, -1.1, 0.3)});
  const PointCloud cloud = generate_scan(spec);
  std::mt19937_64 seg_rng(2);
  const auto seg = segment_ground(cloud, 0.02, seg_rng);
  LidarConfig cfg;
  cfg.el_res_deg = spec.pattern.ring_spacing_deg();
  const auto roi = detect_sphere_roi(seg.nonground, cfg, 0.1);
  int sphere_total = 0;
  for (size_t i = 0; i < seg.nonground.size(); ++i)
    if (seg.nonground.label[i] == kLabelSphere) ++sphere_total;
  int roi_sphere = 0;
  for (size_t i = 0; i < roi.roi.size(); ++i)
    if (roi.roi.label[i] == kLabelSphere) ++roi_sphere;
  REQUIRE(sphere_total > 0);
  CHECK(roi_sphere >= 0.95 * sphere_total);
  CHECK(roi.roi.size() - roi_sphere <= 0.05 * roi.roi.size());

  // Sphere alone, no clutter: the single dominant circle keeps >= 99%.
  SceneSpec clean = basic_scene();
  const PointCloud cloud2 = generate_scan(clean);
  std::mt19937_64 seg_rng2(4);
  const auto seg2 = segment_ground(cloud2, 0.02, seg_rng2);
  const auto roi2 = detect_sphere_roi(seg2.nonground, cfg, 0.1);
  int total2 = 0, kept2 = 0;
  for (size_t i = 0; i < seg2.nonground.size(); ++i)
    if (seg2.nonground.label[i] == kLabelSphere) ++total2;
  for (size_t i = 0; i < roi2.roi.size(); ++i)
    if (roi2.roi.label[i] == kLabelSphere) ++kept2;
  CHECK(kept2 >= 0.99 * total2);
}

TEST_CASE("ROI detection on a sphere-free clutter scene fails") {
  int failures = 0;
  for (int trial = 0; trial < 20; ++trial) {
    SceneSpec spec = basic_scene();
    spec.seed = 1000 + trial;
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    spec.sphere.center = Vec3(100, 100, 100);  // far outside every beam
    for (int b = 0; b < 3; ++b) {
      const double x = 2 + 3 * u(rng), y = -1.5 + 3 * u(rng);
      const double w = 0.3 + 0.4 * u(rng), h = 0.3 + 0.6 * u(rng);
      spec.clutter.push_back(
          {Vec3(x - w / 2, y - w / 2, -0.5), Vec3(x + w / 2, y + w / 2, -0.5 + h)});
    }
    PointCloud cloud;
    try {
      cloud = generate_scan(spec);
    } catch (const CalibError&) {
      ++failures;  // sphere genuinely invisible
      continue;
    }
    std::mt19937_64 seg_rng(3);
    const auto seg = segment_ground(cloud, 0.02, seg_rng);
    LidarConfig cfg;
    cfg.el_res_deg = spec.pattern.ring_spacing_deg();
    try {
      detect_sphere_roi(seg.nonground, cfg, 0.1);
    } catch (const CalibError& e) {
      CHECK(e.code() == "NoCircleFound");
      ++failures;
    }
  }
  CHECK(failures == 20);
}

TEST_CASE("ray clustering groups accumulated returns per beam") {
  SceneSpec spec = basic_scene();
  spec.frames = 50;
  const PointCloud cloud = generate_scan(spec);
  PointCloud sphere_only;
  for (size_t i = 0; i < cloud.size(); ++i)
    if (cloud.label[i] == kLabelSphere) sphere_only.push_back(cloud.points[i]);
  REQUIRE(sphere_only.size() > 0);

  const double az_res = spec.pattern.az_res_deg * kPi / 180.0;
  const double el_res = spec.pattern.ring_spacing_deg() * kPi / 180.0;
  const auto clusters = cluster_along_rays(sphere_only, az_res, el_res);
  // Deterministic beam grid: members per cluster = frame count.
  CHECK(clusters.size() * spec.frames == sphere_only.size());
  for (const auto& c : clusters) {
    CHECK(static_cast<int>(c.members.size()) == spec.frames);
    CHECK(c.radial_extent == 0.0);  // zero noise
  }
}

TEST_CASE("ray clustering trivia: single frame and two-range cluster") {
  PointCloud two;
  const Vec3 d = Vec3(1, 0.01, 0.02).normalized();
  two.push_back(2.00 * d);
  two.push_back(2.01 * d);
  const auto clusters = cluster_along_rays(two, 0.01, 0.01);
  REQUIRE(clusters.size() == 1);
  CHECK(clusters[0].radial_extent == doctest::Approx(0.01).epsilon(1e-6));

  PointCloud single;
  single.push_back(Vec3(2, 0, 0));
  single.push_back(Vec3(2, 0.5, 0));
  single.push_back(Vec3(2, -0.5, 0.3));
  const auto singles = cluster_along_rays(single, 0.01, 0.01);
  CHECK(singles.size() == 3);
  for (const auto& c : singles) {
    CHECK(c.members.size() == 1);
    CHECK(c.radial_extent == 0.0);
  }
}

TEST_CASE("cluster length filter removes long clusters") {
  std::vector<RayCluster> clusters(3);
  const Vec3 d(1, 0, 0);
  for (auto& c : clusters) c.direction = d;
  const auto fill = [&](RayCluster& c, double extent) {
    for (int i = 0; i < 10; ++i)
      c.members.push_back(d * (2.0 + extent * i / 9.0));
    c.radial_extent = extent;
  };
  fill(clusters[0], 0.005);
  fill(clusters[1], 0.02);
  fill(clusters[2], 0.30);
  const auto kept = filter_noisy_clusters(clusters, 0.05, 3);
  CHECK(kept.size() == 2);

  const auto all = filter_noisy_clusters(clusters, 1.0, 3);
  CHECK(all.size() == 3);

  CHECK_THROWS_WITH_AS(filter_noisy_clusters(clusters, 0.001, 3),
                       doctest::Contains("AllClustersRemoved"), CalibError);
}

TEST_CASE("grazing-incidence rim clusters are mostly removed") {
  SceneSpec spec = basic_scene();
  spec.frames = 80;
  spec.pattern.rings = 128;  // dense rings so the rim band is populated
  spec.sphere = {Vec3(2.2, 0.2, 0.15), 0.12};
  spec.noise.sigma0 = 0.003;
  spec.noise.incidence_gain = 2.0;
  const PointCloud cloud = generate_scan(spec);
  PointCloud sphere_only;
  for (size_t i = 0; i < cloud.size(); ++i)
    if (cloud.label[i] == kLabelSphere) sphere_only.push_back(cloud.points[i]);

  const double az_res = spec.pattern.az_res_deg * kPi / 180.0;
  const double el_res = spec.pattern.ring_spacing_deg() * kPi / 180.0;
  const auto clusters = cluster_along_rays(sphere_only, az_res, el_res);

  // Identify rim clusters by incidence angle at the true sphere.
  std::vector<double> interior_extents;
  std::vector<const RayCluster*> rim;
  for (const auto& c : clusters) {
    Vec3 centroid = Vec3::Zero();
    for (const auto& p : c.members) centroid += p;
    centroid /= c.members.size();
    const Vec3 n = (centroid - spec.sphere.center).normalized();
    const double cos_inc = std::abs(centroid.normalized().dot(n));
    const double inc_deg = std::acos(std::clamp(cos_inc, 0.0, 1.0)) * 180 / kPi;
    if (inc_deg > 75)
      rim.push_back(&c);
    else if (inc_deg < 60)
      interior_extents.push_back(c.radial_extent);
  }
  REQUIRE(rim.size() > 5);
  REQUIRE(interior_extents.size() > 10);
  std::sort(interior_extents.begin(), interior_extents.end());
  // 3 sigma of interior clusters expressed via the extent distribution.
  const double thresh = 3.0 * interior_extents[interior_extents.size() / 2];
  int removed = 0;
  for (const auto* c : rim)
    if (c->radial_extent > thresh) ++removed;
  CHECK(removed >= 0.8 * rim.size());
}

TEST_CASE("representative point: trivia and cell-weighted mean") {
  const Vec3 d = Vec3(1, 0.2, -0.1).normalized();
  RayCluster c;
  c.direction = d;
  for (int i = 0; i < 5; ++i) c.members.push_back(2.5 * d);
  c.radial_extent = 0;
  CHECK((representative_point(c, 16) - 2.5 * d).norm() < 1e-12);

  // Symmetric members about range 2.0.
  RayCluster sym;
  sym.direction = d;
  for (double off : {-0.03, -0.02, -0.01, 0.01, 0.02, 0.03})
    sym.members.push_back((2.0 + off) * d);
  CHECK(std::abs(representative_point(sym, 4).dot(d) - 2.0) < 1e-12);
}

TEST_CASE("representative point approximates the sample mean (oracle)") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g(2.0, 0.01);
  const Vec3 d = Vec3(1, -0.05, 0.08).normalized();
  RayCluster c;
  c.direction = d;
  double mean = 0;
  for (int i = 0; i < 1000; ++i) {
    const double r = g(rng);
    c.members.push_back(r * d);
    mean += r;
  }
  mean /= 1000;
  const double rep_range = representative_point(c, 16).dot(d);
  CHECK(std::abs(rep_range - 2.0) < 0.002);
  CHECK(std::abs(rep_range - mean) < 0.001);
}

TEST_CASE("representative point with one cell lands mid-span") {
  const Vec3 d(1, 0, 0);
  RayCluster c;
  c.direction = d;
  c.members = {2.0 * d, 2.1 * d, 2.1 * d, 2.4 * d};
  // One cell spans [2.0, 2.4]; its center is the representative.
  CHECK(std::abs(representative_point(c, 1).dot(d) - 2.2) < 1e-12);
}

TEST_CASE("voxel representatives") {
  PointCloud two;
  two.push_back(Vec3(0.101, 0.102, 0.103));
  two.push_back(Vec3(0.109, 0.104, 0.101));
  const auto reps = voxel_representatives(two, 0.02);
  REQUIRE(reps.size() == 1);
  CHECK((reps[0] - Vec3(0.105, 0.103, 0.102)).norm() < 1e-12);

  // Sphere surface: representative count matches a brute-force voxel count.
  std::mt19937_64 rng(31);
  const SphereParams s{Vec3(1, 2, 3), 0.1};
  const auto surf = sphere_surface(s, 5000, rng);
  const double voxel = s.radius / 5;
  std::set<std::tuple<int, int, int>> occupied;
  for (const auto& p : surf)
    occupied.insert({static_cast<int>(std::floor(p.x() / voxel)),
                     static_cast<int>(std::floor(p.y() / voxel)),
                     static_cast<int>(std::floor(p.z() / voxel))});
  const auto reps2 = voxel_representatives(cloud_of(surf), voxel);
  CHECK(reps2.size() == occupied.size());

  // Voxel larger than the cloud: single centroid.
  const auto one = voxel_representatives(cloud_of(surf), 10.0);
  REQUIRE(one.size() == 1);
}

TEST_CASE("4-point sphere fit: unit-sphere hand case") {
  const auto fit = fit_sphere_4pts(
      {Vec3(1, 0, 0), Vec3(-1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)});
  REQUIRE(fit.has_value());
  CHECK(fit->center.norm() < 1e-12);
  CHECK(fit->radius == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("4-point sphere fit: exact recovery and degeneracy over random "
          "draws") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  int tested = 0;
  while (tested < 10000) {
    const SphereParams s{Vec3(3 * u(rng), 3 * u(rng), 3 * u(rng)),
                         0.05 + 1.95 * std::abs(u(rng))};
    std::array<Vec3, 4> q;
    for (auto& p : q) {
      Vec3 d(g(rng), g(rng), g(rng));
      p = s.center + s.radius * d.normalized();
    }
    const auto fit = fit_sphere_4pts(q, 1e-6);
    if (!fit) continue;  // conditioning below the gate: allowed to refuse
    ++tested;
    CHECK((fit->center - s.center).norm() < 1e-9 * std::max(1.0, s.center.norm()));
    CHECK(std::abs(fit->radius - s.radius) < 1e-9 * std::max(1.0, s.radius));
  }

  for (int i = 0; i < 2000; ++i) {
    // Coplanar quadruples must always be flagged.
    const Vec3 o(u(rng), u(rng), u(rng));
    Vec3 a(g(rng), g(rng), g(rng)), b(g(rng), g(rng), g(rng));
    std::array<Vec3, 4> q;
    for (auto& p : q) p = o + u(rng) * a + u(rng) * b;
    CHECK_FALSE(fit_sphere_4pts(q, 1e-6).has_value());
  }
}

TEST_CASE("hypothesis enumeration: exact points, planes, caps") {
  std::mt19937_64 rng(51);
  const SphereParams s{Vec3(0.3, -0.2, 2.5), 0.1};
  const auto reps = sphere_surface(s, 20, rng);
  std::mt19937_64 enum_rng(1);
  const auto hyps =
      enumerate_sphere_hypotheses(reps, 0.1, 0.01, 200000, 1e-6, enum_rng);
  CHECK(hyps.size() > 4000);  // C(20,4) = 4845 minus near-degenerate
  for (const auto& h : hyps) {
    CHECK((h.params.center - s.center).norm() < 1e-9);
    CHECK(std::abs(h.params.radius - 0.1) <= 0.01);
  }

  // All representatives on a plane: nothing survives.
  std::vector<Vec3> plane;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 15; ++i)
    plane.push_back(Vec3(u(rng), u(rng), 0.7));
  std::mt19937_64 enum_rng2(2);
  CHECK_THROWS_WITH_AS(
      enumerate_sphere_hypotheses(plane, 0.1, 0.01, 200000, 1e-6, enum_rng2),
      doctest::Contains("NoHypotheses"), CalibError);

  // Cap: more representatives than the budget allows combinations.
  const auto many = sphere_surface(s, 80, rng);
  std::mt19937_64 enum_rng3(3);
  const auto capped =
      enumerate_sphere_hypotheses(many, 0.1, 0.01, 5000, 1e-6, enum_rng3);
  CHECK(capped.size() <= 5000);
  CHECK(capped.size() > 4000);
  // Deterministic under the same seed.
  std::mt19937_64 enum_rng4(3);
  const auto capped2 =
      enumerate_sphere_hypotheses(many, 0.1, 0.01, 5000, 1e-6, enum_rng4);
  REQUIRE(capped.size() == capped2.size());
  for (size_t i = 0; i < capped.size(); ++i)
    CHECK(capped[i].source == capped2[i].source);
}

TEST_CASE("noisy representatives: gate pass rate and center scatter") {
  std::mt19937_64 rng(61);
  // Isotropic displacement with total std 5 mm.
  std::normal_distribution<double> noise(0.0, 0.005 / std::sqrt(3.0));
  const SphereParams s{Vec3(0.5, 0.2, 3.0), 0.1};
  int trials_ok = 0;
  for (int trial = 0; trial < 20; ++trial) {
    auto reps = sphere_surface(s, 25, rng);
    for (auto& p : reps)
      p += Vec3(noise(rng), noise(rng), noise(rng));
    std::mt19937_64 enum_rng(trial);
    std::vector<SphereHypothesis> hyps;
    try {
      hyps = enumerate_sphere_hypotheses(reps, 0.1, 0.02, 200000, 1e-6,
                                         enum_rng);
    } catch (const CalibError&) {
      continue;
    }
    const double total = 12650;  // C(25,4)
    if (hyps.size() < 0.5 * total) continue;
    Vec3 mean = Vec3::Zero();
    for (const auto& h : hyps) mean += h.params.center;
    mean /= static_cast<double>(hyps.size());
    Vec3 var = Vec3::Zero();
    for (const auto& h : hyps)
      var += (h.params.center - mean).cwiseAbs2();
    var /= static_cast<double>(hyps.size());
    if (std::sqrt(var.maxCoeff()) < 0.015) ++trials_ok;
  }
  CHECK(trials_ok >= 15);
}

TEST_CASE("center fusion: identical, modal restriction, outlier robustness") {
  SphereHypothesis h;
  h.params = {Vec3(1, 2, 3), 0.1};
  std::vector<SphereHypothesis> same(10, h);
  CHECK((fuse_centers(same, 0.005, 0.02) - Vec3(1, 2, 3)).norm() < 1e-12);

  std::vector<SphereHypothesis> split;
  SphereHypothesis far = h;
  far.params.center = Vec3(1.5, 2, 3);
  for (int i = 0; i < 90; ++i) split.push_back(h);
  for (int i = 0; i < 10; ++i) split.push_back(far);
  CHECK((fuse_centers(split, 0.005, 0.02) - Vec3(1, 2, 3)).norm() < 0.0025);

  // Monte-Carlo: fusion at least as accurate as the plain mean in >= 90% of
  // trials with 5% outliers.
  std::mt19937_64 rng(71);
  std::normal_distribution<double> g(0.0, 0.005);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  const Vec3 truth(0.4, -0.1, 2.0);
  int fused_wins = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<SphereHypothesis> hyps;
    Vec3 mean = Vec3::Zero();
    for (int i = 0; i < 200; ++i) {
      SphereHypothesis hh;
      const bool outlier = (i % 20) == 19;  // 5%
      hh.params.center = outlier ? truth + Vec3(u(rng), u(rng), u(rng))
                                 : truth + Vec3(g(rng), g(rng), g(rng));
      hh.params.radius = 0.1;
      hyps.push_back(hh);
      mean += hh.params.center;
    }
    mean /= 200.0;
    const Vec3 fused = fuse_centers(hyps, 0.005, 0.02);
    if ((fused - truth).norm() <= (mean - truth).norm() + 1e-12) ++fused_wins;
  }
  CHECK(fused_wins >= 90);
}

TEST_CASE("radius gate soundness on the full pipeline output") {
  std::mt19937_64 rng(81);
  const SphereParams s{Vec3(0.2, 0.1, 2.8), 0.1};
  auto reps = sphere_surface(s, 30, rng);
  std::normal_distribution<double> noise(0.0, 0.003);
  for (auto& p : reps) p += noise(rng) * (p - s.center).normalized();
  std::mt19937_64 enum_rng(4);
  const auto hyps =
      enumerate_sphere_hypotheses(reps, 0.1, 0.02, 200000, 1e-6, enum_rng);
  for (const auto& h : hyps)
    CHECK(std::abs(h.params.radius - 0.1) <= 0.02);
}

TEST_CASE("end-to-end extraction: noise-free scans in all three modes") {
  for (ScanMode mode :
       {ScanMode::Spinning, ScanMode::SolidState, ScanMode::NonRepetitive}) {
    SceneSpec spec = basic_scene();
    spec.pattern.mode = mode;
    spec.frames = mode == ScanMode::NonRepetitive ? 30 : 50;
    const PointCloud cloud = generate_scan(spec);
    LidarConfig cfg;
    cfg.az_res_deg = spec.pattern.az_res_deg;
    cfg.el_res_deg = spec.pattern.ring_spacing_deg();
    if (mode == ScanMode::SolidState) {
      cfg.az_res_deg = spec.pattern.grid_az_res_deg;
      cfg.el_res_deg = spec.pattern.grid_el_res_deg;
    }
    const Vec3 center = extract_sphere_center(cloud, mode, cfg);
    CHECK((center - spec.sphere.center).norm() < 1e-3);
  }
}

TEST_CASE("end-to-end extraction under the incidence noise model") {
  std::vector<double> errors;
  for (int seed = 0; seed < 50; ++seed) {
    SceneSpec spec = basic_scene();
    spec.seed = 7000 + seed;
    spec.frames = 100;
    spec.noise.sigma0 = 0.003;
    spec.noise.incidence_gain = 2.0;
    const PointCloud cloud = generate_scan(spec);
    LidarConfig cfg;
    cfg.az_res_deg = spec.pattern.az_res_deg;
    cfg.el_res_deg = spec.pattern.ring_spacing_deg();
    cfg.rng_seed = seed;
    const Vec3 center = extract_sphere_center(cloud, ScanMode::Spinning, cfg);
    errors.push_back((center - spec.sphere.center).norm());
  }
  std::sort(errors.begin(), errors.end());
  CHECK(errors[errors.size() / 2] < 0.01);  // median under 1 cm
}

TEST_CASE("extraction propagates stage errors with stage names") {
  PointCloud empty;
  CHECK_THROWS_AS(extract_sphere_center(empty, ScanMode::Spinning, {}),
                  CalibError);

  // A scene with no sphere: the ROI stage must be the one to fail.
  SceneSpec spec = basic_scene();
  spec.sphere.center = Vec3(100, 100, 100);
  spec.clutter.push_back({Vec3(2.8, -1.2, -0.5), Vec3(3.4, -0.6, 0.4)});
  PointCloud cloud;
  try {
    cloud = generate_scan(spec);
  } catch (const CalibError&) {
    return;  // acceptable: nothing visible at all
  }
  LidarConfig cfg;
  try {
    extract_sphere_center(cloud, ScanMode::Spinning, cfg);
    FAIL("expected NoCircleFound");
  } catch (const CalibError& e) {
    CHECK(e.code() == "NoCircleFound");
    CHECK(std::string(e.what()).find("detect_sphere_roi") != std::string::npos);
  }
}

TEST_CASE("rigid equivariance of the post-ROI pipeline") {
  // ROI projection is viewpoint-dependent, so equivariance is asserted from
  // the clustering stage onward with labeled sphere points.
  SceneSpec spec = basic_scene();
  spec.frames = 60;
  spec.noise.sigma0 = 0.002;
  const PointCloud cloud = generate_scan(spec);
  PointCloud sphere_only;
  for (size_t i = 0; i < cloud.size(); ++i)
    if (cloud.label[i] == kLabelSphere) sphere_only.push_back(cloud.points[i]);

  LidarConfig cfg;
  cfg.az_res_deg = spec.pattern.az_res_deg;
  cfg.el_res_deg = spec.pattern.ring_spacing_deg();

  const auto run = [&](const PointCloud& pc, const LidarConfig& c) {
    const auto clusters =
        cluster_along_rays(pc, c.az_res_deg * kPi / 180.0,
                           c.el_res_deg * kPi / 180.0);
    const auto kept = filter_noisy_clusters(clusters, c.extent_thresh,
                                            c.min_cluster_pts);
    std::vector<Vec3> reps;
    for (const auto& cl : kept) reps.push_back(representative_point(cl, 16));
    std::mt19937_64 rng(c.rng_seed);
    const auto hyps = enumerate_sphere_hypotheses(reps, 0.1, 0.02, 200000,
                                                  1e-6, rng);
    return fuse_centers(hyps, c.fuse_bin, c.fuse_radius);
  };

  const Vec3 base = run(sphere_only, cfg);

  RigidTransform t;
  std::mt19937_64 rot_rng(91);
  t.rotation = random_rotation(rot_rng);
  t.translation = Vec3(0.4, -1.0, 2.2);
  // After a rigid move the beam directions change, so clustering must use a
  // transform-agnostic binning; here clusters are re-derived from the moved
  // cloud with the same angular resolution about the new origin-rays. To
  // keep the cluster structure identical we cluster first, then transform
  // the members: the equivariance being tested is of the geometric stages.
  const auto clusters =
      cluster_along_rays(sphere_only, cfg.az_res_deg * kPi / 180.0,
                         cfg.el_res_deg * kPi / 180.0);
  const auto kept =
      filter_noisy_clusters(clusters, cfg.extent_thresh, cfg.min_cluster_pts);
  std::vector<Vec3> reps;
  for (const auto& cl : kept) reps.push_back(representative_point(cl, 16));
  for (auto& r : reps) r = t.apply(r);
  std::mt19937_64 rng(cfg.rng_seed);
  const auto hyps =
      enumerate_sphere_hypotheses(reps, 0.1, 0.02, 200000, 1e-6, rng);
  const Vec3 moved = fuse_centers(hyps, cfg.fuse_bin, cfg.fuse_radius);

  CHECK((moved - t.apply(base)).norm() < 1e-6);
}

TEST_CASE("extraction is deterministic under a fixed seed") {
  SceneSpec spec = basic_scene();
  spec.noise.sigma0 = 0.003;
  spec.noise.incidence_gain = 2.0;
  const PointCloud cloud = generate_scan(spec);
  LidarConfig cfg;
  cfg.az_res_deg = spec.pattern.az_res_deg;
  cfg.el_res_deg = spec.pattern.ring_spacing_deg();
  cfg.rng_seed = 12345;
  const Vec3 a = extract_sphere_center(cloud, ScanMode::Spinning, cfg);
  const Vec3 b = extract_sphere_center(cloud, ScanMode::Spinning, cfg);
  CHECK(a.x() == b.x());
  CHECK(a.y() == b.y());
  CHECK(a.z() == b.z());
}
