#pragma once

#include "spherecal/types.hpp"

#include <string>
#include <vector>

namespace spherecal {

// Per-point labels used by the scene simulator.
enum PointLabel : int { kLabelGround = 0, kLabelSphere = 1, kLabelClutter = 2 };

/// Accumulated point cloud. frame and label are optional parallel arrays
/// (empty when absent).
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<int> frame;
  std::vector<int> label;

  size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  void push_back(const Vec3& p, int frame_idx = -1, int lbl = -1) {
    points.push_back(p);
    if (frame_idx >= 0) frame.push_back(frame_idx);
    if (lbl >= 0) label.push_back(lbl);
  }

  PointCloud select(const std::vector<int>& idx) const {
    PointCloud out;
    out.points.reserve(idx.size());
    for (int i : idx) {
      out.points.push_back(points[i]);
      if (!frame.empty()) out.frame.push_back(frame[i]);
      if (!label.empty()) out.label.push_back(label[i]);
    }
    return out;
  }

  PointCloud transformed(const RigidTransform& t) const {
    PointCloud out = *this;
    for (auto& p : out.points) p = t.apply(p);
    return out;
  }
};

/// ASCII PLY with float x, y, z and optional int label / frame properties.
void write_ply(const PointCloud& cloud, const std::string& path);
PointCloud read_ply(const std::string& path);

/// CSV rows "x,y,z[,frame]"; a header line is permitted.
PointCloud read_xyz_csv(const std::string& path);

/// Dispatches on extension (.ply / .csv).
PointCloud read_point_cloud(const std::string& path);

}  // namespace spherecal
