#pragma once

#include "spherecal/calibration.hpp"
#include "spherecal/camera_pipeline.hpp"
#include "spherecal/lidar_pipeline.hpp"
#include "spherecal/simulator.hpp"

#include <map>
#include <set>
#include <string>

namespace spherecal {

/// Flat dotted-key configuration with documented defaults. Unknown keys are
/// rejected; CLI overrides win over file values. The full snapshot is
/// embedded in every report so a run can be reproduced from its output.
class RunConfig {
 public:
  RunConfig();

  /// Lines of "key = value"; '#' starts a comment.
  void load_file(const std::string& path);
  /// One "key=value" override (CLI --set).
  void set(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  /// Overrides every *.rng_seed / sim.seed key at once (CLI --seed).
  void set_seed(std::uint64_t seed);

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::int64_t get_int64(const std::string& key) const;
  std::uint64_t get_uint64(const std::string& key) const;

  bool was_set(const std::string& key) const { return explicit_.count(key) > 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  CameraConfig camera_config() const;
  LidarConfig lidar_config() const;
  SolverConfig solver_config() const;
  SimConfig sim_config() const;

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> explicit_;
};

}  // namespace spherecal
