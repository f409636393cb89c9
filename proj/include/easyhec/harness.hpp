#pragma once

// Synthetic closed-loop experiments: scenario generation, simulated mask
// observations, the observe/optimize/explore loop and batch sweeps.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "easyhec/baseline.hpp"
#include "easyhec/explore.hpp"
#include "easyhec/optimize.hpp"
#include "easyhec/scenario.hpp"

namespace easyhec {

// Independent, reproducible random stream per (seed, purpose).
Rng make_rng(std::uint64_t seed, std::uint64_t stream);

struct ScenarioOptions {
  double min_distance = 0.8;
  double max_distance = 2.0;
  double min_elevation_deg = 10.0;
  double max_elevation_deg = 60.0;
  double up_jitter_deg = 10.0;
  double target_height = 0.3;  // look-at point on the base's vertical axis
  double min_coverage = 0.01;
  int max_attempts = 100;
};

Scenario generate_scenario(std::shared_ptr<const RobotModel> robot, const CameraIntrinsics& k,
                           std::uint64_t seed, const ScenarioOptions& options = {});

struct NoiseModel {
  double flip_prob = 0.0;
  int morph_radius = 0;  // > 0 dilate, < 0 erode

  void validate() const;
  bool none() const { return flip_prob == 0.0 && morph_radius == 0; }
};

// Square-window dilation (radius > 0) or erosion (radius < 0).
Mask morph(const Mask& mask, int radius);

Mask observe(const Scenario& sc, const JointPose& q, const NoiseModel& noise, Rng& rng);

enum class Selector { kSE, kRandom };
std::string to_string(Selector s);
Selector selector_from_string(const std::string& s);

struct InitMode {
  // Ground truth perturbed in the base frame: T_cb * [R(axis, angle) | t].
  double rotation_deg = 10.0;
  double translation_fraction = 0.1;  // of the camera-to-base distance
  std::optional<Pose> explicit_pose;
};

Pose initial_pose(const Scenario& sc, const InitMode& init);

struct LoopConfig {
  OptimizerConfig optimizer;
  ExplorationConfig exploration;
  int candidate_window_lo = 200;
  int candidate_window_hi = 1000;
  NoiseModel noise;
  InitMode init;
};

struct ReportEntry {
  int views = 0;
  double rotation_error_deg = 0.0;
  double translation_error_cm = 0.0;
  double loss = 0.0;
  Pose pose;
  JointPose q;              // joint pose observed at this iteration
  double selection_score = 0.0;
};

struct Report {
  Selector selector = Selector::kSE;
  std::uint64_t seed = 0;
  Pose init;
  std::vector<ReportEntry> entries;
  std::vector<Mask> observed;  // observed masks in acquisition order
  double wall_seconds = 0.0;   // not serialized; reports stay byte-reproducible
};

Report run_calibration_loop(const Scenario& sc, int n_views, Selector selector,
                            const LoopConfig& config);

nlohmann::json report_to_json(const Report& report);
// One row per iteration.
std::string report_to_csv(const Report& report);

// Marker baseline on a scenario: draws n_poses joint poses with the whole
// marker in view (seeded from the scenario), then marker_calibrate.
MarkerCalibration run_marker_baseline(const Scenario& sc, int n_poses, double pixel_noise_px);

struct SweepGrid {
  std::vector<int> n_joint_samples;
  std::vector<int> n_candidates;
  std::vector<NoiseModel> noise;
  std::vector<Selector> selectors;
};

struct BatchConfig {
  std::shared_ptr<const RobotModel> robot;
  CameraIntrinsics k;
  std::uint64_t first_seed = 0;
  int n_scenes = 1;
  int n_views = 1;
  LoopConfig loop;
  SweepGrid grid;            // empty axes fall back to the loop config value
  bool baseline = false;
  int baseline_poses = 20;
  double baseline_noise_px = 1.0;
};

struct SceneResult {
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  std::vector<double> rotation_deg;    // per view count (1..n_views); marker: single value
  std::vector<double> translation_cm;
  int marker_poses_used = 0;
};

struct CellKey {
  std::string method;  // "SE", "random" or "marker"
  int n_joint_samples = 0;
  int n_candidates = 0;
  NoiseModel noise;
};

struct CellResult {
  CellKey key;
  std::vector<SceneResult> scenes;  // ordered by seed
};

struct CellStats {
  CellKey key;
  int views = 0;
  int n_ok = 0;
  int n_failed = 0;
  double rot_mean = 0, rot_median = 0, rot_std = 0;
  double trans_mean = 0, trans_median = 0, trans_std = 0;
};

struct BatchResult {
  std::vector<CellResult> cells;
  std::vector<CellStats> stats;
};

BatchResult evaluate_batch(const BatchConfig& config);

std::string batch_to_csv(const BatchResult& result);
nlohmann::json batch_to_json(const BatchResult& result);

double median(std::vector<double> values);

// Fraction of errors <= each (ascending) threshold.
std::vector<double> pck(std::span<const double> errors, std::span<const double> thresholds);

}  // namespace easyhec
