#pragma once

// Render-and-compare objective over one or more observed masks and the Adam
// loop that minimizes it over a camera-pose increment.

#include <span>
#include <vector>

#include "easyhec/kinematics.hpp"
#include "easyhec/render.hpp"
#include "easyhec/se3.hpp"

namespace easyhec {

struct Observation {
  JointPose q;
  Mask mask;
  std::vector<Pose> link_poses;  // forward_kinematics(robot, q)

  static Observation make(const RobotModel& robot, JointPose q, Mask mask);
};

struct OptimizerConfig {
  double learning_rate = 3e-3;
  int steps = 1000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Render temperature, annealed geometrically from sigma to sigma_final over
  // the first anneal_fraction of the steps and held at sigma_final after.
  // The wide start gives a basin; the narrow end removes the soft-vs-hard
  // silhouette bias. sigma_final == sigma disables annealing.
  double sigma = kDefaultSigma;
  double sigma_final = 1e-8;
  double anneal_fraction = 0.75;
  int snapshot_every = 1;

  void validate() const;
  double sigma_at(int step) const;
};

struct Snapshot {
  int step = 0;
  Pose pose;
  double loss = 0.0;
  double sigma = 0.0;  // temperature the loss was evaluated at
};

using Trajectory = std::vector<Snapshot>;

// Link meshes posed by T_cb * T_bl for one observation, in the camera frame.
std::vector<TriangleMesh> links_in_camera(const RobotModel& robot, const Pose& camera_from_base,
                                          std::span<const Pose> link_poses);

// Mean over observations of the per-pixel mean squared mask residual.
double calibration_loss(const Pose& camera_from_base, const RobotModel& robot,
                        std::span<const Observation> obs, const CameraIntrinsics& k, double sigma);

// Per-observation terms of calibration_loss, in observation order.
std::vector<double> per_view_losses(const Pose& camera_from_base, const RobotModel& robot,
                                    std::span<const Observation> obs, const CameraIntrinsics& k,
                                    double sigma);

struct LossAndGrad {
  double loss = 0.0;
  Vec6 grad = Vec6::Zero();  // d loss / d delta, (rho, phi) layout
};

// Loss and analytic gradient at T = exp(delta) * anchor.
LossAndGrad calibration_loss_grad(const Twist& delta, const Pose& anchor, const RobotModel& robot,
                                  std::span<const Observation> obs, const CameraIntrinsics& k,
                                  double sigma);

struct AdamState {
  Vec6 m = Vec6::Zero();
  Vec6 v = Vec6::Zero();
  int t = 0;
};

// Returns the increment to add to the parameters.
Vec6 adam_step(AdamState& state, const Vec6& grad, const OptimizerConfig& config);

struct OptimizeResult {
  Pose pose;            // lowest-loss snapshot among those at sigma_final
  double loss = 0.0;    // its loss
  int best_step = 0;
  double initial_loss = 0.0;  // at init, evaluated at sigma_final
  Trajectory trajectory;
};

OptimizeResult optimize_pose(const Pose& init, const RobotModel& robot,
                             std::span<const Observation> obs, const CameraIntrinsics& k,
                             const OptimizerConfig& config);

struct CandidateSample {
  std::vector<Pose> poses;
  bool exhausted = false;  // fewer than k snapshots were available
};

CandidateSample sample_pose_candidates(const Trajectory& traj, int k, int lo_step, int hi_step,
                                       Rng& rng);

// One JSON object per line: {"step", "matrix", "loss"}.
void write_trajectory_jsonl(const std::string& path, const Trajectory& traj);

}  // namespace easyhec
