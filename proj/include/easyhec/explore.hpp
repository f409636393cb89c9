#pragma once

// Next-view selection: among sampled joint poses, pick the one whose
// renders disagree most across the current camera-pose candidates.

#include <span>
#include <vector>

#include "easyhec/kinematics.hpp"
#include "easyhec/render.hpp"

namespace easyhec {

struct ExplorationConfig {
  int n_joint_samples = 2000;
  int n_candidates = 50;
  int render_width = 64;
  int render_height = 64;
  // Renders at the temperature calibration ends at; near-binary at 64x64.
  double sigma = 1e-8;

  void validate() const;
};

// Mean over pixels of the per-pixel population variance across masks.
double mask_variance(std::span<const Mask> masks);

struct ExplorationResult {
  JointPose q;
  double score = 0.0;
  int valid_samples = 0;
  int sample_index = 0;  // index of q among the drawn samples
};

// Soft renders of the robot at q under each candidate camera pose.
std::vector<Mask> render_candidates(const RobotModel& robot, const JointPose& q,
                                    std::span<const Pose> candidates, const CameraIntrinsics& k,
                                    double sigma);

// All samples are drawn from rng before any scoring. Ties go to the lowest
// sample index. Throws ExhaustionError when no sample is valid.
ExplorationResult select_next_joint_pose(const RobotModel& robot, std::span<const Pose> candidates,
                                         const CameraIntrinsics& k, const ExplorationConfig& cfg,
                                         Rng& rng);

// Scores a fixed list of joint poses; same scoring as select_next_joint_pose.
std::vector<double> score_joint_poses(const RobotModel& robot, std::span<const JointPose> poses,
                                      std::span<const Pose> candidates, const CameraIntrinsics& k,
                                      const ExplorationConfig& cfg);

}  // namespace easyhec
