#include "easyhec/explore.hpp"

#include "easyhec/error.hpp"
#include "easyhec/optimize.hpp"
#include "easyhec/parallel.hpp"

namespace easyhec {

void ExplorationConfig::validate() const {
  if (n_joint_samples < 1) throw InvalidArgument("exploration: n_joint_samples must be >= 1");
  if (n_candidates < 2) throw InvalidArgument("exploration: n_candidates must be >= 2");
  if (render_width < 8 || render_height < 8) {
    throw InvalidArgument("exploration: render size must be at least 8x8");
  }
  if (!(sigma > 0.0)) throw InvalidArgument("exploration: sigma must be positive");
}

double mask_variance(std::span<const Mask> masks) {
  if (masks.size() < 2) throw InvalidArgument("mask_variance needs at least two masks");
  for (const auto& m : masks) {
    if (!m.same_shape(masks[0])) throw DimensionMismatch("mask_variance: masks differ in size");
  }
  const std::size_t n_pix = masks[0].size();
  const double inv_k = 1.0 / static_cast<double>(masks.size());
  double total = 0.0;
  // Two passes over values shifted by the first mask, so identical masks give
  // exactly zero.
  for (std::size_t p = 0; p < n_pix; ++p) {
    const double ref = masks[0].values()[p];
    double mean = 0.0;
    for (const auto& m : masks) mean += m.values()[p] - ref;
    mean *= inv_k;
    double var = 0.0;
    for (const auto& m : masks) {
      const double d = m.values()[p] - ref - mean;
      var += d * d;
    }
    total += var * inv_k;
  }
  return total / static_cast<double>(n_pix);
}

std::vector<Mask> render_candidates(const RobotModel& robot, const JointPose& q,
                                    std::span<const Pose> candidates, const CameraIntrinsics& k,
                                    double sigma) {
  const auto link_poses = forward_kinematics(robot, q);
  std::vector<Mask> masks;
  masks.reserve(candidates.size());
  for (const auto& cam : candidates) {
    masks.push_back(render_soft_mask(links_in_camera(robot, cam, link_poses), k, sigma));
  }
  return masks;
}

std::vector<double> score_joint_poses(const RobotModel& robot, std::span<const JointPose> poses,
                                      std::span<const Pose> candidates, const CameraIntrinsics& k,
                                      const ExplorationConfig& cfg) {
  cfg.validate();
  if (candidates.size() < 2) throw InvalidArgument("exploration needs at least two candidate poses");
  const CameraIntrinsics small = k.scaled_to(cfg.render_width, cfg.render_height);
  std::vector<double> scores(poses.size(), 0.0);
  parallel_for(poses.size(), [&](std::size_t i) {
    scores[i] = mask_variance(render_candidates(robot, poses[i], candidates, small, cfg.sigma));
  });
  return scores;
}

ExplorationResult select_next_joint_pose(const RobotModel& robot, std::span<const Pose> candidates,
                                         const CameraIntrinsics& k, const ExplorationConfig& cfg,
                                         Rng& rng) {
  cfg.validate();
  if (candidates.size() < 2) throw InvalidArgument("exploration needs at least two candidate poses");
  std::vector<JointPose> valid;
  std::vector<int> index;
  for (int i = 0; i < cfg.n_joint_samples; ++i) {
    JointPose q = sample_joint_pose(robot, rng);
    if (is_valid_pose(robot, q)) {
      valid.push_back(std::move(q));
      index.push_back(i);
    }
  }
  if (valid.empty()) {
    throw ExhaustionError("all " + std::to_string(cfg.n_joint_samples) +
                          " sampled joint poses are invalid; widen joint limits or the workspace "
                          "radius, or sample more poses");
  }
  const auto scores = score_joint_poses(robot, valid, candidates, k, cfg);
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return ExplorationResult{valid[best], scores[best], static_cast<int>(valid.size()), index[best]};
}

}  // namespace easyhec
