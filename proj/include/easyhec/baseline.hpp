#pragma once

// Marker-based eye-to-hand calibration used as the comparison method:
// simulated marker observations, PnP per view, then AX = XB.

#include <span>
#include <utility>
#include <vector>

#include "easyhec/kinematics.hpp"
#include "easyhec/render.hpp"
#include "easyhec/scenario.hpp"

namespace easyhec {

// Rigid 3D point pattern in the last link's frame (>= 6 non-coplanar points).
struct MarkerModel {
  std::vector<Vec3> points;

  void validate() const;
  static MarkerModel default_pattern();
};

Pose solve_pnp(std::span<const Vec3> points3d, std::span<const Vec2> points2d,
               const CameraIntrinsics& k);

double reprojection_rms(const Pose& pose, std::span<const Vec3> points3d,
                        std::span<const Vec2> points2d, const CameraIntrinsics& k);

// Solves A_i X = X B_i in the least-squares sense.
Pose solve_ax_xb(std::span<const std::pair<Pose, Pose>> pairs);

struct MarkerCalibration {
  Pose camera_from_base;
  int poses_used = 0;
  int poses_attempted = 0;
};

struct MarkerOptions {
  MarkerModel marker = MarkerModel::default_pattern();
  double pixel_noise_sigma = 0.0;
  // Physical mounting error of the marker on the flange (unknown to the solver).
  Pose fixture_error;
};

// Views where any marker point is behind the near plane or outside the image
// are skipped; at least three must remain.
MarkerCalibration marker_calibrate(const Scenario& scenario, std::span<const JointPose> joint_poses,
                                   const MarkerOptions& options, Rng& rng);

}  // namespace easyhec
