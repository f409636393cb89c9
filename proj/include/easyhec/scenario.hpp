#pragma once

#include <cstdint>
#include <memory>

#include "easyhec/kinematics.hpp"
#include "easyhec/render.hpp"

namespace easyhec {

// One synthetic eye-to-hand setup: a robot seen by a fixed camera.
struct Scenario {
  std::shared_ptr<const RobotModel> robot;
  CameraIntrinsics k;
  Pose camera_from_base;  // ground truth T_cb
  JointPose q0;
  std::uint64_t seed = 0;
};

}  // namespace easyhec
