#pragma once

#include <random>
#include <string>
#include <vector>

#include "easyhec/mesh.hpp"
#include "easyhec/se3.hpp"

namespace easyhec {

using Rng = std::mt19937_64;

struct LinkSpec {
  std::string name;
  TriangleMesh mesh;
  Pose joint_origin;  // in the parent link frame (base for link 0)
  Vec3 joint_axis = Vec3::UnitZ();
  double lower = 0.0;
  double upper = 0.0;
};

// Serial chain of revolute joints. Link i is attached to link i-1; link 0 to
// the base.
struct RobotModel {
  std::vector<LinkSpec> links;
  double workspace_radius = 1.2;
  // When set, links after the first must keep their bounding sphere above z = 0.
  bool ground_plane = false;

  std::size_t dof() const { return links.size(); }
  // Throws ValidationError on any broken invariant.
  void validate() const;
};

struct JointPose {
  std::vector<double> q;
};

RobotModel load_robot_model(const std::string& path);

std::vector<Pose> forward_kinematics(const RobotModel& model, const JointPose& q);

JointPose sample_joint_pose(const RobotModel& model, Rng& rng);

bool within_limits(const RobotModel& model, const JointPose& q);
bool is_valid_pose(const RobotModel& model, const JointPose& q);

// Rotation about a unit axis, as a pure-rotation Pose.
Pose axis_rotation(const Vec3& axis, double angle);

// Joint pose list files: JSON array of arrays (radians).
std::vector<JointPose> load_joint_poses(const std::string& path);
void save_joint_poses(const std::string& path, const std::vector<JointPose>& poses);

}  // namespace easyhec
