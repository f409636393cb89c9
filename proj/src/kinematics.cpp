#include "easyhec/kinematics.hpp"

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

#include "easyhec/error.hpp"

namespace easyhec {

namespace fs = std::filesystem;
using nlohmann::json;

void RobotModel::validate() const {
  if (links.empty()) throw ValidationError("robot model has no links");
  if (!(workspace_radius > 0.0)) throw ValidationError("workspace_radius must be positive");
  for (const auto& link : links) {
    if (std::abs(link.joint_axis.norm() - 1.0) > 1e-9) {
      throw ValidationError("link '" + link.name + "': joint axis is not unit length");
    }
    if (!(link.lower < link.upper)) {
      throw ValidationError("link '" + link.name + "': joint limits need lo < hi");
    }
  }
}

Pose axis_rotation(const Vec3& axis, double angle) {
  return Pose(so3_exp(axis * angle), Vec3::Zero());
}

namespace {

LinkSpec parse_link(const json& j, const fs::path& base_dir, std::size_t index) {
  const std::string where = "link " + std::to_string(index);
  for (const char* key : {"name", "mesh", "origin", "axis", "limits"}) {
    if (!j.contains(key)) throw ValidationError(where + ": missing field '" + key + "'");
  }
  const auto& origin = j.at("origin");
  const auto& axis = j.at("axis");
  const auto& limits = j.at("limits");
  if (!origin.is_array() || origin.size() != 16) {
    throw ValidationError(where + ": 'origin' must hold 16 numbers");
  }
  if (!axis.is_array() || axis.size() != 3) throw ValidationError(where + ": 'axis' must hold 3 numbers");
  if (!limits.is_array() || limits.size() != 2) {
    throw ValidationError(where + ": 'limits' must be [lo, hi]");
  }

  const fs::path mesh_path = base_dir / j.at("mesh").get<std::string>();
  if (!fs::exists(mesh_path)) throw IoError(where + ": mesh file not found: " + mesh_path.string());

  Mat4 m;
  for (int i = 0; i < 16; ++i) m(i / 4, i % 4) = origin[i].get<double>();
  Vec3 a(axis[0].get<double>(), axis[1].get<double>(), axis[2].get<double>());
  const double n = a.norm();
  if (std::abs(n - 1.0) > 1e-3) throw ValidationError(where + ": joint axis is not unit length");
  a /= n;

  LinkSpec link{j.at("name").get<std::string>(), load_obj(mesh_path.string()),
                Pose::from_matrix(m), a, limits[0].get<double>(), limits[1].get<double>()};
  if (!(link.lower < link.upper)) {
    throw ValidationError(where + " ('" + link.name + "'): joint limits need lo < hi");
  }
  return link;
}

}  // namespace

RobotModel load_robot_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open robot model: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  try {
    if (!j.is_object() || !j.contains("links") || !j.at("links").is_array()) {
      throw ValidationError(path + ": expected an object with a 'links' array");
    }
    RobotModel model;
    model.workspace_radius = j.value("workspace_radius", 1.2);
    model.ground_plane = j.value("ground_plane", false);
    const fs::path base_dir = fs::path(path).parent_path();
    std::size_t index = 0;
    for (const auto& lj : j.at("links")) model.links.push_back(parse_link(lj, base_dir, index++));
    model.validate();
    return model;
  } catch (const json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

std::vector<Pose> forward_kinematics(const RobotModel& model, const JointPose& q) {
  if (q.q.size() != model.dof()) {
    throw InvalidArgument("joint pose has " + std::to_string(q.q.size()) +
                          " values, model has " + std::to_string(model.dof()) + " joints");
  }
  std::vector<Pose> poses;
  poses.reserve(model.dof());
  Pose current;
  for (std::size_t i = 0; i < model.dof(); ++i) {
    const auto& link = model.links[i];
    current = current * link.joint_origin * axis_rotation(link.joint_axis, q.q[i]);
    poses.push_back(current);
  }
  return poses;
}

JointPose sample_joint_pose(const RobotModel& model, Rng& rng) {
  JointPose q;
  q.q.reserve(model.dof());
  for (const auto& link : model.links) {
    std::uniform_real_distribution<double> dist(link.lower, link.upper);
    q.q.push_back(dist(rng));
  }
  return q;
}

bool within_limits(const RobotModel& model, const JointPose& q) {
  if (q.q.size() != model.dof()) return false;
  for (std::size_t i = 0; i < model.dof(); ++i) {
    if (q.q[i] < model.links[i].lower || q.q[i] > model.links[i].upper) return false;
  }
  return true;
}

bool is_valid_pose(const RobotModel& model, const JointPose& q) {
  if (!within_limits(model, q)) return false;
  const auto poses = forward_kinematics(model, q);
  std::vector<BoundingSphere> spheres;
  spheres.reserve(model.dof());
  for (std::size_t i = 0; i < model.dof(); ++i) {
    BoundingSphere s = bounding_sphere(model.links[i].mesh);
    s.center = poses[i].apply(s.center);
    if (s.center.norm() > model.workspace_radius) return false;
    if (model.ground_plane && i > 0 && s.center.z() - s.radius < 0.0) return false;
    spheres.push_back(s);
  }
  for (std::size_t i = 0; i < spheres.size(); ++i) {
    for (std::size_t j = i + 2; j < spheres.size(); ++j) {
      const double dist = (spheres[i].center - spheres[j].center).norm();
      if (dist < spheres[i].radius + spheres[j].radius) return false;
    }
  }
  return true;
}

std::vector<JointPose> load_joint_poses(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open joint pose file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (!j.is_array()) throw ParseError(path + ": expected a JSON array of joint arrays");
  std::vector<JointPose> out;
  for (const auto& row : j) {
    if (!row.is_array()) throw ParseError(path + ": each joint pose must be an array");
    JointPose q;
    for (const auto& v : row) {
      if (!v.is_number()) throw ParseError(path + ": joint values must be numbers");
      q.q.push_back(v.get<double>());
    }
    out.push_back(std::move(q));
  }
  return out;
}

void save_joint_poses(const std::string& path, const std::vector<JointPose>& poses) {
  json j = json::array();
  for (const auto& q : poses) j.push_back(q.q);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write joint pose file: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace easyhec
