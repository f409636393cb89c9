#include "easyhec/se3.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "easyhec/error.hpp"

namespace easyhec {

namespace {

bool all_finite(const Mat3& r, const Vec3& t) {
  return r.allFinite() && t.allFinite();
}

}  // namespace

bool is_rotation(const Mat3& m, double tol) {
  if (!m.allFinite()) return false;
  const double ortho = (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(m.determinant() - 1.0) <= tol;
}

Pose::Pose(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  if (!all_finite(rotation, translation)) {
    throw InvalidArgument("pose has non-finite entries");
  }
  if (!is_rotation(rotation)) {
    throw InvalidArgument("pose rotation is not orthonormal with det +1");
  }
}

Pose Pose::from_matrix(const Mat4& m) {
  if (!m.allFinite()) throw InvalidArgument("pose matrix has non-finite entries");
  const Eigen::RowVector4d last = m.row(3);
  if ((last - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-9) {
    throw InvalidArgument("pose matrix bottom row must be [0 0 0 1]");
  }
  return Pose(m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>());
}

Mat4 Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

Pose Pose::inverse() const {
  const Mat3 rt = rotation_.transpose();
  return Pose(rt, -(rt * translation_), Unchecked{});
}

Pose Pose::operator*(const Pose& other) const {
  return Pose(rotation_ * other.rotation_,
              rotation_ * other.translation_ + translation_, Unchecked{});
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  // clang-format off
  s <<     0, -v.z(),  v.y(),
       v.z(),      0, -v.x(),
      -v.y(),  v.x(),      0;
  // clang-format on
  return s;
}

Vec3 vee(const Mat3& m) { return Vec3(m(2, 1), m(0, 2), m(1, 0)); }

Mat3 so3_exp(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 k = skew(phi);
  if (theta < kSmallAngle) {
    return Mat3::Identity() + k + 0.5 * k * k;
  }
  const double half = std::sin(0.5 * theta);
  const double a = std::sin(theta) / theta;
  const double b = 2.0 * half * half / (theta * theta);
  return Mat3::Identity() + a * k + b * k * k;
}

Mat3 so3_left_jacobian(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 k = skew(phi);
  if (theta < kSmallAngle) {
    return Mat3::Identity() + 0.5 * k + (1.0 / 6.0) * k * k;
  }
  const double half = std::sin(0.5 * theta);
  const double b = 2.0 * half * half / (theta * theta);
  const double c = (theta - std::sin(theta)) / (theta * theta * theta);
  return Mat3::Identity() + b * k + c * k * k;
}

Vec3 so3_log(const Mat3& r) {
  if (!is_rotation(r)) throw InvalidArgument("so3_log: matrix is not a rotation");
  const Vec3 w = 0.5 * vee(r - r.transpose());  // sin(theta) * axis
  const double s = w.norm();
  const double c = std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0);
  const double theta = std::atan2(s, c);
  if (theta < kSmallAngle) {
    return w;
  }
  if (std::numbers::pi - theta > 1e-6) {
    return (theta / s) * w;
  }
  // Near pi the antisymmetric part vanishes; recover the axis from
  // (R + R^T)/2 = cos(theta) I + (1 - cos(theta)) a a^T.
  const Mat3 aat = (0.5 * (r + r.transpose()) - c * Mat3::Identity()) / (1.0 - c);
  int col = 0;
  aat.diagonal().maxCoeff(&col);
  Vec3 axis = aat.col(col) / std::sqrt(std::max(aat(col, col), 1e-300));
  axis.normalize();
  if (axis.dot(w) < 0) axis = -axis;
  return theta * axis;
}

Pose exp_twist(const Twist& xi) {
  if (!xi.rho.allFinite() || !xi.phi.allFinite()) {
    throw InvalidArgument("exp_twist: non-finite twist");
  }
  return Pose(so3_exp(xi.phi), so3_left_jacobian(xi.phi) * xi.rho);
}

Twist log_pose(const Pose& pose) {
  const Vec3 phi = so3_log(pose.rotation());
  const Mat3 v = so3_left_jacobian(phi);
  const Vec3 rho = v.partialPivLu().solve(pose.translation());
  return Twist{rho, phi};
}

Mat6 se3_left_jacobian(const Twist& xi) {
  const Vec3& rho = xi.rho;
  const Vec3& phi = xi.phi;
  const Mat3 jl = so3_left_jacobian(phi);
  const Mat3 px = skew(phi);
  const Mat3 rx = skew(rho);
  const double theta = phi.norm();

  double c1, c2, c3;
  if (theta < 1e-2) {
    // Series expansions of the closed-form coefficients; the closed forms
    // cancel catastrophically for small angles.
    const double t2 = theta * theta;
    c1 = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
    c2 = 1.0 / 24.0 - t2 / 720.0 + t2 * t2 / 40320.0;
    c3 = 1.0 / 120.0 - t2 / 2520.0 + t2 * t2 / 120960.0;
  } else {
    const double t2 = theta * theta;
    const double st = std::sin(theta);
    const double ct = std::cos(theta);
    c1 = (theta - st) / (t2 * theta);
    c2 = (t2 + 2.0 * ct - 2.0) / (2.0 * t2 * t2);
    c3 = (2.0 * theta - 3.0 * st + theta * ct) / (2.0 * t2 * t2 * theta);
  }
  const Mat3 q = 0.5 * rx + c1 * (px * rx + rx * px + px * rx * px) +
                 c2 * (px * px * rx + rx * px * px - 3.0 * px * rx * px) +
                 c3 * (px * rx * px * px + px * px * rx * px);

  Mat6 j = Mat6::Zero();
  j.topLeftCorner<3, 3>() = jl;
  j.topRightCorner<3, 3>() = q;
  j.bottomRightCorner<3, 3>() = jl;
  return j;
}

Mat3 nearest_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

double rotation_error_deg(const Pose& a, const Pose& b) {
  const Mat3 rel = a.rotation() * b.rotation().transpose();
  const double c = std::clamp(0.5 * (rel.trace() - 1.0), -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

double translation_error(const Pose& a, const Pose& b) {
  return (a.translation() - b.translation()).norm();
}

nlohmann::json pose_to_json(const Pose& pose) {
  const Mat4 m = pose.matrix();
  nlohmann::json values = nlohmann::json::array();
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) values.push_back(m(r, c));
  }
  return nlohmann::json{{"matrix", values}};
}

Pose pose_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("matrix")) {
    throw ParseError("pose JSON must be an object with a \"matrix\" field");
  }
  const auto& values = j.at("matrix");
  if (!values.is_array() || values.size() != 16) {
    throw ParseError("pose \"matrix\" must hold 16 numbers (row-major 4x4)");
  }
  Mat4 m;
  for (int i = 0; i < 16; ++i) {
    if (!values[i].is_number()) throw ParseError("pose \"matrix\" entries must be numbers");
    m(i / 4, i % 4) = values[i].get<double>();
  }
  return Pose::from_matrix(m);
}

Pose load_pose(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pose file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return pose_from_json(j);
}

void save_pose(const std::string& path, const Pose& pose) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write pose file: " + path);
  out << pose_to_json(pose).dump(2) << "\n";
}

}  // namespace easyhec
