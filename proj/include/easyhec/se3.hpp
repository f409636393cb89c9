#pragma once

// Rigid transforms in SE(3) and their se(3) tangent coordinates.
//
// Twist layout is (rho, phi): rho is the translational part in meters, phi
// the rotation vector in radians. exp_twist(xi) = [exp(phi^), V(phi) rho].

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace easyhec {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat6 = Eigen::Matrix<double, 6, 6>;

struct Twist {
  Vec3 rho = Vec3::Zero();
  Vec3 phi = Vec3::Zero();

  static Twist from_vector(const Vec6& v) {
    return Twist{v.head<3>(), v.tail<3>()};
  }
  Vec6 vector() const {
    Vec6 v;
    v << rho, phi;
    return v;
  }
};

// Rotation + translation. Every constructed Pose has an orthonormal,
// right-handed rotation (checked to 1e-9) and finite entries.
class Pose {
 public:
  Pose() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  Pose(const Mat3& rotation, const Vec3& translation);

  static Pose identity() { return Pose(); }
  static Pose from_matrix(const Mat4& m);
  static Pose from_translation(const Vec3& t) { return Pose(Mat3::Identity(), t); }

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Mat4 matrix() const;

  Pose inverse() const;
  Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }

  Pose operator*(const Pose& other) const;
  Vec3 operator*(const Vec3& p) const { return apply(p); }

 private:
  struct Unchecked {};
  Pose(const Mat3& r, const Vec3& t, Unchecked) : rotation_(r), translation_(t) {}

  Mat3 rotation_;
  Vec3 translation_;
};

inline Pose compose(const Pose& a, const Pose& b) { return a * b; }
inline Pose inverse(const Pose& a) { return a.inverse(); }
inline Vec3 apply(const Pose& a, const Vec3& p) { return a.apply(p); }

// Below this rotation angle exp and V use second-order Taylor expansions.
inline constexpr double kSmallAngle = 1e-8;

Mat3 skew(const Vec3& v);
Vec3 vee(const Mat3& m);

Mat3 so3_exp(const Vec3& phi);
// Left Jacobian of SO(3); equals the V matrix of the SE(3) exponential.
Mat3 so3_left_jacobian(const Vec3& phi);
Vec3 so3_log(const Mat3& rotation);

Pose exp_twist(const Twist& xi);
Twist log_pose(const Pose& pose);

// Left Jacobian of SE(3) in (rho, phi) layout:
//   exp(xi + eps) ~= exp(J(xi) eps) * exp(xi)
Mat6 se3_left_jacobian(const Twist& xi);

// Closest rotation in Frobenius norm (SVD projection with det fix).
Mat3 nearest_rotation(const Mat3& m);

bool is_rotation(const Mat3& m, double tol = 1e-9);

double rotation_error_deg(const Pose& a, const Pose& b);
double translation_error(const Pose& a, const Pose& b);

nlohmann::json pose_to_json(const Pose& pose);
Pose pose_from_json(const nlohmann::json& j);
Pose load_pose(const std::string& path);
void save_pose(const std::string& path, const Pose& pose);

}  // namespace easyhec
