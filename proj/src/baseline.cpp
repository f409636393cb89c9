#include "easyhec/baseline.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "easyhec/error.hpp"

namespace easyhec {

namespace {

// Max distance of the points from their best-fit plane.
double planarity(std::span<const Vec3> pts) {
  Vec3 mean = Vec3::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  const Vec3 normal = eig.eigenvectors().col(0);
  double worst = 0.0;
  for (const auto& p : pts) worst = std::max(worst, std::abs((p - mean).dot(normal)));
  return worst;
}

}  // namespace

void MarkerModel::validate() const {
  if (points.size() < 6) throw ValidationError("marker needs at least 6 points");
  if (planarity(points) <= 1e-6) throw ValidationError("marker points are coplanar");
}

MarkerModel MarkerModel::default_pattern() {
  // Two offset squares on a small block mounted past the flange.
  return MarkerModel{{
      {-0.05, -0.05, 0.10}, {0.05, -0.05, 0.10}, {0.05, 0.05, 0.10}, {-0.05, 0.05, 0.10},
      {-0.03, -0.04, 0.16}, {0.04, -0.03, 0.16}, {0.03, 0.04, 0.16}, {-0.04, 0.03, 0.16},
  }};
}

double reprojection_rms(const Pose& pose, std::span<const Vec3> points3d,
                        std::span<const Vec2> points2d, const CameraIntrinsics& k) {
  double sum = 0.0;
  for (std::size_t i = 0; i < points3d.size(); ++i) {
    const Vec3 pc = pose.apply(points3d[i]);
    const Vec2 uv(k.fx * pc.x() / pc.z() + k.cx, k.fy * pc.y() / pc.z() + k.cy);
    sum += (uv - points2d[i]).squaredNorm();
  }
  return std::sqrt(sum / static_cast<double>(points3d.size()));
}

namespace {

// Linear estimate from normalized image coordinates with Hartley conditioning.
Pose pnp_dlt(std::span<const Vec3> pts, std::span<const Vec2> px, const CameraIntrinsics& k) {
  const std::size_t n = pts.size();
  std::vector<Vec2> xn(n);
  for (std::size_t i = 0; i < n; ++i) {
    xn[i] = Vec2((px[i].x() - k.cx) / k.fx, (px[i].y() - k.cy) / k.fy);
  }
  Vec3 c3 = Vec3::Zero();
  Vec2 c2 = Vec2::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    c3 += pts[i];
    c2 += xn[i];
  }
  c3 /= static_cast<double>(n);
  c2 /= static_cast<double>(n);
  double s3 = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s3 += (pts[i] - c3).norm();
    s2 += (xn[i] - c2).norm();
  }
  s3 = std::sqrt(3.0) * static_cast<double>(n) / s3;
  s2 = std::sqrt(2.0) * static_cast<double>(n) / s2;

  Eigen::MatrixXd a(2 * n, 12);
  a.setZero();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 p = s3 * (pts[i] - c3);
    const Vec2 x = s2 * (xn[i] - c2);
    const Eigen::RowVector4d ph(p.x(), p.y(), p.z(), 1.0);
    a.block<1, 4>(2 * i, 0) = ph;
    a.block<1, 4>(2 * i, 8) = -x.x() * ph;
    a.block<1, 4>(2 * i + 1, 4) = ph;
    a.block<1, 4>(2 * i + 1, 8) = -x.y() * ph;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd sol = svd.matrixV().col(11);
  Eigen::Matrix<double, 3, 4> pn;
  pn << sol.segment<4>(0).transpose(), sol.segment<4>(4).transpose(), sol.segment<4>(8).transpose();

  Mat3 t2_inv = Mat3::Identity();
  t2_inv(0, 0) = t2_inv(1, 1) = 1.0 / s2;
  t2_inv(0, 2) = c2.x();
  t2_inv(1, 2) = c2.y();
  Mat4 t3 = Mat4::Identity();
  t3.topLeftCorner<3, 3>() *= s3;
  t3.topRightCorner<3, 1>() = -s3 * c3;
  Eigen::Matrix<double, 3, 4> p = t2_inv * pn * t3;

  // P is defined up to sign; pick the one that puts the points in front.
  int in_front = 0;
  for (std::size_t i = 0; i < n; ++i) in_front += p.row(2).dot(pts[i].homogeneous()) > 0.0;
  if (2 * in_front < static_cast<int>(n)) p = -p;
  const Mat3 m = p.leftCols<3>();
  Eigen::JacobiSVD<Mat3> msvd(m);
  const double scale = msvd.singularValues().mean();
  if (!(scale > 0.0) || !std::isfinite(scale)) throw DegeneracyError("PnP: degenerate DLT solution");
  return Pose(nearest_rotation(m / scale), p.col(3) / scale);
}

bool all_in_front(const Pose& pose, std::span<const Vec3> pts) {
  for (const auto& p : pts) {
    if (!(pose.apply(p).z() > 0.0)) return false;
  }
  return true;
}

// Gauss-Newton on reprojection error from a starting pose. Returns the cost
// (infinite when no pose with every point in front was reached).
double refine_pnp(Pose& pose, std::span<const Vec3> points3d, std::span<const Vec2> points2d,
                  const CameraIntrinsics& k) {
  const std::size_t n = points3d.size();
  double cost = all_in_front(pose, points3d) ? reprojection_rms(pose, points3d, points2d, k)
                                             : std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 20; ++iter) {
    Eigen::Matrix<double, 6, 6> jtj = Eigen::Matrix<double, 6, 6>::Zero();
    Vec6 jtr = Vec6::Zero();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3 pc = pose.apply(points3d[i]);
      // Points behind the camera still give a usable direction via |z|.
      const double iz = 1.0 / std::max(std::abs(pc.z()), 1e-9);
      Eigen::Matrix<double, 2, 3> dproj;
      dproj << k.fx * iz, 0, -k.fx * pc.x() * iz * iz, 0, k.fy * iz, -k.fy * pc.y() * iz * iz;
      Eigen::Matrix<double, 3, 6> dp;
      dp << Mat3::Identity(), -skew(pc);
      const Eigen::Matrix<double, 2, 6> j = dproj * dp;
      const Vec2 r(k.fx * pc.x() * iz + k.cx - points2d[i].x(),
                   k.fy * pc.y() * iz + k.cy - points2d[i].y());
      jtj += j.transpose() * j;
      jtr += j.transpose() * r;
    }
    const Vec6 step = jtj.ldlt().solve(-jtr);
    if (!step.allFinite()) break;
    // Backtrack until the step lowers the cost with every point in front.
    bool improved = false;
    for (double scale = 1.0; scale > 1e-3 && !improved; scale *= 0.5) {
      const Pose next = exp_twist(Twist::from_vector(scale * step)) * pose;
      if (!all_in_front(next, points3d)) continue;
      const double next_cost = reprojection_rms(next, points3d, points2d, k);
      if (next_cost < cost || (std::isinf(cost) && std::isfinite(next_cost))) {
        pose = next;
        cost = next_cost;
        improved = true;
      }
    }
    if (!improved || step.norm() < 1e-14) break;
  }
  return cost;
}

// Keeps a rotation and puts the point centroid on the ray through the pixel
// centroid, at the depth that matches the pattern's apparent size.
Pose centroid_ray_pose(const Mat3& rotation, std::span<const Vec3> pts, std::span<const Vec2> px,
                       const CameraIntrinsics& k) {
  Vec3 c3 = Vec3::Zero();
  Vec2 c2 = Vec2::Zero();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    c3 += pts[i];
    c2 += px[i];
  }
  c3 /= static_cast<double>(pts.size());
  c2 /= static_cast<double>(pts.size());
  double s3 = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    s3 += (pts[i] - c3).norm();
    s2 += (px[i] - c2).norm();
  }
  const double depth = s2 > 0.0 ? 0.5 * (k.fx + k.fy) * s3 / s2 : 1.0;
  const Vec3 ray((c2.x() - k.cx) / k.fx, (c2.y() - k.cy) / k.fy, 1.0);
  return Pose(rotation, depth * ray - rotation * c3);
}

}  // namespace

Pose solve_pnp(std::span<const Vec3> points3d, std::span<const Vec2> points2d,
               const CameraIntrinsics& k) {
  if (points3d.size() != points2d.size()) throw InvalidArgument("PnP: correspondence count mismatch");
  if (points3d.size() < 6) throw InvalidArgument("PnP needs at least 6 correspondences");
  if (planarity(points3d) <= 1e-6) throw DegeneracyError("PnP: 3D points are coplanar");

  // Under noise a small pattern can push the linear estimate through the
  // camera; a second start from the centroid ray covers that case.
  Pose pose = pnp_dlt(points3d, points2d, k);
  Pose alt = centroid_ray_pose(pose.rotation(), points3d, points2d, k);
  const double cost = refine_pnp(pose, points3d, points2d, k);
  const double alt_cost = refine_pnp(alt, points3d, points2d, k);
  if (alt_cost < cost) pose = alt;
  if (!std::isfinite(std::min(cost, alt_cost))) {
    throw NonConvergenceError("PnP: refinement diverged (points behind the camera)");
  }
  return pose;
}

Pose solve_ax_xb(std::span<const std::pair<Pose, Pose>> pairs) {
  if (pairs.size() < 2) throw InvalidArgument("AX=XB needs at least two motion pairs");
  std::vector<Vec3> alpha, beta;
  for (const auto& [a, b] : pairs) {
    alpha.push_back(so3_log(a.rotation()));
    beta.push_back(so3_log(b.rotation()));
  }
  // Require two non-parallel rotation axes among the A motions.
  bool spread = false;
  for (std::size_t i = 0; i < alpha.size() && !spread; ++i) {
    if (alpha[i].norm() < 1e-9) continue;
    for (std::size_t j = i + 1; j < alpha.size(); ++j) {
      if (alpha[j].norm() < 1e-9) continue;
      if (alpha[i].normalized().cross(alpha[j].normalized()).norm() > 1e-6) {
        spread = true;
        break;
      }
    }
  }
  if (!spread) throw DegeneracyError("AX=XB: motion rotation axes are all parallel (or zero)");

  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < alpha.size(); ++i) h += beta[i] * alpha[i].transpose();
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0 ? -1.0 : 1.0;
  const Mat3 rx = svd.matrixV() * d * svd.matrixU().transpose();

  Eigen::MatrixXd lhs(3 * pairs.size(), 3);
  Eigen::VectorXd rhs(3 * pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& [a, b] = pairs[i];
    lhs.block<3, 3>(3 * i, 0) = a.rotation() - Mat3::Identity();
    rhs.segment<3>(3 * i) = rx * b.translation() - a.translation();
  }
  const Vec3 tx = lhs.colPivHouseholderQr().solve(rhs);
  return Pose(rx, tx);
}

MarkerCalibration marker_calibrate(const Scenario& sc, std::span<const JointPose> joint_poses,
                                   const MarkerOptions& options, Rng& rng) {
  options.marker.validate();
  if (joint_poses.size() < 3) throw InvalidArgument("marker calibration needs at least 3 joint poses");
  const RobotModel& robot = *sc.robot;
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<Pose> cam_from_marker;
  std::vector<Pose> base_from_flange;
  for (const auto& q : joint_poses) {
    const Pose flange = forward_kinematics(robot, q).back();
    const Pose truth = sc.camera_from_base * flange * options.fixture_error;
    std::vector<Vec2> px;
    bool visible = true;
    for (const auto& p : options.marker.points) {
      const Vec3 pc = truth.apply(p);
      if (!(pc.z() > sc.k.near)) {
        visible = false;
        break;
      }
      const Vec2 uv = project_point(sc.k, pc);
      if (uv.x() < 0 || uv.y() < 0 || uv.x() >= sc.k.width || uv.y() >= sc.k.height) {
        visible = false;
        break;
      }
      px.push_back(uv);
    }
    if (!visible) continue;
    if (options.pixel_noise_sigma > 0.0) {
      for (auto& uv : px) {
        uv.x() += options.pixel_noise_sigma * noise(rng);
        uv.y() += options.pixel_noise_sigma * noise(rng);
      }
    }
    cam_from_marker.push_back(solve_pnp(options.marker.points, px, sc.k));
    base_from_flange.push_back(flange);
  }
  if (cam_from_marker.size() < 3) {
    throw VisibilityError("marker visible in only " + std::to_string(cam_from_marker.size()) +
                          " of " + std::to_string(joint_poses.size()) + " joint poses (need 3)");
  }
  // A_i = T_cm,i T_cm,0^-1 = X B_i X^-1 with B_i = T_be,i T_be,0^-1 and X = T_cb.
  std::vector<std::pair<Pose, Pose>> pairs;
  const Pose cm0_inv = cam_from_marker[0].inverse();
  const Pose be0_inv = base_from_flange[0].inverse();
  for (std::size_t i = 1; i < cam_from_marker.size(); ++i) {
    pairs.emplace_back(cam_from_marker[i] * cm0_inv, base_from_flange[i] * be0_inv);
  }
  return MarkerCalibration{solve_ax_xb(pairs), static_cast<int>(cam_from_marker.size()),
                           static_cast<int>(joint_poses.size())};
}

}  // namespace easyhec
