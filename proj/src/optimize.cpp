#include "easyhec/optimize.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "easyhec/error.hpp"
#include "easyhec/parallel.hpp"

namespace easyhec {

Observation Observation::make(const RobotModel& robot, JointPose q, Mask mask) {
  auto poses = forward_kinematics(robot, q);
  return Observation{std::move(q), std::move(mask), std::move(poses)};
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidArgument("optimizer: learning_rate must be positive");
  if (steps < 1) throw InvalidArgument("optimizer: steps must be >= 1");
  if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0)) {
    throw InvalidArgument("optimizer: beta1 and beta2 must lie in (0, 1)");
  }
  if (!(epsilon > 0.0)) throw InvalidArgument("optimizer: epsilon must be positive");
  if (!(sigma > 0.0)) throw InvalidArgument("optimizer: sigma must be positive");
  if (!(sigma_final > 0.0 && sigma_final <= sigma)) {
    throw InvalidArgument("optimizer: sigma_final must lie in (0, sigma]");
  }
  if (!(anneal_fraction > 0.0 && anneal_fraction <= 1.0)) {
    throw InvalidArgument("optimizer: anneal_fraction must lie in (0, 1]");
  }
  if (snapshot_every < 1) throw InvalidArgument("optimizer: snapshot_every must be >= 1");
}

double OptimizerConfig::sigma_at(int step) const {
  if (sigma_final == sigma) return sigma;
  const double span = anneal_fraction * steps;
  if (step >= span) return sigma_final;
  return sigma * std::pow(sigma_final / sigma, step / span);
}

std::vector<TriangleMesh> links_in_camera(const RobotModel& robot, const Pose& camera_from_base,
                                          std::span<const Pose> link_poses) {
  if (link_poses.size() != robot.dof()) {
    throw InvalidArgument("observation has " + std::to_string(link_poses.size()) +
                          " link poses, robot has " + std::to_string(robot.dof()) + " links");
  }
  std::vector<TriangleMesh> out;
  out.reserve(robot.dof());
  for (std::size_t l = 0; l < robot.dof(); ++l) {
    out.push_back(transform_mesh(robot.links[l].mesh, camera_from_base * link_poses[l]));
  }
  return out;
}

namespace {

void check_observations(std::span<const Observation> obs, const CameraIntrinsics& k) {
  if (obs.empty()) throw InvalidArgument("calibration loss needs at least one observation");
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (obs[i].mask.width() != k.width || obs[i].mask.height() != k.height) {
      throw DimensionMismatch("observation " + std::to_string(i) + " mask is " +
                              std::to_string(obs[i].mask.width()) + "x" +
                              std::to_string(obs[i].mask.height()) + ", intrinsics expect " +
                              std::to_string(k.width) + "x" + std::to_string(k.height));
    }
  }
}

struct ViewTerm {
  double loss = 0.0;
  Vec6 grad_left = Vec6::Zero();  // gradient w.r.t. a left increment at the current pose
};

ViewTerm view_term(const Pose& pose, const RobotModel& robot, const Observation& ob,
                   const CameraIntrinsics& k, double sigma, bool with_grad) {
  const auto links = links_in_camera(robot, pose, ob.link_poses);
  const auto res = soft_silhouette_residual(links, k, sigma, ob.mask, with_grad);
  const double n_pix = static_cast<double>(k.width) * k.height;
  ViewTerm out;
  out.loss = res.sum_sq / n_pix;
  if (!with_grad) return out;
  for (std::size_t l = 0; l < links.size(); ++l) {
    const auto& verts = links[l].vertices();
    for (std::size_t j = 0; j < verts.size(); ++j) {
      const Vec2& g_uv = res.vertex_grad[l][j];
      if (g_uv.x() == 0.0 && g_uv.y() == 0.0) continue;
      const Vec3& p = verts[j];
      const double iz = 1.0 / p.z();
      // d(u, v)/d(p) for the pinhole model.
      const Vec3 g_p(g_uv.x() * k.fx * iz, g_uv.y() * k.fy * iz,
                     -(g_uv.x() * k.fx * p.x() + g_uv.y() * k.fy * p.y()) * iz * iz);
      // p' = p + eps_rho + eps_phi x p
      out.grad_left.head<3>() += g_p;
      out.grad_left.tail<3>() += p.cross(g_p);
    }
  }
  out.grad_left /= n_pix;
  return out;
}

std::vector<ViewTerm> all_view_terms(const Pose& pose, const RobotModel& robot,
                                     std::span<const Observation> obs, const CameraIntrinsics& k,
                                     double sigma, bool with_grad) {
  check_observations(obs, k);
  std::vector<ViewTerm> terms(obs.size());
  parallel_for(obs.size(), [&](std::size_t i) {
    terms[i] = view_term(pose, robot, obs[i], k, sigma, with_grad);
  });
  return terms;
}

}  // namespace

std::vector<double> per_view_losses(const Pose& camera_from_base, const RobotModel& robot,
                                    std::span<const Observation> obs, const CameraIntrinsics& k,
                                    double sigma) {
  const auto terms = all_view_terms(camera_from_base, robot, obs, k, sigma, false);
  std::vector<double> out;
  for (const auto& t : terms) out.push_back(t.loss);
  return out;
}

double calibration_loss(const Pose& camera_from_base, const RobotModel& robot,
                        std::span<const Observation> obs, const CameraIntrinsics& k, double sigma) {
  double total = 0.0;
  for (double l : per_view_losses(camera_from_base, robot, obs, k, sigma)) total += l;
  return total / static_cast<double>(obs.size());
}

LossAndGrad calibration_loss_grad(const Twist& delta, const Pose& anchor, const RobotModel& robot,
                                  std::span<const Observation> obs, const CameraIntrinsics& k,
                                  double sigma) {
  const Pose pose = exp_twist(delta) * anchor;
  const auto terms = all_view_terms(pose, robot, obs, k, sigma, true);
  LossAndGrad out;
  Vec6 grad_left = Vec6::Zero();
  for (const auto& t : terms) {
    out.loss += t.loss;
    grad_left += t.grad_left;
  }
  const double inv_n = 1.0 / static_cast<double>(obs.size());
  out.loss *= inv_n;
  grad_left *= inv_n;
  // exp(delta + e) ~= exp(J e) exp(delta)
  out.grad = se3_left_jacobian(delta).transpose() * grad_left;
  return out;
}

Vec6 adam_step(AdamState& state, const Vec6& grad, const OptimizerConfig& config) {
  state.t += 1;
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * grad;
  state.v = config.beta2 * state.v + (1.0 - config.beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(config.beta1, state.t);
  const double bc2 = 1.0 - std::pow(config.beta2, state.t);
  Vec6 update;
  for (int i = 0; i < 6; ++i) {
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    update[i] = -config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
  return update;
}

namespace {

std::string describe(const Pose& pose) {
  std::ostringstream os;
  os << pose_to_json(pose).dump();
  return os.str();
}

}  // namespace

OptimizeResult optimize_pose(const Pose& init, const RobotModel& robot,
                             std::span<const Observation> obs, const CameraIntrinsics& k,
                             const OptimizerConfig& config) {
  config.validate();
  check_observations(obs, k);
  OptimizeResult result;
  AdamState adam;
  Vec6 delta = Vec6::Zero();
  for (int step = 0; step <= config.steps; ++step) {
    const Twist tw = Twist::from_vector(delta);
    const Pose pose = exp_twist(tw) * init;
    const bool last = step == config.steps;
    const double sigma = config.sigma_at(step);
    LossAndGrad lg;
    if (last) {
      lg.loss = calibration_loss(pose, robot, obs, k, sigma);
    } else {
      lg = calibration_loss_grad(tw, init, robot, obs, k, sigma);
    }
    if (!std::isfinite(lg.loss) || !lg.grad.allFinite()) {
      throw NumericalError("non-finite loss at step " + std::to_string(step) +
                           ", pose " + describe(pose));
    }
    if (last || step % config.snapshot_every == 0) {
      result.trajectory.push_back({step, pose, lg.loss, sigma});
    }
    if (!last) delta += adam_step(adam, lg.grad, config);
  }
  // Losses at different temperatures are not comparable; pick among the
  // snapshots at the final one (the last step always is).
  const double final_sigma = config.sigma_at(config.steps);
  result.initial_loss = result.trajectory.front().sigma == final_sigma
                            ? result.trajectory.front().loss
                            : calibration_loss(init, robot, obs, k, final_sigma);
  const Snapshot* best = nullptr;
  for (const auto& s : result.trajectory) {
    if (s.sigma == final_sigma && (best == nullptr || s.loss < best->loss)) best = &s;
  }
  result.pose = best->pose;
  result.loss = best->loss;
  result.best_step = best->step;
  return result;
}

CandidateSample sample_pose_candidates(const Trajectory& traj, int k, int lo_step, int hi_step,
                                       Rng& rng) {
  if (k < 1) throw InvalidArgument("candidate count must be >= 1");
  std::vector<const Snapshot*> window;
  for (const auto& s : traj) {
    if (s.step >= lo_step && s.step <= hi_step) window.push_back(&s);
  }
  if (window.empty()) {
    throw InvalidArgument("no trajectory snapshots inside step window [" + std::to_string(lo_step) +
                          ", " + std::to_string(hi_step) + "]");
  }
  CandidateSample out;
  if (static_cast<int>(window.size()) <= k) {
    out.exhausted = static_cast<int>(window.size()) < k;
    if (out.exhausted) {
      spdlog::warn("only {} snapshots in window [{}, {}], wanted {}", window.size(), lo_step,
                   hi_step, k);
    }
    for (const auto* s : window) out.poses.push_back(s->pose);
    return out;
  }
  // Partial Fisher-Yates keeps the draw independent of library sampling details.
  std::vector<std::size_t> idx(window.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  std::sort(idx.begin(), idx.begin() + k);
  for (int i = 0; i < k; ++i) out.poses.push_back(window[idx[i]]->pose);
  return out;
}

void write_trajectory_jsonl(const std::string& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trajectory: " + path);
  for (const auto& s : traj) {
    nlohmann::json j = pose_to_json(s.pose);
    j["step"] = s.step;
    j["loss"] = s.loss;
    j["sigma"] = s.sigma;
    out << j.dump() << "\n";
  }
}

}  // namespace easyhec
