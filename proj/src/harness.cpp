#include "easyhec/harness.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <sstream>

#include "easyhec/error.hpp"
#include "easyhec/parallel.hpp"

namespace easyhec {

namespace {

enum Stream : std::uint64_t {
  kScenarioStream = 0,
  kInitStream = 1,
  kNoiseStream = 2,
  kSelectStream = 3,
  kCandidateStream = 4,
  kMarkerStream = 5,
};

constexpr double kDeg = std::numbers::pi / 180.0;

Vec3 random_unit(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    Vec3 v(n(rng), n(rng), n(rng));
    const double len = v.norm();
    if (len > 1e-9) return v / len;
  }
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x5eedu};
  return Rng(seq);
}

namespace {

Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 f = (target - eye).normalized();
  Vec3 x = f.cross(up);
  if (x.norm() < 1e-9) x = f.cross(Vec3::UnitX());
  x.normalize();
  const Vec3 y = f.cross(x);
  Mat3 base_from_cam;
  base_from_cam << x, y, f;
  const Mat3 r = base_from_cam.transpose();
  return Pose(nearest_rotation(r), -(nearest_rotation(r) * eye));
}

double coverage(const Scenario& sc, const JointPose& q) {
  const auto links = links_in_camera(*sc.robot, sc.camera_from_base, forward_kinematics(*sc.robot, q));
  const Mask m = render_hard_mask(links, sc.k);
  return m.sum() / static_cast<double>(m.size());
}

}  // namespace

Scenario generate_scenario(std::shared_ptr<const RobotModel> robot, const CameraIntrinsics& k,
                           std::uint64_t seed, const ScenarioOptions& opt) {
  k.validate();
  robot->validate();
  Rng rng = make_rng(seed, kScenarioStream);
  std::uniform_real_distribution<double> dist(opt.min_distance, opt.max_distance);
  std::uniform_real_distribution<double> elev(opt.min_elevation_deg * kDeg, opt.max_elevation_deg * kDeg);
  std::uniform_real_distribution<double> azim(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> jitter(0.0, opt.up_jitter_deg * kDeg);

  for (int attempt = 0; attempt < opt.max_attempts; ++attempt) {
    const double r = dist(rng);
    const double e = elev(rng);
    const double a = azim(rng);
    const Vec3 target(0.0, 0.0, opt.target_height);
    const Vec3 eye = target + r * Vec3(std::cos(e) * std::cos(a), std::cos(e) * std::sin(a), std::sin(e));
    const Vec3 up = so3_exp(random_unit(rng) * jitter(rng)) * Vec3::UnitZ();

    Scenario sc;
    sc.robot = robot;
    sc.k = k;
    sc.camera_from_base = look_at(eye, target, up);
    sc.seed = seed;
    JointPose q0;
    bool found = false;
    for (int t = 0; t < 100 && !found; ++t) {
      q0 = sample_joint_pose(*robot, rng);
      found = is_valid_pose(*robot, q0);
    }
    if (!found) continue;
    sc.q0 = q0;
    if (sc.camera_from_base.apply(Vec3::Zero()).z() <= k.near) continue;
    if (coverage(sc, q0) >= opt.min_coverage) return sc;
  }
  throw GenerationError("could not generate a scenario with visible robot after " +
                        std::to_string(opt.max_attempts) + " attempts (seed " +
                        std::to_string(seed) + ")");
}

void NoiseModel::validate() const {
  if (!(flip_prob >= 0.0 && flip_prob <= 0.2)) {
    throw InvalidArgument("noise: flip_prob must lie in [0, 0.2]");
  }
}

Mask morph(const Mask& mask, int radius) {
  if (radius == 0) return mask;
  const bool dilate = radius > 0;
  const int r = std::abs(radius);
  const int w = mask.width(), h = mask.height();
  // Separable max/min filter over a (2r+1)^2 square.
  Mask tmp(w, h), out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double v = dilate ? 0.0 : 1.0;
      for (int dx = -r; dx <= r; ++dx) {
        const int xx = x + dx;
        if (xx < 0 || xx >= w) continue;
        v = dilate ? std::max(v, mask.at(xx, y)) : std::min(v, mask.at(xx, y));
      }
      tmp.at(x, y) = v;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double v = dilate ? 0.0 : 1.0;
      for (int dy = -r; dy <= r; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        v = dilate ? std::max(v, tmp.at(x, yy)) : std::min(v, tmp.at(x, yy));
      }
      out.at(x, y) = v;
    }
  }
  return out;
}

Mask observe(const Scenario& sc, const JointPose& q, const NoiseModel& noise, Rng& rng) {
  noise.validate();
  const auto links = links_in_camera(*sc.robot, sc.camera_from_base, forward_kinematics(*sc.robot, q));
  Mask m = morph(render_hard_mask(links, sc.k), noise.morph_radius);
  if (noise.flip_prob > 0.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& v : m.values()) {
      if (u(rng) < noise.flip_prob) v = 1.0 - v;
    }
  }
  return m;
}

std::string to_string(Selector s) { return s == Selector::kSE ? "SE" : "random"; }

Selector selector_from_string(const std::string& s) {
  if (s == "SE" || s == "se") return Selector::kSE;
  if (s == "random" || s == "rand") return Selector::kRandom;
  throw InvalidArgument("unknown selector '" + s + "' (expected se or random)");
}

Pose initial_pose(const Scenario& sc, const InitMode& init) {
  if (init.explicit_pose) return *init.explicit_pose;
  Rng rng = make_rng(sc.seed, kInitStream);
  const Vec3 axis = random_unit(rng);
  const Vec3 dir = random_unit(rng);
  const double distance = sc.camera_from_base.translation().norm();
  const Pose delta(so3_exp(axis * init.rotation_deg * kDeg), dir * init.translation_fraction * distance);
  return sc.camera_from_base * delta;
}

namespace {

JointPose random_valid_pose(const RobotModel& robot, Rng& rng) {
  for (int i = 0; i < 10000; ++i) {
    JointPose q = sample_joint_pose(robot, rng);
    if (is_valid_pose(robot, q)) return q;
  }
  throw ExhaustionError("no valid joint pose found in 10000 random samples");
}

}  // namespace

Report run_calibration_loop(const Scenario& sc, int n_views, Selector selector,
                            const LoopConfig& config) {
  if (n_views < 1) throw InvalidArgument("n_views must be >= 1");
  const auto start = std::chrono::steady_clock::now();
  const RobotModel& robot = *sc.robot;
  Rng noise_rng = make_rng(sc.seed, kNoiseStream);
  Rng select_rng = make_rng(sc.seed, kSelectStream);
  Rng candidate_rng = make_rng(sc.seed, kCandidateStream);

  Report report;
  report.selector = selector;
  report.seed = sc.seed;
  report.init = initial_pose(sc, config.init);

  std::vector<Observation> obs;
  Pose current = report.init;
  JointPose q = sc.q0;
  double score = 0.0;
  for (int view = 1; view <= n_views; ++view) {
    try {
      Mask m = observe(sc, q, config.noise, noise_rng);
      report.observed.push_back(m);
      obs.push_back(Observation::make(robot, q, std::move(m)));
      const OptimizeResult res = optimize_pose(current, robot, obs, sc.k, config.optimizer);
      current = res.pose;
      ReportEntry entry;
      entry.views = view;
      entry.rotation_error_deg = rotation_error_deg(current, sc.camera_from_base);
      entry.translation_error_cm = 100.0 * translation_error(current, sc.camera_from_base);
      entry.loss = res.loss;
      entry.pose = current;
      entry.q = q;
      entry.selection_score = score;
      report.entries.push_back(std::move(entry));
      if (view == n_views) break;
      if (selector == Selector::kSE) {
        const CandidateSample cands =
            sample_pose_candidates(res.trajectory, config.exploration.n_candidates,
                                   config.candidate_window_lo, config.candidate_window_hi,
                                   candidate_rng);
        if (cands.poses.size() < 2) {
          throw InvalidArgument("fewer than two pose candidates in the trajectory window");
        }
        const ExplorationResult next =
            select_next_joint_pose(robot, cands.poses, sc.k, config.exploration, select_rng);
        q = next.q;
        score = next.score;
      } else {
        q = random_valid_pose(robot, select_rng);
        score = 0.0;
      }
    } catch (const Error& e) {
      throw Error(e.kind(), "iteration " + std::to_string(view) + ": " + e.what());
    }
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

nlohmann::json report_to_json(const Report& report) {
  nlohmann::json j;
  j["selector"] = to_string(report.selector);
  j["seed"] = report.seed;
  j["init"] = pose_to_json(report.init);
  j["iterations"] = nlohmann::json::array();
  for (const auto& e : report.entries) {
    j["iterations"].push_back({{"views", e.views},
                               {"rotation_error_deg", e.rotation_error_deg},
                               {"translation_error_cm", e.translation_error_cm},
                               {"loss", e.loss},
                               {"selection_score", e.selection_score},
                               {"q", e.q.q},
                               {"pose", pose_to_json(e.pose)}});
  }
  return j;
}

std::string report_to_csv(const Report& report) {
  std::ostringstream os;
  os << "selector,seed,views,rotation_error_deg,translation_error_cm,loss,selection_score\n";
  for (const auto& e : report.entries) {
    os << to_string(report.selector) << "," << report.seed << "," << e.views << ","
       << fmt_double(e.rotation_error_deg) << "," << fmt_double(e.translation_error_cm) << ","
       << fmt_double(e.loss) << "," << fmt_double(e.selection_score) << "\n";
  }
  return os.str();
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

void summarize(std::span<const double> v, double& mean, double& med, double& sd) {
  if (v.empty()) {
    mean = med = sd = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  med = median(std::vector<double>(v.begin(), v.end()));
  sd = 0.0;
  if (v.size() > 1) {
    for (double x : v) sd += (x - mean) * (x - mean);
    sd = std::sqrt(sd / static_cast<double>(v.size() - 1));
  }
}

std::vector<JointPose> visible_marker_poses(const Scenario& sc, const MarkerModel& marker, int count,
                                            Rng& rng, int& attempted) {
  std::vector<JointPose> out;
  attempted = 0;
  const int max_attempts = 50 * count;
  while (static_cast<int>(out.size()) < count && attempted < max_attempts) {
    ++attempted;
    JointPose q = sample_joint_pose(*sc.robot, rng);
    if (!is_valid_pose(*sc.robot, q)) continue;
    const Pose cam_from_flange = sc.camera_from_base * forward_kinematics(*sc.robot, q).back();
    bool visible = true;
    for (const auto& p : marker.points) {
      const Vec3 pc = cam_from_flange.apply(p);
      if (!(pc.z() > sc.k.near)) {
        visible = false;
        break;
      }
      const Vec2 uv = project_point(sc.k, pc);
      if (uv.x() < 0 || uv.y() < 0 || uv.x() >= sc.k.width || uv.y() >= sc.k.height) {
        visible = false;
        break;
      }
    }
    if (visible) out.push_back(std::move(q));
  }
  return out;
}

template <typename T>
std::vector<T> or_default(const std::vector<T>& axis, const T& fallback) {
  return axis.empty() ? std::vector<T>{fallback} : axis;
}

}  // namespace

MarkerCalibration run_marker_baseline(const Scenario& sc, int n_poses, double pixel_noise_px) {
  if (n_poses < 3) throw InvalidArgument("marker baseline needs at least 3 poses");
  MarkerOptions options;
  options.pixel_noise_sigma = pixel_noise_px;
  Rng rng = make_rng(sc.seed, kMarkerStream);
  int attempted = 0;
  const auto poses = visible_marker_poses(sc, options.marker, n_poses, rng, attempted);
  return marker_calibrate(sc, poses, options, rng);
}

BatchResult evaluate_batch(const BatchConfig& config) {
  if (config.n_scenes < 1) throw InvalidArgument("n_scenes must be >= 1");
  if (config.n_views < 1) throw InvalidArgument("n_views must be >= 1");

  // Cells: SE cells span the full grid; random ignores the exploration axes.
  const auto joint_axis = or_default(config.grid.n_joint_samples, config.loop.exploration.n_joint_samples);
  const auto cand_axis = or_default(config.grid.n_candidates, config.loop.exploration.n_candidates);
  const auto noise_axis = or_default(config.grid.noise, config.loop.noise);
  const auto sel_axis = or_default(config.grid.selectors, Selector::kSE);

  BatchResult result;
  for (const auto& noise : noise_axis) {
    for (Selector sel : sel_axis) {
      if (sel == Selector::kSE) {
        for (int nj : joint_axis) {
          for (int nc : cand_axis) result.cells.push_back({CellKey{"SE", nj, nc, noise}, {}});
        }
      } else {
        result.cells.push_back({CellKey{"random", 0, 0, noise}, {}});
      }
    }
  }
  if (config.baseline) result.cells.push_back({CellKey{"marker", 0, 0, NoiseModel{}}, {}});

  const std::size_t n_scenes = static_cast<std::size_t>(config.n_scenes);
  std::vector<std::optional<Scenario>> scenes(n_scenes);
  std::vector<std::string> scene_errors(n_scenes);
  parallel_for(n_scenes, [&](std::size_t s) {
    try {
      scenes[s] = generate_scenario(config.robot, config.k, config.first_seed + s);
    } catch (const Error& e) {
      scene_errors[s] = e.what();
    }
  });

  for (auto& cell : result.cells) cell.scenes.resize(n_scenes);
  const std::size_t n_jobs = result.cells.size() * n_scenes;
  parallel_for(n_jobs, [&](std::size_t job) {
    CellResult& cell = result.cells[job / n_scenes];
    const std::size_t s = job % n_scenes;
    SceneResult& out = cell.scenes[s];
    out.seed = config.first_seed + s;
    if (!scenes[s]) {
      out.failed = true;
      out.error = scene_errors[s];
      return;
    }
    const Scenario& sc = *scenes[s];
    try {
      if (cell.key.method == "marker") {
        const MarkerCalibration mc =
            run_marker_baseline(sc, config.baseline_poses, config.baseline_noise_px);
        out.rotation_deg.push_back(rotation_error_deg(mc.camera_from_base, sc.camera_from_base));
        out.translation_cm.push_back(100.0 * translation_error(mc.camera_from_base, sc.camera_from_base));
        out.marker_poses_used = mc.poses_used;
        return;
      }
      LoopConfig loop = config.loop;
      loop.noise = cell.key.noise;
      if (cell.key.method == "SE") {
        loop.exploration.n_joint_samples = cell.key.n_joint_samples;
        loop.exploration.n_candidates = cell.key.n_candidates;
      }
      const Report rep = run_calibration_loop(
          sc, config.n_views, cell.key.method == "SE" ? Selector::kSE : Selector::kRandom, loop);
      for (const auto& e : rep.entries) {
        out.rotation_deg.push_back(e.rotation_error_deg);
        out.translation_cm.push_back(e.translation_error_cm);
      }
    } catch (const Error& e) {
      out.failed = true;
      out.error = e.what();
      spdlog::warn("scene seed {} ({}): {}", out.seed, cell.key.method, e.what());
    }
  });

  for (const auto& cell : result.cells) {
    const int views = cell.key.method == "marker" ? 1 : config.n_views;
    for (int v = 0; v < views; ++v) {
      CellStats st;
      st.key = cell.key;
      st.views = cell.key.method == "marker" ? 0 : v + 1;
      std::vector<double> rot, trans;
      for (const auto& sr : cell.scenes) {
        if (sr.failed || static_cast<int>(sr.rotation_deg.size()) <= v) {
          ++st.n_failed;
          continue;
        }
        rot.push_back(sr.rotation_deg[v]);
        trans.push_back(sr.translation_cm[v]);
      }
      st.n_ok = static_cast<int>(rot.size());
      summarize(rot, st.rot_mean, st.rot_median, st.rot_std);
      summarize(trans, st.trans_mean, st.trans_median, st.trans_std);
      result.stats.push_back(st);
    }
  }
  return result;
}

std::string batch_to_csv(const BatchResult& result) {
  std::ostringstream os;
  os << "method,n_joint_samples,n_candidates,flip_prob,morph_radius,views,n_ok,n_failed,"
        "rot_mean_deg,rot_median_deg,rot_std_deg,trans_mean_cm,trans_median_cm,trans_std_cm\n";
  for (const auto& s : result.stats) {
    os << s.key.method << "," << s.key.n_joint_samples << "," << s.key.n_candidates << ","
       << fmt_double(s.key.noise.flip_prob) << "," << s.key.noise.morph_radius << "," << s.views
       << "," << s.n_ok << "," << s.n_failed << "," << fmt_double(s.rot_mean) << ","
       << fmt_double(s.rot_median) << "," << fmt_double(s.rot_std) << ","
       << fmt_double(s.trans_mean) << "," << fmt_double(s.trans_median) << ","
       << fmt_double(s.trans_std) << "\n";
  }
  return os.str();
}

nlohmann::json batch_to_json(const BatchResult& result) {
  auto key_json = [](const CellKey& k) {
    return nlohmann::json{{"method", k.method},
                          {"n_joint_samples", k.n_joint_samples},
                          {"n_candidates", k.n_candidates},
                          {"flip_prob", k.noise.flip_prob},
                          {"morph_radius", k.noise.morph_radius}};
  };
  nlohmann::json j;
  j["cells"] = nlohmann::json::array();
  for (const auto& cell : result.cells) {
    nlohmann::json cj = key_json(cell.key);
    cj["scenes"] = nlohmann::json::array();
    for (const auto& s : cell.scenes) {
      nlohmann::json sj{{"seed", s.seed}, {"failed", s.failed}};
      if (s.failed) sj["error"] = s.error;
      sj["rotation_error_deg"] = s.rotation_deg;
      sj["translation_error_cm"] = s.translation_cm;
      if (cell.key.method == "marker") sj["marker_poses_used"] = s.marker_poses_used;
      cj["scenes"].push_back(sj);
    }
    j["cells"].push_back(cj);
  }
  j["summary"] = nlohmann::json::array();
  for (const auto& s : result.stats) {
    nlohmann::json sj = key_json(s.key);
    sj["views"] = s.views;
    sj["n_ok"] = s.n_ok;
    sj["n_failed"] = s.n_failed;
    sj["rot_mean_deg"] = s.rot_mean;
    sj["rot_median_deg"] = s.rot_median;
    sj["rot_std_deg"] = s.rot_std;
    sj["trans_mean_cm"] = s.trans_mean;
    sj["trans_median_cm"] = s.trans_median;
    sj["trans_std_cm"] = s.trans_std;
    j["summary"].push_back(sj);
  }
  return j;
}

std::vector<double> pck(std::span<const double> errors, std::span<const double> thresholds) {
  if (errors.empty()) throw InvalidArgument("pck: empty error list");
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
    throw InvalidArgument("pck: thresholds must be sorted ascending");
  }
  std::vector<double> sorted(errors.begin(), errors.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out;
  for (double t : thresholds) {
    const auto it = std::upper_bound(sorted.begin(), sorted.end(), t);
    out.push_back(static_cast<double>(it - sorted.begin()) / static_cast<double>(sorted.size()));
  }
  return out;
}

}  // namespace easyhec
