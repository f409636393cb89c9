// easyhec command-line tool. See `easyhec --help`.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "easyhec/error.hpp"
#include "easyhec/harness.hpp"
#include "easyhec/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace easyhec {
namespace {

// ---------------------------------------------------------------- config

struct RunConfig {
  std::string robot = EASYHEC_DATA_DIR "/robots/arm6/arm6.json";
  CameraIntrinsics intrinsics;
  std::uint64_t seed = 0;
  std::string output_dir = "easyhec_out";
  LoopConfig loop;

  void validate() const {
    if (!fs::exists(robot)) throw IoError("robot model not found: " + robot);
    intrinsics.validate();
    loop.optimizer.validate();
    loop.exploration.validate();
    loop.noise.validate();
    if (loop.candidate_window_lo < 0 || loop.candidate_window_hi < loop.candidate_window_lo) {
      throw ValidationError("exploration: candidate window must satisfy 0 <= lo <= hi");
    }
    if (!(loop.init.rotation_deg >= 0.0) || !(loop.init.translation_fraction >= 0.0)) {
      throw ValidationError("init: perturbation magnitudes must be >= 0");
    }
  }
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

CameraIntrinsics load_intrinsics(const std::string& path) {
  try {
    return intrinsics_from_json(read_json_file(path));
  } catch (const Error& e) {
    throw Error(e.kind(), path + ": " + e.what());
  }
}

// Unknown keys are rejected so typos don't silently fall back to defaults.
template <typename T>
void take(const json& section, const char* key, T& out, std::vector<std::string>& seen) {
  seen.emplace_back(key);
  if (section.contains(key)) out = section.at(key).get<T>();
}

void reject_unknown(const json& section, const std::string& name, const std::vector<std::string>& seen) {
  for (const auto& [key, _] : section.items()) {
    if (std::find(seen.begin(), seen.end(), key) == seen.end()) {
      throw ParseError("config: unknown key '" + key + "' in " + name);
    }
  }
}

RunConfig parse_config(const json& j, const fs::path& base_dir) {
  RunConfig c;
  c.intrinsics = load_intrinsics(EASYHEC_DATA_DIR "/camera_320x240.json");
  if (!j.is_object()) throw ParseError("config: top level must be an object");
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path.string() : (base_dir / path).lexically_normal().string();
  };
  try {
    std::vector<std::string> top;
    if (j.contains("robot")) c.robot = resolve(j.at("robot").get<std::string>());
    top.emplace_back("robot");
    if (j.contains("intrinsics")) {
      const json& ki = j.at("intrinsics");
      c.intrinsics = ki.is_string() ? load_intrinsics(resolve(ki.get<std::string>()))
                                    : intrinsics_from_json(ki);
    }
    top.emplace_back("intrinsics");
    take(j, "seed", c.seed, top);
    take(j, "output_dir", c.output_dir, top);
    for (const char* s : {"optimizer", "exploration", "noise", "init"}) top.emplace_back(s);
    reject_unknown(j, "top level", top);

    if (j.contains("optimizer")) {
      const json& o = j.at("optimizer");
      std::vector<std::string> seen;
      auto& cfg = c.loop.optimizer;
      take(o, "learning_rate", cfg.learning_rate, seen);
      take(o, "steps", cfg.steps, seen);
      take(o, "beta1", cfg.beta1, seen);
      take(o, "beta2", cfg.beta2, seen);
      take(o, "epsilon", cfg.epsilon, seen);
      take(o, "sigma", cfg.sigma, seen);
      take(o, "sigma_final", cfg.sigma_final, seen);
      take(o, "anneal_fraction", cfg.anneal_fraction, seen);
      take(o, "snapshot_every", cfg.snapshot_every, seen);
      reject_unknown(o, "optimizer", seen);
    }
    if (j.contains("exploration")) {
      const json& e = j.at("exploration");
      std::vector<std::string> seen;
      auto& cfg = c.loop.exploration;
      take(e, "n_joint_samples", cfg.n_joint_samples, seen);
      take(e, "n_candidates", cfg.n_candidates, seen);
      take(e, "render_width", cfg.render_width, seen);
      take(e, "render_height", cfg.render_height, seen);
      take(e, "sigma", cfg.sigma, seen);
      take(e, "candidate_window_lo", c.loop.candidate_window_lo, seen);
      take(e, "candidate_window_hi", c.loop.candidate_window_hi, seen);
      reject_unknown(e, "exploration", seen);
    }
    if (j.contains("noise")) {
      const json& n = j.at("noise");
      std::vector<std::string> seen;
      take(n, "flip_prob", c.loop.noise.flip_prob, seen);
      take(n, "morph_radius", c.loop.noise.morph_radius, seen);
      reject_unknown(n, "noise", seen);
    }
    if (j.contains("init")) {
      const json& i = j.at("init");
      std::vector<std::string> seen;
      take(i, "rotation_deg", c.loop.init.rotation_deg, seen);
      take(i, "translation_fraction", c.loop.init.translation_fraction, seen);
      reject_unknown(i, "init", seen);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  return c;
}

json config_to_json(const RunConfig& c) {
  const auto& o = c.loop.optimizer;
  const auto& e = c.loop.exploration;
  return json{
      {"robot", c.robot},
      {"intrinsics", intrinsics_to_json(c.intrinsics)},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"optimizer",
       {{"learning_rate", o.learning_rate},
        {"steps", o.steps},
        {"beta1", o.beta1},
        {"beta2", o.beta2},
        {"epsilon", o.epsilon},
        {"sigma", o.sigma},
        {"sigma_final", o.sigma_final},
        {"anneal_fraction", o.anneal_fraction},
        {"snapshot_every", o.snapshot_every}}},
      {"exploration",
       {{"n_joint_samples", e.n_joint_samples},
        {"n_candidates", e.n_candidates},
        {"render_width", e.render_width},
        {"render_height", e.render_height},
        {"sigma", e.sigma},
        {"candidate_window_lo", c.loop.candidate_window_lo},
        {"candidate_window_hi", c.loop.candidate_window_hi}}},
      {"noise", {{"flip_prob", c.loop.noise.flip_prob}, {"morph_radius", c.loop.noise.morph_radius}}},
      {"init",
       {{"rotation_deg", c.loop.init.rotation_deg},
        {"translation_fraction", c.loop.init.translation_fraction}}},
  };
}

// Flag values; unset flags leave the config untouched.
struct Overrides {
  std::string config_path;
  std::optional<std::string> robot, intrinsics, output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<double> learning_rate, sigma, sigma_final, anneal_fraction;
  std::optional<int> steps;
  std::optional<int> joint_samples, candidates;
  std::optional<double> flip_prob;
  std::optional<int> morph_radius;
  std::optional<double> init_rotation_deg, init_translation_fraction;
};

RunConfig effective_config(const Overrides& ov) {
  RunConfig c;
  if (!ov.config_path.empty()) {
    c = parse_config(read_json_file(ov.config_path), fs::path(ov.config_path).parent_path());
  } else {
    c = parse_config(json::object(), fs::current_path());
  }
  if (ov.robot) c.robot = *ov.robot;
  if (ov.intrinsics) c.intrinsics = load_intrinsics(*ov.intrinsics);
  if (ov.output_dir) c.output_dir = *ov.output_dir;
  if (ov.seed) c.seed = *ov.seed;
  if (ov.learning_rate) c.loop.optimizer.learning_rate = *ov.learning_rate;
  if (ov.steps) c.loop.optimizer.steps = *ov.steps;
  if (ov.sigma) c.loop.optimizer.sigma = *ov.sigma;
  if (ov.sigma_final) c.loop.optimizer.sigma_final = *ov.sigma_final;
  if (ov.anneal_fraction) c.loop.optimizer.anneal_fraction = *ov.anneal_fraction;
  if (ov.joint_samples) c.loop.exploration.n_joint_samples = *ov.joint_samples;
  if (ov.candidates) c.loop.exploration.n_candidates = *ov.candidates;
  if (ov.flip_prob) c.loop.noise.flip_prob = *ov.flip_prob;
  if (ov.morph_radius) c.loop.noise.morph_radius = *ov.morph_radius;
  if (ov.init_rotation_deg) c.loop.init.rotation_deg = *ov.init_rotation_deg;
  if (ov.init_translation_fraction) c.loop.init.translation_fraction = *ov.init_translation_fraction;
  c.validate();
  return c;
}

std::shared_ptr<const RobotModel> load_robot(const RunConfig& c) {
  return std::make_shared<const RobotModel>(load_robot_model(c.robot));
}

fs::path make_output_dir(const RunConfig& c) {
  fs::path dir(c.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// ---------------------------------------------------------------- commands

struct CalibrateArgs {
  std::vector<std::string> masks;
  std::string joints, init;
};

int cmd_calibrate(const RunConfig& c, const CalibrateArgs& a) {
  const auto robot = load_robot(c);
  // Everything is loaded and checked before the first output is written.
  const auto joints = load_joint_poses(a.joints);
  if (a.masks.empty()) throw LengthMismatch("calibrate: at least one mask is required");
  if (joints.size() != a.masks.size()) {
    throw LengthMismatch("calibrate: " + std::to_string(a.masks.size()) + " masks but " +
                         std::to_string(joints.size()) + " joint poses in " + a.joints);
  }
  const Pose init = load_pose(a.init);
  std::vector<Observation> obs;
  for (std::size_t i = 0; i < a.masks.size(); ++i) {
    Mask m = load_mask(a.masks[i]);
    if (m.width() != c.intrinsics.width || m.height() != c.intrinsics.height) {
      throw DimensionMismatch("calibrate: " + a.masks[i] + " is " + std::to_string(m.width()) + "x" +
                              std::to_string(m.height()) + ", intrinsics expect " +
                              std::to_string(c.intrinsics.width) + "x" +
                              std::to_string(c.intrinsics.height));
    }
    if (joints[i].q.size() != robot->dof()) {
      throw DimensionMismatch("calibrate: joint pose " + std::to_string(i) + " has " +
                              std::to_string(joints[i].q.size()) + " values, robot has " +
                              std::to_string(robot->dof()) + " joints");
    }
    obs.push_back(Observation::make(*robot, joints[i], std::move(m)));
  }

  const OptimizeResult res = optimize_pose(init, *robot, obs, c.intrinsics, c.loop.optimizer);
  const double sigma = c.loop.optimizer.sigma_final;
  const auto per_view = per_view_losses(res.pose, *robot, obs, c.intrinsics, sigma);

  const fs::path dir = make_output_dir(c);
  save_pose((dir / "pose.json").string(), res.pose);
  write_trajectory_jsonl((dir / "trajectory.jsonl").string(), res.trajectory);
  json views = json::array();
  for (std::size_t i = 0; i < obs.size(); ++i) {
    views.push_back({{"mask", a.masks[i]}, {"loss", per_view[i]}});
  }
  write_json(dir / "summary.json", {{"initial_loss", res.initial_loss},
                                    {"final_loss", res.loss},
                                    {"best_step", res.best_step},
                                    {"sigma", sigma},
                                    {"views", views}});
  std::printf("initial loss %.6g\nfinal loss   %.6g (step %d)\n", res.initial_loss, res.loss,
              res.best_step);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    std::printf("  view %zu loss %.6g  %s\n", i + 1, per_view[i], a.masks[i].c_str());
  }
  return 0;
}

struct SimulateArgs {
  int scenes = 1;
  int views = 3;
  std::string selector = "se";
};

int cmd_simulate(const RunConfig& c, const SimulateArgs& a) {
  if (a.scenes < 1) throw InvalidArgument("simulate: --scenes must be >= 1");
  const Selector sel = selector_from_string(a.selector);
  const auto robot = load_robot(c);
  std::vector<std::optional<Report>> reports(a.scenes);
  std::vector<std::optional<Scenario>> scenes(a.scenes);
  std::vector<std::string> errors(a.scenes);
  std::vector<int> kinds(a.scenes, -1);
  parallel_for(a.scenes, [&](std::size_t s) {
    try {
      scenes[s] = generate_scenario(robot, c.intrinsics, c.seed + s);
      reports[s] = run_calibration_loop(*scenes[s], a.views, sel, c.loop);
    } catch (const Error& e) {
      errors[s] = e.what();
      kinds[s] = static_cast<int>(e.kind());
    }
  });
  for (int s = 0; s < a.scenes; ++s) {
    if (kinds[s] >= 0) {
      throw Error(static_cast<ErrorKind>(kinds[s]),
                  "scene seed " + std::to_string(c.seed + s) + ": " + errors[s]);
    }
  }

  const fs::path dir = make_output_dir(c);
  std::string csv;
  json all = json::array();
  for (int s = 0; s < a.scenes; ++s) {
    const Report& rep = *reports[s];
    const Scenario& sc = *scenes[s];
    const fs::path sdir = dir / ("scene_" + std::to_string(sc.seed));
    fs::create_directories(sdir);
    std::vector<JointPose> qs;
    for (std::size_t v = 0; v < rep.observed.size(); ++v) {
      save_pgm((sdir / ("mask_" + std::to_string(v) + ".pgm")).string(), rep.observed[v]);
      qs.push_back(rep.entries[v].q);
    }
    save_joint_poses((sdir / "joints.json").string(), qs);
    save_pose((sdir / "truth.json").string(), sc.camera_from_base);
    save_pose((sdir / "init.json").string(), rep.init);
    save_pose((sdir / "final.json").string(), rep.entries.back().pose);
    const json rj = report_to_json(rep);
    write_json(sdir / "report.json", rj);
    const std::string rc = report_to_csv(rep);
    write_text(sdir / "report.csv", rc);
    csv += s == 0 ? rc : rc.substr(rc.find('\n') + 1);
    all.push_back(rj);
    const auto& last = rep.entries.back();
    std::printf("seed %llu: %d views, rotation %.4f deg, translation %.4f cm\n",
                static_cast<unsigned long long>(sc.seed), last.views, last.rotation_error_deg,
                last.translation_error_cm);
  }
  write_text(dir / "simulate.csv", csv);
  write_json(dir / "simulate.json", all);
  return 0;
}

struct EvaluateArgs {
  int scenes = 20;
  int views = 3;
  std::string selectors = "se";
  bool baseline = false;
  double noise_px = 1.0;
  int baseline_poses = 20;
  std::string sweep_joint_samples, sweep_candidates, sweep_flip_prob;
};

template <typename T>
std::vector<T> parse_list(const std::string& s, const char* flag) {
  std::vector<T> out;
  for (const auto& item : split_list(s)) {
    try {
      std::size_t used = 0;
      T v;
      if constexpr (std::is_integral_v<T>) {
        v = static_cast<T>(std::stoi(item, &used));
      } else {
        v = std::stod(item, &used);
      }
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw InvalidArgument(std::string(flag) + ": cannot parse '" + item + "'");
    }
  }
  return out;
}

int cmd_evaluate(const RunConfig& c, const EvaluateArgs& a) {
  BatchConfig b;
  b.robot = load_robot(c);
  b.k = c.intrinsics;
  b.first_seed = c.seed;
  b.n_scenes = a.scenes;
  b.n_views = a.views;
  b.loop = c.loop;
  b.baseline = a.baseline;
  b.baseline_noise_px = a.noise_px;
  b.baseline_poses = a.baseline_poses;
  for (const auto& s : split_list(a.selectors)) b.grid.selectors.push_back(selector_from_string(s));
  b.grid.n_joint_samples = parse_list<int>(a.sweep_joint_samples, "--sweep-joint-samples");
  b.grid.n_candidates = parse_list<int>(a.sweep_candidates, "--sweep-candidates");
  for (double p : parse_list<double>(a.sweep_flip_prob, "--sweep-flip-prob")) {
    NoiseModel n = c.loop.noise;
    n.flip_prob = p;
    n.validate();
    b.grid.noise.push_back(n);
  }
  const BatchResult res = evaluate_batch(b);
  const fs::path dir = make_output_dir(c);
  write_text(dir / "evaluation.csv", batch_to_csv(res));
  write_json(dir / "evaluation.json", batch_to_json(res));
  std::printf("%-7s %6s %5s %6s %5s %4s %12s %12s\n", "method", "joints", "cands", "flip", "views",
              "ok", "rot_med_deg", "trans_med_cm");
  for (const auto& s : res.stats) {
    std::printf("%-7s %6d %5d %6.3g %5d %4d %12.4f %12.4f\n", s.key.method.c_str(),
                s.key.n_joint_samples, s.key.n_candidates, s.key.noise.flip_prob, s.views, s.n_ok,
                s.rot_median, s.trans_median);
  }
  return 0;
}

int cmd_explore(const RunConfig& c, const std::string& candidates_path) {
  const auto robot = load_robot(c);
  const json j = read_json_file(candidates_path);
  if (!j.is_array()) throw ParseError(candidates_path + ": expected a JSON array of poses");
  std::vector<Pose> cands;
  for (const auto& p : j) {
    try {
      cands.push_back(pose_from_json(p));
    } catch (const Error& e) {
      throw Error(e.kind(), candidates_path + ": " + e.what());
    }
  }
  if (cands.size() < 2) {
    throw InvalidArgument(candidates_path + ": exploration needs at least two candidate poses, got " +
                          std::to_string(cands.size()));
  }
  Rng rng = make_rng(c.seed, 0);
  const ExplorationResult r = select_next_joint_pose(*robot, cands, c.intrinsics, c.loop.exploration, rng);
  const fs::path dir = make_output_dir(c);
  write_json(dir / "next.json", {{"q", r.q.q},
                                 {"score", r.score},
                                 {"sample_index", r.sample_index},
                                 {"valid_samples", r.valid_samples}});
  std::printf("score %.6g (sample %d of %d valid)\n", r.score, r.sample_index, r.valid_samples);
  return 0;
}

struct BaselineArgs {
  int poses = 20;
  double noise_px = 1.0;
};

int cmd_baseline(const RunConfig& c, const BaselineArgs& a) {
  const auto robot = load_robot(c);
  const Scenario sc = generate_scenario(robot, c.intrinsics, c.seed);
  const MarkerCalibration mc = run_marker_baseline(sc, a.poses, a.noise_px);
  const double rot = rotation_error_deg(mc.camera_from_base, sc.camera_from_base);
  const double trans = 100.0 * translation_error(mc.camera_from_base, sc.camera_from_base);
  const fs::path dir = make_output_dir(c);
  save_pose((dir / "baseline_pose.json").string(), mc.camera_from_base);
  save_pose((dir / "truth.json").string(), sc.camera_from_base);
  write_json(dir / "baseline.json", {{"seed", sc.seed},
                                     {"noise_px", a.noise_px},
                                     {"poses_used", mc.poses_used},
                                     {"poses_attempted", mc.poses_attempted},
                                     {"rotation_error_deg", rot},
                                     {"translation_error_cm", trans}});
  std::printf("marker baseline: %d poses, rotation %.4f deg, translation %.4f cm\n", mc.poses_used,
              rot, trans);
  return 0;
}

struct OverlayArgs {
  std::string pose, q, observed;
  int q_index = 0;
  int width = 0, height = 0;
  double sigma = kDefaultSigma;
};

int cmd_overlay(const RunConfig& c, const OverlayArgs& a) {
  const auto robot = load_robot(c);
  const Pose pose = load_pose(a.pose);
  const auto qs = load_joint_poses(a.q);
  if (a.q_index < 0 || a.q_index >= static_cast<int>(qs.size())) {
    throw InvalidArgument(a.q + ": --q-index " + std::to_string(a.q_index) + " out of range (" +
                          std::to_string(qs.size()) + " poses)");
  }
  if (qs[a.q_index].q.size() != robot->dof()) {
    throw DimensionMismatch(a.q + ": joint pose has " + std::to_string(qs[a.q_index].q.size()) +
                            " values, robot has " + std::to_string(robot->dof()) + " joints");
  }
  if ((a.width > 0) != (a.height > 0)) {
    throw InvalidArgument("overlay: give both --width and --height or neither");
  }
  const CameraIntrinsics k = a.width > 0 ? c.intrinsics.scaled_to(a.width, a.height) : c.intrinsics;
  std::optional<Mask> observed;
  if (!a.observed.empty()) {
    observed = load_mask(a.observed);
    if (observed->width() != k.width || observed->height() != k.height) {
      throw DimensionMismatch(a.observed + " is " + std::to_string(observed->width()) + "x" +
                              std::to_string(observed->height()) + ", overlay renders " +
                              std::to_string(k.width) + "x" + std::to_string(k.height));
    }
  }
  const auto links = links_in_camera(*robot, pose, forward_kinematics(*robot, qs[a.q_index]));
  const Mask soft = render_soft_mask(links, k, a.sigma);
  const Mask hard = render_hard_mask(links, k);

  const fs::path dir = make_output_dir(c);
  save_pgm((dir / "soft.pgm").string(), soft);
  save_pgm((dir / "hard.pgm").string(), hard);
  if (observed) {
    // 0: agreement, 0.5: rendered only, 1: observed only.
    Mask diff(k.width, k.height);
    std::size_t inter = 0, uni = 0;
    for (std::size_t p = 0; p < hard.size(); ++p) {
      const bool r = hard.values()[p] >= 0.5;
      const bool o = observed->values()[p] >= 0.5;
      inter += r && o;
      uni += r || o;
      diff.values()[p] = r == o ? 0.0 : (r ? 0.5 : 1.0);
    }
    save_pgm((dir / "diff.pgm").string(), diff);
    const double iou = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
    std::printf("iou %.6f\n", iou);
  }
  return 0;
}

constexpr const char* kExitCodes = R"(Exit codes:
  0   success, all outputs written
  1   internal error
  2   usage error (bad flags)
  3   invalid argument
  4   I/O error (unreadable or unwritable file)
  5   parse error (malformed JSON, OBJ, PGM/PNG)
  6   validation error (config or model invariant broken)
  7   dimension mismatch (mask size vs intrinsics, joint count vs robot)
  8   length mismatch (masks vs joint poses)
  9   degenerate input
  10  non-convergence
  11  numerical failure
  12  exhausted sampling (no valid joint pose)
  13  visibility (too few marker views)
  14  scenario generation failed

Environment: EASYHEC_THREADS caps the worker thread count.)";

int exit_code(ErrorKind kind) { return 3 + static_cast<int>(kind); }

int run(int argc, char** argv) {
  CLI::App app{"Markerless eye-to-hand calibration by differentiable silhouette rendering"};
  app.footer(kExitCodes);
  app.require_subcommand(0, 1);
  app.fallthrough();

  Overrides ov;
  bool dump_config = false;
  std::string log_level = "warn";
  app.add_option("-c,--config", ov.config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_flag("--dump-config", dump_config, "Print the effective config as JSON and exit");
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off");
  app.add_option("--robot", ov.robot, "Robot model JSON");
  app.add_option("--intrinsics", ov.intrinsics, "Camera intrinsics JSON");
  app.add_option("-o,--output-dir", ov.output_dir, "Output directory");
  app.add_option("--seed", ov.seed, "Random seed");
  app.add_option("--lr", ov.learning_rate, "Adam learning rate");
  app.add_option("--steps", ov.steps, "Adam steps per optimization");
  app.add_option("--sigma", ov.sigma, "Initial render temperature");
  app.add_option("--sigma-final", ov.sigma_final, "Final render temperature");
  app.add_option("--anneal-fraction", ov.anneal_fraction, "Fraction of steps spent annealing");
  app.add_option("--n-joint-samples", ov.joint_samples, "Joint poses sampled per exploration");
  app.add_option("--n-candidates", ov.candidates, "Camera-pose candidates per exploration");
  app.add_option("--flip-prob", ov.flip_prob, "Simulated mask pixel flip probability");
  app.add_option("--morph-radius", ov.morph_radius, "Simulated mask dilation (>0) / erosion (<0)");
  app.add_option("--init-rotation-deg", ov.init_rotation_deg, "Init perturbation angle");
  app.add_option("--init-translation-fraction", ov.init_translation_fraction,
                 "Init perturbation, fraction of camera distance");

  CalibrateArgs cal;
  auto* calibrate = app.add_subcommand("calibrate", "Calibrate from mask files and joint poses");
  calibrate->add_option("--masks", cal.masks, "Mask images (PGM or PNG), one per view")->required();
  calibrate->add_option("--joints", cal.joints, "Joint poses JSON (array of arrays, radians)")->required();
  calibrate->add_option("--init", cal.init, "Initial camera-from-base pose JSON")->required();

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Run closed-loop calibration on synthetic scenes");
  simulate->add_option("--scenes", sim.scenes, "Number of scenes (seeds seed..seed+n-1)");
  simulate->add_option("--views", sim.views, "Views per scene");
  simulate->add_option("--selector", sim.selector, "se|random");

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Batch evaluation with summary statistics");
  evaluate->add_option("--scenes", ev.scenes, "Number of scenes");
  evaluate->add_option("--views", ev.views, "Views per scene");
  evaluate->add_option("--selector", ev.selectors, "Comma list of se,random");
  evaluate->add_flag("--baseline", ev.baseline, "Add the marker-based baseline");
  evaluate->add_option("--noise-px", ev.noise_px, "Baseline marker pixel noise sigma");
  evaluate->add_option("--baseline-poses", ev.baseline_poses, "Baseline joint poses per scene");
  evaluate->add_option("--sweep-joint-samples", ev.sweep_joint_samples, "Comma list");
  evaluate->add_option("--sweep-candidates", ev.sweep_candidates, "Comma list");
  evaluate->add_option("--sweep-flip-prob", ev.sweep_flip_prob, "Comma list");

  std::string candidates_path;
  auto* explore = app.add_subcommand(
      "explore", "Pick the next joint pose for a set of candidate camera poses (rng: stream 0 of --seed)");
  explore->add_option("--candidates", candidates_path, "JSON array of candidate poses")->required();

  BaselineArgs bl;
  auto* baseline = app.add_subcommand("baseline", "Marker-based calibration on the scene of --seed");
  baseline->add_option("--poses", bl.poses, "Joint poses with the marker in view");
  baseline->add_option("--noise-px", bl.noise_px, "Marker pixel noise sigma");

  OverlayArgs ovl;
  auto* overlay = app.add_subcommand("overlay", "Render soft/hard silhouettes and compare to a mask");
  overlay->add_option("--pose", ovl.pose, "Camera-from-base pose JSON")->required();
  overlay->add_option("--q", ovl.q, "Joint poses JSON")->required();
  overlay->add_option("--q-index", ovl.q_index, "Which joint pose of the file to render");
  overlay->add_option("--observed", ovl.observed, "Observed mask to compare against");
  overlay->add_option("--width", ovl.width, "Render width (rescales intrinsics)");
  overlay->add_option("--height", ovl.height, "Render height (rescales intrinsics)");
  overlay->add_option("--render-sigma", ovl.sigma, "Soft render temperature");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  auto logger = spdlog::stderr_color_mt("easyhec");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    const RunConfig config = effective_config(ov);
    if (dump_config) {
      std::cout << config_to_json(config).dump(2) << "\n";
      return 0;
    }
    if (app.get_subcommands().empty()) {
      std::cerr << app.help() << "\n";
      return 2;
    }
    if (calibrate->parsed()) return cmd_calibrate(config, cal);
    if (simulate->parsed()) return cmd_simulate(config, sim);
    if (evaluate->parsed()) return cmd_evaluate(config, ev);
    if (explore->parsed()) return cmd_explore(config, candidates_path);
    if (baseline->parsed()) return cmd_baseline(config, bl);
    if (overlay->parsed()) return cmd_overlay(config, ovl);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    spdlog::error("internal error: {}", e.what());
    return 1;
  }
  return 1;
}

}  // namespace
}  // namespace easyhec

int main(int argc, char** argv) { return easyhec::run(argc, argv); }
