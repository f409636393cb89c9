#include <doctest.h>
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "easyhec/harness.hpp"

using namespace easyhec;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kWork = fs::current_path() / "cli_work";

// Runs the CLI with stdout captured to `out`; returns the exit status.
int cli(const std::string& args, std::string* out = nullptr, const std::string& env = "") {
  const fs::path capture = kWork / "stdout.txt";
  const std::string cmd = env + " " EASYHEC_CLI " " + args + " > " + capture.string() + " 2> " +
                          (kWork / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  if (out) {
    std::ifstream in(capture);
    std::stringstream ss;
    ss << in.rdbuf();
    *out = ss.str();
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

struct Workspace {
  Workspace() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
  }
};

std::string path(const std::string& name) { return (kWork / name).string(); }

std::shared_ptr<const RobotModel> arm6() {
  static auto robot = std::make_shared<const RobotModel>(load_robot_model(EASYHEC_DATA_DIR "/robots/arm6/arm6.json"));
  return robot;
}

CameraIntrinsics camera() {
  std::ifstream in(EASYHEC_DATA_DIR "/camera_320x240.json");
  return intrinsics_from_json(json::parse(in));
}

// Fast settings shared by the end-to-end commands.
const std::string kQuick = "--steps 40 --n-joint-samples 8 --n-candidates 3";

void write_quick_config(const std::string& name) {
  json cfg{{"intrinsics", intrinsics_to_json(camera().scaled_to(80, 60))},
           {"exploration", {{"candidate_window_lo", 5}, {"candidate_window_hi", 40}, {"render_width", 32}, {"render_height", 24}}}};
  write(kWork / name, cfg.dump());
}

}  // namespace

TEST_CASE("usage and exit codes") {
  Workspace ws;
  CHECK(cli("--help") == 0);
  CHECK(cli("--bogus") == 2);
  CHECK(cli("") == 2);
  CHECK(cli("simulate --scenes nope") == 2);
  CHECK(cli("-c " + path("missing.json") + " --dump-config") == 2);
  CHECK(cli("--robot /nonexistent/robot.json --dump-config") == 4);

  write(kWork / "typo.json", R"({"optimizer": {"learnin_rate": 0.1}})");
  CHECK(cli("-c " + path("typo.json") + " --dump-config") == 5);
  write(kWork / "broken.json", "{not json");
  CHECK(cli("-c " + path("broken.json") + " --dump-config") == 5);
  CHECK(cli("--flip-prob 0.5 --dump-config") == 3);
}

TEST_CASE("dumped config is a fixed point") {
  Workspace ws;
  std::string first, second;
  REQUIRE(cli("--seed 9 --lr 0.01 --flip-prob 0.05 --dump-config", &first) == 0);
  write(kWork / "dumped.json", first);
  REQUIRE(cli("-c " + path("dumped.json") + " --dump-config", &second) == 0);
  CHECK(first == second);
  const json j = json::parse(first);
  CHECK(j["seed"] == 9);
  CHECK(j["optimizer"]["learning_rate"] == 0.01);
  // Flags win over the file.
  std::string third;
  REQUIRE(cli("-c " + path("dumped.json") + " --seed 4 --dump-config", &third) == 0);
  CHECK(json::parse(third)["seed"] == 4);
}

TEST_CASE("calibrate validates inputs before writing anything") {
  Workspace ws;
  const Scenario sc = generate_scenario(arm6(), camera().scaled_to(80, 60), 1);
  Rng rng(1);
  save_pgm(path("m0.pgm"), observe(sc, sc.q0, {}, rng));
  save_pgm(path("small.pgm"), Mask(10, 10));
  save_joint_poses(path("q1.json"), {sc.q0});
  save_joint_poses(path("q2.json"), {sc.q0, sc.q0});
  save_joint_poses(path("q_short.json"), {JointPose{{0.1, 0.2}}});
  save_pose(path("init.json"), initial_pose(sc, InitMode{3.0, 0.03, {}}));
  write_quick_config("quick.json");
  const std::string base = "-c " + path("quick.json") + " " + kQuick;

  const fs::path out = kWork / "out";
  CHECK(cli(base + " -o " + out.string() + " calibrate --masks " + path("m0.pgm") + " --joints " + path("q2.json") + " --init " + path("init.json")) == 8);
  CHECK_FALSE(fs::exists(out));
  CHECK(cli(base + " -o " + out.string() + " calibrate --masks " + path("small.pgm") + " --joints " + path("q1.json") + " --init " + path("init.json")) == 7);
  CHECK(cli(base + " -o " + out.string() + " calibrate --masks " + path("m0.pgm") + " --joints " + path("q_short.json") + " --init " + path("init.json")) == 7);
  CHECK(cli(base + " -o " + out.string() + " calibrate --masks " + path("nope.pgm") + " --joints " + path("q1.json") + " --init " + path("init.json")) == 4);
  CHECK(cli(base + " -o " + out.string() + " calibrate --masks " + path("m0.pgm") + " --joints " + path("quick.json") + " --init " + path("init.json")) == 5);
  CHECK_FALSE(fs::exists(out));

  REQUIRE(cli(base + " -o " + out.string() + " calibrate --masks " + path("m0.pgm") + " --joints " + path("q1.json") + " --init " + path("init.json")) == 0);
  for (const char* f : {"pose.json", "trajectory.jsonl", "summary.json"}) CHECK(fs::exists(out / f));
  const json summary = json::parse(slurp(out / "summary.json"));
  CHECK(summary["final_loss"].get<double>() <= summary["initial_loss"].get<double>());
  CHECK(summary["views"].size() == 1);
  CHECK_NOTHROW(load_pose((out / "pose.json").string()));
}

TEST_CASE("explore matches the library call") {
  Workspace ws;
  const Scenario sc = generate_scenario(arm6(), camera(), 2);
  std::vector<Pose> cands;
  for (int i = 0; i < 3; ++i)
    cands.push_back(exp_twist(Twist{Vec3(0.01 * i, -0.005 * i, 0.0), Vec3(0.0, 0.01 * i, 0.005)}) * sc.camera_from_base);
  json arr = json::array();
  for (const auto& p : cands) arr.push_back(pose_to_json(p));
  write(kWork / "cands.json", arr.dump());

  REQUIRE(cli("--seed 13 --n-joint-samples 12 -o " + path("ex") + " explore --candidates " + path("cands.json")) == 0);
  const json next = json::parse(slurp(kWork / "ex" / "next.json"));

  ExplorationConfig cfg;
  cfg.n_joint_samples = 12;
  Rng rng = make_rng(13, 0);
  const auto lib = select_next_joint_pose(*arm6(), cands, camera(), cfg, rng);
  CHECK(next["q"].get<std::vector<double>>() == lib.q.q);
  CHECK(next["score"].get<double>() == lib.score);
  CHECK(next["sample_index"] == lib.sample_index);
  CHECK(next["valid_samples"] == lib.valid_samples);

  write(kWork / "one.json", json::array({pose_to_json(cands[0])}).dump());
  CHECK(cli("-o " + path("ex1") + " explore --candidates " + path("one.json")) == 3);
  write(kWork / "same.json", json::array({pose_to_json(cands[0]), pose_to_json(cands[0])}).dump());
  REQUIRE(cli("--n-joint-samples 5 -o " + path("ex2") + " explore --candidates " + path("same.json")) == 0);
  CHECK(json::parse(slurp(kWork / "ex2" / "next.json"))["score"] == 0.0);
  write(kWork / "notarray.json", R"({"matrix": []})");
  CHECK(cli("-o " + path("ex3") + " explore --candidates " + path("notarray.json")) == 5);
}

TEST_CASE("overlay reports silhouette IoU") {
  Workspace ws;
  const CameraIntrinsics k = camera().scaled_to(80, 60);
  const Scenario sc = generate_scenario(arm6(), k, 3);
  const auto lp = forward_kinematics(*arm6(), sc.q0);
  const Mask truth = render_hard_mask(links_in_camera(*arm6(), sc.camera_from_base, lp), k);
  save_pgm(path("obs.pgm"), truth);
  save_joint_poses(path("q.json"), {sc.q0});
  save_pose(path("truth.json"), sc.camera_from_base);
  const Pose shifted = Pose::from_translation(Vec3(0.1, 0, 0)) * sc.camera_from_base;
  save_pose(path("shifted.json"), shifted);
  const std::string common = "overlay --q " + path("q.json") + " --width 80 --height 60 --observed " + path("obs.pgm");

  std::string out;
  REQUIRE(cli("-o " + path("ov") + " " + common + " --pose " + path("truth.json"), &out) == 0);
  CHECK(out == "iou 1.000000\n");
  for (const char* f : {"soft.pgm", "hard.pgm", "diff.pgm"}) CHECK(fs::exists(kWork / "ov" / f));
  CHECK(load_mask(path("ov/diff.pgm")).sum() == 0.0);

  REQUIRE(cli("-o " + path("ov2") + " " + common + " --pose " + path("shifted.json"), &out) == 0);
  const Mask moved = render_hard_mask(links_in_camera(*arm6(), shifted, lp), k);
  double inter = 0, uni = 0;
  for (std::size_t i = 0; i < moved.size(); ++i) {
    inter += moved.values()[i] * truth.values()[i];
    uni += std::max(moved.values()[i], truth.values()[i]);
  }
  double iou = -1;
  REQUIRE(std::sscanf(out.c_str(), "iou %lf", &iou) == 1);
  CHECK(iou == doctest::Approx(inter / uni).epsilon(1e-6));
  CHECK(iou < 1.0);

  CHECK(cli("-o " + path("ov3") + " overlay --q " + path("q.json") + " --observed " + path("obs.pgm") + " --pose " + path("truth.json")) == 7);
  CHECK(cli("-o " + path("ov4") + " overlay --q " + path("q.json") + " --q-index 3 --pose " + path("truth.json")) == 3);
}

TEST_CASE("simulate, baseline and evaluate outputs") {
  Workspace ws;
  write_quick_config("quick.json");
  const std::string base = "-c " + path("quick.json") + " " + kQuick;

  REQUIRE(cli(base + " --seed 3 -o " + path("sim") + " simulate --scenes 1 --views 2") == 0);
  for (const char* f : {"mask_0.pgm", "mask_1.pgm", "joints.json", "truth.json", "init.json", "final.json", "report.json", "report.csv"})
    CHECK(fs::exists(kWork / "sim" / "scene_3" / f));
  CHECK(fs::exists(kWork / "sim" / "simulate.csv"));
  CHECK(load_joint_poses(path("sim/scene_3/joints.json")).size() == 2);

  REQUIRE(cli("--seed 2 -o " + path("bl") + " baseline --poses 8 --noise-px 0") == 0);
  const json bl = json::parse(slurp(kWork / "bl" / "baseline.json"));
  CHECK(bl["poses_used"] == 8);
  CHECK(bl["rotation_error_deg"].get<double>() < 1e-5);
  const Scenario sc = generate_scenario(arm6(), camera(), 2);
  CHECK(load_pose(path("bl/truth.json")).matrix() == sc.camera_from_base.matrix());
  CHECK(cli("-o " + path("bl2") + " baseline --poses 2") == 3);

  // Evaluation outputs are byte-identical for any worker count.
  const std::string eval = base + " evaluate --scenes 2 --views 2 --selector se,random --baseline --baseline-poses 6";
  REQUIRE(cli(eval + " -o " + path("ev1"), nullptr, "EASYHEC_THREADS=1") == 0);
  REQUIRE(cli(eval + " -o " + path("ev4"), nullptr, "EASYHEC_THREADS=4") == 0);
  CHECK(slurp(kWork / "ev1" / "evaluation.json") == slurp(kWork / "ev4" / "evaluation.json"));
  CHECK(slurp(kWork / "ev1" / "evaluation.csv") == slurp(kWork / "ev4" / "evaluation.csv"));
  const json ev = json::parse(slurp(kWork / "ev1" / "evaluation.json"));
  REQUIRE(ev["cells"].size() == 3);
  CHECK(ev["cells"][0]["method"] == "SE");
  CHECK(ev["cells"][1]["method"] == "random");
  CHECK(ev["cells"][2]["method"] == "marker");
  CHECK(ev["summary"].size() == 5);
  for (const auto& s : ev["summary"]) {
    for (const char* key : {"views", "n_ok", "n_failed", "rot_mean_deg", "rot_median_deg", "rot_std_deg", "trans_mean_cm", "trans_median_cm", "trans_std_cm"})
      CHECK(s.contains(key));
  }
  CHECK(cli(base + " -o " + path("ev5") + " evaluate --scenes 1 --selector best") == 3);
}
