#include <gtest/gtest.h>

#include <signal.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "fixtures.hpp"
#include "gcvd/error.hpp"
#include "gcvd/pipeline.hpp"
#include "gcvd/synth_oracle.hpp"

using namespace gcvd;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs the CLI; returns the exit code and captures stdout + stderr.
int cli(const std::string& args, std::string* output = nullptr) {
  const fs::path log = fs::temp_directory_path() / "gcvd_test_cli_output.txt";
  const std::string cmd = std::string(GCVD_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (output) *output = slurp(log);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::uint64_t tree_hash(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root));
  std::sort(files.begin(), files.end());
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
  };
  for (const auto& f : files) {
    mix(f.generic_string());
    mix(slurp(root / f));
  }
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Compares with tests/golden/<name>, or rewrites it when GCVD_UPDATE_GOLDEN is set.
void expect_golden(const std::string& name, const std::string& actual) {
  const fs::path path = fs::path(GCVD_GOLDEN_DIR) / name;
  if (std::getenv("GCVD_UPDATE_GOLDEN")) {
    write_text_file(actual, path);
    return;
  }
  ASSERT_TRUE(fs::exists(path)) << path;
  EXPECT_EQ(slurp(path), actual);
}

SceneSpec tiny_spec() {
  SceneSpec s;
  s.frame_count = 16;
  s.width = 48;
  s.height = 36;
  s.prior_scale = 1.5;
  s.prior_bias = 0.1;
  return s;
}

fs::path tiny_scene(const std::string& name) {
  const fs::path dir = gcvd::testing::scratch_dir(name);
  generate_scene(tiny_spec(), dir, true);
  return dir;
}

fs::path tiny_config(const fs::path& dir) {
  const fs::path p = dir / "run.cfg";
  write_text_file(
      "iterations_sequential = 40\niterations_covisible = 20\niterations_nonkeyframe = 20\n"
      "keyframe_loss_scale = 2\n",
      p);
  return p;
}

// A run directory whose outputs are the scene's ground truth.
fs::path ground_truth_run(const fs::path& scene, const std::string& name) {
  const fs::path run = gcvd::testing::scratch_dir(name);
  SceneLayout layout(scene);
  fs::copy_file(layout.gt_trajectory(), run / "trajectory.txt");
  fs::create_directories(run / "depth");
  const int n = layout.read_meta().frame_count;
  for (int t = 0; t < n; ++t) fs::copy_file(layout.gt_depth(t), run / "depth" / indexed_name("depth_", t));
  SceneLayout(run).write_meta(layout.read_meta());
  return run;
}

}  // namespace

TEST(CliSynth, DefaultSpecHashIsStable) {
  const fs::path a = gcvd::testing::scratch_dir("cli_synth_a");
  const fs::path b = gcvd::testing::scratch_dir("cli_synth_b");
  ASSERT_EQ(cli("synth " + a.string() + " --seed 7 --force"), 0);
  ASSERT_EQ(cli("synth " + b.string() + " --seed 7 --force"), 0);
  const std::uint64_t h = tree_hash(a);
  EXPECT_EQ(h, tree_hash(b));
  expect_golden("synth_default_seed7.hash", hex(h) + "\n");
}

TEST(CliSynth, Errors) {
  const fs::path dir = gcvd::testing::scratch_dir("cli_synth_err");
  write_text_file("frame_count = 1\n", dir / "one.spec");
  std::string out;
  EXPECT_EQ(cli("synth " + (dir / "scene").string() + " --spec " + (dir / "one.spec").string(), &out), 2);
  EXPECT_NE(out.find("need >= 2 frames"), std::string::npos) << out;
  write_text_file("bogus = 3\n", dir / "bad.spec");
  EXPECT_EQ(cli("synth " + (dir / "scene").string() + " --spec " + (dir / "bad.spec").string()), 2);
  // refuses a non-empty directory unless forced
  EXPECT_EQ(cli("synth " + dir.string() + " --frames 3"), 3);
  EXPECT_EQ(cli("synth " + dir.string() + " --frames 3 --force"), 0);
}

TEST(CliValidate, GoodAndBrokenScenes) {
  const fs::path scene = tiny_scene("cli_validate");
  EXPECT_TRUE(validate_scene(scene).empty());
  EXPECT_EQ(cli("validate " + scene.string()), 0);

  Raster depth = read_raster(SceneLayout(scene).prior_depth(3));
  depth[10] = -1.0f;
  write_raster(depth, SceneLayout(scene).prior_depth(3));
  fs::remove(SceneLayout(scene).static_mask(5));
  const auto issues = validate_scene(scene);
  EXPECT_GE(issues.size(), 2u);
  std::string out;
  EXPECT_EQ(cli("validate " + scene.string(), &out), 3);
  EXPECT_NE(out.find("mask_000005"), std::string::npos) << out;
  EXPECT_NE(out.find("depth_000003"), std::string::npos) << out;
}

TEST(CliRun, EmptySceneFailsBeforeCompute) {
  const fs::path dir = gcvd::testing::scratch_dir("cli_empty");
  const fs::path out = gcvd::testing::scratch_dir("cli_empty_out") / "run";
  std::string text;
  EXPECT_EQ(cli("run " + dir.string() + " --out " + out.string(), &text), 3);
  EXPECT_NE(text.find("frames.meta"), std::string::npos) << text;
  EXPECT_FALSE(fs::exists(out / "trajectory.txt"));
  EXPECT_EQ(cli("run " + (dir / "missing").string() + " --out " + out.string()), 3);
}

TEST(CliRun, ConfigErrorsExitTwo) {
  const fs::path scene = tiny_scene("cli_cfg");
  write_text_file("no_such_key = 1\n", scene / "bad.cfg");
  const std::string out = (scene / "out").string();
  EXPECT_EQ(cli("run " + scene.string() + " --out " + out + " --config " + (scene / "bad.cfg").string()), 2);
  EXPECT_EQ(cli("run " + scene.string() + " --out " + out + " --flow-source psychic"), 2);
  EXPECT_EQ(cli("run " + scene.string() + " --out " + out + " --threads 0"), 2);
  EXPECT_EQ(cli("frobnicate"), 2);
}

TEST(CliRun, EndToEndOutputsAndReport) {
  const fs::path scene = tiny_scene("cli_run");
  const fs::path out = scene.parent_path() / "gcvd_test_cli_run_out";
  fs::remove_all(out);
  std::string text;
  ASSERT_EQ(cli("run " + scene.string() + " --out " + out.string() + " --config " +
                    tiny_config(scene).string() + " --point-cloud 0,5 --log-level warn",
                &text),
            0)
      << text;
  const int n = tiny_spec().frame_count;
  EXPECT_EQ(read_trajectory(out / "trajectory.txt").size(), static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) EXPECT_TRUE(fs::exists(out / "depth" / indexed_name("depth_", t)));
  for (const char* f : {"report.txt", "config.txt", "keyframes.txt", "pose_graph.txt", "frames.meta",
                        "loss_sequential.txt", "loss_nonkeyframe.txt", "points.xyz"})
    EXPECT_TRUE(fs::exists(out / f)) << f;

  const KeyValues report = read_key_values(out / "report.txt");
  EXPECT_EQ(report.at("frame_count"), std::to_string(n));
  EXPECT_EQ(report.at("flow_source"), "oracle");
  double sum = 0.0;
  for (const char* stage : {"load", "keyframes", "association", "sequential", "covisible", "pgo",
                            "nonkeyframe", "filter", "export"})
    sum += std::stod(report.at(std::string("time_") + stage));
  EXPECT_NEAR(std::stod(report.at("time_total")), sum, 1e-6);
  EXPECT_GE(std::stoi(report.at("keyframe_count")), 2);
  EXPECT_EQ(report.at("loss_sequential_entries"), "41");

  // points.xyz: one line per pixel of frames 0 and 5
  std::ifstream xyz(out / "points.xyz");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(xyz, line)) ++lines;
  EXPECT_EQ(lines, 2u * 48 * 36);

  const EvalReport eval = evaluate_run(out, scene);
  EXPECT_LT(eval.depth.abs_rel, eval.prior.abs_rel);
  EXPECT_FALSE(eval.has_nan());

  // Kill a second run once a keyframe stage is checkpointed, then resume it.
  const fs::path killed = scene.parent_path() / "gcvd_test_cli_run_killed";
  fs::remove_all(killed);
  const fs::path pid_file = killed.string() + ".pid";
  const std::string bg = std::string(GCVD_CLI) + " run " + scene.string() + " --out " + killed.string() +
                         " --config " + tiny_config(scene).string() + " --log-level off > /dev/null 2>&1 & echo $! > " +
                         pid_file.string();
  ASSERT_EQ(std::system(bg.c_str()), 0);
  const fs::path progress_path = killed / "checkpoints" / "progress.txt";
  int stage = 0;
  for (int poll = 0; poll < 20000 && stage == 0; ++poll) {
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
    if (!fs::exists(progress_path)) continue;
    try {
      stage = std::stoi(read_key_values(progress_path).at("completed"));
    } catch (const std::exception&) {
      stage = 0;  // caught mid-write
    }
  }
  ::kill(std::stoi(slurp(pid_file)), SIGKILL);
  ASSERT_GE(stage, 1);
  ASSERT_LT(stage, 4) << "run finished before it could be interrupted";
  EXPECT_FALSE(fs::exists(killed / "trajectory.txt"));
  ASSERT_EQ(cli("run " + scene.string() + " --out " + killed.string() + " --config " +
                tiny_config(scene).string() + " --resume --log-level warn"),
            0);
  const auto a = read_trajectory(out / "trajectory.txt");
  const auto b = read_trajectory(killed / "trajectory.txt");
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_LE((a[i].camera_to_world.translation() - b[i].camera_to_world.translation()).norm(), 1e-6);

  // export subcommand matches the run's point cloud
  const fs::path cloud = out / "again.xyz";
  ASSERT_EQ(cli("export " + out.string() + " --frames 0,5 --out " + cloud.string()), 0);
  EXPECT_EQ(slurp(cloud), slurp(out / "points.xyz"));
}

TEST(CliRun, SkipPgoAndDeterminism) {
  const fs::path scene = tiny_scene("cli_det");
  const fs::path root = gcvd::testing::scratch_dir("cli_det_runs");
  const std::string base = "run " + scene.string() + " --config " + tiny_config(scene).string() + " --log-level warn --out ";
  ASSERT_EQ(cli(base + (root / "a").string()), 0);
  ASSERT_EQ(cli(base + (root / "b").string() + " --threads 1"), 0);
  EXPECT_EQ(slurp(root / "a" / "trajectory.txt"), slurp(root / "b" / "trajectory.txt"));
  ASSERT_EQ(cli(base + (root / "c").string() + " --skip-pgo"), 0);
  const KeyValues report = read_key_values(root / "c" / "report.txt");
  EXPECT_EQ(report.at("pgo_iterations"), "0");
  EXPECT_EQ(report.at("pgo_final_cost"), report.at("pgo_initial_cost"));
}

TEST(CliEval, GroundTruthRunAndGoldenFormat) {
  const fs::path scene = tiny_scene("cli_eval");
  const fs::path run = ground_truth_run(scene, "cli_eval_run");
  const EvalReport r = evaluate_run(run, scene);
  EXPECT_LE(r.ate, 1e-6);
  EXPECT_LE(r.rpe_translation, 1e-6);
  EXPECT_LE(r.rpe_rotation_deg, 1e-4);
  EXPECT_LE(r.depth.abs_rel, 1e-7);
  EXPECT_EQ(r.depth.delta_125, 1.0);

  std::string out;
  ASSERT_EQ(cli("eval " + run.string() + " " + scene.string(), &out), 0);
  EXPECT_EQ(out, r.format());
  std::string again;
  ASSERT_EQ(cli("eval " + run.string() + " " + scene.string(), &again), 0);
  EXPECT_EQ(out, again);
  std::string csv;
  ASSERT_EQ(cli("eval " + run.string() + " " + scene.string() + " --csv", &csv), 0);
  EXPECT_EQ(csv, EvalReport::csv_header() + "\n" + r.csv_row() + "\n");

  // Golden layout: the key order.
  std::istringstream lines(out);
  std::string line, shape;
  while (std::getline(lines, line)) shape += line.substr(0, line.find(" = ")) + "\n";
  expect_golden("eval_report_keys.txt", shape);
}

TEST(CliEval, MismatchedLengths) {
  const fs::path scene = tiny_scene("cli_eval_len");
  const fs::path run = ground_truth_run(scene, "cli_eval_len_run");
  auto traj = read_trajectory(run / "trajectory.txt");
  std::string text;
  for (std::size_t i = 0; i + 1 < traj.size(); ++i) text += format_trajectory_line(traj[i]) + "\n";
  write_text_file(text, run / "trajectory.txt");
  EXPECT_THROW(evaluate_run(run, scene), DataError);
  EXPECT_EQ(cli("eval " + run.string() + " " + scene.string()), 3);
}

TEST(RunConfig, KeyValueRoundTripAndValidation) {
  RunConfig c;
  c.weights.gradient = 0.0;
  c.skip_pgo = true;
  c.tau_set = {1, 3};
  const RunConfig back = RunConfig::from_key_values(c.to_key_values());
  EXPECT_EQ(back.to_key_values(), c.to_key_values());
  EXPECT_THROW(RunConfig::from_key_values({{"nope", "1"}}), ConfigError);
  EXPECT_THROW(RunConfig::from_key_values({{"batch_size", "x"}}), ConfigError);
  RunConfig bad;
  bad.batch_size = 4;
  EXPECT_THROW(bad.validate(), ConfigError);
}
