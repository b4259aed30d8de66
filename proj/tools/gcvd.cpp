#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>

#include "gcvd/error.hpp"
#include "gcvd/pipeline.hpp"
#include "gcvd/synth_oracle.hpp"

namespace fs = std::filesystem;
using namespace gcvd;

namespace {

int threads_from_env() {
  const char* env = std::getenv("GCVD_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  try {
    std::size_t used = 0;
    const int t = std::stoi(env, &used);
    if (used != std::string(env).size() || t < 1) throw std::invalid_argument(env);
    return t;
  } catch (const std::exception&) {
    throw ConfigError(std::string("GCVD_THREADS must be a positive integer, got '") + env + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Globally consistent video depth and pose estimation"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string level = "info";
  app.add_option("--log-level", level, "trace, debug, info, warn, error, off");

  // synth
  auto* synth = app.add_subcommand("synth", "Render a synthetic scene directory");
  std::string spec_file;
  fs::path synth_out;
  std::optional<std::uint64_t> seed;
  std::optional<int> frames;
  bool force = false;
  synth->add_option("out", synth_out, "Output scene directory")->required();
  synth->add_option("--spec", spec_file, "Scene spec (key = value); defaults when omitted");
  synth->add_option("--seed", seed, "Override the spec seed");
  synth->add_option("--frames", frames, "Override the frame count");
  synth->add_flag("--force", force, "Overwrite a non-empty output directory");

  // run
  auto* run = app.add_subcommand("run", "Estimate poses and depth for a scene");
  fs::path scene, run_out, config_file;
  std::optional<int> threads;
  bool skip_pgo = false, no_grad = false, no_mesh = false, uniform = false, resume = false;
  std::string flow_source = "auto";
  std::vector<int> cloud;
  run->add_option("scene", scene, "Scene directory")->required();
  run->add_option("--out", run_out, "Output directory")->required();
  run->add_option("--config", config_file, "Config file (key = value)");
  run->add_option("--threads", threads, "Worker threads (GCVD_THREADS when omitted)");
  run->add_flag("--skip-pgo", skip_pgo, "Disable pose graph optimisation");
  run->add_flag("--no-grad-loss", no_grad, "Disable the depth gradient loss");
  run->add_flag("--no-mesh", no_mesh, "Disable the deformation mesh");
  run->add_flag("--uniform-keyframes", uniform, "Uniform keyframes with the adaptive count");
  run->add_option("--flow-source", flow_source, "auto, files or oracle");
  run->add_flag("--resume", resume, "Continue from the checkpoints in the output directory");
  run->add_option("--point-cloud", cloud, "Frames to export to points.xyz")->delimiter(',');

  // eval
  auto* eval = app.add_subcommand("eval", "Compare a run with a scene's ground truth");
  fs::path eval_run, eval_scene, eval_out;
  int rpe_step = 1;
  bool csv = false;
  eval->add_option("run", eval_run, "Run output directory")->required();
  eval->add_option("scene", eval_scene, "Scene directory with gt/")->required();
  eval->add_option("--rpe-step", rpe_step, "Frame step for the relative pose error");
  eval->add_flag("--csv", csv, "Print a CSV header and row");
  eval->add_option("--out", eval_out, "Also write the report to this file");

  // export
  auto* exp = app.add_subcommand("export", "Write a point cloud from a run directory");
  fs::path exp_run, exp_out;
  std::vector<int> exp_frames;
  exp->add_option("run", exp_run, "Run output directory")->required();
  exp->add_option("--frames", exp_frames, "Frame indices")->required()->delimiter(',');
  exp->add_option("--out", exp_out, "XYZ output file")->required();

  // validate
  auto* validate = app.add_subcommand("validate", "Check a scene directory against the file formats");
  fs::path validate_dir;
  validate->add_option("scene", validate_dir, "Scene directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    spdlog::set_level(spdlog::level::from_str(level));
    if (*synth) {
      SceneSpec spec;
      if (!spec_file.empty()) spec = SceneSpec::from_key_values(read_key_values(spec_file));
      if (seed) spec.seed = *seed;
      if (frames) spec.frame_count = *frames;
      generate_scene(spec, synth_out, force);
      std::cout << "wrote " << synth_out.string() << "\n";
    } else if (*run) {
      RunOptions opts;
      opts.scene = scene;
      opts.out = run_out;
      if (!config_file.empty()) opts.config = RunConfig::from_key_values(read_key_values(config_file));
      opts.config.threads = threads ? *threads : threads_from_env();
      if (skip_pgo) opts.config.skip_pgo = true;
      if (no_grad) opts.config.weights.gradient = 0.0;
      if (no_mesh) opts.config.use_mesh = false;
      if (uniform) opts.config.uniform_keyframes = true;
      opts.flow_source = flow_source_from_string(flow_source);
      opts.resume = resume;
      opts.point_cloud_frames = cloud;
      if (!fs::is_directory(scene)) throw DataError("scene directory not found: " + scene.string());
      const RunReport report = run_pipeline(opts);
      for (const auto& [k, v] : report.to_key_values()) std::cout << k << " = " << v << "\n";
    } else if (*eval) {
      const EvalReport report = evaluate_run(eval_run, eval_scene, rpe_step);
      const std::string text = csv ? EvalReport::csv_header() + "\n" + report.csv_row() + "\n" : report.format();
      std::cout << text;
      if (!eval_out.empty()) write_text_file(text, eval_out);
      if (report.has_nan()) throw NumericalError("evaluation produced NaN");
    } else if (*exp) {
      export_point_cloud(exp_run, exp_frames, exp_out);
    } else if (*validate) {
      const auto issues = validate_scene(validate_dir);
      for (const auto& s : issues) std::cout << s << "\n";
      if (!issues.empty()) throw DataError(std::to_string(issues.size()) + " issue(s) found");
      std::cout << "ok\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
