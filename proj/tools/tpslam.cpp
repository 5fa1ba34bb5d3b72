// tpslam command-line entry point.

#include "tpslam/gradcheck.hpp"
#include "tpslam/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace tpslam;

enum ExitCode { kOk = 0, kRuntime = 1, kConfig = 2, kGradcheck = 3 };

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  bool print_defaults = false;
  std::string log_level;
};

int cmd_run(const std::string& config_path, const std::string& output, const GlobalOptions& g) {
  RunConfig c = RunConfig::load(config_path);
  if (g.seed) c.slam.seed = *g.seed;
  if (!output.empty()) c.output = output;
  if (!g.log_level.empty()) c.log_level = g.log_level;
  c.validate();
  const Logger log(parse_log_level(c.log_level));
  const RunSummary s = run_sequence(c, log);
  log.info("wrote " + s.mesh.string() + ", " + s.losses.string() + ", " + s.timing.string());
  std::cout << summary_line(s) << "\n";
  return kOk;
}

int cmd_synth(const std::string& scene_path, const std::string& out_dir, const GlobalOptions& g) {
  SyntheticScene s = load_scene(scene_path);
  if (g.seed) s.seed = *g.seed;
  synth_generate(s, out_dir);
  std::cout << "wrote " << s.orbit.frames << " frames to " << out_dir << "\n";
  return kOk;
}

int cmd_mesh(const std::string& ckpt_path, const std::string& out, double voxel,
             const std::string& dataset) {
  if (!(voxel > 0)) throw ConfigError("voxel", "must be positive");
  const auto ck = load_checkpoint<float>(ckpt_path);
  TriMesh mesh = marching_cubes(fill_volume(ck.field, voxel));
  if (!dataset.empty()) {
    // cull against the keyframe depth maps of the sequence the checkpoint was built from
    TumOptions o;
    o.depth_scale = ck.camera.depth_scale;
    const TumSequence seq(dataset, o);
    std::vector<FrameRecord> frames;
    frames.reserve(ck.keyframes.size());
    for (const auto& k : ck.keyframes) frames.push_back(seq.load(std::size_t(k.frame_id)));
    std::vector<CullView> views;
    for (std::size_t i = 0; i < frames.size(); ++i) views.push_back({ck.keyframes[i].pose, &frames[i]});
    mesh = cull_mesh(mesh, views, ck.camera, ck.truncation);
  }
  color_vertices(mesh, ck.field);
  write_ply(out, mesh);
  std::cout << "wrote " << out << ": " << mesh.vertices.size() << " vertices, " << mesh.faces.size()
            << " faces\n";
  return kOk;
}

int cmd_render(const std::string& ckpt_path, const std::vector<double>& pose_values,
               const std::string& prefix) {
  if (pose_values.size() != 7) throw ConfigError("pose", "expected tx ty tz qx qy qz qw");
  const auto ck = load_checkpoint<float>(ckpt_path);
  CameraPose<double> pose;
  pose.params = {pose_values[6], pose_values[3], pose_values[4], pose_values[5],
                 pose_values[0], pose_values[1], pose_values[2]};
  const double qn = Eigen::Vector4d(pose.params[0], pose.params[1], pose.params[2], pose.params[3]).norm();
  if (!(qn > 1e-12)) throw ConfigError("pose", "quaternion must be nonzero");
  pose.normalize();
  const FrameRecord f = render_field(ck.field, ck.camera, pose, ck.truncation);
  Image8 rgb;
  rgb.width = f.width;
  rgb.height = f.height;
  rgb.data.resize(f.rgb.size());
  for (std::size_t i = 0; i < f.rgb.size(); ++i) {
    rgb.data[i] = std::uint8_t(std::lround(std::clamp(f.rgb[i], 0.f, 1.f) * 255.f));
  }
  Image16 depth;
  depth.width = f.width;
  depth.height = f.height;
  depth.data.resize(f.depth.size());
  for (std::size_t i = 0; i < f.depth.size(); ++i) {
    depth.data[i] = quantize_depth(f.depth[i], ck.camera.depth_scale);
  }
  write_png_rgb(prefix + "_rgb.png", rgb);
  write_png_depth(prefix + "_depth.png", depth);
  std::cout << "wrote " << prefix << "_rgb.png and " << prefix << "_depth.png\n";
  return kOk;
}

int cmd_eval(const std::string& est_path, const std::string& gt_path,
             const std::vector<std::string>& meshes, double threshold, std::size_t samples,
             const GlobalOptions& g) {
  if (!(threshold > 0)) throw ConfigError("threshold", "must be positive");
  const TrajectoryError ate = ate_error(read_trajectory(est_path), read_trajectory(gt_path));
  std::cout << "metric,value\n";
  std::cout << "ate_pairs," << ate.errors.size() << "\n";
  std::cout << "ate_rmse_m," << fmt("%.9f", ate.rmse) << "\n";
  std::cout << "ate_mean_m," << fmt("%.9f", ate.mean) << "\n";
  if (!meshes.empty()) {
    if (meshes.size() != 2) throw ConfigError("mesh", "expected <reconstructed.ply> <reference.ply>");
    const auto m = accuracy_completion(read_ply(meshes[0]), read_ply(meshes[1]), threshold, samples,
                                       g.seed.value_or(0));
    std::cout << "accuracy_m," << (m.accuracy ? fmt("%.9f", *m.accuracy) : std::string("nan")) << "\n";
    std::cout << "completion_m," << fmt("%.9f", m.completion) << "\n";
    std::cout << "completion_ratio_pct," << fmt("%.4f", m.completion_ratio) << "\n";
    if (!m.accuracy) {
      std::cerr << "error: reconstructed mesh is empty; accuracy undefined\n";
      return kRuntime;
    }
  }
  return kOk;
}

int cmd_gradcheck(int parameters, bool verbose, const GlobalOptions& g) {
  GradcheckOptions o;
  o.seed = g.seed.value_or(0);
  if (parameters <= 0) throw ConfigError("params", "must be positive");
  o.parameters = parameters;
  const GradcheckReport r = gradcheck(o);
  if (verbose) {
    r.print(std::cout);
  } else {
    GradcheckReport brief = r;
    brief.entries.clear();
    brief.print(std::cout);
  }
  return r.passed ? kOk : kGradcheck;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tpslam: dense RGB-D SLAM on tri-plane TSDF features"};
  app.require_subcommand(0, 1);
  app.fallthrough();
  GlobalOptions g;
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "Random seed (overrides the config)");
  app.add_flag("--print-defaults", g.print_defaults, "Print the default run configuration and exit");
  app.add_option("--log-level", g.log_level, "quiet | info | debug")
      ->check(CLI::IsMember({"quiet", "info", "debug"}));

  std::string config_path, run_output;
  auto* run = app.add_subcommand("run", "Run SLAM on a dataset described by a config file");
  run->add_option("config", config_path, "Run configuration")->required();
  run->add_option("-o,--output", run_output, "Output directory (overrides run.output)");

  std::string scene_path, synth_out = "synthetic";
  auto* synth = app.add_subcommand("synth", "Render a synthetic TUM-format sequence");
  synth->add_option("scene", scene_path, "Scene description")->required();
  synth->add_option("-o,--output", synth_out, "Dataset directory");

  std::string mesh_ckpt, mesh_out = "mesh.ply", mesh_dataset;
  double mesh_voxel = 0.01;
  auto* mesh = app.add_subcommand("mesh", "Extract a mesh from a checkpoint");
  mesh->add_option("checkpoint", mesh_ckpt)->required();
  mesh->add_option("-o,--output", mesh_out, "PLY path");
  mesh->add_option("--voxel", mesh_voxel, "Marching-cubes voxel size in meters");
  mesh->add_option("--dataset", mesh_dataset, "Dataset directory for culling with keyframe depth");

  std::string render_ckpt, render_prefix = "render";
  std::vector<double> render_pose;
  auto* render = app.add_subcommand("render", "Render color and depth from a checkpoint");
  render->add_option("checkpoint", render_ckpt)->required();
  render->add_option("--pose", render_pose, "Camera-to-world pose: tx ty tz qx qy qz qw")
      ->required()
      ->expected(7);
  render->add_option("-o,--output", render_prefix, "Output prefix for <prefix>_rgb.png/_depth.png");

  std::string est_path, gt_path;
  std::vector<std::string> eval_meshes;
  double eval_threshold = 0.05;
  std::size_t eval_samples = 100000;
  auto* eval = app.add_subcommand("eval", "Trajectory and mesh metrics");
  eval->add_option("estimate", est_path, "Estimated trajectory (TUM format)")->required();
  eval->add_option("groundtruth", gt_path, "Reference trajectory (TUM format)")->required();
  eval->add_option("--mesh", eval_meshes, "Reconstructed and reference PLY")->expected(2);
  eval->add_option("--threshold", eval_threshold, "Completion-ratio threshold in meters");
  eval->add_option("--samples", eval_samples, "Surface samples per mesh");

  int gc_params = 100;
  bool gc_verbose = false;
  auto* gc = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  gc->add_option("--params", gc_params, "Number of parameters to check");
  gc->add_flag("-v,--verbose", gc_verbose, "Print every checked parameter");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }
  if (*seed_opt) g.seed = seed_value;

  try {
    if (g.print_defaults) {
      std::cout << RunConfig{}.serialize();
      return kOk;
    }
    if (*run) return cmd_run(config_path, run_output, g);
    if (*synth) return cmd_synth(scene_path, synth_out, g);
    if (*mesh) return cmd_mesh(mesh_ckpt, mesh_out, mesh_voxel, mesh_dataset);
    if (*render) return cmd_render(render_ckpt, render_pose, render_prefix);
    if (*eval) return cmd_eval(est_path, gt_path, eval_meshes, eval_threshold, eval_samples, g);
    if (*gc) return cmd_gradcheck(gc_params, gc_verbose, g);
    std::cout << app.help();
    return kConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}
