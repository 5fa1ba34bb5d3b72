#pragma once

// Whole-sequence driver: reads a dataset, runs tracking/mapping, writes the
// trajectory, checkpoint, loss log, timing and mesh, and evaluates when
// ground truth is available.

#include "tpslam/checkpoint.hpp"
#include "tpslam/config.hpp"
#include "tpslam/datasets.hpp"
#include "tpslam/evaluation.hpp"
#include "tpslam/mesher.hpp"
#include "tpslam/slam.hpp"
#include "tpslam/synthetic.hpp"
#include "tpslam/trajectory_io.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>

namespace tpslam {

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };

inline LogLevel parse_log_level(const std::string& s) {
  if (s == "quiet") return LogLevel::Quiet;
  if (s == "debug") return LogLevel::Debug;
  return LogLevel::Info;
}

class Logger {
 public:
  explicit Logger(LogLevel level = LogLevel::Info, std::ostream* os = &std::cerr)
      : level_(level), os_(os) {}
  bool enabled(LogLevel l) const { return os_ && int(l) <= int(level_); }
  void info(const std::string& msg) const { write(LogLevel::Info, msg); }
  void debug(const std::string& msg) const { write(LogLevel::Debug, msg); }
  void warn(const std::string& msg) const { write(LogLevel::Info, "warning: " + msg); }

 private:
  void write(LogLevel l, const std::string& msg) const {
    if (enabled(l)) *os_ << msg << '\n';
  }
  LogLevel level_;
  std::ostream* os_;
};

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct RunSummary {
  std::size_t frames = 0;
  double total_seconds = 0;
  double mean_frame_seconds = 0;
  std::optional<TrajectoryError> ate;
  std::optional<DepthL1> depth;
  std::optional<ReconstructionMetrics> reconstruction;
  std::filesystem::path trajectory, checkpoint, mesh, losses, timing, metrics;
};

/// Bounds and camera from the config, falling back to a synthetic dataset's scene file.
struct ResolvedSetup {
  Bounds bounds;
  CameraIntrinsics camera;
  std::optional<SyntheticScene> scene;
};

inline ResolvedSetup resolve_setup(const RunConfig& c) {
  namespace fs = std::filesystem;
  ResolvedSetup r;
  const fs::path scene_file = fs::path(c.dataset_path) / "scene.cfg";
  if (c.dataset_type == "synthetic") {
    if (!fs::exists(scene_file)) throw DatasetError("synthetic dataset without scene.cfg: " + c.dataset_path);
    r.scene = load_scene(scene_file.string());
  }
  if (c.bounds) {
    r.bounds = *c.bounds;
  } else if (r.scene) {
    r.bounds = r.scene->bounds;
  } else {
    throw ConfigError("scene.bounds", "missing; required for tum datasets");
  }
  if (c.camera) {
    r.camera = *c.camera;
  } else if (r.scene) {
    r.camera = r.scene->camera;
  } else {
    throw ConfigError("camera.fx", "missing [camera] section; required for tum datasets");
  }
  r.camera.validate();
  return r;
}

inline Trajectory estimated_trajectory(const std::vector<CameraPose<double>>& poses,
                                       const std::vector<double>& stamps) {
  Trajectory t;
  for (std::size_t i = 0; i < poses.size(); ++i) t.push_back({stamps[i], poses[i]});
  return t;
}

/// Runs the configured sequence end to end.
inline RunSummary run_sequence(const RunConfig& config, const Logger& log) {
  namespace fs = std::filesystem;
  using Clock = std::chrono::steady_clock;
  config.validate();
  if (config.dataset_path.empty()) throw ConfigError("dataset.path", "missing");
  const ResolvedSetup setup = resolve_setup(config);
  TumOptions topt;
  topt.depth_scale = setup.camera.depth_scale;
  topt.max_frames = config.max_frames;
  const TumSequence seq(config.dataset_path, topt);
  if (seq.size() == 0) throw DatasetError("no associated frames in " + config.dataset_path);
  if (seq.skipped()) log.info("skipped " + std::to_string(seq.skipped()) + " rgb frames without depth");

  const fs::path out(config.output);
  fs::create_directories(out);
  RunSummary summary;
  summary.trajectory = out / "trajectory.txt";
  summary.checkpoint = out / "checkpoint.eslm";
  summary.mesh = out / "mesh.ply";
  summary.losses = out / "losses.csv";
  summary.timing = out / "timing.csv";
  summary.metrics = out / "metrics.csv";

  std::ofstream losses(summary.losses);
  losses << "frame,phase,iter,term,value\n";
  std::ofstream timing(summary.timing);
  timing << "frame,seconds\n";
  std::ofstream traj_stream(summary.trajectory);

  Slam<float> slam(config.slam, setup.bounds, setup.camera);
  slam.set_loss_callback([&](const LossEvent& e) {
    const std::pair<const char*, double> terms[] = {
        {"free_space", e.terms.free_space}, {"trunc_middle", e.terms.trunc_middle},
        {"trunc_tail", e.terms.trunc_tail}, {"depth", e.terms.depth},
        {"color", e.terms.color},           {"total", e.terms.total}};
    char line[160];
    for (const auto& [name, v] : terms) {
      std::snprintf(line, sizeof line, "%zu,%s,%d,%s,%.9g\n", e.frame, phase_name(e.phase),
                    e.iteration, name, v);
      losses << line;
    }
    if (log.enabled(LogLevel::Debug)) {
      std::snprintf(line, sizeof line, "frame %zu %s it %d loss %.6g (rays %d, masked %d)%s",
                    e.frame, phase_name(e.phase), e.iteration, e.terms.total, e.active_rays,
                    e.masked_rays, e.outlier_fallback ? " fallback" : "");
      log.debug(line);
    }
    if (e.outlier_fallback) {
      log.warn("frame " + std::to_string(e.frame) + ": fewer than 10% of rays survived outlier masking");
    }
  });

  std::vector<double> stamps;
  std::vector<FrameRecord> frames_for_eval;  // depth frames for culling (synthetic only)
  const auto t_start = Clock::now();
  for (std::size_t i = 0; i < seq.size(); ++i) {
    FrameRecord frame = seq.load(i);
    const auto t0 = Clock::now();
    slam.process(frame);
    const double dt = std::chrono::duration<double>(Clock::now() - t0).count();
    stamps.push_back(frame.timestamp);
    timing << i << "," << fmt("%.6f", dt) << "\n";
    traj_stream << format_pose_line({frame.timestamp, slam.poses().back()}) << "\n" << std::flush;
    log.info("frame " + std::to_string(i) + "/" + std::to_string(seq.size()) + " " + fmt("%.2fs", dt));
    if (setup.scene && config.evaluate) frames_for_eval.push_back(std::move(frame));
  }
  summary.frames = seq.size();
  summary.total_seconds = std::chrono::duration<double>(Clock::now() - t_start).count();
  summary.mean_frame_seconds = summary.total_seconds / double(summary.frames);
  traj_stream.close();

  // final estimates, including pose refinements made by later mapping
  const Trajectory est = estimated_trajectory(slam.poses(), stamps);
  write_trajectory(summary.trajectory.string(), est);
  std::vector<KeyframePose> kf;
  for (const auto& k : slam.keyframes()) {
    kf.push_back({k.frame_id, stamps[k.frame_id], slam.poses()[k.frame_id]});
  }
  save_checkpoint(summary.checkpoint.string(), slam.field(), setup.camera, config.slam.truncation, kf);
  log.info("wrote " + summary.trajectory.string() + " and " + summary.checkpoint.string());

  std::vector<CullView> views;
  for (const auto& k : slam.keyframes()) views.push_back({slam.poses()[k.frame_id], &k.frame});
  const TriMesh raw = marching_cubes(fill_volume(slam.field(), config.mesh_voxel));
  TriMesh mesh = cull_mesh(raw, views, setup.camera, config.slam.truncation);
  color_vertices(mesh, slam.field());
  write_ply(summary.mesh.string(), mesh);

  const Trajectory gt = seq.ground_truth();
  if (config.evaluate && gt.size() >= 2) {
    summary.ate = ate_error(est, gt);
  }
  if (config.evaluate && setup.scene) {
    const SyntheticScene& scene = *setup.scene;
    if (config.eval_poses > 0) {
      summary.depth = depth_l1(slam.field(), scene, eval_poses(scene, config.eval_poses, config.slam.seed + 1),
                               config.slam.truncation);
    }
    std::vector<CullView> gt_views;
    for (const auto& f : frames_for_eval) {
      if (f.gt_pose) gt_views.push_back({*f.gt_pose, &f});
    }
    const TriMesh gt_mesh = cull_mesh(analytic_mesh(scene, config.mesh_voxel), gt_views, setup.camera,
                                      config.slam.truncation);
    const TriMesh rec = cull_mesh(raw, gt_views, setup.camera, config.slam.truncation);
    summary.reconstruction =
        accuracy_completion(rec, gt_mesh, config.eval_threshold, config.eval_samples, config.slam.seed);
  }

  std::ofstream metrics(summary.metrics);
  metrics << "metric,value\n";
  metrics << "frames," << summary.frames << "\n";
  metrics << "fpt_seconds," << fmt("%.6f", summary.mean_frame_seconds) << "\n";
  if (summary.ate) {
    metrics << "ate_rmse_m," << fmt("%.9f", summary.ate->rmse) << "\n";
    metrics << "ate_mean_m," << fmt("%.9f", summary.ate->mean) << "\n";
  }
  if (summary.depth) metrics << "depth_l1_m," << fmt("%.9f", summary.depth->mean) << "\n";
  if (summary.reconstruction) {
    const auto& r = *summary.reconstruction;
    metrics << "accuracy_m," << (r.accuracy ? fmt("%.9f", *r.accuracy) : std::string("nan")) << "\n";
    metrics << "completion_m," << fmt("%.9f", r.completion) << "\n";
    metrics << "completion_ratio_pct," << fmt("%.4f", r.completion_ratio) << "\n";
  }
  return summary;
}

inline std::string summary_line(const RunSummary& s) {
  std::string line = "frames " + std::to_string(s.frames) + " fpt " + fmt("%.3fs", s.mean_frame_seconds);
  if (s.ate) line += " ATE RMSE " + fmt("%.4f m", s.ate->rmse) + " mean " + fmt("%.4f m", s.ate->mean);
  if (s.depth) line += " depth-L1 " + fmt("%.4f m", s.depth->mean);
  if (s.reconstruction) {
    const auto& r = *s.reconstruction;
    line += " acc " + (r.accuracy ? fmt("%.4f m", *r.accuracy) : std::string("n/a"));
    line += " comp " + fmt("%.4f m", r.completion) + " ratio " + fmt("%.2f%%", r.completion_ratio);
  }
  return line;
}

}  // namespace tpslam
