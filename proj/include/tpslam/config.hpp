#pragma once

// Run configuration: parsing, validation and a canonical text form.

#include "tpslam/ini.hpp"
#include "tpslam/slam.hpp"

#include <filesystem>

namespace tpslam {

struct RunConfig {
  // [dataset]
  std::string dataset_path;
  std::string dataset_type = "tum";  // tum | synthetic
  std::size_t max_frames = 0;         // 0: all

  // [scene] and [camera]; synthetic datasets may supply them instead
  std::optional<Bounds> bounds;
  std::optional<CameraIntrinsics> camera;

  SlamOptions slam;

  // [run]
  std::string output = "out";
  std::string first_pose = "groundtruth";  // groundtruth | identity
  std::string log_level = "info";          // quiet | info | debug
  bool evaluate = true;
  double mesh_voxel = 0.01;
  int eval_poses = 200;
  std::size_t eval_samples = 100000;
  double eval_threshold = 0.05;

  static RunConfig parse(const IniDocument& doc);
  static RunConfig load(const std::string& path);
  std::string serialize() const;
  void validate() const;
};

namespace detail {

inline void require_positive(double v, const std::string& field) {
  if (!(v > 0)) throw ConfigError(field, "must be positive");
}

inline LossWeights read_weights(const IniReader& r, const LossWeights& d) {
  LossWeights w;
  w.free_space = r.number("w_free_space", d.free_space);
  w.trunc_middle = r.number("w_trunc_middle", d.trunc_middle);
  w.trunc_tail = r.number("w_trunc_tail", d.trunc_tail);
  w.depth = r.number("w_depth", d.depth);
  w.color = r.number("w_color", d.color);
  return w;
}

inline void write_weights(std::ostream& os, const LossWeights& w) {
  os << "w_free_space = " << format_double(w.free_space) << "\n";
  os << "w_trunc_middle = " << format_double(w.trunc_middle) << "\n";
  os << "w_trunc_tail = " << format_double(w.trunc_tail) << "\n";
  os << "w_depth = " << format_double(w.depth) << "\n";
  os << "w_color = " << format_double(w.color) << "\n";
}

}  // namespace detail

inline RunConfig RunConfig::parse(const IniDocument& doc) {
  static const std::vector<std::string> known{"dataset", "scene",    "camera", "field",
                                              "sampling", "mapping", "tracking", "loss",
                                              "ablation", "run"};
  for (const auto& s : doc.sections) {
    if (std::find(known.begin(), known.end(), s.name) == known.end()) {
      throw ConfigError(s.name.empty() ? "config" : s.name, "unknown section");
    }
    if (doc.section(s.name) != &s) throw ConfigError(s.name, "section given twice");
  }
  RunConfig c;
  SlamOptions& o = c.slam;
  const RunConfig d;

  IniReader ds(doc.section("dataset"), "dataset");
  ds.reject_unknown({"path", "type", "max_frames"});
  c.dataset_path = ds.text("path", "");
  c.dataset_type = ds.text("type", d.dataset_type);
  const long long max_frames = ds.integer("max_frames", 0);
  if (max_frames < 0) throw ConfigError("dataset.max_frames", "must be >= 0");
  c.max_frames = std::size_t(max_frames);

  IniReader sc(doc.section("scene"), "scene");
  sc.reject_unknown({"bounds"});
  if (sc.has("bounds")) {
    const auto b = sc.numbers("bounds", 6);
    c.bounds = Bounds{{b[0], b[1], b[2]}, {b[3], b[4], b[5]}};
  }

  IniReader cam(doc.section("camera"), "camera");
  cam.reject_unknown({"fx", "fy", "cx", "cy", "width", "height", "depth_scale"});
  if (doc.section("camera")) {
    CameraIntrinsics K;
    K.fx = cam.number("fx");
    K.fy = cam.number("fy");
    K.cx = cam.number("cx");
    K.cy = cam.number("cy");
    K.width = int(cam.integer("width"));
    K.height = int(cam.integer("height"));
    K.depth_scale = cam.number("depth_scale", K.depth_scale);
    c.camera = K;
  }

  IniReader f(doc.section("field"), "field");
  f.reject_unknown({"channels", "hidden", "coarse_resolution", "fine_geometry_resolution",
                    "fine_appearance_resolution", "beta_init"});
  o.field.channels = int(f.integer("channels", o.field.channels));
  o.field.hidden = int(f.integer("hidden", o.field.hidden));
  o.field.coarse_resolution = f.number("coarse_resolution", o.field.coarse_resolution);
  o.field.fine_geometry_resolution = f.number("fine_geometry_resolution", o.field.fine_geometry_resolution);
  o.field.fine_appearance_resolution =
      f.number("fine_appearance_resolution", o.field.fine_appearance_resolution);
  o.beta_init = f.number("beta_init", o.beta_init);

  IniReader sa(doc.section("sampling"), "sampling");
  sa.reject_unknown({"truncation", "n_strat", "n_imp"});
  o.truncation = sa.number("truncation", o.truncation);
  o.n_strat = int(sa.integer("n_strat", o.n_strat));
  o.n_imp = int(sa.integer("n_imp", o.n_imp));

  IniReader m(doc.section("mapping"), "mapping");
  m.reject_unknown({"iters", "first_frame_iters", "every", "window", "rays", "valid_depth_only",
                    "lr_planes", "lr_decoders", "lr_beta", "lr_pose", "w_free_space",
                    "w_trunc_middle", "w_trunc_tail", "w_depth", "w_color"});
  o.map_iters = int(m.integer("iters", o.map_iters));
  o.first_frame_iters = int(m.integer("first_frame_iters", o.first_frame_iters));
  o.map_every = int(m.integer("every", o.map_every));
  o.window = int(m.integer("window", o.window));
  o.map_rays = int(m.integer("rays", o.map_rays));
  o.map_valid_depth_only = m.boolean("valid_depth_only", o.map_valid_depth_only);
  o.lr_planes = m.number("lr_planes", o.lr_planes);
  o.lr_decoders = m.number("lr_decoders", o.lr_decoders);
  o.lr_beta = m.number("lr_beta", o.lr_beta);
  o.lr_map_pose = m.number("lr_pose", o.lr_map_pose);
  o.map_weights = detail::read_weights(m, o.map_weights);

  IniReader t(doc.section("tracking"), "tracking");
  t.reject_unknown({"iters", "rays", "lr_rotation", "lr_translation", "lr_final_scale",
                    "outlier_factor", "w_free_space", "w_trunc_middle", "w_trunc_tail", "w_depth",
                    "w_color"});
  o.track_iters = int(t.integer("iters", o.track_iters));
  o.track_rays = int(t.integer("rays", o.track_rays));
  o.lr_track_rotation = t.number("lr_rotation", o.lr_track_rotation);
  o.lr_track_translation = t.number("lr_translation", o.lr_track_translation);
  o.track_lr_final_scale = t.number("lr_final_scale", o.track_lr_final_scale);
  o.outlier_factor = t.number("outlier_factor", o.outlier_factor);
  o.track_weights = detail::read_weights(t, o.track_weights);

  IniReader l(doc.section("loss"), "loss");
  l.reject_unknown({"strict_ray_count"});
  o.strict_ray_count = l.boolean("strict_ray_count", o.strict_ray_count);

  IniReader a(doc.section("ablation"), "ablation");
  a.reject_unknown({"shared_planes", "coarse_only", "fine_only", "combine", "no_importance",
                    "single_trunc_loss", "freeze_map_poses", "no_color"});
  o.field.shared_planes = a.boolean("shared_planes", false);
  const bool coarse_only = a.boolean("coarse_only", false);
  const bool fine_only = a.boolean("fine_only", false);
  if (coarse_only && fine_only) {
    throw ConfigError("ablation.coarse_only", "coarse_only and fine_only are exclusive");
  }
  o.field.levels = coarse_only ? LevelMode::CoarseOnly : fine_only ? LevelMode::FineOnly : LevelMode::Both;
  const std::string combine = a.text("combine", "concat");
  if (combine != "concat" && combine != "sum") throw ConfigError("ablation.combine", "expected concat or sum");
  o.field.combine = combine == "sum" ? CombineMode::Sum : CombineMode::Concat;
  o.importance = !a.boolean("no_importance", false);
  o.single_truncation = a.boolean("single_trunc_loss", false);
  o.freeze_map_poses = a.boolean("freeze_map_poses", false);
  o.use_color = !a.boolean("no_color", false);

  IniReader r(doc.section("run"), "run");
  r.reject_unknown({"seed", "output", "first_pose", "log_level", "evaluate", "mesh_voxel",
                    "eval_poses", "eval_samples", "eval_threshold"});
  const long long seed = r.integer("seed", 0);
  if (seed < 0) throw ConfigError("run.seed", "must be >= 0");
  o.seed = std::uint64_t(seed);
  c.output = r.text("output", d.output);
  c.first_pose = r.text("first_pose", d.first_pose);
  c.log_level = r.text("log_level", d.log_level);
  c.evaluate = r.boolean("evaluate", d.evaluate);
  c.mesh_voxel = r.number("mesh_voxel", d.mesh_voxel);
  c.eval_poses = int(r.integer("eval_poses", d.eval_poses));
  const long long samples = r.integer("eval_samples", (long long)d.eval_samples);
  if (samples <= 0) throw ConfigError("run.eval_samples", "must be positive");
  c.eval_samples = std::size_t(samples);
  c.eval_threshold = r.number("eval_threshold", d.eval_threshold);
  o.first_pose_from_gt = c.first_pose == "groundtruth";

  c.validate();
  return c;
}

inline RunConfig RunConfig::load(const std::string& path) {
  RunConfig c = parse(IniDocument::load(path));
  // dataset paths are relative to the config file
  if (!c.dataset_path.empty() && std::filesystem::path(c.dataset_path).is_relative()) {
    c.dataset_path = (std::filesystem::path(path).parent_path() / c.dataset_path).lexically_normal().string();
  }
  return c;
}

inline void RunConfig::validate() const {
  using detail::require_positive;
  const SlamOptions& o = slam;
  if (dataset_type != "tum" && dataset_type != "synthetic") {
    throw ConfigError("dataset.type", "expected tum or synthetic");
  }
  if (bounds && !(bounds->max.array() > bounds->min.array()).all()) {
    throw ConfigError("scene.bounds", "max must exceed min on every axis");
  }
  if (camera) camera->validate();
  if (o.field.channels <= 0) throw ConfigError("field.channels", "must be positive");
  if (o.field.hidden <= 0) throw ConfigError("field.hidden", "must be positive");
  require_positive(o.field.coarse_resolution, "field.coarse_resolution");
  require_positive(o.field.fine_geometry_resolution, "field.fine_geometry_resolution");
  require_positive(o.field.fine_appearance_resolution, "field.fine_appearance_resolution");
  if (o.field.fine_geometry_resolution > o.field.coarse_resolution) {
    throw ConfigError("field.fine_geometry_resolution", "must not exceed coarse_resolution");
  }
  if (o.field.fine_appearance_resolution > o.field.coarse_resolution) {
    throw ConfigError("field.fine_appearance_resolution", "must not exceed coarse_resolution");
  }
  require_positive(o.beta_init, "field.beta_init");
  require_positive(o.truncation, "sampling.truncation");
  if (o.n_strat <= 0) throw ConfigError("sampling.n_strat", "must be positive");
  if (o.n_imp < 0) throw ConfigError("sampling.n_imp", "must be >= 0");
  if (o.map_iters <= 0) throw ConfigError("mapping.iters", "must be positive");
  if (o.first_frame_iters < 0) throw ConfigError("mapping.first_frame_iters", "must be >= 0");
  if (o.map_every <= 0) throw ConfigError("mapping.every", "must be positive");
  if (o.window < 1) throw ConfigError("mapping.window", "must be positive");
  if (o.map_rays <= 0) throw ConfigError("mapping.rays", "must be positive");
  require_positive(o.lr_planes, "mapping.lr_planes");
  require_positive(o.lr_decoders, "mapping.lr_decoders");
  require_positive(o.lr_beta, "mapping.lr_beta");
  require_positive(o.lr_map_pose, "mapping.lr_pose");
  o.map_weights.validate("mapping.w_free_space");
  if (o.track_iters <= 0) throw ConfigError("tracking.iters", "must be positive");
  if (o.track_rays <= 0) throw ConfigError("tracking.rays", "must be positive");
  require_positive(o.lr_track_rotation, "tracking.lr_rotation");
  require_positive(o.lr_track_translation, "tracking.lr_translation");
  if (!(o.track_lr_final_scale > 0 && o.track_lr_final_scale <= 1)) {
    throw ConfigError("tracking.lr_final_scale", "must be in (0, 1]");
  }
  require_positive(o.outlier_factor, "tracking.outlier_factor");
  o.track_weights.validate("tracking.w_free_space");
  if (first_pose != "groundtruth" && first_pose != "identity") {
    throw ConfigError("run.first_pose", "expected groundtruth or identity");
  }
  if (log_level != "quiet" && log_level != "info" && log_level != "debug") {
    throw ConfigError("run.log_level", "expected quiet, info or debug");
  }
  require_positive(mesh_voxel, "run.mesh_voxel");
  if (eval_poses < 0) throw ConfigError("run.eval_poses", "must be >= 0");
  require_positive(eval_threshold, "run.eval_threshold");
}

inline std::string RunConfig::serialize() const {
  const SlamOptions& o = slam;
  auto num = [](double v) { return format_double(v); };
  auto flag = [](bool b) { return b ? "true" : "false"; };
  std::ostringstream os;
  os << "[dataset]\n";
  os << "path = " << dataset_path << "\n";
  os << "type = " << dataset_type << "\n";
  os << "max_frames = " << max_frames << "\n";
  os << "\n[scene]\n";
  if (bounds) {
    os << "bounds = " << num(bounds->min.x()) << " " << num(bounds->min.y()) << " "
       << num(bounds->min.z()) << " " << num(bounds->max.x()) << " " << num(bounds->max.y())
       << " " << num(bounds->max.z()) << "\n";
  } else {
    os << "# bounds = xmin ymin zmin xmax ymax zmax (required unless the dataset provides them)\n";
  }
  if (camera) {
    os << "\n[camera]\n";
    os << "fx = " << num(camera->fx) << "\nfy = " << num(camera->fy) << "\ncx = " << num(camera->cx)
       << "\ncy = " << num(camera->cy) << "\nwidth = " << camera->width << "\nheight = "
       << camera->height << "\ndepth_scale = " << num(camera->depth_scale) << "\n";
  }
  os << "\n[field]\n";
  os << "channels = " << o.field.channels << "\n";
  os << "hidden = " << o.field.hidden << "\n";
  os << "coarse_resolution = " << num(o.field.coarse_resolution) << "\n";
  os << "fine_geometry_resolution = " << num(o.field.fine_geometry_resolution) << "\n";
  os << "fine_appearance_resolution = " << num(o.field.fine_appearance_resolution) << "\n";
  os << "beta_init = " << num(o.beta_init) << "\n";
  os << "\n[sampling]\n";
  os << "truncation = " << num(o.truncation) << "\n";
  os << "n_strat = " << o.n_strat << "\n";
  os << "n_imp = " << o.n_imp << "\n";
  os << "\n[mapping]\n";
  os << "iters = " << o.map_iters << "\n";
  os << "first_frame_iters = " << o.first_frame_iters << "\n";
  os << "every = " << o.map_every << "\n";
  os << "window = " << o.window << "\n";
  os << "rays = " << o.map_rays << "\n";
  os << "valid_depth_only = " << flag(o.map_valid_depth_only) << "\n";
  os << "lr_planes = " << num(o.lr_planes) << "\n";
  os << "lr_decoders = " << num(o.lr_decoders) << "\n";
  os << "lr_beta = " << num(o.lr_beta) << "\n";
  os << "lr_pose = " << num(o.lr_map_pose) << "\n";
  detail::write_weights(os, o.map_weights);
  os << "\n[tracking]\n";
  os << "iters = " << o.track_iters << "\n";
  os << "rays = " << o.track_rays << "\n";
  os << "lr_rotation = " << num(o.lr_track_rotation) << "\n";
  os << "lr_translation = " << num(o.lr_track_translation) << "\n";
  os << "lr_final_scale = " << num(o.track_lr_final_scale) << "\n";
  os << "outlier_factor = " << num(o.outlier_factor) << "\n";
  detail::write_weights(os, o.track_weights);
  os << "\n[loss]\n";
  os << "strict_ray_count = " << flag(o.strict_ray_count) << "\n";
  os << "\n[ablation]\n";
  os << "shared_planes = " << flag(o.field.shared_planes) << "\n";
  os << "coarse_only = " << flag(o.field.levels == LevelMode::CoarseOnly) << "\n";
  os << "fine_only = " << flag(o.field.levels == LevelMode::FineOnly) << "\n";
  os << "combine = " << (o.field.combine == CombineMode::Sum ? "sum" : "concat") << "\n";
  os << "no_importance = " << flag(!o.importance) << "\n";
  os << "single_trunc_loss = " << flag(o.single_truncation) << "\n";
  os << "freeze_map_poses = " << flag(o.freeze_map_poses) << "\n";
  os << "no_color = " << flag(!o.use_color) << "\n";
  os << "\n[run]\n";
  os << "seed = " << o.seed << "\n";
  os << "output = " << output << "\n";
  os << "first_pose = " << first_pose << "\n";
  os << "log_level = " << log_level << "\n";
  os << "evaluate = " << flag(evaluate) << "\n";
  os << "mesh_voxel = " << num(mesh_voxel) << "\n";
  os << "eval_poses = " << eval_poses << "\n";
  os << "eval_samples = " << eval_samples << "\n";
  os << "eval_threshold = " << num(eval_threshold) << "\n";
  return os.str();
}

}  // namespace tpslam
