#pragma once

// Analytic test scenes: SDF primitives, an orbit trajectory, sphere-traced
// RGB-D frames, and writing them out as a TUM-layout sequence.

#include "tpslam/frame.hpp"
#include "tpslam/image_io.hpp"
#include "tpslam/ini.hpp"
#include "tpslam/mesher.hpp"
#include "tpslam/renderer.hpp"
#include "tpslam/trajectory_io.hpp"

#include <filesystem>
#include <random>

namespace tpslam {

struct Primitive {
  enum class Kind { Sphere, Box, Plane };
  Kind kind = Kind::Sphere;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 0.5;                                  // sphere
  Eigen::Vector3d half_extents = Eigen::Vector3d::Ones();  // box
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();    // plane
  double offset = 0;                                    // plane: normal . p = offset
  Eigen::Vector3d albedo = Eigen::Vector3d::Constant(0.8);

  double sdf(const Eigen::Vector3d& p) const {
    switch (kind) {
      case Kind::Sphere:
        return (p - center).norm() - radius;
      case Kind::Box: {
        const Eigen::Vector3d q = (p - center).cwiseAbs() - half_extents;
        return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
      }
      case Kind::Plane:
        return normal.dot(p) - offset;
    }
    return 0;
  }

  /// Axis-aligned box containing the surface, or nullopt when unbounded.
  std::optional<Bounds> extent() const {
    switch (kind) {
      case Kind::Sphere:
        return Bounds{center.array() - radius, center.array() + radius};
      case Kind::Box:
        return Bounds{center - half_extents, center + half_extents};
      case Kind::Plane:
        return std::nullopt;
    }
    return std::nullopt;
  }
};

struct OrbitTrajectory {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 2.0;
  double height = 0.5;
  int frames = 50;
  double arc_start_deg = 15;
  double arc_end_deg = 75;
  bool smoothstep = true;
  Eigen::Vector3d target = Eigen::Vector3d::Zero();
  Eigen::Vector3d up = Eigen::Vector3d::UnitZ();

  CameraPose<double> pose(int i) const {
    double s = frames > 1 ? double(i) / (frames - 1) : 0.0;
    if (smoothstep) s = s * s * (3 - 2 * s);
    const double a = (arc_start_deg + s * (arc_end_deg - arc_start_deg)) * M_PI / 180.0;
    const Eigen::Vector3d eye = center + Eigen::Vector3d(radius * std::cos(a), radius * std::sin(a), height);
    return look_at<double>(eye, target, up);
  }
};

struct SyntheticScene {
  Bounds bounds{Eigen::Vector3d::Constant(-2), Eigen::Vector3d::Constant(2)};
  CameraIntrinsics camera{80, 80, 48, 36, 96, 72, 5000};
  OrbitTrajectory orbit;
  std::vector<Primitive> primitives;
  Eigen::Vector3d light = Eigen::Vector3d(0.4, 0.3, 1.0).normalized();  // towards the light
  double ambient = 0.25;
  double depth_noise = 0;  // meters, Gaussian
  std::uint64_t seed = 0;

  double sdf(const Eigen::Vector3d& p, int* nearest = nullptr) const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < primitives.size(); ++i) {
      const double d = primitives[i].sdf(p);
      if (d < best) {
        best = d;
        if (nearest) *nearest = int(i);
      }
    }
    return best;
  }

  Eigen::Vector3d normal(const Eigen::Vector3d& p) const {
    const double h = 1e-5;
    Eigen::Vector3d g;
    for (int a = 0; a < 3; ++a) {
      Eigen::Vector3d e = Eigen::Vector3d::Zero();
      e[a] = h;
      g[a] = sdf(p + e) - sdf(p - e);
    }
    return g.normalized();
  }

  /// Union of primitive extents clipped to the bounds, padded by `margin`.
  Bounds surface_region(double margin) const {
    Bounds r{Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity()),
             Eigen::Vector3d::Constant(-std::numeric_limits<double>::infinity())};
    for (const auto& p : primitives) {
      const auto e = p.extent();
      if (!e) return bounds;
      r.min = r.min.cwiseMin(e->min);
      r.max = r.max.cwiseMax(e->max);
    }
    if (primitives.empty()) return bounds;
    r.min = (r.min.array() - margin).matrix().cwiseMax(bounds.min);
    r.max = (r.max.array() + margin).matrix().cwiseMin(bounds.max);
    return r;
  }

  static SyntheticScene parse(const IniDocument& doc);
  std::string serialize() const;
};

inline SyntheticScene SyntheticScene::parse(const IniDocument& doc) {
  SyntheticScene s;
  s.primitives.clear();
  auto vec3 = [](const IniReader& r, const std::string& key, const Eigen::Vector3d& fallback) {
    const auto v = r.numbers(key, 3, {fallback.x(), fallback.y(), fallback.z()});
    return Eigen::Vector3d(v[0], v[1], v[2]);
  };
  for (const auto& sec : doc.sections) {
    IniReader r(&sec, sec.name);
    if (sec.name == "scene") {
      r.reject_unknown({"bounds", "ambient", "light", "depth_noise", "seed"});
      const auto b = r.numbers("bounds", 6);
      s.bounds = {{b[0], b[1], b[2]}, {b[3], b[4], b[5]}};
      if (!(s.bounds.max.array() > s.bounds.min.array()).all()) {
        throw ConfigError("scene.bounds", "max must exceed min on every axis");
      }
      s.ambient = r.number("ambient", s.ambient);
      s.light = vec3(r, "light", s.light).normalized();
      s.depth_noise = r.number("depth_noise", 0.0);
      if (s.depth_noise < 0) throw ConfigError("scene.depth_noise", "must be >= 0");
      s.seed = std::uint64_t(r.integer("seed", 0));
    } else if (sec.name == "camera") {
      r.reject_unknown({"fx", "fy", "cx", "cy", "width", "height", "depth_scale"});
      s.camera.fx = r.number("fx");
      s.camera.fy = r.number("fy");
      s.camera.cx = r.number("cx");
      s.camera.cy = r.number("cy");
      s.camera.width = int(r.integer("width"));
      s.camera.height = int(r.integer("height"));
      s.camera.depth_scale = r.number("depth_scale", 5000.0);
      s.camera.validate();
    } else if (sec.name == "orbit") {
      r.reject_unknown({"center", "radius", "height", "frames", "arc_start_deg", "arc_end_deg",
                        "easing", "target", "up"});
      auto& o = s.orbit;
      o.center = vec3(r, "center", o.center);
      o.radius = r.number("radius", o.radius);
      o.height = r.number("height", o.height);
      o.frames = int(r.integer("frames", o.frames));
      o.arc_start_deg = r.number("arc_start_deg", o.arc_start_deg);
      o.arc_end_deg = r.number("arc_end_deg", o.arc_end_deg);
      const std::string easing = r.text("easing", "smoothstep");
      if (easing != "smoothstep" && easing != "linear") {
        throw ConfigError("orbit.easing", "expected smoothstep or linear");
      }
      o.smoothstep = easing == "smoothstep";
      o.target = vec3(r, "target", o.target);
      o.up = vec3(r, "up", o.up);
      if (o.frames <= 0) throw ConfigError("orbit.frames", "must be positive");
      if (!(o.radius > 0)) throw ConfigError("orbit.radius", "must be positive");
    } else if (sec.name == "sphere" || sec.name == "box" || sec.name == "plane") {
      Primitive p;
      if (sec.name == "sphere") {
        r.reject_unknown({"center", "radius", "albedo"});
        p.kind = Primitive::Kind::Sphere;
        p.center = vec3(r, "center", p.center);
        p.radius = r.number("radius");
        if (!(p.radius > 0)) throw ConfigError("sphere.radius", "must be positive");
      } else if (sec.name == "box") {
        r.reject_unknown({"center", "half_extents", "albedo"});
        p.kind = Primitive::Kind::Box;
        p.center = vec3(r, "center", p.center);
        const auto h = r.numbers("half_extents", 3);
        p.half_extents = {h[0], h[1], h[2]};
        if (!(p.half_extents.array() > 0).all()) throw ConfigError("box.half_extents", "must be positive");
      } else {
        r.reject_unknown({"normal", "offset", "albedo"});
        p.kind = Primitive::Kind::Plane;
        p.normal = vec3(r, "normal", p.normal);
        if (!(p.normal.norm() > 0)) throw ConfigError("plane.normal", "must be nonzero");
        p.normal.normalize();
        p.offset = r.number("offset", 0.0);
      }
      p.albedo = vec3(r, "albedo", p.albedo);
      if (const auto e = p.extent(); e && !(s.bounds.contains<double>(e->min) && s.bounds.contains<double>(e->max))) {
        throw ConfigError(sec.name + ".center", "primitive extends outside scene.bounds");
      }
      s.primitives.push_back(p);
    } else {
      throw ConfigError(sec.name, "unknown section");
    }
  }
  if (!doc.section("scene")) throw ConfigError("scene.bounds", "missing");
  if (s.primitives.empty()) throw ConfigError("scene", "no primitives");
  return s;
}

inline std::string SyntheticScene::serialize() const {
  std::ostringstream os;
  auto v3 = [](const Eigen::Vector3d& v) {
    return format_double(v.x()) + " " + format_double(v.y()) + " " + format_double(v.z());
  };
  os << "[scene]\nbounds = " << v3(bounds.min) << " " << v3(bounds.max) << "\n";
  os << "ambient = " << format_double(ambient) << "\nlight = " << v3(light) << "\n";
  os << "depth_noise = " << format_double(depth_noise) << "\nseed = " << seed << "\n\n";
  os << "[camera]\nfx = " << format_double(camera.fx) << "\nfy = " << format_double(camera.fy)
     << "\ncx = " << format_double(camera.cx) << "\ncy = " << format_double(camera.cy)
     << "\nwidth = " << camera.width << "\nheight = " << camera.height
     << "\ndepth_scale = " << format_double(camera.depth_scale) << "\n\n";
  os << "[orbit]\ncenter = " << v3(orbit.center) << "\nradius = " << format_double(orbit.radius)
     << "\nheight = " << format_double(orbit.height) << "\nframes = " << orbit.frames
     << "\narc_start_deg = " << format_double(orbit.arc_start_deg)
     << "\narc_end_deg = " << format_double(orbit.arc_end_deg)
     << "\neasing = " << (orbit.smoothstep ? "smoothstep" : "linear")
     << "\ntarget = " << v3(orbit.target) << "\nup = " << v3(orbit.up) << "\n";
  for (const auto& p : primitives) {
    switch (p.kind) {
      case Primitive::Kind::Sphere:
        os << "\n[sphere]\ncenter = " << v3(p.center) << "\nradius = " << format_double(p.radius);
        break;
      case Primitive::Kind::Box:
        os << "\n[box]\ncenter = " << v3(p.center) << "\nhalf_extents = " << v3(p.half_extents);
        break;
      case Primitive::Kind::Plane:
        os << "\n[plane]\nnormal = " << v3(p.normal) << "\noffset = " << format_double(p.offset);
        break;
    }
    os << "\nalbedo = " << v3(p.albedo) << "\n";
  }
  return os.str();
}

inline SyntheticScene load_scene(const std::string& path) {
  return SyntheticScene::parse(IniDocument::load(path));
}

struct TraceHit {
  double t = 0;  // distance along the unit ray
  int primitive = -1;
};

/// Sphere tracing: at most 128 steps, hit when the SDF drops below 1e-5.
inline std::optional<TraceHit> sphere_trace(const SyntheticScene& s, const Eigen::Vector3d& o,
                                            const Eigen::Vector3d& d, double t_max) {
  double t = 0;
  for (int i = 0; i < 128 && t <= t_max; ++i) {
    int idx = -1;
    const double dist = s.sdf(o + t * d, &idx);
    if (dist < 1e-5) return TraceHit{t, idx};
    t += dist;
  }
  return std::nullopt;
}

/// Exact RGB-D frame from `pose`. Depth is planar (camera z); misses give depth 0 and black.
inline FrameRecord render_view(const SyntheticScene& s, const CameraPose<double>& pose,
                               int chunks = 0) {
  const auto& K = s.camera;
  FrameRecord f;
  f.width = K.width;
  f.height = K.height;
  f.rgb.assign(std::size_t(3) * K.width * K.height, 0.f);
  f.depth.assign(std::size_t(K.width) * K.height, 0.f);
  f.gt_pose = pose;
  const double t_max = 2.0 * s.bounds.extent().norm();
  parallel_chunks(std::size_t(K.height), chunks > 0 ? chunks : worker_count(),
                  [&](int, std::size_t v0, std::size_t v1) {
                    for (std::size_t v = v0; v < v1; ++v) {
                      for (int u = 0; u < K.width; ++u) {
                        const Eigen::Vector3d dc = K.unproject<double>(u, double(v));
                        const auto ray = pixel_ray<double>(K, pose, u, double(v));
                        const auto hit = sphere_trace(s, ray.origin, ray.direction, t_max);
                        if (!hit) continue;
                        const std::size_t i = v * K.width + u;
                        f.depth[i] = float(hit->t / dc.norm());
                        const Eigen::Vector3d p = ray.origin + hit->t * ray.direction;
                        const double lambert = std::max(0.0, s.normal(p).dot(s.light));
                        const Eigen::Vector3d c =
                            (s.primitives[hit->primitive].albedo * (s.ambient + (1 - s.ambient) * lambert))
                                .cwiseMin(1.0);
                        for (int k = 0; k < 3; ++k) f.rgb[3 * i + k] = float(c[k]);
                      }
                    }
                  });
  return f;
}

/// Signed distance of the analytic scene sampled on the mesher grid.
inline TriMesh analytic_mesh(const SyntheticScene& s, double voxel, double margin = 0.05) {
  const Bounds region = s.surface_region(margin);
  return marching_cubes(sample_volume(region, voxel, [&](const Eigen::Vector3d& p) { return s.sdf(p); }));
}

inline std::uint16_t quantize_depth(double meters, double scale) {
  if (!(meters > 0)) return 0;
  return std::uint16_t(std::clamp(std::lround(meters * scale), 0L, 65535L));
}

inline std::string frame_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d.png", i);
  return buf;
}

/// Writes rgb/, depth/, rgb.txt, depth.txt, groundtruth.txt and scene.cfg under `dir`.
/// Frame i has timestamp i / 30 s.
inline void synth_generate(const SyntheticScene& s, const std::string& dir) {
  namespace fs = std::filesystem;
  s.camera.validate();
  for (int i = 0; i < s.orbit.frames; ++i) {
    const Eigen::Vector3d eye = s.orbit.pose(i).translation();
    if (!s.bounds.contains<double>(eye)) {
      throw ConfigError("orbit", "camera position of frame " + std::to_string(i) + " leaves scene.bounds");
    }
  }
  fs::create_directories(fs::path(dir) / "rgb");
  fs::create_directories(fs::path(dir) / "depth");
  std::ofstream rgb_txt(fs::path(dir) / "rgb.txt"), depth_txt(fs::path(dir) / "depth.txt"),
      gt_txt(fs::path(dir) / "groundtruth.txt");
  if (!rgb_txt || !depth_txt || !gt_txt) throw Error("cannot write index files under " + dir);
  rgb_txt << "# timestamp filename\n";
  depth_txt << "# timestamp filename\n";
  gt_txt << "# timestamp tx ty tz qx qy qz qw\n";
  std::mt19937_64 noise_rng(s.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int i = 0; i < s.orbit.frames; ++i) {
    const auto pose = s.orbit.pose(i);
    const FrameRecord f = render_view(s, pose);
    Image8 rgb{f.width, f.height, 3, std::vector<std::uint8_t>(f.rgb.size())};
    for (std::size_t k = 0; k < f.rgb.size(); ++k) {
      rgb.data[k] = std::uint8_t(std::lround(std::clamp(double(f.rgb[k]), 0.0, 1.0) * 255.0));
    }
    Image16 depth{f.width, f.height, std::vector<std::uint16_t>(f.depth.size())};
    for (std::size_t k = 0; k < f.depth.size(); ++k) {
      double d = f.depth[k];
      if (d > 0 && s.depth_noise > 0) d = std::max(1e-6, d + s.depth_noise * noise(noise_rng));
      depth.data[k] = quantize_depth(d, s.camera.depth_scale);
    }
    const std::string name = frame_name(i);
    write_png_rgb((fs::path(dir) / "rgb" / name).string(), rgb);
    write_png_depth((fs::path(dir) / "depth" / name).string(), depth);
    const double ts = i / 30.0;
    char stamp[32];
    std::snprintf(stamp, sizeof stamp, "%.6f", ts);
    rgb_txt << stamp << " rgb/" << name << "\n";
    depth_txt << stamp << " depth/" << name << "\n";
    gt_txt << format_pose_line({ts, pose}) << "\n";
  }
  std::ofstream cfg(fs::path(dir) / "scene.cfg");
  cfg << s.serialize();
}

}  // namespace tpslam
