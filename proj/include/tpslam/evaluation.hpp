#pragma once

// Trajectory error, rendered-depth error and mesh accuracy / completion.

#include "tpslam/datasets.hpp"
#include "tpslam/mesher.hpp"
#include "tpslam/synthetic.hpp"
#include "tpslam/trajectory_io.hpp"

#include <Eigen/Geometry>

#include <limits>
#include <random>

namespace tpslam {

struct TrajectoryError {
  std::vector<double> errors;  // per associated pose, meters
  double mean = 0;
  double rmse = 0;
  Eigen::Matrix4d alignment = Eigen::Matrix4d::Identity();  // applied to the estimate
};

/// Rigid (rotation + translation, no scale) least-squares alignment of the
/// estimated positions onto the ground truth, then residual statistics.
/// Poses are paired by timestamp within `max_dt`.
inline TrajectoryError ate_error(const Trajectory& est, const Trajectory& gt, double max_dt = 0.02) {
  std::vector<double> te, tg;
  for (const auto& s : est) te.push_back(s.timestamp);
  for (const auto& s : gt) tg.push_back(s.timestamp);
  const auto pairs = associate(te, tg, max_dt);
  if (pairs.size() < 2) throw DatasetError("ATE needs at least 2 associated poses");
  Eigen::Matrix3Xd src(3, pairs.size()), dst(3, pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    src.col(k) = est[pairs[k].first].pose.translation();
    dst.col(k) = gt[pairs[k].second].pose.translation();
  }
  TrajectoryError out;
  out.alignment = Eigen::umeyama(src, dst, false);
  const Eigen::Matrix3d R = out.alignment.topLeftCorner<3, 3>();
  const Eigen::Vector3d t = out.alignment.topRightCorner<3, 1>();
  double sum = 0, sq = 0;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const double e = (R * src.col(k) + t - dst.col(k)).norm();
    out.errors.push_back(e);
    sum += e;
    sq += e * e;
  }
  out.mean = sum / double(pairs.size());
  out.rmse = std::sqrt(sq / double(pairs.size()));
  return out;
}

/// First outside-to-inside crossing of the learned TSDF along a ray, as a
/// distance along the unit direction. Steps are proportional to the decoded
/// distance (at most T), and the bracket is refined by bisection.
template <class T>
std::optional<double> march_field(const SceneField<T>& field, const Ray<double>& ray,
                                  double truncation, DecodeScratch<T>& s) {
  const auto hit = intersect_bounds(ray, field.bounds());
  if (!hit) return std::nullopt;
  const double t_end = (*hit)[1];
  auto eval = [&](double t) {
    const Eigen::Vector3d p = (ray.origin + t * ray.direction).cwiseMax(field.bounds().min).cwiseMin(field.bounds().max);
    return double(decode_tsdf(field, Vec3<T>(p.cast<T>()), s));
  };
  double t_prev = (*hit)[0];
  double f_prev = eval(t_prev);
  const double min_step = 0.05 * truncation;
  while (t_prev < t_end) {
    const double step = std::clamp(0.8 * f_prev * truncation, min_step, truncation);
    const double t = std::min(t_prev + step, t_end);
    const double f = eval(t);
    if (f_prev > 0 && f <= 0) {
      double a = t_prev, b = t, fa = f_prev;
      for (int i = 0; i < 20; ++i) {
        const double m = 0.5 * (a + b);
        const double fm = eval(m);
        if ((fm > 0) == (fa > 0)) {
          a = m;
          fa = fm;
        } else {
          b = m;
        }
      }
      return 0.5 * (a + b);
    }
    t_prev = t;
    f_prev = f;
  }
  return std::nullopt;
}

/// Planar depth (0 = no surface) and decoded color at the surface for every pixel.
template <class T>
FrameRecord render_field(const SceneField<T>& field, const CameraIntrinsics& K,
                         const CameraPose<double>& pose, double truncation,
                         const std::vector<char>* mask = nullptr, int chunks = 0) {
  FrameRecord f;
  f.width = K.width;
  f.height = K.height;
  f.rgb.assign(std::size_t(3) * K.width * K.height, 0.f);
  f.depth.assign(std::size_t(K.width) * K.height, 0.f);
  parallel_chunks(std::size_t(K.height), chunks > 0 ? chunks : worker_count(),
                  [&](int, std::size_t v0, std::size_t v1) {
                    DecodeScratch<T> s(field.options());
                    for (std::size_t v = v0; v < v1; ++v) {
                      for (int u = 0; u < K.width; ++u) {
                        const std::size_t i = v * K.width + u;
                        if (mask && !(*mask)[i]) continue;
                        const auto ray = pixel_ray<double>(K, pose, u, double(v));
                        const auto t = march_field(field, ray, truncation, s);
                        if (!t) continue;
                        f.depth[i] = float(*t / K.unproject<double>(u, double(v)).norm());
                        const Eigen::Vector3d p = (ray.origin + *t * ray.direction)
                                                      .cwiseMax(field.bounds().min)
                                                      .cwiseMin(field.bounds().max);
                        const auto c = decode_color(field, Vec3<T>(p.cast<T>()), s);
                        for (int k = 0; k < 3; ++k) f.rgb[3 * i + k] = float(c[k]);
                      }
                    }
                  });
  return f;
}

/// Random viewpoints for depth evaluation: eyes scattered around the orbit
/// arc (radius +-10 %, height +-0.2 m, full arc), looking at the orbit target
/// with up to 5 cm of target jitter. Poses stay inside the bounds.
inline std::vector<CameraPose<double>> eval_poses(const SyntheticScene& s, int count,
                                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<CameraPose<double>> out;
  const auto& o = s.orbit;
  while (int(out.size()) < count) {
    const double a = (o.arc_start_deg + unit(rng) * (o.arc_end_deg - o.arc_start_deg)) * M_PI / 180.0;
    const double r = o.radius * (0.9 + 0.2 * unit(rng));
    const double h = o.height + 0.4 * (unit(rng) - 0.5);
    const Eigen::Vector3d eye = o.center + Eigen::Vector3d(r * std::cos(a), r * std::sin(a), h);
    if (!s.bounds.contains<double>(eye)) continue;
    const Eigen::Vector3d jitter(unit(rng) - 0.5, unit(rng) - 0.5, unit(rng) - 0.5);
    out.push_back(look_at<double>(eye, o.target + 0.1 * jitter, o.up));
  }
  return out;
}

struct DepthL1 {
  double mean = 0;          // meters
  std::size_t pixels = 0;   // valid in both renders
  std::size_t gt_valid = 0;
};

/// Mean |learned depth - analytic depth| over pixels valid in both.
template <class T>
DepthL1 depth_l1(const SceneField<T>& field, const SyntheticScene& scene,
                 const std::vector<CameraPose<double>>& poses, double truncation) {
  DepthL1 out;
  double sum = 0;
  for (const auto& pose : poses) {
    const FrameRecord gt = render_view(scene, pose);
    std::vector<char> mask(gt.depth.size());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = gt.depth[i] > 0;
    const FrameRecord est = render_field(field, scene.camera, pose, truncation, &mask);
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (!mask[i]) continue;
      ++out.gt_valid;
      if (!(est.depth[i] > 0)) continue;
      sum += std::abs(double(est.depth[i]) - double(gt.depth[i]));
      ++out.pixels;
    }
  }
  out.mean = out.pixels ? sum / double(out.pixels) : std::numeric_limits<double>::quiet_NaN();
  return out;
}

/// Closest point on triangle abc to p.
inline Eigen::Vector3d closest_on_triangle(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                                           const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
  const Eigen::Vector3d ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Eigen::Vector3d bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + (d1 / (d1 - d3)) * ab;
  const Eigen::Vector3d cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  }
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

/// Nearest-surface queries against a triangle mesh through a uniform grid.
class MeshDistance {
 public:
  explicit MeshDistance(const TriMesh& mesh) : mesh_(mesh) {
    if (mesh.faces.empty()) return;
    lo_ = hi_ = mesh.vertices[mesh.faces[0][0]];
    for (const auto& f : mesh.faces) {
      for (int c = 0; c < 3; ++c) {
        lo_ = lo_.cwiseMin(mesh.vertices[f[c]]);
        hi_ = hi_.cwiseMax(mesh.vertices[f[c]]);
      }
    }
    const Eigen::Vector3d ext = (hi_ - lo_).cwiseMax(1e-6);
    // about two triangles per occupied cell on a surface-like mesh
    cell_ = std::max(std::sqrt((ext.x() * ext.y() + ext.y() * ext.z() + ext.x() * ext.z()) /
                               std::max<double>(1.0, double(mesh.faces.size()) / 2.0)),
                     1e-4);
    for (int a = 0; a < 3; ++a) dims_[a] = std::max(1, int(std::ceil(ext[a] / cell_)));
    cells_.assign(std::size_t(dims_[0]) * dims_[1] * dims_[2], {});
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
      Eigen::Vector3d a = mesh.vertices[mesh.faces[f][0]], b = a;
      for (int c = 1; c < 3; ++c) {
        a = a.cwiseMin(mesh.vertices[mesh.faces[f][c]]);
        b = b.cwiseMax(mesh.vertices[mesh.faces[f][c]]);
      }
      const auto c0 = cell_of(a), c1 = cell_of(b);
      for (int z = c0[2]; z <= c1[2]; ++z)
        for (int y = c0[1]; y <= c1[1]; ++y)
          for (int x = c0[0]; x <= c1[0]; ++x) cells_[index(x, y, z)].push_back(int(f));
    }
  }

  bool empty() const { return mesh_.faces.empty(); }

  /// Distance from p to the closest point of the mesh (infinity when empty).
  double distance(const Eigen::Vector3d& p) const {
    if (empty()) return std::numeric_limits<double>::infinity();
    const auto c = cell_of(p);
    // distance from p to the grid box; projecting onto the box never increases
    // the distance to a point inside it, so both bounds below hold separately
    const double outside = (p - p.cwiseMax(lo_).cwiseMin(hi_)).norm();
    double best = std::numeric_limits<double>::infinity();
    const int max_ring = std::max({dims_[0], dims_[1], dims_[2]});
    for (int ring = 0; ring <= max_ring; ++ring) {
      // every point outside the ring-neighbourhood is at least this far
      const double reach = std::max(outside, std::max(0, ring - 1) * cell_);
      if (best <= reach) break;
      for (int z = c[2] - ring; z <= c[2] + ring; ++z) {
        if (z < 0 || z >= dims_[2]) continue;
        for (int y = c[1] - ring; y <= c[1] + ring; ++y) {
          if (y < 0 || y >= dims_[1]) continue;
          for (int x = c[0] - ring; x <= c[0] + ring; ++x) {
            if (x < 0 || x >= dims_[0]) continue;
            if (std::max({std::abs(x - c[0]), std::abs(y - c[1]), std::abs(z - c[2])}) != ring) continue;
            for (int f : cells_[index(x, y, z)]) best = std::min(best, face_distance(p, f));
          }
        }
      }
    }
    return best;
  }

  /// Exhaustive search; test oracle for small meshes.
  double brute_force(const Eigen::Vector3d& p) const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < mesh_.faces.size(); ++f) best = std::min(best, face_distance(p, int(f)));
    return best;
  }

 private:
  double face_distance(const Eigen::Vector3d& p, int f) const {
    const auto& t = mesh_.faces[std::size_t(f)];
    return (p - closest_on_triangle(p, mesh_.vertices[t[0]], mesh_.vertices[t[1]], mesh_.vertices[t[2]])).norm();
  }
  std::array<int, 3> cell_of(const Eigen::Vector3d& p) const {
    std::array<int, 3> c;
    for (int a = 0; a < 3; ++a) c[a] = std::clamp(int(std::floor((p[a] - lo_[a]) / cell_)), 0, dims_[a] - 1);
    return c;
  }
  std::size_t index(int x, int y, int z) const {
    return (std::size_t(z) * dims_[1] + y) * dims_[0] + x;
  }

  const TriMesh& mesh_;
  Eigen::Vector3d lo_ = Eigen::Vector3d::Zero(), hi_ = Eigen::Vector3d::Zero();
  double cell_ = 1;
  std::array<int, 3> dims_{1, 1, 1};
  std::vector<std::vector<int>> cells_;
};

/// Area-weighted uniform surface samples.
inline std::vector<Eigen::Vector3d> sample_surface(const TriMesh& mesh, std::size_t count,
                                                   std::uint64_t seed) {
  std::vector<Eigen::Vector3d> out;
  if (mesh.faces.empty()) return out;
  std::vector<double> cdf(mesh.faces.size());
  double acc = 0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) cdf[f] = acc += mesh.face_area(f);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double r = unit(rng) * acc;
    const std::size_t f = std::min<std::size_t>(
        std::size_t(std::upper_bound(cdf.begin(), cdf.end(), r) - cdf.begin()), cdf.size() - 1);
    double a = unit(rng), b = unit(rng);
    if (a + b > 1) {
      a = 1 - a;
      b = 1 - b;
    }
    const auto& t = mesh.faces[f];
    const Eigen::Vector3d& p0 = mesh.vertices[t[0]];
    out.push_back(p0 + a * (mesh.vertices[t[1]] - p0) + b * (mesh.vertices[t[2]] - p0));
  }
  return out;
}

struct ReconstructionMetrics {
  std::optional<double> accuracy;  // unset for an empty reconstruction
  double completion = 0;           // infinity for an empty reconstruction
  double completion_ratio = 0;     // percent of GT samples within the threshold
};

/// Accuracy: mean distance of reconstruction samples to the GT surface.
/// Completion: mean distance of GT samples to the reconstruction.
inline ReconstructionMetrics accuracy_completion(const TriMesh& rec, const TriMesh& gt,
                                                 double threshold = 0.05,
                                                 std::size_t samples = 100000,
                                                 std::uint64_t seed = 0, int chunks = 0) {
  if (gt.faces.empty()) throw DatasetError("ground-truth mesh is empty");
  const int workers = chunks > 0 ? chunks : worker_count();
  auto mean_distance = [&](const std::vector<Eigen::Vector3d>& pts, const MeshDistance& to,
                           double* within) {
    std::vector<double> d(pts.size());
    parallel_chunks(pts.size(), workers, [&](int, std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) d[i] = to.distance(pts[i]);
    });
    double sum = 0;
    std::size_t close = 0;
    for (double v : d) {
      sum += v;
      close += v < threshold;
    }
    if (within) *within = 100.0 * double(close) / double(pts.size());
    return sum / double(pts.size());
  };
  ReconstructionMetrics m;
  const MeshDistance to_gt(gt), to_rec(rec);
  if (rec.faces.empty()) {
    m.completion = std::numeric_limits<double>::infinity();
    m.completion_ratio = 0;
    return m;
  }
  m.accuracy = mean_distance(sample_surface(rec, samples, seed), to_gt, nullptr);
  m.completion = mean_distance(sample_surface(gt, samples, seed + 1), to_rec, &m.completion_ratio);
  return m;
}

}  // namespace tpslam
