#pragma once

// Ray generation, per-ray sampling and SDF-based volume rendering.

#include "tpslam/common.hpp"
#include "tpslam/pose.hpp"

#include <algorithm>
#include <array>
#include <optional>
#include <vector>

namespace tpslam {

/// Pinhole camera.
struct CameraIntrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
  double depth_scale = 5000.0;  // raw depth units per meter

  void validate() const {
    if (!(fx > 0) || !(fy > 0)) throw ConfigError("camera.fx", "focal lengths must be positive");
    if (width <= 0 || height <= 0) throw ConfigError("camera.width", "image size must be positive");
    if (!(cx > 0 && cx < width)) throw ConfigError("camera.cx", "must lie inside the image");
    if (!(cy > 0 && cy < height)) throw ConfigError("camera.cy", "must lie inside the image");
    if (!(depth_scale > 0)) throw ConfigError("camera.depth_scale", "must be positive");
  }

  /// Camera-frame direction with unit z for pixel (u, v).
  template <class T>
  Vec3<T> unproject(T u, T v) const {
    return {(u - T(cx)) / T(fx), (v - T(cy)) / T(fy), T(1)};
  }

  /// Pixel of a camera-frame point (z > 0).
  template <class T>
  std::array<T, 2> project(const Vec3<T>& p) const {
    return {T(fx) * p.x() / p.z() + T(cx), T(fy) * p.y() / p.z() + T(cy)};
  }

  bool operator==(const CameraIntrinsics&) const = default;
};

template <class T>
struct Ray {
  Vec3<T> origin;
  Vec3<T> direction;  // unit length
};

/// World-space ray through pixel (u, v): origin = t, direction = R * unproject(u, v) normalized.
template <class T>
Ray<T> pixel_ray(const CameraIntrinsics& K, const CameraPose<T>& pose, T u, T v) {
  return {pose.translation(), (pose.rotation() * K.unproject(u, v)).normalized()};
}

/// Entry/exit distances of a ray through the box, clipped to t >= 0.
template <class T>
std::optional<std::array<T, 2>> intersect_bounds(const Ray<T>& ray, const Bounds& b) {
  T t0 = 0;
  T t1 = std::numeric_limits<T>::max();
  for (int a = 0; a < 3; ++a) {
    const T o = ray.origin[a], d = ray.direction[a];
    const T lo = T(b.min[a]), hi = T(b.max[a]);
    if (std::abs(d) < T(1e-12)) {
      if (o < lo || o > hi) return std::nullopt;
      continue;
    }
    T ta = (lo - o) / d, tb = (hi - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (!(t1 > t0)) return std::nullopt;
  return std::array<T, 2>{t0, t1};
}

struct SamplingOptions {
  int n_strat = 32;
  int n_imp = 8;
  double truncation = 0.06;
  bool importance = true;  // false: all samples stratified
};

/// `n` stratified planar depths over [near, far]: one draw per equal sub-interval.
/// If `jitter` is empty the midpoint of each sub-interval is used.
template <class T>
std::vector<T> stratified_depths(T near, T far, int n, CounterRng* jitter) {
  std::vector<T> z(n);
  const T step = (far - near) / T(n);
  for (int i = 0; i < n; ++i) {
    const T u = jitter ? T(jitter->uniform()) : T(0.5);
    z[i] = near + (T(i) + u) * step;
  }
  return z;
}

/// Inverse-CDF draws from the piecewise-constant density that gives stratum i
/// of [near, far] probability proportional to weights[i].
template <class T>
std::vector<T> importance_depths(T near, T far, const std::vector<T>& weights, int n,
                                 CounterRng& rng) {
  const int bins = int(weights.size());
  std::vector<double> cdf(bins + 1, 0.0);
  for (int i = 0; i < bins; ++i) cdf[i + 1] = cdf[i] + double(weights[i]) + 1e-5;
  const double total = cdf[bins];
  const double step = double(far - near) / bins;
  std::vector<T> out(n);
  for (int k = 0; k < n; ++k) {
    const double target = rng.uniform() * total;
    const int i = int(std::upper_bound(cdf.begin() + 1, cdf.end(), target) - cdf.begin()) - 1;
    const int bin = std::clamp(i, 0, bins - 1);
    const double frac = (target - cdf[bin]) / (cdf[bin + 1] - cdf[bin]);
    out[k] = T(double(near) + (bin + std::clamp(frac, 0.0, 1.0)) * step);
  }
  return out;
}

/// Merges sample sets into strictly increasing order.
template <class T>
void sort_samples(std::vector<T>& z) {
  std::sort(z.begin(), z.end());
  for (std::size_t i = 1; i < z.size(); ++i) {
    if (!(z[i] > z[i - 1])) {
      z[i] = std::max(z[i - 1] + T(1e-9), std::nextafter(z[i - 1], std::numeric_limits<T>::max()));
    }
  }
}

/// Planar depths for a ray with a depth measurement: stratified over
/// [near, far] plus uniform draws within +-T of the measured depth.
template <class T>
std::vector<T> sample_ray_with_depth(T near, T far, T depth, const SamplingOptions& o,
                                     CounterRng& rng) {
  if (!o.importance) {
    auto z = stratified_depths(near, far, o.n_strat + o.n_imp, &rng);
    sort_samples(z);
    return z;
  }
  auto z = stratified_depths(near, far, o.n_strat, &rng);
  const T tr = T(o.truncation);
  for (int k = 0; k < o.n_imp; ++k) {
    const T s = depth - tr + T(2) * tr * T(rng.uniform());
    z.push_back(std::clamp(s, near, far));
  }
  sort_samples(z);
  return z;
}

/// sigma = beta * sigmoid(-beta * phi).
template <class T>
T sdf_to_density(T phi, T beta);

template <class T>
struct RenderedRay;

template <class T>
RenderedRay<T> render_ray(const std::vector<T>& density, const std::vector<T>& z,
                          const std::vector<std::array<T, 3>>& colors);

/// Ordered planar depths for one ray. With a measurement (depth > 0) the extra
/// samples are uniform within +-T of it; otherwise they are drawn by inverse
/// CDF from the rendering weights of the stratified samples, which needs
/// `tsdf_at(z)` to query the field. Samples are constants for differentiation.
template <class T, class TsdfAt>
std::vector<T> sample_ray(T near, T far, T depth, const SamplingOptions& o, CounterRng& rng,
                          T beta, TsdfAt&& tsdf_at) {
  if (depth > T(0)) return sample_ray_with_depth(near, far, depth, o, rng);
  if (!o.importance || o.n_imp == 0) {
    auto z = stratified_depths(near, far, o.n_strat + (o.importance ? 0 : o.n_imp), &rng);
    sort_samples(z);
    return z;
  }
  auto z = stratified_depths(near, far, o.n_strat, &rng);
  std::vector<T> density(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) density[i] = sdf_to_density(tsdf_at(z[i]), beta);
  const auto coarse = render_ray(density, z, {});
  const auto extra = importance_depths(near, far, coarse.weights, o.n_imp, rng);
  z.insert(z.end(), extra.begin(), extra.end());
  sort_samples(z);
  return z;
}

template <class T>
T sdf_to_density(T phi, T beta) {
  return beta * sigmoid(-beta * phi);
}

/// d sigma / d phi and d sigma / d beta.
template <class T>
std::array<T, 2> sdf_to_density_grad(T phi, T beta) {
  const T s = sigmoid(-beta * phi);
  const T ds = s * (1 - s);
  return {-beta * beta * ds, s - beta * phi * ds};
}

template <class T>
struct RenderedRay {
  std::vector<T> weights;
  std::array<T, 3> color{};
  T depth = 0;
};

/// w_n = exp(-sum_{k<n} sigma_k) (1 - exp(-sigma_n)); color = sum w_n c_n; depth = sum w_n z_n.
/// `colors` may be empty (depth only).
template <class T>
RenderedRay<T> render_ray(const std::vector<T>& density, const std::vector<T>& z,
                          const std::vector<std::array<T, 3>>& colors) {
  RenderedRay<T> out;
  const std::size_t n = density.size();
  out.weights.resize(n);
  T accumulated = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T w = std::exp(-accumulated) * (-std::expm1(-density[i]));
    accumulated += density[i];
    out.weights[i] = w;
    out.depth += w * z[i];
    if (!colors.empty()) {
      for (int c = 0; c < 3; ++c) out.color[c] += w * colors[i][c];
    }
  }
  return out;
}

/// Reverse pass of render_ray. Returns dL/dsigma_n given dL/dcolor and dL/ddepth;
/// `dcolors` (if non-null) receives dL/dc_n.
template <class T>
std::vector<T> render_ray_backward(const std::vector<T>& density, const std::vector<T>& z,
                                   const std::vector<std::array<T, 3>>& colors,
                                   const RenderedRay<T>& fwd, const std::array<T, 3>& dcolor,
                                   T ddepth, std::vector<std::array<T, 3>>* dcolors) {
  const std::size_t n = density.size();
  // e_n = dL/dw_n
  std::vector<T> e(n);
  for (std::size_t i = 0; i < n; ++i) {
    T v = ddepth * z[i];
    if (!colors.empty()) {
      v += dcolor[0] * colors[i][0] + dcolor[1] * colors[i][1] + dcolor[2] * colors[i][2];
    }
    e[i] = v;
  }
  if (dcolors) {
    dcolors->resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (int c = 0; c < 3; ++c) (*dcolors)[i][c] = fwd.weights[i] * dcolor[c];
    }
  }
  // dw_n/dsigma_m = -w_n (n > m), T_{m+1} (n = m), 0 (n < m)
  std::vector<T> dsigma(n);
  T prefix = 0;
  for (std::size_t i = 0; i < n; ++i) {
    prefix += density[i];
    dsigma[i] = e[i] * std::exp(-prefix);  // transmittance after sample i
  }
  T suffix = 0;
  for (std::size_t i = n; i-- > 0;) {
    dsigma[i] -= suffix;
    suffix += e[i] * fwd.weights[i];
  }
  return dsigma;
}

/// One ray of a batch with everything the losses and the reverse pass need.
template <class T>
struct RayRecord {
  int slot = 0;  // index of the frame/pose the ray belongs to
  T u = 0, v = 0;
  Vec3<T> dir_cam = Vec3<T>::Zero();  // unproject(u, v), unit z
  Ray<T> ray{Vec3<T>::Zero(), Vec3<T>::Zero()};
  std::array<T, 3> pixel_color{};
  T measured_depth = 0;  // 0 = missing
  bool active = true;

  std::vector<T> z;  // planar depths, strictly increasing
  std::vector<Vec3<T>> points;
  std::vector<T> tsdf;
  std::vector<std::array<T, 3>> color;
  std::vector<T> density;
  RenderedRay<T> render;
};

template <class T>
using RayBatch = std::vector<RayRecord<T>>;

}  // namespace tpslam
