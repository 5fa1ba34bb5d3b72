#pragma once

// Per-point SDF losses, rendering losses and their weighted sum.

#include "tpslam/renderer.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace tpslam {

struct LossWeights {
  double free_space = 5;
  double trunc_middle = 200;
  double trunc_tail = 10;
  double depth = 0.1;
  double color = 5;

  static LossWeights mapping() { return {5, 200, 10, 0.1, 5}; }
  static LossWeights tracking() { return {10, 200, 50, 1, 5}; }

  void validate(const std::string& section) const {
    for (double w : {free_space, trunc_middle, trunc_tail, depth, color}) {
      if (!(w >= 0)) throw ConfigError(section, "loss weights must be non-negative");
    }
  }
  bool operator==(const LossWeights&) const = default;
};

struct LossOptions {
  double truncation = 0.06;
  bool single_truncation = false;  // one truncation term over |z - D| < T
  bool strict_ray_count = false;   // average over every depth ray, not only contributing ones
  bool use_color = true;
};

enum class SampleRegion : std::uint8_t { Outside, FreeSpace, Middle, Tail };

/// Which set a sample at planar depth z belongs to for measured depth D.
inline SampleRegion classify_sample(double z, double depth, double truncation,
                                    bool single_truncation = false) {
  if (!(depth > 0)) return SampleRegion::Outside;
  if (z < depth - truncation) return SampleRegion::FreeSpace;
  const double d = std::abs(z - depth);
  if (d < truncation) {
    return single_truncation || d < 0.4 * truncation ? SampleRegion::Middle : SampleRegion::Tail;
  }
  return SampleRegion::Outside;
}

struct LossTerms {
  double free_space = 0;
  double trunc_middle = 0;
  double trunc_tail = 0;
  double depth = 0;
  double color = 0;
  double total = 0;
};

/// Denominators of each term's outer mean.
struct LossCounts {
  int free_space = 0;
  int trunc_middle = 0;
  int trunc_tail = 0;
  int depth = 0;
  int color = 0;
};

namespace detail {

template <class T>
struct RayRegionStats {
  int n_fs = 0, n_mid = 0, n_tail = 0;
  double sum_fs = 0, sum_mid = 0, sum_tail = 0;
};

template <class T>
RayRegionStats<T> region_stats(const RayRecord<T>& r, const LossOptions& o) {
  RayRegionStats<T> s;
  const double D = double(r.measured_depth);
  for (std::size_t i = 0; i < r.z.size(); ++i) {
    const double z = double(r.z[i]), phi = double(r.tsdf[i]);
    switch (classify_sample(z, D, o.truncation, o.single_truncation)) {
      case SampleRegion::FreeSpace:
        ++s.n_fs;
        s.sum_fs += (phi - 1) * (phi - 1);
        break;
      case SampleRegion::Middle: {
        const double e = z + phi * o.truncation - D;
        ++s.n_mid;
        s.sum_mid += e * e;
        break;
      }
      case SampleRegion::Tail: {
        const double e = z + phi * o.truncation - D;
        ++s.n_tail;
        s.sum_tail += e * e;
        break;
      }
      case SampleRegion::Outside:
        break;
    }
  }
  return s;
}

}  // namespace detail

template <class T>
LossCounts loss_counts(const RayBatch<T>& batch, const LossOptions& o) {
  LossCounts c;
  for (const auto& r : batch) {
    if (!r.active) continue;
    ++c.color;
    if (!(r.measured_depth > 0)) continue;
    ++c.depth;
    const auto s = detail::region_stats(r, o);
    c.free_space += (o.strict_ray_count || s.n_fs > 0);
    c.trunc_middle += (o.strict_ray_count || s.n_mid > 0);
    c.trunc_tail += (o.strict_ray_count || s.n_tail > 0);
  }
  return c;
}

/// Mean over depth rays of the mean of (phi - 1)^2 over samples before the truncation band.
template <class T>
double free_space_loss(const RayBatch<T>& batch, const LossOptions& o) {
  const auto c = loss_counts(batch, o);
  double sum = 0;
  for (const auto& r : batch) {
    if (!r.active || !(r.measured_depth > 0)) continue;
    const auto s = detail::region_stats(r, o);
    if (s.n_fs > 0) sum += s.sum_fs / s.n_fs;
  }
  return c.free_space > 0 ? sum / c.free_space : 0.0;
}

enum class TruncationRegion { Middle, Tail };

/// Mean over depth rays of the mean of (z + phi * T - D)^2 over the region's samples.
template <class T>
double truncation_loss(const RayBatch<T>& batch, TruncationRegion region, const LossOptions& o) {
  const auto c = loss_counts(batch, o);
  const int n = region == TruncationRegion::Middle ? c.trunc_middle : c.trunc_tail;
  double sum = 0;
  for (const auto& r : batch) {
    if (!r.active || !(r.measured_depth > 0)) continue;
    const auto s = detail::region_stats(r, o);
    if (region == TruncationRegion::Middle && s.n_mid > 0) sum += s.sum_mid / s.n_mid;
    if (region == TruncationRegion::Tail && s.n_tail > 0) sum += s.sum_tail / s.n_tail;
  }
  return n > 0 ? sum / n : 0.0;
}

template <class T>
double depth_loss(const RayBatch<T>& batch) {
  double sum = 0;
  int n = 0;
  for (const auto& r : batch) {
    if (!r.active || !(r.measured_depth > 0)) continue;
    const double e = double(r.render.depth) - double(r.measured_depth);
    sum += e * e;
    ++n;
  }
  return n > 0 ? sum / n : 0.0;
}

/// Mean over all rays of the channel-averaged squared color residual.
template <class T>
double color_loss(const RayBatch<T>& batch) {
  double sum = 0;
  int n = 0;
  for (const auto& r : batch) {
    if (!r.active) continue;
    double e = 0;
    for (int c = 0; c < 3; ++c) {
      const double d = double(r.render.color[c]) - double(r.pixel_color[c]);
      e += d * d;
    }
    sum += e / 3.0;
    ++n;
  }
  return n > 0 ? sum / n : 0.0;
}

inline LossTerms combine_losses(LossTerms t, const LossWeights& w) {
  t.total = w.free_space * t.free_space + w.trunc_middle * t.trunc_middle +
            w.trunc_tail * t.trunc_tail + w.depth * t.depth + w.color * t.color;
  return t;
}

template <class T>
LossTerms global_loss(const RayBatch<T>& batch, const LossWeights& w, const LossOptions& o) {
  LossTerms t;
  const auto c = loss_counts(batch, o);
  for (const auto& r : batch) {
    if (!r.active) continue;
    if (o.use_color) {
      double e = 0;
      for (int k = 0; k < 3; ++k) {
        const double d = double(r.render.color[k]) - double(r.pixel_color[k]);
        e += d * d;
      }
      t.color += e / 3.0;
    }
    if (!(r.measured_depth > 0)) continue;
    const auto s = detail::region_stats(r, o);
    if (s.n_fs > 0) t.free_space += s.sum_fs / s.n_fs;
    if (s.n_mid > 0) t.trunc_middle += s.sum_mid / s.n_mid;
    if (s.n_tail > 0) t.trunc_tail += s.sum_tail / s.n_tail;
    const double e = double(r.render.depth) - double(r.measured_depth);
    t.depth += e * e;
  }
  auto mean = [](double s, int n) { return n > 0 ? s / n : 0.0; };
  t.free_space = mean(t.free_space, c.free_space);
  t.trunc_middle = mean(t.trunc_middle, c.trunc_middle);
  t.trunc_tail = mean(t.trunc_tail, c.trunc_tail);
  t.depth = mean(t.depth, c.depth);
  t.color = mean(t.color, c.color);
  LossWeights wt = w;
  if (o.single_truncation) wt.trunc_tail = 0;
  if (!o.use_color) wt.color = 0;
  return combine_losses(t, wt);
}

/// Upstream gradients of the global loss for one ray.
template <class T>
struct RayAdjoint {
  std::vector<T> dtsdf;  // direct per-point terms only
  std::array<T, 3> dcolor{};
  T ddepth = 0;
};

/// d(global loss)/d(per-point tsdf, rendered color, rendered depth) for ray r.
template <class T>
RayAdjoint<T> loss_adjoint(const RayRecord<T>& r, const LossCounts& c, const LossWeights& w,
                           const LossOptions& o) {
  RayAdjoint<T> a;
  a.dtsdf.assign(r.z.size(), T(0));
  if (!r.active) return a;
  if (o.use_color && c.color > 0) {
    const double k = w.color / c.color * 2.0 / 3.0;
    for (int ch = 0; ch < 3; ++ch) {
      a.dcolor[ch] = T(k * (double(r.render.color[ch]) - double(r.pixel_color[ch])));
    }
  }
  if (!(r.measured_depth > 0)) return a;
  const double D = double(r.measured_depth);
  if (c.depth > 0) a.ddepth = T(w.depth / c.depth * 2.0 * (double(r.render.depth) - D));
  const auto s = detail::region_stats(r, o);
  const double tail_weight = o.single_truncation ? 0.0 : w.trunc_tail;
  for (std::size_t i = 0; i < r.z.size(); ++i) {
    const double z = double(r.z[i]), phi = double(r.tsdf[i]);
    switch (classify_sample(z, D, o.truncation, o.single_truncation)) {
      case SampleRegion::FreeSpace:
        a.dtsdf[i] = T(w.free_space / c.free_space / s.n_fs * 2.0 * (phi - 1));
        break;
      case SampleRegion::Middle:
        a.dtsdf[i] = T(w.trunc_middle / c.trunc_middle / s.n_mid * 2.0 *
                       (z + phi * o.truncation - D) * o.truncation);
        break;
      case SampleRegion::Tail:
        a.dtsdf[i] = T(tail_weight / c.trunc_tail / s.n_tail * 2.0 *
                       (z + phi * o.truncation - D) * o.truncation);
        break;
      case SampleRegion::Outside:
        break;
    }
  }
  return a;
}

}  // namespace tpslam
