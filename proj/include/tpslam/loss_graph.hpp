#pragma once

// Forward evaluation of a ray batch through decode -> render -> loss, and the
// matching reverse pass producing gradients for the field and every pose.

#include "tpslam/frame.hpp"
#include "tpslam/losses.hpp"
#include "tpslam/scene_field.hpp"

#include <algorithm>
#include <vector>

namespace tpslam {

/// A frame taking part in an evaluation together with its current pose.
template <class T>
struct FrameSlot {
  const FrameRecord* frame = nullptr;
  CameraPose<T> pose;
  std::uint64_t frame_id = 0;
};

struct PixelRef {
  int slot = 0;
  int u = 0;
  int v = 0;
};

struct GraphOptions {
  SamplingOptions sampling;
  LossWeights weights;
  LossOptions loss;
  bool require_depth = false;  // drop rays without a measurement
  double outlier_factor = 0;   // > 0: mask rays with |d - D| above factor * median
  bool field_grad = true;
  bool pose_grad = true;
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;  // mixes into the per-ray sampling stream
  int chunks = 0;               // 0: worker_count()
};

template <class T>
struct GraphResult {
  LossTerms terms;
  LossCounts counts;
  FieldGradient<T> field;
  std::vector<std::array<T, 7>> pose;  // per slot: d/d(qw, qx, qy, qz, tx, ty, tz)
  int active_rays = 0;
  int masked_rays = 0;
  bool outlier_fallback = false;
};

namespace detail {

template <class T>
struct SlotFrame {
  Mat3<T> R;
  Vec3<T> t;
};

template <class T>
std::vector<SlotFrame<T>> slot_frames(const std::vector<FrameSlot<T>>& slots) {
  std::vector<SlotFrame<T>> out;
  out.reserve(slots.size());
  for (const auto& s : slots) out.push_back({s.pose.rotation(), s.pose.translation()});
  return out;
}

/// Points, decoded values and render of a ray whose samples are already drawn.
template <class T>
void trace(const SceneField<T>& field, const SlotFrame<T>& f, RayRecord<T>& r,
           DecodeScratch<T>& scratch, bool use_color) {
  const Vec3<T> step = f.R * r.dir_cam;
  const std::size_t n = r.z.size();
  r.ray = {f.t, step.normalized()};
  r.points.resize(n);
  r.tsdf.resize(n);
  r.density.resize(n);
  r.color.assign(use_color ? n : 0, {});
  const T beta = field.beta();
  for (std::size_t i = 0; i < n; ++i) {
    r.points[i] = f.t + r.z[i] * step;
    r.tsdf[i] = decode_tsdf(field, r.points[i], scratch);
    r.density[i] = sdf_to_density(r.tsdf[i], beta);
    if (use_color) r.color[i] = decode_color(field, r.points[i], scratch);
  }
  r.render = render_ray(r.density, r.z, r.color);
}

}  // namespace detail

/// Draws samples for each pixel and runs the forward pass.
template <class T>
RayBatch<T> build_batch(const SceneField<T>& field, const CameraIntrinsics& K,
                        const std::vector<FrameSlot<T>>& slots, const std::vector<PixelRef>& pixels,
                        const GraphOptions& o) {
  RayBatch<T> batch(pixels.size());
  const auto frames = detail::slot_frames(slots);
  const int chunks = o.chunks > 0 ? o.chunks : worker_count();
  parallel_chunks(pixels.size(), chunks, [&](int, std::size_t begin, std::size_t end) {
    DecodeScratch<T> scratch(field.options());
    for (std::size_t i = begin; i < end; ++i) {
      const PixelRef& px = pixels[i];
      const FrameRecord& frame = *slots[px.slot].frame;
      const auto& f = frames[px.slot];
      RayRecord<T>& r = batch[i];
      r.slot = px.slot;
      r.u = T(px.u);
      r.v = T(px.v);
      r.dir_cam = K.unproject(r.u, r.v);
      const auto c = frame.color_at(px.u, px.v);
      r.pixel_color = {T(c[0]), T(c[1]), T(c[2])};
      r.measured_depth = T(frame.depth_at(px.u, px.v));
      r.ray = {f.t, (f.R * r.dir_cam).normalized()};
      const auto hit = intersect_bounds(r.ray, field.bounds());
      if (!hit || (o.require_depth && !(r.measured_depth > 0))) {
        r.active = false;
        continue;
      }
      const T norm = r.dir_cam.norm();
      const T near = (*hit)[0] / norm, far = (*hit)[1] / norm;
      CounterRng rng(o.seed, CounterRng::key(slots[px.slot].frame_id,
                                             std::uint64_t(px.v) * frame.width + px.u,
                                             o.iteration));
      const Vec3<T> step = f.R * r.dir_cam;
      r.z = sample_ray(near, far, r.measured_depth, o.sampling, rng, field.beta(),
                       [&](T z) { return decode_tsdf(field, Vec3<T>(f.t + z * step), scratch); });
      detail::trace(field, f, r, scratch, o.loss.use_color);
    }
  });
  return batch;
}

/// Re-runs the forward pass with the current parameters, keeping samples and masks.
template <class T>
void forward_batch(const SceneField<T>& field, const std::vector<FrameSlot<T>>& slots,
                   RayBatch<T>& batch, const GraphOptions& o) {
  const auto frames = detail::slot_frames(slots);
  const int chunks = o.chunks > 0 ? o.chunks : worker_count();
  parallel_chunks(batch.size(), chunks, [&](int, std::size_t begin, std::size_t end) {
    DecodeScratch<T> scratch(field.options());
    for (std::size_t i = begin; i < end; ++i) {
      if (batch[i].z.empty()) continue;
      detail::trace(field, frames[batch[i].slot], batch[i], scratch, o.loss.use_color);
    }
  });
}

/// Lower median of a non-empty list.
template <class T>
T lower_median(std::vector<T> values) {
  const std::size_t k = (values.size() - 1) / 2;
  std::nth_element(values.begin(), values.begin() + k, values.end());
  return values[k];
}

/// Deactivates rays whose depth error exceeds factor x the batch's median error.
/// Returns {masked count, fell back}. If fewer than 10% of the depth rays survive
/// the mask is undone.
template <class T>
std::pair<int, bool> mask_outliers(RayBatch<T>& batch, double factor) {
  std::vector<T> errors;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& r = batch[i];
    if (!r.active || !(r.measured_depth > 0)) continue;
    errors.push_back(std::abs(r.render.depth - r.measured_depth));
    idx.push_back(i);
  }
  if (errors.empty()) return {0, false};
  const T threshold = T(factor) * lower_median(errors);
  std::vector<std::size_t> masked;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (errors[k] > threshold) masked.push_back(idx[k]);
  }
  if (double(idx.size() - masked.size()) < 0.1 * double(idx.size())) return {0, true};
  for (std::size_t i : masked) batch[i].active = false;
  return {int(masked.size()), false};
}

/// Loss terms of an evaluated batch.
template <class T>
LossTerms batch_loss(const RayBatch<T>& batch, const GraphOptions& o) {
  return global_loss(batch, o.weights, o.loss);
}

/// Reverse pass over an evaluated batch.
template <class T>
GraphResult<T> backward(const SceneField<T>& field, const std::vector<FrameSlot<T>>& slots,
                        const RayBatch<T>& batch, const GraphOptions& o) {
  GraphResult<T> res;
  res.counts = loss_counts(batch, o.loss);
  res.terms = batch_loss(batch, o);
  for (const auto& r : batch) res.active_rays += r.active;
  res.field = field.make_gradient();
  res.pose.assign(slots.size(), std::array<T, 7>{});

  struct RayPoseGrad {
    Vec3<T> dt = Vec3<T>::Zero();
    Vec3<T> dstep = Vec3<T>::Zero();  // sum_n z_n dL/dp_n
    T dlog_beta = 0;
  };
  std::vector<RayPoseGrad> per_ray(batch.size());

  const int chunks = std::max(1, o.chunks > 0 ? o.chunks : worker_count());
  std::vector<FieldGradient<T>> chunk_grads(o.field_grad ? chunks : 0);
  for (auto& g : chunk_grads) g = field.make_gradient();
  const T beta = field.beta();

  parallel_chunks(batch.size(), chunks, [&](int chunk, std::size_t begin, std::size_t end) {
    DecodeScratch<T> scratch(field.options());
    FieldGradient<T>* grad = o.field_grad ? &chunk_grads[chunk] : nullptr;
    std::vector<std::array<T, 3>> dcolors;
    for (std::size_t i = begin; i < end; ++i) {
      const auto& r = batch[i];
      if (!r.active || r.z.empty()) continue;
      const auto adj = loss_adjoint(r, res.counts, o.weights, o.loss);
      const auto dsigma = render_ray_backward(r.density, r.z, r.color, r.render, adj.dcolor,
                                              adj.ddepth, o.loss.use_color ? &dcolors : nullptr);
      RayPoseGrad& pg = per_ray[i];
      T dbeta = 0;
      for (std::size_t n = 0; n < r.z.size(); ++n) {
        const auto ds = sdf_to_density_grad(r.tsdf[n], beta);
        const T dphi = adj.dtsdf[n] + dsigma[n] * ds[0];
        dbeta += dsigma[n] * ds[1];
        Vec3<T> dp = Vec3<T>::Zero();
        decode_backward(field, r.points[n], dphi, o.loss.use_color ? &dcolors[n] : nullptr, grad,
                        o.pose_grad ? &dp : nullptr, scratch);
        pg.dt += dp;
        pg.dstep += r.z[n] * dp;
      }
      pg.dlog_beta = dbeta * beta;
    }
  });

  for (auto& g : chunk_grads) res.field.add(g);
  std::vector<Mat3<T>> dR(slots.size(), Mat3<T>::Zero());
  std::vector<Vec3<T>> dt(slots.size(), Vec3<T>::Zero());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& r = batch[i];
    if (!r.active || r.z.empty()) continue;
    res.field.log_beta += per_ray[i].dlog_beta;
    dt[r.slot] += per_ray[i].dt;
    dR[r.slot] += per_ray[i].dstep * r.dir_cam.transpose();
  }
  if (!o.field_grad) res.field.log_beta = 0;
  if (o.pose_grad) {
    for (std::size_t s = 0; s < slots.size(); ++s) {
      const auto dq = rotation_grad_to_quaternion(slots[s].pose, dR[s]);
      res.pose[s] = {dq[0], dq[1], dq[2], dq[3], dt[s][0], dt[s][1], dt[s][2]};
    }
  }
  return res;
}

/// Samples, forward pass, optional outlier masking and reverse pass.
template <class T>
GraphResult<T> evaluate(const SceneField<T>& field, const CameraIntrinsics& K,
                        const std::vector<FrameSlot<T>>& slots,
                        const std::vector<PixelRef>& pixels, const GraphOptions& o,
                        RayBatch<T>* keep_batch = nullptr) {
  auto batch = build_batch(field, K, slots, pixels, o);
  int masked = 0;
  bool fallback = false;
  if (o.outlier_factor > 0) std::tie(masked, fallback) = mask_outliers(batch, o.outlier_factor);
  auto res = backward(field, slots, batch, o);
  res.masked_rays = masked;
  res.outlier_fallback = fallback;
  if (keep_batch) *keep_batch = std::move(batch);
  return res;
}

}  // namespace tpslam
