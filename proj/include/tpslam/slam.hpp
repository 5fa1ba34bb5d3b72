#pragma once

// Mapping/tracking loop: frame 0 initializes the field with a frozen pose,
// later frames are tracked against the frozen field and every k-th frame
// triggers a joint optimization over a keyframe window.

#include "tpslam/adam.hpp"
#include "tpslam/loss_graph.hpp"

#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace tpslam {

struct SlamOptions {
  FieldOptions field;
  double beta_init = 10.0;
  double truncation = 0.06;
  int n_strat = 32;
  int n_imp = 8;
  bool importance = true;

  LossWeights map_weights = LossWeights::mapping();
  LossWeights track_weights = LossWeights::tracking();
  bool single_truncation = false;
  bool strict_ray_count = false;
  bool use_color = true;

  int map_iters = 15;
  int first_frame_iters = 0;  // 0: map_iters
  int map_every = 4;
  int window = 20;
  int map_rays = 4000;
  bool map_valid_depth_only = false;  // draw mapping pixels only where depth was measured
  double lr_planes = 0.005;
  double lr_decoders = 0.001;
  double lr_beta = 0.001;
  double lr_map_pose = 0.001;
  bool freeze_map_poses = false;

  int track_iters = 8;
  int track_rays = 2000;
  double lr_track_rotation = 0.001;
  double lr_track_translation = 0.001;
  double outlier_factor = 10.0;
  double track_lr_final_scale = 1.0;  // learning rate decays geometrically to lr * this

  bool first_pose_from_gt = true;  // anchor frame 0 at its ground-truth pose when known

  std::uint64_t seed = 0;
  int chunks = 0;  // 0: worker_count()

  SamplingOptions sampling() const {
    return {n_strat, n_imp, truncation, importance};
  }
  LossOptions loss() const {
    return {truncation, single_truncation, strict_ray_count, use_color};
  }
};

enum class Phase { Init = 0, Track = 1, Map = 2 };

inline const char* phase_name(Phase p) {
  switch (p) {
    case Phase::Init:
      return "init";
    case Phase::Track:
      return "track";
    case Phase::Map:
      return "map";
  }
  return "?";
}

struct LossEvent {
  std::size_t frame = 0;
  Phase phase = Phase::Track;
  int iteration = 0;
  LossTerms terms;
  int active_rays = 0;
  int masked_rays = 0;
  bool outlier_fallback = false;
};

struct Keyframe {
  std::size_t frame_id = 0;
  FrameRecord frame;
};

/// Indices into `keyframes` optimized together with the current frame: the
/// two most recent keyframes plus up to window - 3 others drawn without replacement.
inline std::vector<std::size_t> select_window(std::size_t keyframes, int window, std::mt19937_64& rng) {
  std::vector<std::size_t> out;
  const std::size_t recent = std::min<std::size_t>(2, keyframes);
  for (std::size_t i = 0; i < recent; ++i) out.push_back(keyframes - 1 - i);
  std::vector<std::size_t> pool(keyframes - recent);
  std::iota(pool.begin(), pool.end(), std::size_t(0));
  const std::size_t extra = std::min<std::size_t>(pool.size(), std::size_t(std::max(0, window - 3)));
  for (std::size_t i = 0; i < extra; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
    out.push_back(pool[i]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

template <class T>
class Slam {
 public:
  using LossCallback = std::function<void(const LossEvent&)>;

  Slam(const SlamOptions& options, const Bounds& bounds, const CameraIntrinsics& K)
      : options_(options), K_(K), field_(bounds, options.field, options.beta_init) {
    K_.validate();
    field_.initialize(options.seed);
  }

  void set_loss_callback(LossCallback cb) { on_loss_ = std::move(cb); }

  /// Tracks (and possibly maps) the next frame of the sequence.
  void process(const FrameRecord& frame) {
    if (frame.width != K_.width || frame.height != K_.height) {
      throw DatasetError("frame " + std::to_string(poses_.size()) + " size " +
                         std::to_string(frame.width) + "x" + std::to_string(frame.height) +
                         " does not match the camera");
    }
    const std::size_t id = poses_.size();
    if (id == 0) {
      initialize_first_frame(frame, options_.first_pose_from_gt && frame.gt_pose
                                        ? *frame.gt_pose
                                        : CameraPose<double>::identity());
      return;
    }
    const CameraPose<double> seed =
        id >= 2 ? constant_velocity(poses_[id - 2], poses_[id - 1]) : poses_[id - 1];
    poses_.push_back(track(frame, id, seed));
    if (options_.map_every > 0 && id % std::size_t(options_.map_every) == 0) map(frame, id);
  }

  /// Frame 0: pose fixed at `prior` (identity by default), field fitted to the single frame, first keyframe.
  void initialize_first_frame(const FrameRecord& frame,
                              const CameraPose<double>& prior = CameraPose<double>::identity()) {
    if (!poses_.empty()) throw Error("initialize_first_frame on a non-empty map");
    if (frame.valid_depth_count() == 0) throw DatasetError("frame 0 has no valid depth pixels");
    poses_.push_back(prior);
    std::vector<const FrameRecord*> frames{&frame};
    std::vector<std::size_t> ids{0};
    std::vector<CameraPose<double>> masters{prior};
    const int iters = options_.first_frame_iters > 0 ? options_.first_frame_iters : options_.map_iters;
    optimize_map(frames, ids, masters, {false}, 0, iters, Phase::Init);
    keyframes_.push_back({0, frame});
  }

  /// Optimizes the pose of frame `id` starting from `seed` with the field frozen.
  CameraPose<double> track(const FrameRecord& frame, std::size_t id,
                           const CameraPose<double>& seed) {
    CameraPose<double> pose = seed;
    std::vector<FrameSlot<T>> slots{{&frame, pose.cast<T>(), id}};
    ParamGroup<double> rot("pose_rotation", pose.rotation_params(), options_.lr_track_rotation);
    ParamGroup<double> trans("pose_translation", pose.translation_params(),
                             options_.lr_track_translation);
    GraphOptions go = graph_options(Phase::Track, id);
    go.weights = options_.track_weights;
    go.require_depth = true;
    go.outlier_factor = options_.outlier_factor;
    go.field_grad = false;
    go.pose_grad = true;
    const auto valid = valid_pixels(slots, true);
    for (int it = 0; it < options_.track_iters; ++it) {
      go.iteration = CounterRng::key(std::uint64_t(Phase::Track), id, std::uint64_t(it));
      const double decay =
          options_.track_iters > 1
              ? std::pow(options_.track_lr_final_scale, double(it) / (options_.track_iters - 1))
              : 1.0;
      rot.lr = options_.lr_track_rotation * decay;
      trans.lr = options_.lr_track_translation * decay;
      slots[0].pose = pose.cast<T>();
      const auto pixels = draw_pixels(slots, valid, options_.track_rays, Phase::Track, id, it);
      const auto res = evaluate(field_, K_, slots, pixels, go);
      report(id, Phase::Track, it, res);
      const auto g = to_double(res.pose[0]);
      adam_step(rot, std::span<const double>(g.data(), 4));
      adam_step(trans, std::span<const double>(g.data() + 4, 3));
      pose.normalize();
    }
    return pose;
  }

  /// Joint optimization of the field and window poses; appends frame `id` as a keyframe.
  void map(const FrameRecord& frame, std::size_t id) {
    std::mt19937_64 rng(CounterRng::key(options_.seed, 0x77696eULL, id));
    const auto window = select_window(keyframes_.size(), options_.window, rng);
    std::vector<const FrameRecord*> frames;
    std::vector<std::size_t> ids;
    std::vector<bool> optimize_pose;
    for (std::size_t k : window) {
      frames.push_back(&keyframes_[k].frame);
      ids.push_back(keyframes_[k].frame_id);
      optimize_pose.push_back(!options_.freeze_map_poses && ids.back() != 0);
    }
    frames.push_back(&frame);
    ids.push_back(id);
    optimize_pose.push_back(!options_.freeze_map_poses);
    std::vector<CameraPose<double>> masters;
    for (std::size_t i : ids) masters.push_back(poses_[i]);
    optimize_map(frames, ids, masters, optimize_pose, id, options_.map_iters, Phase::Map);
    for (std::size_t s = 0; s < ids.size(); ++s) {
      if (optimize_pose[s]) poses_[ids[s]] = masters[s];
    }
    keyframes_.push_back({id, frame});
  }

  const std::vector<CameraPose<double>>& poses() const { return poses_; }
  const std::vector<Keyframe>& keyframes() const { return keyframes_; }
  const SceneField<T>& field() const { return field_; }
  SceneField<T>& field() { return field_; }
  const CameraIntrinsics& intrinsics() const { return K_; }
  const SlamOptions& options() const { return options_; }

 private:
  GraphOptions graph_options(Phase, std::size_t) const {
    GraphOptions go;
    go.sampling = options_.sampling();
    go.loss = options_.loss();
    go.seed = options_.seed;
    go.chunks = options_.chunks;
    return go;
  }

  /// Per slot, the pixel indices with measured depth (empty lists when `enabled` is false).
  static std::vector<std::vector<std::uint32_t>> valid_pixels(const std::vector<FrameSlot<T>>& slots,
                                                              bool enabled) {
    std::vector<std::vector<std::uint32_t>> out(slots.size());
    if (!enabled) return out;
    for (std::size_t s = 0; s < slots.size(); ++s) {
      const auto& d = slots[s].frame->depth;
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (d[i] > 0) out[s].push_back(std::uint32_t(i));
      }
    }
    return out;
  }

  /// Uniform random pixels, each on a uniformly chosen slot. When `valid` has
  /// entries for a slot, pixels of that slot are drawn from that list.
  std::vector<PixelRef> draw_pixels(const std::vector<FrameSlot<T>>& slots,
                                    const std::vector<std::vector<std::uint32_t>>& valid, int count,
                                    Phase phase, std::size_t id, int it) const {
    CounterRng rng(options_.seed,
                   CounterRng::key(0x70697800ULL + std::uint64_t(phase), id, std::uint64_t(it)));
    std::vector<PixelRef> px(std::size_t(std::max(0, count)));
    for (auto& p : px) {
      p.slot = int(rng.next() % slots.size());
      const FrameRecord& f = *slots[p.slot].frame;
      const auto& list = valid[std::size_t(p.slot)];
      if (list.empty()) {
        p.u = int(rng.next() % std::uint64_t(f.width));
        p.v = int(rng.next() % std::uint64_t(f.height));
      } else {
        const std::uint32_t i = list[rng.next() % list.size()];
        p.u = int(i % std::uint32_t(f.width));
        p.v = int(i / std::uint32_t(f.width));
      }
    }
    return px;
  }

  static std::array<double, 7> to_double(const std::array<T, 7>& g) {
    std::array<double, 7> out;
    for (int i = 0; i < 7; ++i) out[i] = double(g[i]);
    return out;
  }

  void optimize_map(const std::vector<const FrameRecord*>& frames,
                    const std::vector<std::size_t>& ids, std::vector<CameraPose<double>>& masters,
                    const std::vector<bool>& optimize_pose, std::size_t id, int iters,
                    Phase phase) {
    std::vector<FrameSlot<T>> slots;
    for (std::size_t s = 0; s < frames.size(); ++s) {
      slots.push_back({frames[s], masters[s].cast<T>(), ids[s]});
    }
    ParamGroup<T> planes("planes", std::span<T>(field_.planes().values()), options_.lr_planes);
    ParamGroup<T> decoders("decoders", std::span<T>(field_.decoders()), options_.lr_decoders);
    ParamGroup<T> beta("log_beta", std::span<T>(&field_.log_beta(), 1), options_.lr_beta);
    std::vector<ParamGroup<double>> pose_groups;
    std::vector<std::size_t> pose_slot;
    bool any_pose = false;
    for (std::size_t s = 0; s < slots.size(); ++s) {
      if (!optimize_pose[s]) continue;
      any_pose = true;
      pose_groups.emplace_back("pose_rotation", masters[s].rotation_params(), options_.lr_map_pose);
      pose_groups.emplace_back("pose_translation", masters[s].translation_params(),
                               options_.lr_map_pose);
      pose_slot.push_back(s);
    }
    GraphOptions go = graph_options(phase, id);
    go.weights = options_.map_weights;
    go.field_grad = true;
    go.pose_grad = any_pose;
    const auto valid = valid_pixels(slots, options_.map_valid_depth_only);
    for (int it = 0; it < iters; ++it) {
      go.iteration = CounterRng::key(std::uint64_t(phase), id, std::uint64_t(it));
      const auto pixels = draw_pixels(slots, valid, options_.map_rays, phase, id, it);
      const auto res = evaluate(field_, K_, slots, pixels, go);
      report(id, phase, it, res);
      adam_step(planes, std::span<const T>(res.field.planes));
      adam_step(decoders, std::span<const T>(res.field.decoders));
      adam_step(beta, std::span<const T>(&res.field.log_beta, 1));
      for (std::size_t k = 0; k < pose_slot.size(); ++k) {
        const std::size_t s = pose_slot[k];
        const auto g = to_double(res.pose[s]);
        adam_step(pose_groups[2 * k], std::span<const double>(g.data(), 4));
        adam_step(pose_groups[2 * k + 1], std::span<const double>(g.data() + 4, 3));
        masters[s].normalize();
        slots[s].pose = masters[s].cast<T>();
      }
    }
  }

  void report(std::size_t id, Phase phase, int it, const GraphResult<T>& res) const {
    if (!on_loss_) return;
    on_loss_({id, phase, it, res.terms, res.active_rays, res.masked_rays, res.outlier_fallback});
  }

  SlamOptions options_;
  CameraIntrinsics K_;
  SceneField<T> field_;
  std::vector<CameraPose<double>> poses_;
  std::vector<Keyframe> keyframes_;
  LossCallback on_loss_;
};

}  // namespace tpslam
