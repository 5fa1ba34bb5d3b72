#pragma once

// Tri-plane scene representation: two-scale axis-aligned feature planes for
// geometry and appearance, decoded by shallow MLPs into TSDF and raw color.

#include "tpslam/common.hpp"

#include <array>
#include <cmath>
#include <random>
#include <span>
#include <vector>

namespace tpslam {

enum class FeatureKind { Geometry = 0, Appearance = 1 };
enum class Level { Coarse = 0, Fine = 1 };
enum class LevelMode { Both, CoarseOnly, FineOnly };
enum class CombineMode { Concat, Sum };

/// (column axis, row axis) of the xy, xz and yz planes.
inline constexpr std::array<std::array<int, 2>, 3> kPlaneAxes{{{0, 1}, {0, 2}, {1, 2}}};

struct FieldOptions {
  int channels = 32;
  int hidden = 32;
  double coarse_resolution = 0.24;
  double fine_geometry_resolution = 0.06;
  double fine_appearance_resolution = 0.03;
  bool shared_planes = false;
  LevelMode levels = LevelMode::Both;
  CombineMode combine = CombineMode::Concat;

  bool uses(Level l) const {
    return levels == LevelMode::Both || (l == Level::Coarse) == (levels == LevelMode::CoarseOnly);
  }
  int feature_dim() const {
    return levels == LevelMode::Both && combine == CombineMode::Concat ? 2 * channels : channels;
  }
  bool operator==(const FieldOptions&) const = default;
};

/// Number of grid nodes needed to cover `extent` at spacing `resolution`.
inline int grid_nodes(double extent, double resolution) {
  return int(std::ceil(extent / resolution - 1e-9)) + 1;
}

struct PlaneLayout {
  int rows = 0;
  int cols = 0;
  int channels = 0;
  double resolution = 0.0;
  std::size_t offset = 0;
  int col_axis = 0;
  int row_axis = 1;

  std::size_t size() const { return std::size_t(rows) * cols * channels; }
  bool empty() const { return rows == 0; }
};

/// Non-owning view of one (rows x cols x channels) row-major grid.
template <class T>
struct FeatureGrid {
  T* data = nullptr;
  int rows = 0;
  int cols = 0;
  int channels = 0;

  T* at(int r, int c) const { return data + (std::size_t(r) * cols + c) * channels; }
};

/// Bilinear footprint of a query in grid units.
template <class T>
struct BilinearStencil {
  int r0 = 0;
  int c0 = 0;
  T fu = 0;  // fractional offset along columns
  T fv = 0;  // fractional offset along rows
  bool clamped_u = false;
  bool clamped_v = false;

  std::array<T, 4> weights() const {
    return {(1 - fu) * (1 - fv), fu * (1 - fv), (1 - fu) * fv, fu * fv};
  }
};

/// Locates (u, v) on a rows x cols grid. Coordinates up to one cell past the
/// border are clamped onto it; anything farther is an out-of-bounds error.
template <class T>
BilinearStencil<T> bilinear_stencil(int rows, int cols, T u, T v) {
  BilinearStencil<T> s;
  auto axis = [](T x, int n, int& i0, T& f, bool& clamped) {
    if (!(x >= T(-1) && x <= T(n))) {
      throw OutOfBoundsError("feature plane query " + std::to_string(double(x)) +
                             " outside [0, " + std::to_string(n - 1) + "]");
    }
    clamped = x < T(0) || x > T(n - 1);
    x = std::clamp(x, T(0), T(n - 1));
    i0 = std::min(int(std::floor(x)), n - 2);
    f = x - T(i0);
  };
  axis(u, cols, s.c0, s.fu, s.clamped_u);
  axis(v, rows, s.r0, s.fv, s.clamped_v);
  return s;
}

/// Bilinear blend of the four grid features around (u, v) (grid units).
template <class T>
std::vector<T> interpolate_plane(const FeatureGrid<const T>& grid, T u, T v) {
  const auto s = bilinear_stencil(grid.rows, grid.cols, u, v);
  const auto w = s.weights();
  const T* f00 = grid.at(s.r0, s.c0);
  const T* f01 = grid.at(s.r0, s.c0 + 1);
  const T* f10 = grid.at(s.r0 + 1, s.c0);
  const T* f11 = grid.at(s.r0 + 1, s.c0 + 1);
  std::vector<T> out(grid.channels);
  for (int k = 0; k < grid.channels; ++k) {
    out[k] = w[0] * f00[k] + w[1] * f01[k] + w[2] * f10[k] + w[3] * f11[k];
  }
  return out;
}

/// The twelve feature planes {coarse, fine} x {geometry, appearance} x {xy, xz, yz}
/// stored in one flat parameter vector.
template <class T>
class FeaturePlaneSet {
 public:
  FeaturePlaneSet() = default;

  FeaturePlaneSet(const Bounds& bounds, const FieldOptions& options)
      : bounds_(bounds), options_(options) {
    const Eigen::Vector3d extent = bounds.extent();
    std::size_t offset = 0;
    for (int kind = 0; kind < 2; ++kind) {
      for (int level = 0; level < 2; ++level) {
        if (!options.uses(Level(level))) continue;
        for (int axes = 0; axes < 3; ++axes) {
          auto& l = layouts_[index(FeatureKind(kind), Level(level), axes)];
          if (kind == 1 && options.shared_planes) {
            l = layouts_[index(FeatureKind::Geometry, Level(level), axes)];
            continue;
          }
          l.resolution = level == 0 ? options.coarse_resolution
                         : kind == 0 ? options.fine_geometry_resolution
                                     : options.fine_appearance_resolution;
          l.col_axis = kPlaneAxes[axes][0];
          l.row_axis = kPlaneAxes[axes][1];
          l.cols = grid_nodes(extent[l.col_axis], l.resolution);
          l.rows = grid_nodes(extent[l.row_axis], l.resolution);
          l.channels = options.channels;
          l.offset = offset;
          offset += l.size();
        }
      }
    }
    values_.assign(offset, T(0));
  }

  static constexpr int index(FeatureKind kind, Level level, int axes) {
    return int(kind) * 6 + int(level) * 3 + axes;
  }

  const Bounds& bounds() const { return bounds_; }
  const FieldOptions& options() const { return options_; }
  const PlaneLayout& layout(FeatureKind kind, Level level, int axes) const {
    return layouts_[index(kind, level, axes)];
  }
  const std::array<PlaneLayout, 12>& layouts() const { return layouts_; }

  FeatureGrid<T> grid(FeatureKind kind, Level level, int axes) {
    const auto& l = layout(kind, level, axes);
    return {values_.data() + l.offset, l.rows, l.cols, l.channels};
  }
  FeatureGrid<const T> grid(FeatureKind kind, Level level, int axes) const {
    const auto& l = layout(kind, level, axes);
    return {values_.data() + l.offset, l.rows, l.cols, l.channels};
  }

  std::vector<T>& values() { return values_; }
  const std::vector<T>& values() const { return values_; }
  std::size_t parameter_count() const { return values_.size(); }

 private:
  Bounds bounds_;
  FieldOptions options_;
  std::array<PlaneLayout, 12> layouts_{};
  std::vector<T> values_;
};

/// Cached bilinear footprints of one point on the six planes of a kind.
template <class T>
struct PointLookup {
  std::array<BilinearStencil<T>, 6> stencils{};  // level * 3 + axes
};

template <class T>
PointLookup<T> locate(const FeaturePlaneSet<T>& planes, FeatureKind kind, const Vec3<T>& p) {
  PointLookup<T> out;
  const auto& b = planes.bounds();
  for (int level = 0; level < 2; ++level) {
    if (!planes.options().uses(Level(level))) continue;
    for (int axes = 0; axes < 3; ++axes) {
      const auto& l = planes.layout(kind, Level(level), axes);
      const T inv = T(1.0 / l.resolution);
      const T u = (p[l.col_axis] - T(b.min[l.col_axis])) * inv;
      const T v = (p[l.row_axis] - T(b.min[l.row_axis])) * inv;
      out.stencils[level * 3 + axes] = bilinear_stencil(l.rows, l.cols, u, v);
    }
  }
  return out;
}

/// Offset of a level's slot inside the decoder input.
inline int level_slot(const FieldOptions& o, int level) {
  return o.levels == LevelMode::Both && o.combine == CombineMode::Concat ? level * o.channels : 0;
}

/// f(p) = [sum of coarse planes ; sum of fine planes] (or their sum).
template <class T>
void gather_feature(const FeaturePlaneSet<T>& planes, FeatureKind kind,
                    const PointLookup<T>& lookup, T* out) {
  const auto& o = planes.options();
  std::fill(out, out + o.feature_dim(), T(0));
  for (int level = 0; level < 2; ++level) {
    if (!o.uses(Level(level))) continue;
    T* slot = out + level_slot(o, level);
    for (int axes = 0; axes < 3; ++axes) {
      const auto g = planes.grid(kind, Level(level), axes);
      const auto& s = lookup.stencils[level * 3 + axes];
      const auto w = s.weights();
      const T* f00 = g.at(s.r0, s.c0);
      const T* f01 = f00 + g.channels;
      const T* f10 = g.at(s.r0 + 1, s.c0);
      const T* f11 = f10 + g.channels;
      for (int k = 0; k < g.channels; ++k) {
        slot[k] += w[0] * f00[k] + w[1] * f01[k] + w[2] * f10[k] + w[3] * f11[k];
      }
    }
  }
}

/// Scatters dL/df into plane gradients (if `plane_grad` is non-null) and
/// accumulates dL/dp into `dp`.
template <class T>
void scatter_feature_grad(const FeaturePlaneSet<T>& planes, FeatureKind kind,
                          const PointLookup<T>& lookup, const T* dfeat, T* plane_grad,
                          Vec3<T>* dp) {
  const auto& o = planes.options();
  for (int level = 0; level < 2; ++level) {
    if (!o.uses(Level(level))) continue;
    const T* slot = dfeat + level_slot(o, level);
    for (int axes = 0; axes < 3; ++axes) {
      const auto& l = planes.layout(kind, Level(level), axes);
      const auto& s = lookup.stencils[level * 3 + axes];
      const auto w = s.weights();
      const std::size_t i00 = l.offset + (std::size_t(s.r0) * l.cols + s.c0) * l.channels;
      const std::size_t i10 = i00 + std::size_t(l.cols) * l.channels;
      if (plane_grad) {
        T* g00 = plane_grad + i00;
        T* g01 = g00 + l.channels;
        T* g10 = plane_grad + i10;
        T* g11 = g10 + l.channels;
        for (int k = 0; k < l.channels; ++k) {
          g00[k] += w[0] * slot[k];
          g01[k] += w[1] * slot[k];
          g10[k] += w[2] * slot[k];
          g11[k] += w[3] * slot[k];
        }
      }
      if (dp && !(s.clamped_u && s.clamped_v)) {
        const T* f00 = planes.values().data() + i00;
        const T* f01 = f00 + l.channels;
        const T* f10 = planes.values().data() + i10;
        const T* f11 = f10 + l.channels;
        T du = 0, dv = 0;
        for (int k = 0; k < l.channels; ++k) {
          du += slot[k] * ((1 - s.fv) * (f01[k] - f00[k]) + s.fv * (f11[k] - f10[k]));
          dv += slot[k] * ((1 - s.fu) * (f10[k] - f00[k]) + s.fu * (f11[k] - f01[k]));
        }
        const T inv = T(1.0 / l.resolution);
        if (!s.clamped_u) (*dp)[l.col_axis] += du * inv;
        if (!s.clamped_v) (*dp)[l.row_axis] += dv * inv;
      }
    }
  }
}

enum class OutputActivation { Tanh, Sigmoid };

/// Two-layer perceptron: in -> hidden (ReLU) -> out (tanh or sigmoid).
/// Parameters are packed as W1 (hidden x in), b1, W2 (out x hidden), b2.
struct DecoderLayout {
  int in = 0;
  int hidden = 0;
  int out = 0;
  OutputActivation activation = OutputActivation::Tanh;
  std::size_t offset = 0;

  std::size_t size() const {
    return std::size_t(hidden) * in + hidden + std::size_t(out) * hidden + out;
  }
  std::size_t w1() const { return offset; }
  std::size_t b1() const { return w1() + std::size_t(hidden) * in; }
  std::size_t w2() const { return b1() + hidden; }
  std::size_t b2() const { return w2() + std::size_t(out) * hidden; }
};

template <class T>
using RowMajorMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <class T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

/// Writes hidden pre-activations to `pre` and activated outputs to `out`.
template <class T>
void decoder_forward(const T* params, const DecoderLayout& d, const T* in, T* pre, T* out) {
  const RowMajorMap<T> w1(params + d.w1(), d.hidden, d.in);
  VecMap<T> h(pre, d.hidden);
  h.noalias() = w1 * ConstVecMap<T>(in, d.in);
  h += ConstVecMap<T>(params + d.b1(), d.hidden);
  const T* w2 = params + d.w2();
  const T* b2 = params + d.b2();
  for (int o = 0; o < d.out; ++o) {
    const ConstVecMap<T> row(w2 + std::size_t(o) * d.hidden, d.hidden);
    const T acc = b2[o] + row.dot(h.cwiseMax(T(0)));
    out[o] = d.activation == OutputActivation::Tanh ? std::tanh(acc) : sigmoid(acc);
  }
}

/// Reverse pass of decoder_forward. `grad` (optional) receives parameter
/// gradients, `din` (optional) the input gradient. `scratch` holds >= hidden.
template <class T>
void decoder_backward(const T* params, const DecoderLayout& d, const T* in, const T* pre,
                      const T* out, const T* dout, T* grad, T* din, T* scratch) {
  const ConstVecMap<T> h(pre, d.hidden);
  VecMap<T> dhidden(scratch, d.hidden);
  dhidden.setZero();
  for (int o = 0; o < d.out; ++o) {
    const T y = out[o];
    const T dz = dout[o] * (d.activation == OutputActivation::Tanh ? (1 - y * y) : y * (1 - y));
    if (dz == T(0)) continue;
    const ConstVecMap<T> row(params + d.w2() + std::size_t(o) * d.hidden, d.hidden);
    if (grad) {
      VecMap<T>(grad + d.w2() + std::size_t(o) * d.hidden, d.hidden) += dz * h.cwiseMax(T(0));
      grad[d.b2() + o] += dz;
    }
    dhidden += dz * row;
  }
  for (int k = 0; k < d.hidden; ++k) {
    if (!(pre[k] > T(0))) dhidden[k] = 0;
  }
  if (grad) {
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gw1(
        grad + d.w1(), d.hidden, d.in);
    gw1.noalias() += dhidden * ConstVecMap<T>(in, d.in).transpose();
    VecMap<T>(grad + d.b1(), d.hidden) += dhidden;
  }
  if (din) {
    const RowMajorMap<T> w1(params + d.w1(), d.hidden, d.in);
    VecMap<T>(din, d.in).noalias() = w1.transpose() * dhidden;
  }
}

template <class T>
struct Decoded {
  T tsdf = 0;
  std::array<T, 3> color{};
};

/// Gradient buffers shaped like a SceneField's parameters.
template <class T>
struct FieldGradient {
  std::vector<T> planes;
  std::vector<T> decoders;
  T log_beta = 0;

  void zero() {
    std::fill(planes.begin(), planes.end(), T(0));
    std::fill(decoders.begin(), decoders.end(), T(0));
    log_beta = 0;
  }
  void add(const FieldGradient& o) {
    for (std::size_t i = 0; i < planes.size(); ++i) planes[i] += o.planes[i];
    for (std::size_t i = 0; i < decoders.size(); ++i) decoders[i] += o.decoders[i];
    log_beta += o.log_beta;
  }
};

/// The learnable scene: feature planes, both decoders and the rendering
/// sharpness (stored as log(beta) so that beta stays positive).
template <class T>
class SceneField {
 public:
  SceneField() = default;

  SceneField(const Bounds& bounds, const FieldOptions& options, double beta = 10.0)
      : planes_(bounds, options), log_beta_(T(std::log(beta))) {
    const int in = options.feature_dim();
    geometry_ = {in, options.hidden, 1, OutputActivation::Tanh, 0};
    appearance_ = {in, options.hidden, 3, OutputActivation::Sigmoid, geometry_.size()};
    decoders_.assign(geometry_.size() + appearance_.size(), T(0));
  }

  /// Features uniform in [-1e-2, 1e-2]; weights uniform in +-1/sqrt(fan_in); zero biases.
  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> feat(-1e-2, 1e-2);
    for (auto& v : planes_.values()) v = T(feat(rng));
    std::fill(decoders_.begin(), decoders_.end(), T(0));
    for (const DecoderLayout* d : {&geometry_, &appearance_}) {
      std::uniform_real_distribution<double> w1(-1.0 / std::sqrt(d->in), 1.0 / std::sqrt(d->in));
      for (std::size_t i = d->w1(); i < d->b1(); ++i) decoders_[i] = T(w1(rng));
      std::uniform_real_distribution<double> w2(-1.0 / std::sqrt(d->hidden),
                                                1.0 / std::sqrt(d->hidden));
      for (std::size_t i = d->w2(); i < d->b2(); ++i) decoders_[i] = T(w2(rng));
    }
  }

  const FeaturePlaneSet<T>& planes() const { return planes_; }
  FeaturePlaneSet<T>& planes() { return planes_; }
  const Bounds& bounds() const { return planes_.bounds(); }
  const FieldOptions& options() const { return planes_.options(); }
  const DecoderLayout& geometry_decoder() const { return geometry_; }
  const DecoderLayout& appearance_decoder() const { return appearance_; }
  std::vector<T>& decoders() { return decoders_; }
  const std::vector<T>& decoders() const { return decoders_; }
  T& log_beta() { return log_beta_; }
  T log_beta() const { return log_beta_; }
  T beta() const { return std::exp(log_beta_); }

  FieldGradient<T> make_gradient() const {
    FieldGradient<T> g;
    g.planes.assign(planes_.values().size(), T(0));
    g.decoders.assign(decoders_.size(), T(0));
    return g;
  }

  std::size_t parameter_count() const {
    return planes_.parameter_count() + decoders_.size() + 1;
  }

 private:
  FeaturePlaneSet<T> planes_;
  DecoderLayout geometry_;
  DecoderLayout appearance_;
  std::vector<T> decoders_;
  T log_beta_ = T(std::log(10.0));
};

/// Geometry feature of p: coarse and fine plane sums, concatenated.
template <class T>
std::vector<T> geometry_feature(const Vec3<T>& p, const FeaturePlaneSet<T>& planes) {
  std::vector<T> f(planes.options().feature_dim());
  gather_feature(planes, FeatureKind::Geometry, locate(planes, FeatureKind::Geometry, p),
                 f.data());
  return f;
}

template <class T>
std::vector<T> appearance_feature(const Vec3<T>& p, const FeaturePlaneSet<T>& planes) {
  std::vector<T> f(planes.options().feature_dim());
  gather_feature(planes, FeatureKind::Appearance, locate(planes, FeatureKind::Appearance, p),
                 f.data());
  return f;
}

/// Per-thread buffers for decoding without allocation.
template <class T>
struct DecodeScratch {
  std::vector<T> feature;
  std::vector<T> pre;
  std::vector<T> dfeature;
  std::vector<T> dhidden;

  explicit DecodeScratch(const FieldOptions& o)
      : feature(o.feature_dim()), pre(o.hidden), dfeature(o.feature_dim()), dhidden(o.hidden) {}
};

template <class T>
T decode_tsdf(const SceneField<T>& field, const Vec3<T>& p, DecodeScratch<T>& s) {
  const auto lookup = locate(field.planes(), FeatureKind::Geometry, p);
  gather_feature(field.planes(), FeatureKind::Geometry, lookup, s.feature.data());
  T out;
  decoder_forward(field.decoders().data(), field.geometry_decoder(), s.feature.data(),
                  s.pre.data(), &out);
  return out;
}

template <class T>
std::array<T, 3> decode_color(const SceneField<T>& field, const Vec3<T>& p, DecodeScratch<T>& s) {
  const auto lookup = locate(field.planes(), FeatureKind::Appearance, p);
  gather_feature(field.planes(), FeatureKind::Appearance, lookup, s.feature.data());
  std::array<T, 3> out;
  decoder_forward(field.decoders().data(), field.appearance_decoder(), s.feature.data(),
                  s.pre.data(), out.data());
  return out;
}

/// TSDF in (-1, 1) and raw color in (0, 1)^3 at p.
template <class T>
Decoded<T> decode(const SceneField<T>& field, const Vec3<T>& p) {
  DecodeScratch<T> s(field.options());
  return {decode_tsdf(field, p, s), decode_color(field, p, s)};
}

/// Accumulates d(loss)/d(parameters) and d(loss)/dp for one decoded point,
/// given the upstream gradients of its TSDF and color. Either output may be null.
template <class T>
void decode_backward(const SceneField<T>& field, const Vec3<T>& p, T dtsdf,
                     const std::array<T, 3>* dcolor, FieldGradient<T>* grad, Vec3<T>* dp,
                     DecodeScratch<T>& s) {
  const auto& planes = field.planes();
  const T* params = field.decoders().data();
  T* gdec = grad ? grad->decoders.data() : nullptr;
  T* gplanes = grad ? grad->planes.data() : nullptr;
  if (dtsdf != T(0)) {
    const auto lookup = locate(planes, FeatureKind::Geometry, p);
    gather_feature(planes, FeatureKind::Geometry, lookup, s.feature.data());
    T out;
    decoder_forward(params, field.geometry_decoder(), s.feature.data(), s.pre.data(), &out);
    decoder_backward(params, field.geometry_decoder(), s.feature.data(), s.pre.data(), &out,
                     &dtsdf, gdec, s.dfeature.data(), s.dhidden.data());
    scatter_feature_grad(planes, FeatureKind::Geometry, lookup, s.dfeature.data(), gplanes, dp);
  }
  if (dcolor && ((*dcolor)[0] != T(0) || (*dcolor)[1] != T(0) || (*dcolor)[2] != T(0))) {
    const auto lookup = locate(planes, FeatureKind::Appearance, p);
    gather_feature(planes, FeatureKind::Appearance, lookup, s.feature.data());
    std::array<T, 3> out;
    decoder_forward(params, field.appearance_decoder(), s.feature.data(), s.pre.data(),
                    out.data());
    decoder_backward(params, field.appearance_decoder(), s.feature.data(), s.pre.data(),
                     out.data(), dcolor->data(), gdec, s.dfeature.data(), s.dhidden.data());
    scatter_feature_grad(planes, FeatureKind::Appearance, lookup, s.dfeature.data(), gplanes,
                         dp);
  }
}

}  // namespace tpslam
