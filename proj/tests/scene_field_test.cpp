#include "tpslam/gradcheck.hpp"
#include "tpslam/scene_field.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace tpslam;

namespace {

// Independent bilinear formula: w00 f00 + w01 f01 + w10 f10 + w11 f11.
double bilinear_oracle(const std::vector<double>& grid, int rows, int cols, int channels, int k,
                       double u, double v) {
  const int c0 = std::min(int(std::floor(u)), cols - 2);
  const int r0 = std::min(int(std::floor(v)), rows - 2);
  const double a = u - c0, b = v - r0;
  auto f = [&](int r, int c) { return grid[(std::size_t(r) * cols + c) * channels + k]; };
  return (1 - a) * (1 - b) * f(r0, c0) + a * (1 - b) * f(r0, c0 + 1) + (1 - a) * b * f(r0 + 1, c0) +
         a * b * f(r0 + 1, c0 + 1);
}

Bounds unit_box() { return {Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(1, 1, 1)}; }

FieldOptions small_options(int channels = 4) {
  FieldOptions o;
  o.channels = channels;
  o.hidden = 8;
  o.coarse_resolution = 0.5;
  o.fine_geometry_resolution = 0.25;
  o.fine_appearance_resolution = 0.2;
  return o;
}

}  // namespace

TEST(InterpolatePlane, GridNodeIdentityAndCellCenterMean) {
  const int rows = 4, cols = 5, ch = 3;
  std::vector<double> data(rows * cols * ch);
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> d(-1, 1);
  for (auto& x : data) x = d(rng);
  FeatureGrid<const double> g{data.data(), rows, cols, ch};
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const auto f = interpolate_plane(g, double(c), double(r));
      for (int k = 0; k < ch; ++k) EXPECT_EQ(f[k], g.at(r, c)[k]);
    }
  }
  const auto mid = interpolate_plane(g, 1.5, 2.5);
  for (int k = 0; k < ch; ++k) {
    const double mean = (g.at(2, 1)[k] + g.at(2, 2)[k] + g.at(3, 1)[k] + g.at(3, 2)[k]) / 4;
    EXPECT_NEAR(mid[k], mean, 1e-15);
  }
}

TEST(InterpolatePlane, MatchesDirectFormulaOracle) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> d(-1, 1), pos(0, 3);
  const int ch = 5;
  std::vector<double> data(4 * 4 * ch);
  for (auto& x : data) x = d(rng);
  FeatureGrid<const double> g{data.data(), 4, 4, ch};
  for (int q = 0; q < 1000; ++q) {
    const double u = pos(rng), v = pos(rng);
    const auto f = interpolate_plane(g, u, v);
    for (int k = 0; k < ch; ++k) {
      const double o = bilinear_oracle(data, 4, 4, ch, k, u, v);
      EXPECT_LE(std::abs(f[k] - o), 1e-12 * std::max(1.0, std::abs(o)));
    }
  }
}

TEST(InterpolatePlane, PartitionOfUnityAndLinearity) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> d(-1, 1), pos(0, 4);
  std::vector<double> a(5 * 5 * 2), b(5 * 5 * 2), mix(5 * 5 * 2);
  for (auto& x : a) x = d(rng);
  for (auto& x : b) x = d(rng);
  const double alpha = 0.7, beta = -1.3;
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = alpha * a[i] + beta * b[i];
  for (int q = 0; q < 200; ++q) {
    const double u = pos(rng), v = pos(rng);
    const auto s = bilinear_stencil(5, 5, u, v);
    const auto w = s.weights();
    EXPECT_NEAR(w[0] + w[1] + w[2] + w[3], 1.0, 1e-15);
    const auto fa = interpolate_plane(FeatureGrid<const double>{a.data(), 5, 5, 2}, u, v);
    const auto fb = interpolate_plane(FeatureGrid<const double>{b.data(), 5, 5, 2}, u, v);
    const auto fm = interpolate_plane(FeatureGrid<const double>{mix.data(), 5, 5, 2}, u, v);
    for (int k = 0; k < 2; ++k) EXPECT_NEAR(fm[k], alpha * fa[k] + beta * fb[k], 1e-13);
  }
}

TEST(InterpolatePlane, ClampsWithinOneCellAndRejectsFartherQueries) {
  std::vector<double> data(3 * 3, 0.0);
  data[0] = 2.0;
  FeatureGrid<const double> g{data.data(), 3, 3, 1};
  EXPECT_EQ(interpolate_plane(g, -0.5, -0.25)[0], 2.0);
  EXPECT_NO_THROW(interpolate_plane(g, 3.0, 1.0));
  EXPECT_THROW(interpolate_plane(g, -1.5, 0.0), OutOfBoundsError);
  EXPECT_THROW(interpolate_plane(g, 1.0, 3.2), OutOfBoundsError);
}

TEST(FeaturePlaneSet, DimensionsCoverBoundsExactly) {
  const Bounds b{Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(4, 4, 2)};
  FeaturePlaneSet<float> planes(b, FieldOptions{});
  const auto& xy = planes.layout(FeatureKind::Geometry, Level::Coarse, 0);
  EXPECT_EQ(xy.cols, int(std::ceil(4 / 0.24)) + 1);
  EXPECT_EQ(xy.rows, int(std::ceil(4 / 0.24)) + 1);
  const auto& yz = planes.layout(FeatureKind::Appearance, Level::Fine, 2);
  EXPECT_EQ(yz.cols, int(std::ceil(4 / 0.03)) + 1);
  EXPECT_EQ(yz.rows, int(std::ceil(2 / 0.03 - 1e-9)) + 1);
  for (const auto& l : planes.layouts()) {
    EXPECT_GE(l.rows, 2);
    EXPECT_GE(l.cols, 2);
  }
  // exact multiples do not get an extra row
  EXPECT_EQ(grid_nodes(0.24, 0.06), 5);
}

TEST(FeaturePlaneSet, ParameterCountGrowsQuadratically) {
  for (double side : {1.0, 2.0, 3.7, 5.0}) {
    const Bounds small{Eigen::Vector3d::Zero(), Eigen::Vector3d::Constant(side)};
    const Bounds large{Eigen::Vector3d::Zero(), Eigen::Vector3d::Constant(2 * side)};
    const FieldOptions o;
    const double n1 = double(FeaturePlaneSet<float>(small, o).parameter_count());
    const double n2 = double(FeaturePlaneSet<float>(large, o).parameter_count());
    EXPECT_LT(n2 / n1, 4.0 + 1e-9);
    EXPECT_GT(n2 / n1, 3.0);
  }
}

TEST(FeaturePlaneSet, SharedPlanesAndLevelSwitches) {
  auto o = small_options();
  o.shared_planes = true;
  FeaturePlaneSet<double> shared(unit_box(), o);
  EXPECT_EQ(shared.layout(FeatureKind::Appearance, Level::Fine, 1).offset,
            shared.layout(FeatureKind::Geometry, Level::Fine, 1).offset);
  FeaturePlaneSet<double> full(unit_box(), small_options());
  EXPECT_LT(shared.parameter_count(), full.parameter_count());

  o = small_options();
  o.levels = LevelMode::CoarseOnly;
  EXPECT_EQ(o.feature_dim(), o.channels);
  FeaturePlaneSet<double> coarse(unit_box(), o);
  EXPECT_TRUE(coarse.layout(FeatureKind::Geometry, Level::Fine, 0).empty());
  o.levels = LevelMode::Both;
  o.combine = CombineMode::Sum;
  EXPECT_EQ(o.feature_dim(), o.channels);
}

namespace {

template <class Kind>
void check_feature_patterns(FeatureKind kind, Kind&& feature_fn) {
  SceneField<double> field(unit_box(), small_options(3));
  const Vec3<double> p(0.31, 0.62, 0.47);
  auto f = feature_fn(p, field.planes());
  ASSERT_EQ(f.size(), 6u);
  for (double x : f) EXPECT_EQ(x, 0.0);

  // constant vector on the fine xz plane lands in the fine slot
  auto g = field.planes().grid(kind, Level::Fine, 1);
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.cols; ++c)
      for (int k = 0; k < 3; ++k) g.at(r, c)[k] = 0.25 * (k + 1);
  f = feature_fn(p, field.planes());
  EXPECT_EQ(f[0], 0.0);
  EXPECT_EQ(f[2], 0.0);
  EXPECT_NEAR(f[3], 0.25, 1e-15);
  EXPECT_NEAR(f[4], 0.5, 1e-15);
  EXPECT_NEAR(f[5], 0.75, 1e-15);

  // compositional oracle: six independent lookups, per-level sums, concatenation
  field.initialize(11);
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> d(-1, 1), pos(0, 1);
  for (auto& v : field.planes().values()) v = d(rng);
  for (int q = 0; q < 50; ++q) {
    const Vec3<double> x(pos(rng), pos(rng), pos(rng));
    f = feature_fn(x, field.planes());
    std::vector<double> oracle(6, 0.0);
    for (int level = 0; level < 2; ++level) {
      for (int axes = 0; axes < 3; ++axes) {
        const auto& l = field.planes().layout(kind, Level(level), axes);
        const auto grid = field.planes().grid(kind, Level(level), axes);
        std::vector<double> copy(grid.data, grid.data + l.size());
        const double u = x[kPlaneAxes[axes][0]] / l.resolution;
        const double v = x[kPlaneAxes[axes][1]] / l.resolution;
        for (int k = 0; k < 3; ++k) {
          oracle[level * 3 + k] += bilinear_oracle(copy, l.rows, l.cols, 3, k, u, v);
        }
      }
    }
    for (int k = 0; k < 6; ++k) EXPECT_NEAR(f[k], oracle[k], 1e-12);
  }
}

}  // namespace

TEST(GeometryFeature, ZeroSingleTermAndOracle) {
  check_feature_patterns(FeatureKind::Geometry, [](const Vec3<double>& p, const auto& planes) {
    return geometry_feature(p, planes);
  });
}

TEST(AppearanceFeature, ZeroSingleTermAndOracle) {
  check_feature_patterns(FeatureKind::Appearance, [](const Vec3<double>& p, const auto& planes) {
    return appearance_feature(p, planes);
  });
}

TEST(GeometryFeature, SumCombineAddsLevels) {
  auto o = small_options(2);
  o.combine = CombineMode::Sum;
  SceneField<double> field(unit_box(), o);
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> d(-1, 1);
  for (auto& v : field.planes().values()) v = d(rng);
  const Vec3<double> p(0.2, 0.7, 0.4);
  auto concat_opts = o;
  concat_opts.combine = CombineMode::Concat;
  SceneField<double> concat(unit_box(), concat_opts);
  concat.planes().values() = field.planes().values();
  const auto s = geometry_feature(p, field.planes());
  const auto c = geometry_feature(p, concat.planes());
  ASSERT_EQ(s.size(), 2u);
  EXPECT_NEAR(s[0], c[0] + c[2], 1e-14);
  EXPECT_NEAR(s[1], c[1] + c[3], 1e-14);
}

TEST(Decode, ZeroNetwork) {
  SceneField<double> field(unit_box(), small_options());
  const auto out = decode(field, Vec3<double>(0.5, 0.5, 0.5));
  EXPECT_EQ(out.tsdf, 0.0);
  for (double c : out.color) EXPECT_EQ(c, 0.5);
}

TEST(Decode, MatchesHandComputedChain) {
  auto o = small_options(2);
  o.hidden = 2;
  SceneField<double> field(unit_box(), o);
  auto g = field.planes().grid(FeatureKind::Geometry, Level::Coarse, 0);
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) {
      g.at(r, c)[0] = 0.1;
      g.at(r, c)[1] = 0.2;
    }
  }
  const auto& d = field.geometry_decoder();
  auto& w = field.decoders();
  // W1 = [[1, 2, 0, 0], [-1, 0, 0, 0]], b1 = [0.05, 0], W2 = [[2, 3]], b2 = [-0.1]
  w[d.w1() + 0] = 1;
  w[d.w1() + 1] = 2;
  w[d.w1() + 4] = -1;
  w[d.b1() + 0] = 0.05;
  w[d.w2() + 0] = 2;
  w[d.w2() + 1] = 3;
  w[d.b2()] = -0.1;
  const double hidden0 = std::max(0.0, 1 * 0.1 + 2 * 0.2 + 0.05);
  const double hidden1 = std::max(0.0, -1 * 0.1);
  const double expected = std::tanh(2 * hidden0 + 3 * hidden1 - 0.1);
  EXPECT_NEAR(decode(field, Vec3<double>(0.3, 0.8, 0.1)).tsdf, expected, 1e-15);
  EXPECT_NEAR(expected, std::tanh(1.0), 1e-15);
}

TEST(Decode, OutputsStayInActivationRanges) {
  SceneField<double> field(unit_box(), small_options());
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> d(-50, 50), pos(0, 1);
  for (auto& v : field.planes().values()) v = d(rng);
  for (auto& v : field.decoders()) v = d(rng);
  for (int q = 0; q < 200; ++q) {
    const auto out = decode(field, Vec3<double>(pos(rng), pos(rng), pos(rng)));
    EXPECT_GE(out.tsdf, -1.0);
    EXPECT_LE(out.tsdf, 1.0);
    EXPECT_LT(std::abs(out.tsdf), 1.0 + 1e-15);
    for (double c : out.color) {
      EXPECT_GE(c, 0.0);
      EXPECT_LE(c, 1.0);
    }
  }
}

TEST(Decode, GradientsMatchCentralDifferences) {
  SceneField<double> field(unit_box(), small_options(3));
  field.initialize(4);
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> d(-0.8, 0.8);
  for (auto& v : field.planes().values()) v = d(rng);
  for (auto& v : field.decoders()) v = d(rng);
  Vec3<double> p(0.37, 0.58, 0.71);
  // scalar objective: tsdf + 0.3 r - 0.7 g + 1.1 b
  const std::array<double, 3> wc{0.3, -0.7, 1.1};
  auto objective = [&]() {
    const auto out = decode(field, p);
    return out.tsdf + wc[0] * out.color[0] + wc[1] * out.color[1] + wc[2] * out.color[2];
  };
  auto grad = field.make_gradient();
  Vec3<double> dp = Vec3<double>::Zero();
  DecodeScratch<double> scratch(field.options());
  decode_backward(field, p, 1.0, &wc, &grad, &dp, scratch);

  int checked = 0;
  for (std::size_t i = 0; i < grad.planes.size(); ++i) {
    if (grad.planes[i] == 0.0) continue;
    const double num = central_difference<double>(objective, field.planes().values()[i], 1e-5);
    EXPECT_LT(relative_error(grad.planes[i], num, 1e-6), 1e-3) << "plane " << i;
    ++checked;
  }
  EXPECT_GT(checked, 20);
  for (std::size_t i = 0; i < grad.decoders.size(); ++i) {
    const double num = central_difference<double>(objective, field.decoders()[i], 1e-5);
    EXPECT_LT(relative_error(grad.decoders[i], num, 1e-6), 1e-3) << "decoder " << i;
  }
  for (int a = 0; a < 3; ++a) {
    const double num = central_difference<double>(objective, p[a], 1e-5);
    EXPECT_LT(relative_error(dp[a], num, 1e-6), 1e-3) << "axis " << a;
  }
}
