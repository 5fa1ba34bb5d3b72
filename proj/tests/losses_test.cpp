#include "tpslam/losses.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace tpslam;

namespace {

RayRecord<double> make_ray(double depth, std::vector<double> z, std::vector<double> tsdf,
                           double rendered_depth = 0, std::array<double, 3> rendered = {},
                           std::array<double, 3> pixel = {}) {
  RayRecord<double> r;
  r.measured_depth = depth;
  r.z = std::move(z);
  r.tsdf = std::move(tsdf);
  r.render.depth = rendered_depth;
  r.render.color = rendered;
  r.pixel_color = pixel;
  return r;
}

// Straight-line reference for one ray's per-set means, written without the library's classifier.
struct Reference {
  double fs = 0, mid = 0, tail = 0;
  int n_fs = 0, n_mid = 0, n_tail = 0;
};

Reference reference(const RayRecord<double>& r, double T) {
  Reference ref;
  const double D = r.measured_depth;
  for (std::size_t i = 0; i < r.z.size(); ++i) {
    const double z = r.z[i], phi = r.tsdf[i];
    if (z < D - T) {
      ref.fs += (phi - 1) * (phi - 1);
      ++ref.n_fs;
    } else if (std::abs(z - D) < 0.4 * T) {
      ref.mid += (z + phi * T - D) * (z + phi * T - D);
      ++ref.n_mid;
    } else if (std::abs(z - D) < T) {
      ref.tail += (z + phi * T - D) * (z + phi * T - D);
      ++ref.n_tail;
    }
  }
  if (ref.n_fs) ref.fs /= ref.n_fs;
  if (ref.n_mid) ref.mid /= ref.n_mid;
  if (ref.n_tail) ref.tail /= ref.n_tail;
  return ref;
}

}  // namespace

TEST(Classify, Regions) {
  const double D = 2.0, T = 0.5;
  EXPECT_EQ(classify_sample(1.0, D, T), SampleRegion::FreeSpace);
  EXPECT_EQ(classify_sample(1.4999, D, T), SampleRegion::FreeSpace);
  EXPECT_EQ(classify_sample(1.5, D, T), SampleRegion::Outside);
  EXPECT_EQ(classify_sample(1.75, D, T), SampleRegion::Tail);
  EXPECT_EQ(classify_sample(1.9, D, T), SampleRegion::Middle);
  EXPECT_EQ(classify_sample(2.1, D, T), SampleRegion::Middle);
  EXPECT_EQ(classify_sample(2.3, D, T), SampleRegion::Tail);
  EXPECT_EQ(classify_sample(2.6, D, T), SampleRegion::Outside);
  EXPECT_EQ(classify_sample(2.3, D, T, true), SampleRegion::Middle);
  EXPECT_EQ(classify_sample(1.0, 0.0, T), SampleRegion::Outside);
}

TEST(FreeSpace, PerRayMeanThenRayMean) {
  LossOptions o;
  o.truncation = 0.5;
  // ray A: 3 free-space samples, ray B: 1
  RayBatch<double> batch{make_ray(2.0, {0.2, 0.7, 1.2, 1.9}, {0.5, 0.0, 1.0, 0.3}),
                         make_ray(3.0, {1.0, 2.9}, {-1.0, 0.0})};
  const double a = ((0.5 - 1) * (0.5 - 1) + 1.0 + 0.0) / 3.0;
  const double b = 4.0;
  EXPECT_NEAR(free_space_loss(batch, o), (a + b) / 2.0, 1e-15);

  // a ray with no free-space samples does not dilute the mean
  batch.push_back(make_ray(1.0, {0.9, 1.05}, {0.1, -0.1}));
  EXPECT_NEAR(free_space_loss(batch, o), (a + b) / 2.0, 1e-15);
  o.strict_ray_count = true;
  EXPECT_NEAR(free_space_loss(batch, o), (a + b) / 3.0, 1e-15);
}

TEST(Truncation, ExactSdfGivesZero) {
  LossOptions o;
  o.truncation = 0.1;
  std::vector<double> z, phi;
  for (double x = 1.5; x < 2.5; x += 0.013) {
    z.push_back(x);
    phi.push_back((2.0 - x) / o.truncation);
  }
  RayBatch<double> batch{make_ray(2.0, z, phi)};
  EXPECT_LT(truncation_loss(batch, TruncationRegion::Middle, o), 1e-28);
  EXPECT_LT(truncation_loss(batch, TruncationRegion::Tail, o), 1e-28);
}

TEST(Truncation, HandComputed) {
  LossOptions o;
  o.truncation = 0.5;
  // D = 2: z = 1.9 and 2.1 are middle, 1.75 and 2.3 are tail
  RayBatch<double> batch{make_ray(2.0, {1.75, 1.9, 2.1, 2.3}, {0.2, 0.4, -0.1, -1.0})};
  const double mid = (std::pow(1.9 + 0.2 - 2, 2) + std::pow(2.1 - 0.05 - 2, 2)) / 2;
  const double tail = (std::pow(1.75 + 0.1 - 2, 2) + std::pow(2.3 - 0.5 - 2, 2)) / 2;
  EXPECT_NEAR(truncation_loss(batch, TruncationRegion::Middle, o), mid, 1e-15);
  EXPECT_NEAR(truncation_loss(batch, TruncationRegion::Tail, o), tail, 1e-15);

  o.single_truncation = true;
  const double all = (std::pow(1.75 + 0.1 - 2, 2) + std::pow(1.9 + 0.2 - 2, 2) +
                      std::pow(2.1 - 0.05 - 2, 2) + std::pow(2.3 - 0.5 - 2, 2)) /
                     4;
  EXPECT_NEAR(truncation_loss(batch, TruncationRegion::Middle, o), all, 1e-15);
  EXPECT_EQ(truncation_loss(batch, TruncationRegion::Tail, o), 0.0);
}

TEST(RenderingLosses, DepthSkipsMissingColorUsesAll) {
  RayBatch<double> batch{
      make_ray(2.0, {}, {}, 2.5, {0.1, 0.2, 0.3}, {0.0, 0.0, 0.0}),
      make_ray(0.0, {}, {}, 7.0, {1.0, 1.0, 1.0}, {0.5, 0.5, 0.5}),
      make_ray(1.0, {}, {}, 0.8, {0.5, 0.5, 0.5}, {0.5, 0.5, 0.8}),
  };
  EXPECT_NEAR(depth_loss(batch), (0.25 + 0.04) / 2, 1e-15);
  const double c0 = (0.01 + 0.04 + 0.09) / 3, c1 = 0.25, c2 = 0.09 / 3;
  EXPECT_NEAR(color_loss(batch), (c0 + c1 + c2) / 3, 1e-15);
  batch[1].active = false;
  EXPECT_NEAR(color_loss(batch), (c0 + c2) / 2, 1e-15);
}

TEST(GlobalLoss, WeightedSumMatchesReference) {
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> u(0, 1), phi(-1, 1);
  LossOptions o;
  o.truncation = 0.1;
  RayBatch<double> batch;
  for (int k = 0; k < 30; ++k) {
    const double D = k % 7 == 3 ? 0.0 : 1.0 + u(rng);
    std::vector<double> z, t;
    for (int i = 0; i < 24; ++i) {
      z.push_back(0.2 + 0.1 * i + 0.05 * u(rng));
      t.push_back(phi(rng));
    }
    for (int i = 0; i < 6 && D > 0; ++i) {
      z.push_back(D - 0.1 + 0.2 * u(rng));
      t.push_back(phi(rng));
    }
    std::sort(z.begin(), z.end());
    batch.push_back(make_ray(D, z, t, 1.0 + u(rng), {u(rng), u(rng), u(rng)},
                             {u(rng), u(rng), u(rng)}));
  }
  double fs = 0, mid = 0, tail = 0, depth = 0, color = 0;
  int n_fs = 0, n_mid = 0, n_tail = 0, n_depth = 0;
  for (const auto& r : batch) {
    double e = 0;
    for (int c = 0; c < 3; ++c) e += std::pow(r.render.color[c] - r.pixel_color[c], 2);
    color += e / 3;
    if (r.measured_depth <= 0) continue;
    const auto ref = reference(r, o.truncation);
    if (ref.n_fs) fs += ref.fs, ++n_fs;
    if (ref.n_mid) mid += ref.mid, ++n_mid;
    if (ref.n_tail) tail += ref.tail, ++n_tail;
    depth += std::pow(r.render.depth - r.measured_depth, 2);
    ++n_depth;
  }
  fs /= n_fs;
  mid /= n_mid;
  tail /= n_tail;
  depth /= n_depth;
  color /= batch.size();

  const auto terms = global_loss(batch, LossWeights::mapping(), o);
  EXPECT_NEAR(terms.free_space, fs, 1e-14);
  EXPECT_NEAR(terms.trunc_middle, mid, 1e-14);
  EXPECT_NEAR(terms.trunc_tail, tail, 1e-14);
  EXPECT_NEAR(terms.depth, depth, 1e-14);
  EXPECT_NEAR(terms.color, color, 1e-14);
  EXPECT_NEAR(terms.total, 5 * fs + 200 * mid + 10 * tail + 0.1 * depth + 5 * color, 1e-11);

  const auto track = global_loss(batch, LossWeights::tracking(), o);
  EXPECT_NEAR(track.total, 10 * fs + 200 * mid + 50 * tail + 1 * depth + 5 * color, 1e-11);

  o.use_color = false;
  EXPECT_NEAR(global_loss(batch, LossWeights::mapping(), o).total,
              5 * fs + 200 * mid + 10 * tail + 0.1 * depth, 1e-11);
}

TEST(GlobalLoss, AdjointMatchesCentralDifferences) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(0, 1), phi(-1, 1);
  LossOptions o;
  o.truncation = 0.2;
  RayBatch<double> batch;
  for (int k = 0; k < 6; ++k) {
    const double D = k == 2 ? 0.0 : 1.2 + 0.3 * u(rng);
    std::vector<double> z, t;
    for (int i = 0; i < 16; ++i) {
      z.push_back(0.3 + 0.12 * i);
      t.push_back(phi(rng));
    }
    batch.push_back(make_ray(D, z, t, 1.0 + u(rng), {u(rng), u(rng), u(rng)},
                             {u(rng), u(rng), u(rng)}));
  }
  const auto w = LossWeights::mapping();
  const auto counts = loss_counts(batch, o);
  auto f = [&]() { return global_loss(batch, w, o).total; };
  const double h = 1e-6;
  auto fd = [&](double& x) {
    const double s = x;
    x = s + h;
    const double p = f();
    x = s - h;
    const double m = f();
    x = s;
    return (p - m) / (2 * h);
  };
  for (auto& r : batch) {
    const auto a = loss_adjoint(r, counts, w, o);
    for (std::size_t i = 0; i < r.tsdf.size(); ++i) {
      EXPECT_NEAR(a.dtsdf[i], fd(r.tsdf[i]), 1e-6);
    }
    EXPECT_NEAR(a.ddepth, fd(r.render.depth), 1e-7);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(a.dcolor[c], fd(r.render.color[c]), 1e-7);
  }
}

TEST(LossWeights, PresetsAndValidation) {
  const auto m = LossWeights::mapping();
  EXPECT_EQ(m.free_space, 5);
  EXPECT_EQ(m.trunc_middle, 200);
  EXPECT_EQ(m.trunc_tail, 10);
  EXPECT_EQ(m.depth, 0.1);
  EXPECT_EQ(m.color, 5);
  const auto t = LossWeights::tracking();
  EXPECT_EQ(t.free_space, 10);
  EXPECT_EQ(t.trunc_tail, 50);
  EXPECT_EQ(t.depth, 1);
  auto bad = m;
  bad.depth = -1;
  EXPECT_THROW(bad.validate("mapping"), ConfigError);
}

TEST(Truncation, LinearSdfResidualsAndPerturbation) {
  LossOptions o;
  o.truncation = 0.06;
  RayBatch<double> batch{make_ray(2.0, {1.97, 2.03}, {0.5, -0.5})};
  EXPECT_LT(truncation_loss(batch, TruncationRegion::Tail, o), 1e-28);
  batch[0].tsdf = {0.4, -0.4};
  EXPECT_NEAR(truncation_loss(batch, TruncationRegion::Tail, o), 3.6e-5, 1e-15);
  EXPECT_EQ(truncation_loss(batch, TruncationRegion::Middle, o), 0.0);

  RayBatch<double> edge{make_ray(2.0, {2.0, 1.8 + 1e-12}, {0.0, 1.0})};
  o.truncation = 0.2;
  EXPECT_LT(truncation_loss(edge, TruncationRegion::Middle, o), 1e-20);
  EXPECT_LT(truncation_loss(edge, TruncationRegion::Tail, o), 1e-20);
}

TEST(FreeSpace, TrivialTargets) {
  LossOptions o;
  o.truncation = 0.1;
  RayBatch<double> ones{make_ray(2.0, {0.5, 1.0, 1.5}, {1.0, 1.0, 1.0})};
  EXPECT_EQ(free_space_loss(ones, o), 0.0);
  RayBatch<double> zeros{make_ray(2.0, {0.5, 1.0, 1.5}, {0.0, 0.0, 0.0}),
                         make_ray(3.0, {0.5, 1.0, 1.5}, {0.0, 0.0, 0.0})};
  EXPECT_EQ(free_space_loss(zeros, o), 1.0);
}

TEST(RenderingLosses, TrivialOffsets) {
  RayBatch<double> batch;
  for (int i = 0; i < 5; ++i) {
    batch.push_back(make_ray(1.0 + i, {}, {}, 1.1 + i, {0.7, 0.6, 0.9}, {0.2, 0.1, 0.4}));
  }
  EXPECT_NEAR(depth_loss(batch), 0.01, 1e-14);
  EXPECT_NEAR(color_loss(batch), 0.25, 1e-15);
  for (auto& r : batch) {
    r.render.depth = r.measured_depth;
    r.render.color = r.pixel_color;
  }
  EXPECT_EQ(depth_loss(batch), 0.0);
  EXPECT_EQ(color_loss(batch), 0.0);
}

TEST(GlobalLoss, CombineIsDotProduct) {
  LossTerms unit{1, 1, 1, 1, 1, 0};
  EXPECT_NEAR(combine_losses(unit, LossWeights::mapping()).total, 220.1, 1e-12);
  EXPECT_EQ(combine_losses(LossTerms{}, LossWeights::mapping()).total, 0.0);
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(0, 3);
  for (int i = 0; i < 20; ++i) {
    LossTerms t{u(rng), u(rng), u(rng), u(rng), u(rng), 0};
    const LossWeights w{u(rng), u(rng), u(rng), u(rng), u(rng)};
    const double dot = t.free_space * w.free_space + t.trunc_middle * w.trunc_middle +
                       t.trunc_tail * w.trunc_tail + t.depth * w.depth + t.color * w.color;
    EXPECT_NEAR(combine_losses(t, w).total, dot, 1e-12);
  }
}
