#pragma once

// Finite-difference verification of the analytic reverse pass.

#include "tpslam/loss_graph.hpp"

#include <cstdio>
#include <functional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

namespace tpslam {

/// (f(x + h e_i) - f(x - h e_i)) / 2h, restoring x[i] afterwards.
template <class T>
double central_difference(const std::function<double()>& f, T& x, double h) {
  const T saved = x;
  x = T(double(saved) + h);
  const double fp = f();
  x = T(double(saved) - h);
  const double fm = f();
  x = saved;
  return (fp - fm) / (2.0 * h);
}

inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradcheckOptions {
  std::uint64_t seed = 0;
  int parameters = 100;
  double step = 1e-5;
  double tolerance = 1e-3;
  // Gradients smaller than this (relative to 1) are compared absolutely.
  double floor = 1e-6;
};

struct GradcheckEntry {
  std::string group;
  std::size_t index = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_error = 0;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double max_rel_error = 0;
  double mean_rel_error = 0;
  double loss = 0;
  bool passed = false;

  void print(std::ostream& os) const {
    char line[160];
    std::snprintf(line, sizeof line, "%-10s %8s %16s %16s %12s\n", "group", "index", "analytic",
                  "numeric", "rel_err");
    os << line;
    for (const auto& e : entries) {
      std::snprintf(line, sizeof line, "%-10s %8zu %16.9e %16.9e %12.3e\n", e.group.c_str(),
                    e.index, e.analytic, e.numeric, e.rel_error);
      os << line;
    }
    std::snprintf(line, sizeof line, "loss %.9e  max_rel_err %.3e  mean_rel_err %.3e  %s\n", loss,
                  max_rel_error, mean_rel_error, passed ? "PASS" : "FAIL");
    os << line;
  }
};

/// The 4-ray, 8-sample, 2-channel double-precision problem used for gradient checks.
struct MicroProblem {
  SceneField<double> field;
  CameraIntrinsics K;
  FrameRecord frame;
  std::vector<FrameSlot<double>> slots;
  std::vector<PixelRef> pixels;
  GraphOptions options;

  static MicroProblem make(std::uint64_t seed) {
    MicroProblem m;
    FieldOptions fo;
    fo.channels = 2;
    fo.hidden = 8;
    fo.coarse_resolution = 0.5;
    fo.fine_geometry_resolution = 0.25;
    fo.fine_appearance_resolution = 0.125;
    const Bounds bounds{Eigen::Vector3d(-1, -1, -1), Eigen::Vector3d(1, 1, 1)};
    m.field = SceneField<double>(bounds, fo, 10.0);
    m.field.initialize(seed);
    std::mt19937_64 rng(seed ^ 0x5eedULL);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    // larger features than the production init so every path carries signal
    for (auto& v : m.field.planes().values()) v = 0.5 * unit(rng);
    for (auto& v : m.field.decoders()) v = 0.6 * unit(rng);
    m.field.log_beta() = std::log(3.0);

    m.K = CameraIntrinsics{8.0, 8.0, 4.0, 3.0, 8, 6, 5000.0};
    m.frame.width = 8;
    m.frame.height = 6;
    m.frame.rgb.resize(3 * 48);
    m.frame.depth.resize(48);
    std::uniform_real_distribution<double> col(0.0, 1.0);
    std::uniform_real_distribution<double> dep(0.9, 1.6);
    for (auto& c : m.frame.rgb) c = float(col(rng));
    for (auto& d : m.frame.depth) d = float(dep(rng));
    m.frame.depth[1 * 8 + 2] = 0;  // one ray without a measurement

    auto pose = look_at<double>({0.1, 0.2, -1.0}, {0.0, 0.0, 0.3}, {0.0, -1.0, 0.0});
    pose.params[0] *= 1.1;  // unnormalized quaternion on purpose
    m.slots.push_back({&m.frame, pose, 0});
    m.pixels = {{0, 2, 1}, {0, 4, 3}, {0, 6, 2}, {0, 3, 4}};

    m.options.sampling.n_strat = 4;
    m.options.sampling.n_imp = 4;
    m.options.sampling.truncation = 0.3;
    m.options.loss.truncation = 0.3;
    m.options.weights = LossWeights::mapping();
    m.options.seed = seed;
    m.options.chunks = 1;
    return m;
  }
};

/// Compares analytic gradients of the global loss against central differences
/// for randomly chosen planes, decoder, beta and pose parameters.
inline GradcheckReport gradcheck(const GradcheckOptions& opt) {
  MicroProblem m = MicroProblem::make(opt.seed);
  RayBatch<double> batch;
  const auto res = evaluate(m.field, m.K, m.slots, m.pixels, m.options, &batch);

  auto loss = [&]() {
    forward_batch(m.field, m.slots, batch, m.options);
    return batch_loss(batch, m.options).total;
  };

  struct Param {
    std::string group;
    std::size_t index;
    double* value;
    double analytic;
  };
  std::vector<Param> candidates_planes, candidates_decoders, fixed;
  for (std::size_t i = 0; i < res.field.planes.size(); ++i) {
    if (res.field.planes[i] != 0.0) {
      candidates_planes.push_back({"planes", i, &m.field.planes().values()[i], res.field.planes[i]});
    }
  }
  for (std::size_t i = 0; i < res.field.decoders.size(); ++i) {
    candidates_decoders.push_back({"decoders", i, &m.field.decoders()[i], res.field.decoders[i]});
  }
  fixed.push_back({"log_beta", 0, &m.field.log_beta(), res.field.log_beta});
  for (std::size_t i = 0; i < 7; ++i) {
    fixed.push_back({"pose", i, &m.slots[0].pose.params[i], res.pose[0][i]});
  }

  std::mt19937_64 rng(opt.seed + 17);
  std::vector<Param> chosen = fixed;
  const int remaining = std::max(0, opt.parameters - int(fixed.size()));
  for (int k = 0; k < remaining; ++k) {
    auto& pool = (k % 2 == 0 && !candidates_planes.empty()) ? candidates_planes
                                                              : candidates_decoders;
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    chosen.push_back(pool[pick(rng)]);
  }

  GradcheckReport report;
  report.loss = res.terms.total;
  double sum = 0;
  for (const auto& p : chosen) {
    const double numeric = central_difference<double>(loss, *p.value, opt.step);
    const double rel = relative_error(p.analytic, numeric, opt.floor);
    report.entries.push_back({p.group, p.index, p.analytic, numeric, rel});
    report.max_rel_error = std::max(report.max_rel_error, rel);
    sum += rel;
  }
  report.mean_rel_error = chosen.empty() ? 0.0 : sum / double(chosen.size());
  report.passed = report.max_rel_error < opt.tolerance;
  return report;
}

}  // namespace tpslam
