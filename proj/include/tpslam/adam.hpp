#pragma once

#include "tpslam/common.hpp"

#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace tpslam {

class NonFiniteGradientError : public Error {
 public:
  explicit NonFiniteGradientError(const std::string& group)
      : Error("non-finite gradient in parameter group '" + group + "'"), group_(group) {}
  const std::string& group() const { return group_; }

 private:
  std::string group_;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// A named flat view of parameters with its own learning rate and Adam moments.
template <class T>
struct ParamGroup {
  std::string name;
  std::span<T> params;
  double lr = 1e-3;
  std::vector<T> m;
  std::vector<T> v;
  long step = 0;

  ParamGroup(std::string n, std::span<T> p, double learning_rate)
      : name(std::move(n)), params(p), lr(learning_rate), m(p.size(), T(0)), v(p.size(), T(0)) {}

  /// Rebinds to storage of the same size (e.g. after the owner moved).
  void rebind(std::span<T> p) {
    if (p.size() != params.size()) throw Error("ParamGroup::rebind size mismatch for " + name);
    params = p;
  }
};

template <class T>
void check_finite(const ParamGroup<T>& g, std::span<const T> grad) {
  for (T x : grad) {
    if (!std::isfinite(double(x))) throw NonFiniteGradientError(g.name);
  }
}

/// One bias-corrected Adam update.
template <class T>
void adam_step(ParamGroup<T>& g, std::span<const T> grad, const AdamOptions& o = {}) {
  if (grad.size() != g.params.size()) throw Error("adam_step: gradient size mismatch in " + g.name);
  check_finite(g, grad);
  ++g.step;
  const double c1 = 1.0 - std::pow(o.beta1, double(g.step));
  const double c2 = 1.0 - std::pow(o.beta2, double(g.step));
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double gi = double(grad[i]);
    const double m = o.beta1 * double(g.m[i]) + (1.0 - o.beta1) * gi;
    const double v = o.beta2 * double(g.v[i]) + (1.0 - o.beta2) * gi * gi;
    g.m[i] = T(m);
    g.v[i] = T(v);
    g.params[i] -= T(g.lr * (m / c1) / (std::sqrt(v / c2) + o.eps));
  }
}

}  // namespace tpslam
