#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace tpslam {

template <class T>
using Vec3 = Eigen::Matrix<T, 3, 1>;
template <class T>
using Mat3 = Eigen::Matrix<T, 3, 3>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A query point fell more than one grid cell outside the scene box.
class OutOfBoundsError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value. `field()` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

/// Axis-aligned scene box in meters.
struct Bounds {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Ones();

  Eigen::Vector3d extent() const { return max - min; }

  template <class T>
  bool contains(const Vec3<T>& p, double slack = 0.0) const {
    for (int a = 0; a < 3; ++a) {
      if (double(p[a]) < min[a] - slack || double(p[a]) > max[a] + slack) return false;
    }
    return true;
  }

  Bounds scaled(double factor) const {
    const Eigen::Vector3d c = 0.5 * (min + max);
    return {c + factor * (min - c), c + factor * (max - c)};
  }

  bool operator==(const Bounds&) const = default;
};

/// Counter-based generator: every (seed, stream) pair yields an independent
/// sequence, so per-ray randomness does not depend on evaluation order.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : state_(mix(seed ^ mix(stream + 0x632be59bd9b4e019ULL))) {}

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static std::uint64_t key(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
    return mix(mix(mix(a) ^ b) ^ c);
  }

  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  /// Uniform in [0, 1).
  double uniform() { return double(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

/// Worker count: TPSLAM_THREADS if set, else hardware concurrency.
inline int worker_count() {
  if (const char* env = std::getenv("TPSLAM_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Splits [0, n) into `chunks` contiguous ranges and runs `fn(chunk, begin, end)`
/// on each. Chunk boundaries depend only on n and chunks.
inline void parallel_chunks(std::size_t n, int chunks,
                            const std::function<void(int, std::size_t, std::size_t)>& fn) {
  chunks = std::max(1, chunks);
  auto range = [&](int c) {
    return std::pair<std::size_t, std::size_t>{n * c / chunks, n * (c + 1) / chunks};
  };
  if (chunks == 1) {
    fn(0, 0, n);
    return;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(chunks);
  threads.reserve(chunks);
  for (int c = 0; c < chunks; ++c) {
    threads.emplace_back([&, c] {
      try {
        auto [b, e] = range(c);
        fn(c, b, e);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

template <class T>
T sigmoid(T x) {
  return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

}  // namespace tpslam
