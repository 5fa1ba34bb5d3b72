#pragma once

// TUM RGB-D layout: rgb.txt / depth.txt / optional groundtruth.txt index files,
// 8-bit color PNGs and 16-bit depth PNGs (raw / depth_scale = meters).

#include "tpslam/frame.hpp"
#include "tpslam/image_io.hpp"
#include "tpslam/trajectory_io.hpp"

#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace tpslam {

struct IndexEntry {
  double timestamp = 0;
  std::string file;
};

inline std::vector<IndexEntry> read_index(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DatasetError("cannot open " + path);
  std::vector<IndexEntry> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    IndexEntry e;
    if (ls >> e.timestamp >> e.file) out.push_back(e);
  }
  return out;
}

/// Unique nearest-neighbour matching of two timestamp lists: candidate pairs
/// within `max_dt` are accepted in order of increasing |dt| (ties by index),
/// each element used at most once. Returned pairs are sorted by the first index.
inline std::vector<std::pair<std::size_t, std::size_t>> associate(const std::vector<double>& a,
                                                                  const std::vector<double>& b,
                                                                  double max_dt) {
  struct Cand {
    double dt;
    std::size_t i, j;
  };
  std::vector<Cand> cands;
  std::vector<std::size_t> order(b.size());
  std::iota(order.begin(), order.end(), std::size_t(0));
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return b[x] < b[y]; });
  std::vector<double> sorted_b(b.size());
  for (std::size_t k = 0; k < b.size(); ++k) sorted_b[k] = b[order[k]];
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto lo = std::lower_bound(sorted_b.begin(), sorted_b.end(), a[i] - max_dt);
    for (auto it = lo; it != sorted_b.end() && *it <= a[i] + max_dt; ++it) {
      const std::size_t j = order[std::size_t(it - sorted_b.begin())];
      cands.push_back({std::abs(a[i] - b[j]), i, j});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
    if (x.dt != y.dt) return x.dt < y.dt;
    if (x.i != y.i) return x.i < y.i;
    return x.j < y.j;
  });
  std::vector<char> used_a(a.size(), 0), used_b(b.size(), 0);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& c : cands) {
    if (used_a[c.i] || used_b[c.j]) continue;
    used_a[c.i] = used_b[c.j] = 1;
    out.emplace_back(c.i, c.j);
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct TumOptions {
  double depth_scale = 5000.0;
  double max_dt = 0.02;
  std::size_t max_frames = 0;  // 0: all
};

/// Associated frame list; images are read on demand by load().
class TumSequence {
 public:
  TumSequence(const std::string& dir, const TumOptions& o) : dir_(dir), options_(o) {
    namespace fs = std::filesystem;
    if (!(o.depth_scale > 0)) throw ConfigError("camera.depth_scale", "must be positive");
    const auto rgb = read_index((fs::path(dir) / "rgb.txt").string());
    const auto depth = read_index((fs::path(dir) / "depth.txt").string());
    std::vector<double> ta, tb;
    for (const auto& e : rgb) ta.push_back(e.timestamp);
    for (const auto& e : depth) tb.push_back(e.timestamp);
    const auto pairs = associate(ta, tb, o.max_dt);
    skipped_ = rgb.size() - pairs.size();
    Trajectory gt;
    std::vector<double> tg;
    if (fs::exists(fs::path(dir) / "groundtruth.txt")) {
      gt = read_trajectory((fs::path(dir) / "groundtruth.txt").string());
      for (const auto& s : gt) tg.push_back(s.timestamp);
    }
    std::vector<double> matched;
    for (const auto& [i, j] : pairs) matched.push_back(rgb[i].timestamp);
    std::vector<std::optional<CameraPose<double>>> poses(pairs.size());
    for (const auto& [k, g] : associate(matched, tg, o.max_dt)) poses[k] = gt[g].pose;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      if (o.max_frames && entries_.size() >= o.max_frames) break;
      entries_.push_back({rgb[pairs[k].first].timestamp, rgb[pairs[k].first].file,
                          depth[pairs[k].second].file, poses[k]});
    }
  }

  std::size_t size() const { return entries_.size(); }
  /// RGB entries without a depth partner.
  std::size_t skipped() const { return skipped_; }
  double timestamp(std::size_t i) const { return entries_.at(i).timestamp; }
  const std::optional<CameraPose<double>>& gt_pose(std::size_t i) const { return entries_.at(i).gt; }

  FrameRecord load(std::size_t i) const {
    namespace fs = std::filesystem;
    const auto& e = entries_.at(i);
    FrameRecord f;
    f.timestamp = e.timestamp;
    f.gt_pose = e.gt;
    try {
      const Image8 rgb = read_png_rgb((fs::path(dir_) / e.rgb).string());
      const Image16 depth = read_png_depth((fs::path(dir_) / e.depth).string());
      if (rgb.width != depth.width || rgb.height != depth.height) {
        throw DatasetError("color and depth sizes differ");
      }
      f.width = rgb.width;
      f.height = rgb.height;
      f.rgb.resize(rgb.data.size());
      for (std::size_t k = 0; k < rgb.data.size(); ++k) f.rgb[k] = float(rgb.data[k]) / 255.0f;
      f.depth.resize(depth.data.size());
      for (std::size_t k = 0; k < depth.data.size(); ++k) {
        f.depth[k] = float(double(depth.data[k]) / options_.depth_scale);
      }
    } catch (const DatasetError& err) {
      throw DatasetError("frame " + std::to_string(i) + ": " + err.what());
    }
    return f;
  }

  /// Ground-truth trajectory of the associated frames that have one.
  Trajectory ground_truth() const {
    Trajectory t;
    for (const auto& e : entries_) {
      if (e.gt) t.push_back({e.timestamp, *e.gt});
    }
    return t;
  }

 private:
  struct Entry {
    double timestamp;
    std::string rgb, depth;
    std::optional<CameraPose<double>> gt;
  };
  std::string dir_;
  TumOptions options_;
  std::vector<Entry> entries_;
  std::size_t skipped_ = 0;
};

/// Loads every associated frame.
inline std::vector<FrameRecord> load_tum(const std::string& dir, const TumOptions& o = {}) {
  TumSequence seq(dir, o);
  std::vector<FrameRecord> out;
  out.reserve(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) out.push_back(seq.load(i));
  return out;
}

}  // namespace tpslam
