#pragma once

#include "tpslam/pose.hpp"

#include <array>
#include <optional>
#include <vector>

namespace tpslam {

/// One RGB-D observation. Colors are in [0, 1], depth in meters (0 = invalid).
struct FrameRecord {
  double timestamp = 0;
  int width = 0;
  int height = 0;
  std::vector<float> rgb;    // row-major, 3 floats per pixel
  std::vector<float> depth;  // row-major
  std::optional<CameraPose<double>> gt_pose;

  std::array<float, 3> color_at(int u, int v) const {
    const std::size_t i = 3 * (std::size_t(v) * width + u);
    return {rgb[i], rgb[i + 1], rgb[i + 2]};
  }
  float depth_at(int u, int v) const { return depth[std::size_t(v) * width + u]; }

  int valid_depth_count() const {
    int n = 0;
    for (float d : depth) n += d > 0;
    return n;
  }
};

}  // namespace tpslam
