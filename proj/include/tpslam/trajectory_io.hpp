#pragma once

// Trajectory text files: "timestamp tx ty tz qx qy qz qw" per line, '#' comments.

#include "tpslam/pose.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace tpslam {

struct StampedPose {
  double timestamp = 0;
  CameraPose<double> pose;
};

using Trajectory = std::vector<StampedPose>;

inline std::string format_pose_line(const StampedPose& s) {
  const auto& p = s.pose.params;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.6f %.9f %.9f %.9f %.9f %.9f %.9f %.9f", s.timestamp, p[4],
                p[5], p[6], p[1], p[2], p[3], p[0]);
  return buf;
}

inline void write_trajectory(std::ostream& os, const Trajectory& traj) {
  for (const auto& s : traj) os << format_pose_line(s) << '\n';
}

inline void write_trajectory(const std::string& path, const Trajectory& traj) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  write_trajectory(os, traj);
}

inline Trajectory read_trajectory(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DatasetError("cannot open " + path);
  Trajectory out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    StampedPose s;
    double tx, ty, tz, qx, qy, qz, qw;
    if (!(ls >> s.timestamp >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
      throw DatasetError(path + ":" + std::to_string(lineno) + ": malformed trajectory line");
    }
    s.pose.params = {qw, qx, qy, qz, tx, ty, tz};
    s.pose.normalize();
    out.push_back(s);
  }
  return out;
}

}  // namespace tpslam
