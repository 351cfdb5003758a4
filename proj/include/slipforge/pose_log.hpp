#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "slipforge/geometry.hpp"

namespace slipforge {

struct PoseRecord {
  int frame = 0;
  double t = 0.0;  // s
  Pose gripper;
  Pose cube;
};

// One record per line:
//   frame t gw gx gy gz gpx gpy gpz cw cx cy cz cpx cpy cpz
// Quaternions are written in canonical sign (w >= 0) with 17 significant
// digits, so a write/read cycle reproduces every double exactly.
void write_pose_log(std::ostream& os, const std::vector<PoseRecord>& log);
void write_pose_log(const std::filesystem::path& path, const std::vector<PoseRecord>& log);
std::vector<PoseRecord> read_pose_log(std::istream& is);
std::vector<PoseRecord> read_pose_log(const std::filesystem::path& path);

std::vector<PosePair> to_pose_pairs(const std::vector<PoseRecord>& log);

}  // namespace slipforge
