#include "slipforge/pose_log.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "slipforge/errors.hpp"

namespace slipforge {

namespace {

void put_pose(std::string& line, const Pose& p) {
  const UnitQuaternion q = p.orientation.canonical();
  char buf[512];
  std::snprintf(buf, sizeof buf, " %.17g %.17g %.17g %.17g %.17g %.17g %.17g", q.w(), q.x(), q.y(),
                q.z(), p.position.x, p.position.y, p.position.z);
  line += buf;
}

}  // namespace

void write_pose_log(std::ostream& os, const std::vector<PoseRecord>& log) {
  std::string line;
  for (const auto& r : log) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%d %.17g", r.frame, r.t);
    line = buf;
    put_pose(line, r.gripper);
    put_pose(line, r.cube);
    line += '\n';
    os << line;
  }
}

void write_pose_log(const std::filesystem::path& path, const std::vector<PoseRecord>& log) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string());
  write_pose_log(os, log);
  if (!os) throw IoError("write failed for " + path.string());
}

std::vector<PoseRecord> read_pose_log(std::istream& is) {
  std::vector<PoseRecord> out;
  std::string line;
  long long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    PoseRecord r;
    double v[14];
    if (!(ss >> r.frame >> r.t)) throw ParseError("bad frame/timestamp", line_no);
    for (double& x : v) {
      if (!(ss >> x)) throw ParseError("expected 16 fields", line_no);
    }
    std::string extra;
    if (ss >> extra) throw ParseError("trailing field '" + extra + "'", line_no);
    try {
      r.gripper = {UnitQuaternion(v[0], v[1], v[2], v[3]), {v[4], v[5], v[6]}};
      r.cube = {UnitQuaternion(v[7], v[8], v[9], v[10]), {v[11], v[12], v[13]}};
    } catch (const InvalidRotation& e) {
      throw ParseError(e.what(), line_no);
    }
    out.push_back(r);
  }
  return out;
}

std::vector<PoseRecord> read_pose_log(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  return read_pose_log(is);
}

std::vector<PosePair> to_pose_pairs(const std::vector<PoseRecord>& log) {
  std::vector<PosePair> out;
  out.reserve(log.size());
  for (const auto& r : log) out.push_back({r.gripper, r.cube});
  return out;
}

}  // namespace slipforge
