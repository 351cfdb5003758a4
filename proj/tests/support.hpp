#pragma once

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

#include "slipforge/geometry.hpp"
#include "slipforge/rng.hpp"

namespace slipforge::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("slipforge_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

/// Plain quaternion used by the test oracles, independent of UnitQuaternion.
struct Q {
  double w, x, y, z;
};

inline Q qmul(const Q& a, const Q& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z, a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x, a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}
inline Q qconj(const Q& a) { return {a.w, -a.x, -a.y, -a.z}; }

/// Uniform random rotation (normalized Gaussian 4-vector).
inline Q random_q(Rng& rng) {
  double w, x, y, z, n;
  do {
    w = rng.normal(0, 1);
    x = rng.normal(0, 1);
    y = rng.normal(0, 1);
    z = rng.normal(0, 1);
    n = std::sqrt(w * w + x * x + y * y + z * z);
  } while (n < 1e-6);
  return {w / n, x / n, y / n, z / n};
}

/// Textbook quaternion to matrix, row-major.
inline RotationMatrix q_matrix(const Q& q) {
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  return RotationMatrix({1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
                         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
                         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)});
}

/// Rotation angle of q, stable near 0 and pi.
inline double q_angle(const Q& q) {
  const double v = std::sqrt(q.x * q.x + q.y * q.y + q.z * q.z);
  return 2.0 * std::atan2(v, std::abs(q.w));
}

}  // namespace slipforge::testing
