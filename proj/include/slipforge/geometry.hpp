#pragma once

#include <array>
#include <cmath>
#include <span>
#include <vector>

namespace slipforge {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr bool operator==(const Vec3&) const = default;
};

constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

/// Row-major 3x3 rotation. Construction from raw values does not validate;
/// use `checked()` or `orthonormality_error()` at API boundaries.
class RotationMatrix {
 public:
  constexpr RotationMatrix() : m_{1, 0, 0, 0, 1, 0, 0, 0, 1} {}
  constexpr explicit RotationMatrix(const std::array<double, 9>& row_major) : m_(row_major) {}

  static constexpr RotationMatrix identity() { return {}; }
  /// Throws InvalidRotation when the matrix deviates from SO(3) by more than `tol`.
  static RotationMatrix checked(const std::array<double, 9>& row_major, double tol = 1e-6);

  constexpr double operator()(int r, int c) const { return m_[static_cast<std::size_t>(3 * r + c)]; }
  constexpr const std::array<double, 9>& data() const { return m_; }

  RotationMatrix transpose() const;
  RotationMatrix operator*(const RotationMatrix& o) const;
  Vec3 operator*(const Vec3& v) const {
    const auto& a = m_;
    return {a[0] * v.x + a[1] * v.y + a[2] * v.z, a[3] * v.x + a[4] * v.y + a[5] * v.z,
            a[6] * v.x + a[7] * v.y + a[8] * v.z};
  }
  double trace() const { return m_[0] + m_[4] + m_[8]; }

  /// max(|R^T R - I|_max, |det R - 1|).
  double orthonormality_error() const;

  bool operator==(const RotationMatrix&) const = default;

 private:
  std::array<double, 9> m_;
};

RotationMatrix rot_x(double angle);
RotationMatrix rot_y(double angle);
RotationMatrix rot_z(double angle);

/// Unit quaternion (w, x, y, z). Always normalized on construction.
class UnitQuaternion {
 public:
  constexpr UnitQuaternion() = default;
  /// Renormalizes; throws InvalidRotation on zero or non-finite norm.
  UnitQuaternion(double w, double x, double y, double z);

  static UnitQuaternion from_axis_angle(const Vec3& axis, double angle);

  double w() const { return w_; }
  double x() const { return x_; }
  double y() const { return y_; }
  double z() const { return z_; }

  /// Same rotation with w >= 0 (ties on w == 0 resolved by the first nonzero
  /// component being positive).
  UnitQuaternion canonical() const;
  UnitQuaternion conjugate() const;
  UnitQuaternion operator*(const UnitQuaternion& o) const;
  Vec3 rotate(const Vec3& v) const;
  double dot(const UnitQuaternion& o) const { return w_ * o.w_ + x_ * o.x_ + y_ * o.y_ + z_ * o.z_; }
  /// Component-wise; q and -q compare unequal.
  bool operator==(const UnitQuaternion&) const = default;

 private:
  struct Raw {};
  constexpr UnitQuaternion(Raw, double w, double x, double y, double z) : w_(w), x_(x), y_(y), z_(z) {}

  double w_ = 1.0;
  double x_ = 0.0;
  double y_ = 0.0;
  double z_ = 0.0;
};

RotationMatrix quat_to_matrix(const UnitQuaternion& q);
/// Shepperd's method; the result is canonical (w >= 0).
UnitQuaternion matrix_to_quat(const RotationMatrix& m);

/// Geodesic angle between two orientations, in [0, pi].
double geodesic_angle(const UnitQuaternion& a, const UnitQuaternion& b);

struct Pose {
  UnitQuaternion orientation;
  Vec3 position;

  /// this * other: apply `other` first, then this.
  Pose compose(const Pose& other) const;
  Pose inverse() const;
  Vec3 apply(const Vec3& p) const;
  bool operator==(const Pose&) const = default;
};

struct AngularDifference {
  double theta = 0.0;  // radians, [0, pi]

  double degrees() const { return theta * 180.0 / 3.14159265358979323846; }
};

/// Relative rotation between gripper and object since the base configuration:
/// theta = |acos((tr(dG^T dC) - 1) / 2)| with dG = G B_g^T, dC = C B_c^T.
/// Throws InvalidRotation if any input deviates from SO(3) by more than 1e-6.
AngularDifference angular_difference(const RotationMatrix& base_gripper,
                                     const RotationMatrix& base_cube,
                                     const RotationMatrix& cur_gripper,
                                     const RotationMatrix& cur_cube);

struct PosePair {
  Pose gripper;
  Pose cube;
};

/// theta per entry, using the first entry as the base. theta[0] is exactly 0.
std::vector<AngularDifference> theta_series(std::span<const PosePair> log);

}  // namespace slipforge
