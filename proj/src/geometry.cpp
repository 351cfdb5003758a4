#include "slipforge/geometry.hpp"

#include <algorithm>
#include <limits>

#include "slipforge/errors.hpp"

namespace slipforge {

namespace {

// Arguments of the trace acos that lie within this distance of 1 are treated
// as exactly 1. Rounding in dG^T dC perturbs the argument by a few ulps, which
// would otherwise surface as theta ~1e-8 rad for identical relative motion.
constexpr double kAcosDeadband = 1e-14;
constexpr double kBoundaryTol = 1e-6;

}  // namespace

RotationMatrix RotationMatrix::checked(const std::array<double, 9>& row_major, double tol) {
  RotationMatrix r(row_major);
  const double err = r.orthonormality_error();
  if (!(err <= tol)) {
    throw InvalidRotation("matrix deviates from SO(3) by " + std::to_string(err));
  }
  return r;
}

RotationMatrix RotationMatrix::transpose() const {
  const auto& a = m_;
  return RotationMatrix({a[0], a[3], a[6], a[1], a[4], a[7], a[2], a[5], a[8]});
}

RotationMatrix RotationMatrix::operator*(const RotationMatrix& o) const {
  std::array<double, 9> r{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      r[static_cast<std::size_t>(3 * i + j)] =
          (*this)(i, 0) * o(0, j) + (*this)(i, 1) * o(1, j) + (*this)(i, 2) * o(2, j);
    }
  }
  return RotationMatrix(r);
}

double RotationMatrix::orthonormality_error() const {
  double err = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += (*this)(k, i) * (*this)(k, j);
      err = std::max(err, std::abs(s - (i == j ? 1.0 : 0.0)));
    }
  }
  const auto& a = m_;
  const double det = a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6]) +
                     a[2] * (a[3] * a[7] - a[4] * a[6]);
  err = std::max(err, std::abs(det - 1.0));
  if (!std::isfinite(err)) return std::numeric_limits<double>::infinity();
  return err;
}

RotationMatrix rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  return RotationMatrix({1, 0, 0, 0, c, -s, 0, s, c});
}

RotationMatrix rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  return RotationMatrix({c, 0, s, 0, 1, 0, -s, 0, c});
}

RotationMatrix rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  return RotationMatrix({c, -s, 0, s, c, 0, 0, 0, 1});
}

UnitQuaternion::UnitQuaternion(double w, double x, double y, double z) {
  const double n2 = w * w + x * x + y * y + z * z;
  if (!(n2 > 0.0) || !std::isfinite(n2)) throw InvalidRotation("zero-norm quaternion");
  if (std::abs(n2 - 1.0) <= 8.0 * std::numeric_limits<double>::epsilon()) {
    // Already unit to machine precision; keep the exact components.
    w_ = w;
    x_ = x;
    y_ = y;
    z_ = z;
    return;
  }
  const double n = std::sqrt(n2);
  w_ = w / n;
  x_ = x / n;
  y_ = y / n;
  z_ = z / n;
}

UnitQuaternion UnitQuaternion::from_axis_angle(const Vec3& axis, double angle) {
  const double n = norm(axis);
  if (!(n > 0.0)) throw InvalidRotation("zero rotation axis");
  const double s = std::sin(0.5 * angle) / n;
  return UnitQuaternion(std::cos(0.5 * angle), axis.x * s, axis.y * s, axis.z * s);
}

UnitQuaternion UnitQuaternion::canonical() const {
  bool flip = w_ < 0.0;
  if (w_ == 0.0) {
    const double first = x_ != 0.0 ? x_ : (y_ != 0.0 ? y_ : z_);
    flip = first < 0.0;
  }
  if (!flip) return *this;
  // Negating keeps the norm; skip renormalization so the values stay bit-exact.
  return UnitQuaternion(Raw{}, -w_, -x_, -y_, -z_);
}

UnitQuaternion UnitQuaternion::conjugate() const { return UnitQuaternion(Raw{}, w_, -x_, -y_, -z_); }

UnitQuaternion UnitQuaternion::operator*(const UnitQuaternion& o) const {
  return UnitQuaternion(w_ * o.w_ - x_ * o.x_ - y_ * o.y_ - z_ * o.z_,
                        w_ * o.x_ + x_ * o.w_ + y_ * o.z_ - z_ * o.y_,
                        w_ * o.y_ - x_ * o.z_ + y_ * o.w_ + z_ * o.x_,
                        w_ * o.z_ + x_ * o.y_ - y_ * o.x_ + z_ * o.w_);
}

Vec3 UnitQuaternion::rotate(const Vec3& v) const { return quat_to_matrix(*this) * v; }

RotationMatrix quat_to_matrix(const UnitQuaternion& q) {
  const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
  return RotationMatrix({1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
                         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
                         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)});
}

UnitQuaternion matrix_to_quat(const RotationMatrix& m) {
  const double tr = m.trace();
  double w, x, y, z;
  if (tr >= m(0, 0) && tr >= m(1, 1) && tr >= m(2, 2)) {
    const double s = 2.0 * std::sqrt(std::max(0.0, 1.0 + tr));
    w = 0.25 * s;
    x = (m(2, 1) - m(1, 2)) / s;
    y = (m(0, 2) - m(2, 0)) / s;
    z = (m(1, 0) - m(0, 1)) / s;
  } else if (m(0, 0) >= m(1, 1) && m(0, 0) >= m(2, 2)) {
    const double s = 2.0 * std::sqrt(std::max(0.0, 1.0 + m(0, 0) - m(1, 1) - m(2, 2)));
    w = (m(2, 1) - m(1, 2)) / s;
    x = 0.25 * s;
    y = (m(0, 1) + m(1, 0)) / s;
    z = (m(0, 2) + m(2, 0)) / s;
  } else if (m(1, 1) >= m(2, 2)) {
    const double s = 2.0 * std::sqrt(std::max(0.0, 1.0 - m(0, 0) + m(1, 1) - m(2, 2)));
    w = (m(0, 2) - m(2, 0)) / s;
    x = (m(0, 1) + m(1, 0)) / s;
    y = 0.25 * s;
    z = (m(1, 2) + m(2, 1)) / s;
  } else {
    const double s = 2.0 * std::sqrt(std::max(0.0, 1.0 - m(0, 0) - m(1, 1) + m(2, 2)));
    w = (m(1, 0) - m(0, 1)) / s;
    x = (m(0, 2) + m(2, 0)) / s;
    y = (m(1, 2) + m(2, 1)) / s;
    z = 0.25 * s;
  }
  return UnitQuaternion(w, x, y, z).canonical();
}

double geodesic_angle(const UnitQuaternion& a, const UnitQuaternion& b) {
  const UnitQuaternion d = a.conjugate() * b;
  const double v = std::sqrt(d.x() * d.x() + d.y() * d.y() + d.z() * d.z());
  return 2.0 * std::atan2(v, std::abs(d.w()));
}

Pose Pose::compose(const Pose& other) const {
  return {orientation * other.orientation, position + orientation.rotate(other.position)};
}

Pose Pose::inverse() const {
  const UnitQuaternion inv = orientation.conjugate();
  return {inv, -inv.rotate(position)};
}

Vec3 Pose::apply(const Vec3& p) const { return position + orientation.rotate(p); }

AngularDifference angular_difference(const RotationMatrix& base_gripper,
                                     const RotationMatrix& base_cube,
                                     const RotationMatrix& cur_gripper,
                                     const RotationMatrix& cur_cube) {
  for (const RotationMatrix* r : {&base_gripper, &base_cube, &cur_gripper, &cur_cube}) {
    const double err = r->orthonormality_error();
    if (!(err <= kBoundaryTol)) {
      throw InvalidRotation("input deviates from SO(3) by " + std::to_string(err));
    }
  }
  const RotationMatrix d_gripper = cur_gripper * base_gripper.transpose();
  const RotationMatrix d_cube = cur_cube * base_cube.transpose();
  const double tr = (d_gripper.transpose() * d_cube).trace();
  double arg = std::clamp(0.5 * (tr - 1.0), -1.0, 1.0);
  if (arg > 1.0 - kAcosDeadband) arg = 1.0;
  return {std::abs(std::acos(arg))};
}

std::vector<AngularDifference> theta_series(std::span<const PosePair> log) {
  if (log.empty()) throw EmptyInput("pose log is empty");
  const RotationMatrix base_g = quat_to_matrix(log.front().gripper.orientation);
  const RotationMatrix base_c = quat_to_matrix(log.front().cube.orientation);
  std::vector<AngularDifference> out;
  out.reserve(log.size());
  out.push_back({0.0});
  for (std::size_t i = 1; i < log.size(); ++i) {
    out.push_back(angular_difference(base_g, base_c, quat_to_matrix(log[i].gripper.orientation),
                                     quat_to_matrix(log[i].cube.orientation)));
  }
  return out;
}

}  // namespace slipforge
