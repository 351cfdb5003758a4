#include <gtest/gtest.h>

#include <sstream>

#include "slipforge/errors.hpp"
#include "slipforge/geometry.hpp"
#include "slipforge/pose_log.hpp"
#include "support.hpp"

using namespace slipforge;
using namespace slipforge::testing;

namespace {

constexpr double kPi = 3.14159265358979323846;

UnitQuaternion to_uq(const Q& q) { return UnitQuaternion(q.w, q.x, q.y, q.z); }

double max_abs_diff(const RotationMatrix& a, const RotationMatrix& b) {
  double m = 0;
  for (int i = 0; i < 9; ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace

TEST(Geometry, IdentityQuaternionGivesIdentityMatrix) {
  EXPECT_EQ(quat_to_matrix(UnitQuaternion()), RotationMatrix::identity());
}

TEST(Geometry, QuarterTurnAboutX) {
  const double h = std::sqrt(0.5);
  const RotationMatrix m = quat_to_matrix(UnitQuaternion(h, h, 0, 0));
  const RotationMatrix want({1, 0, 0, 0, 0, -1, 0, 1, 0});
  EXPECT_LT(max_abs_diff(m, want), 1e-15);
}

TEST(Geometry, ZeroQuaternionRejected) {
  EXPECT_THROW(UnitQuaternion(0, 0, 0, 0), InvalidRotation);
  EXPECT_THROW(UnitQuaternion(NAN, 0, 0, 0), InvalidRotation);
}

TEST(Geometry, MatrixMatchesTextbookFormula) {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const Q q = random_q(rng);
    EXPECT_LT(max_abs_diff(quat_to_matrix(to_uq(q)), q_matrix(q)), 1e-14);
  }
}

TEST(Geometry, QuaternionRoundTripUpToSign) {
  Rng rng(12);
  for (int i = 0; i < 1000; ++i) {
    const Q q = random_q(rng);
    const UnitQuaternion back = matrix_to_quat(q_matrix(q));
    const double s = back.w() * q.w + back.x() * q.x + back.y() * q.y + back.z() * q.z < 0 ? -1.0 : 1.0;
    EXPECT_NEAR(back.w(), s * q.w, 1e-9);
    EXPECT_NEAR(back.x(), s * q.x, 1e-9);
    EXPECT_NEAR(back.y(), s * q.y, 1e-9);
    EXPECT_NEAR(back.z(), s * q.z, 1e-9);
    EXPECT_GE(back.w(), 0.0);
  }
}

TEST(Geometry, CheckedRejectsNonOrthonormal) {
  EXPECT_THROW(RotationMatrix::checked({1, 0, 0, 0, 1, 0, 0, 0, 1.001}), InvalidRotation);
  EXPECT_THROW(RotationMatrix::checked({-1, 0, 0, 0, 1, 0, 0, 0, 1}), InvalidRotation);  // reflection
  EXPECT_NO_THROW(RotationMatrix::checked(rot_z(0.3).data()));
}

TEST(AngularDifference, IdentityIsZero) {
  const RotationMatrix I;
  EXPECT_EQ(angular_difference(I, I, I, I).theta, 0.0);
}

TEST(AngularDifference, ThirtyDegreesAboutX) {
  const RotationMatrix I;
  const double a = 30.0 * kPi / 180.0;
  EXPECT_NEAR(angular_difference(I, I, I, rot_x(a)).theta, a, 1e-12);
  EXPECT_NEAR(angular_difference(I, I, I, rot_x(a)).degrees(), 30.0, 1e-10);
}

TEST(AngularDifference, CommonRotationCancelsExactly) {
  Rng rng(13);
  const RotationMatrix I;
  for (int i = 0; i < 500; ++i) {
    const RotationMatrix R = q_matrix(random_q(rng));
    EXPECT_EQ(angular_difference(I, I, R, R).theta, 0.0);
  }
}

TEST(AngularDifference, NonOrthonormalInputRejected) {
  const RotationMatrix I;
  const RotationMatrix bad({1, 0, 0, 0, 1, 0, 0, 0, 1.01});
  EXPECT_THROW(angular_difference(I, I, I, bad), InvalidRotation);
  EXPECT_THROW(angular_difference(bad, I, I, I), InvalidRotation);
}

TEST(AngularDifference, ClampedArgumentNeverNaN) {
  // Perturb within the 1e-6 tolerance so the trace analytically exceeds 3.
  const RotationMatrix I;
  const RotationMatrix grow({1 + 1e-12, 0, 0, 0, 1 + 1e-12, 0, 0, 0, 1 + 1e-12});
  const double t = angular_difference(I, I, I, grow).theta;
  EXPECT_FALSE(std::isnan(t));
  EXPECT_EQ(t, 0.0);
}

// Property: against the quaternion geodesic of the relative change.
TEST(AngularDifference, MatchesQuaternionGeodesic) {
  Rng rng(14);
  for (int i = 0; i < 1000; ++i) {
    const Q bg = random_q(rng), bc = random_q(rng), g = random_q(rng), c = random_q(rng);
    const Q dg = qmul(g, qconj(bg)), dc = qmul(c, qconj(bc));
    const double want = q_angle(qmul(qconj(dg), dc));
    const double got = angular_difference(q_matrix(bg), q_matrix(bc), q_matrix(g), q_matrix(c)).theta;
    ASSERT_NEAR(got, want, 1e-9) << "quadruple " << i;
  }
}

TEST(AngularDifference, SymmetricAndFrameInvariant) {
  Rng rng(15);
  for (int i = 0; i < 300; ++i) {
    const RotationMatrix bg = q_matrix(random_q(rng)), bc = q_matrix(random_q(rng));
    const RotationMatrix g = q_matrix(random_q(rng)), c = q_matrix(random_q(rng));
    const RotationMatrix R = q_matrix(random_q(rng));
    const double t = angular_difference(bg, bc, g, c).theta;
    EXPECT_NEAR(angular_difference(bc, bg, c, g).theta, t, 1e-9);
    EXPECT_NEAR(angular_difference(R * bg, R * bc, R * g, R * c).theta, t, 1e-9);
  }
}

TEST(ThetaSeries, EmptyLogRejected) {
  EXPECT_THROW(theta_series({}), EmptyInput);
}

TEST(ThetaSeries, ConstantLogIsZero) {
  std::vector<PosePair> log(450, PosePair{{UnitQuaternion(0.9, 0.1, 0.3, 0.2), {1, 2, 3}},
                                          {UnitQuaternion(0.5, 0.5, 0.5, 0.5), {0, 0, 0}}});
  for (const auto& a : theta_series(log)) EXPECT_EQ(a.theta, 0.0);
}

TEST(ThetaSeries, LinearRelativeRotation) {
  const int n = 100;
  const double total = 10.0 * kPi / 180.0;
  std::vector<PosePair> log;
  const UnitQuaternion grip(0.8, 0.2, 0.4, 0.4);
  for (int i = 0; i < n; ++i) {
    const double a = total * i / (n - 1);
    log.push_back({{grip, {}}, {UnitQuaternion::from_axis_angle({0, 1, 0}, a) * grip, {}}});
  }
  const auto th = theta_series(log);
  EXPECT_EQ(th[0].theta, 0.0);
  for (int i = 1; i < n; ++i) EXPECT_GE(th[i].theta, th[i - 1].theta);
  EXPECT_NEAR(th.back().degrees(), 10.0, 1e-9);
}

TEST(ThetaSeries, IdenticalMotionIsZero) {
  Rng rng(16);
  std::vector<PosePair> log;
  const Q off = random_q(rng);
  for (int i = 0; i < 50; ++i) {
    const Q r = random_q(rng);
    const Q c = qmul(r, off);
    log.push_back({{to_uq(r), {}}, {to_uq(c), {}}});
  }
  for (const auto& a : theta_series(log)) EXPECT_LT(a.theta, 1e-7);
  EXPECT_EQ(theta_series(log)[0].theta, 0.0);
}

TEST(PoseLog, RoundTripIsExact) {
  Rng rng(17);
  std::vector<PoseRecord> log;
  for (int i = 0; i < 20; ++i) {
    const Q a = random_q(rng), b = random_q(rng);
    log.push_back({i, i / 60.0, {to_uq(a), {rng.uniform(), rng.uniform(), rng.uniform()}},
                   {to_uq(b), {rng.uniform(), -rng.uniform(), 1e-9 * rng.uniform()}}});
  }
  std::stringstream ss;
  write_pose_log(ss, log);
  const auto back = read_pose_log(ss);
  ASSERT_EQ(back.size(), log.size());
  for (std::size_t i = 0; i < log.size(); ++i) {
    EXPECT_EQ(back[i].frame, log[i].frame);
    EXPECT_EQ(back[i].t, log[i].t);
    EXPECT_EQ(back[i].gripper.position, log[i].gripper.position);
    const UnitQuaternion q = log[i].cube.orientation.canonical();
    EXPECT_EQ(back[i].cube.orientation.w(), q.w());
    EXPECT_EQ(back[i].cube.orientation.z(), q.z());
  }
}

TEST(PoseLog, MalformedLineRejected) {
  std::stringstream ss("0 0.0 1 0 0 0 0 0 0 1 0 0\n");
  EXPECT_THROW(read_pose_log(ss), ParseError);
}
