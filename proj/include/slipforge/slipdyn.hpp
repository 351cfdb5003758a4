#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "slipforge/geometry.hpp"
#include "slipforge/pose_log.hpp"

namespace slipforge {

inline constexpr double kFrameRate = 60.0;
inline constexpr double kGravity = 9.81;

/// Physical and visual parameters of one pick-and-place scenario.
struct ScenarioParams {
  double cuboid_width = 0.08;              // m, along x
  double cuboid_height = 0.10;             // m, along z
  double cuboid_depth = 0.05;              // m, along the grip axis
  double cuboid_mass = 0.2;                // kg
  double grip_offset_horizontal = 0.0;     // m from the centre, signed
  double grip_offset_vertical = 0.01;      // m below the top edge
  double friction_torque_max = 0.05;       // N m
  std::array<int, 3> texture_ids{0, 1, 2}; // cuboid, ground, background
  double light_azimuth = -1.5707963267948966;
  double light_elevation = 0.6;
  double light_intensity = 0.7;
  double background_brightness = 0.3;
  std::uint64_t seed = 0;

  /// Throws ParamError when an invariant is violated.
  void validate() const;
  bool operator==(const ScenarioParams&) const = default;
};

enum class PhaseName { approach, grasp, lift, tilt, untilt, place, release };
std::string to_string(PhaseName p);

struct TrajectoryPhase {
  PhaseName name = PhaseName::approach;
  double duration = 0.0;  // s
  Pose start;             // gripper pose at phase start
  Pose end;
  double tilt_start = 0.0;  // rad about the grip axis
  double tilt_end = 0.0;
  /// Object hangs from the gripper (slip dynamics active) during this phase.
  bool airborne = false;
  bool operator==(const TrajectoryPhase&) const = default;
};

struct TrajectoryConfig {
  // approach, grasp, lift, tilt, untilt, place, release
  std::array<double, 7> durations{1.0, 0.5, 1.5, 1.25, 1.25, 1.5, 0.5};
  double lift_height = 0.15;  // m
  double tilt_angle = 0.5235987755982988;  // rad, 30 degrees
  double place_shift = 0.10;  // m along x between pick and place
};

struct SlipConfig {
  double integrator_rate = 600.0;  // Hz
  double damping_scale = 0.05;     // c = scale * sqrt(I m g d)
};

struct PoseLog {
  double sample_rate = kFrameRate;
  std::vector<PoseRecord> records;
  /// Object rotation about the grip axis relative to the grasp, rad.
  std::vector<double> slip_angle;
  /// Object pose in the gripper frame; exact counterpart of records[i].cube.
  std::vector<Pose> cube_in_gripper;

  std::size_t size() const { return records.size(); }
};

/// Grip point on the cuboid in the cuboid frame (origin at the centre).
Vec3 grip_point(const ScenarioParams& params);

/// Moment of inertia of the cuboid about the grip axis, kg m^2.
double grip_axis_inertia(const ScenarioParams& params);

std::vector<TrajectoryPhase> build_trajectory(const ScenarioParams& params,
                                              const TrajectoryConfig& cfg = {});

/// Gripper pose at time t (clamped to the trajectory span).
Pose gripper_pose_at(const std::vector<TrajectoryPhase>& phases, double t);
double total_duration(const std::vector<TrajectoryPhase>& phases);
/// Number of 60 Hz frames covering the trajectory.
int frame_count(const std::vector<TrajectoryPhase>& phases);

/// Integrates the torsional stick-slip model and samples it at 60 Hz.
/// Throws NumericalDivergence on a non-finite state.
PoseLog simulate_slip(const ScenarioParams& params, const std::vector<TrajectoryPhase>& phases,
                      const SlipConfig& cfg = {});

}  // namespace slipforge
