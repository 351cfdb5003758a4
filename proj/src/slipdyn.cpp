#include "slipforge/slipdyn.hpp"

#include <algorithm>
#include <cmath>

#include "slipforge/errors.hpp"

namespace slipforge {

namespace {

const Vec3 kGripAxis{0.0, 1.0, 0.0};

double min_jerk(double s) {
  s = std::clamp(s, 0.0, 1.0);
  return s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
}

int sign(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

void ScenarioParams::validate() const {
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ParamError(std::string(what) + " must be positive");
  };
  positive(cuboid_width, "cuboid_width");
  positive(cuboid_height, "cuboid_height");
  positive(cuboid_depth, "cuboid_depth");
  positive(cuboid_mass, "cuboid_mass");
  positive(friction_torque_max, "friction_torque_max");
  if (!(std::abs(grip_offset_horizontal) <= 0.5 * cuboid_width)) {
    throw ParamError("|grip_offset_horizontal| exceeds half the cuboid width");
  }
  if (!(grip_offset_vertical >= 0.0 && grip_offset_vertical <= cuboid_height)) {
    throw ParamError("grip_offset_vertical outside [0, cuboid_height]");
  }
  if (!(light_intensity >= 0.0 && light_intensity <= 1.0)) throw ParamError("light_intensity outside [0, 1]");
  if (!(background_brightness >= 0.0 && background_brightness <= 1.0)) {
    throw ParamError("background_brightness outside [0, 1]");
  }
  if (!std::isfinite(light_azimuth) || !std::isfinite(light_elevation)) {
    throw ParamError("light direction must be finite");
  }
}

std::string to_string(PhaseName p) {
  switch (p) {
    case PhaseName::approach: return "approach";
    case PhaseName::grasp: return "grasp";
    case PhaseName::lift: return "lift";
    case PhaseName::tilt: return "tilt";
    case PhaseName::untilt: return "untilt";
    case PhaseName::place: return "place";
    case PhaseName::release: return "release";
  }
  return "?";
}

Vec3 grip_point(const ScenarioParams& p) {
  if (!(std::abs(p.grip_offset_horizontal) <= 0.5 * p.cuboid_width)) {
    throw ParamError("|grip_offset_horizontal| exceeds half the cuboid width");
  }
  if (!(p.grip_offset_vertical >= 0.0 && p.grip_offset_vertical <= p.cuboid_height)) {
    throw ParamError("grip_offset_vertical outside [0, cuboid_height]");
  }
  return {p.grip_offset_horizontal, 0.0, 0.5 * p.cuboid_height - p.grip_offset_vertical};
}

double grip_axis_inertia(const ScenarioParams& p) {
  const Vec3 g = grip_point(p);
  const double m = p.cuboid_mass;
  return m * (p.cuboid_width * p.cuboid_width + p.cuboid_height * p.cuboid_height) / 12.0 +
         m * (g.x * g.x + g.z * g.z);
}

std::vector<TrajectoryPhase> build_trajectory(const ScenarioParams& params, const TrajectoryConfig& cfg) {
  params.validate();
  for (double d : cfg.durations) {
    if (!(d > 0.0) || !std::isfinite(d)) throw ParamError("phase durations must be positive");
  }
  if (!(cfg.lift_height >= 0.0) || !std::isfinite(cfg.tilt_angle)) {
    throw ParamError("invalid lift height or tilt angle");
  }
  const Vec3 g = grip_point(params);
  // Cuboid rests on the ground at the world origin; the gripper frame sits at
  // the grip point with axes aligned to the cuboid.
  const Vec3 rest{g.x, g.y, g.z + 0.5 * params.cuboid_height};
  const Vec3 lifted = rest + Vec3{0.0, 0.0, cfg.lift_height};
  const Vec3 placed = rest + Vec3{cfg.place_shift, 0.0, 0.0};
  const Vec3 over_place = lifted + Vec3{cfg.place_shift, 0.0, 0.0};
  const UnitQuaternion level;
  const UnitQuaternion tilted = UnitQuaternion::from_axis_angle(kGripAxis, cfg.tilt_angle);

  struct Spec {
    PhaseName name;
    Vec3 from, to;
    double tilt_from, tilt_to;
    bool airborne;
  };
  const double a = cfg.tilt_angle;
  const Spec specs[7] = {
      {PhaseName::approach, rest, rest, 0.0, 0.0, false},
      {PhaseName::grasp, rest, rest, 0.0, 0.0, false},
      {PhaseName::lift, rest, lifted, 0.0, 0.0, true},
      {PhaseName::tilt, lifted, lifted, 0.0, a, true},
      {PhaseName::untilt, lifted, over_place, a, 0.0, true},
      {PhaseName::place, over_place, placed, 0.0, 0.0, true},
      {PhaseName::release, placed, placed, 0.0, 0.0, false},
  };
  std::vector<TrajectoryPhase> out;
  for (std::size_t i = 0; i < 7; ++i) {
    const Spec& s = specs[i];
    TrajectoryPhase ph;
    ph.name = s.name;
    ph.duration = cfg.durations[i];
    ph.start = {s.tilt_from == 0.0 ? level : tilted, s.from};
    ph.end = {s.tilt_to == 0.0 ? level : tilted, s.to};
    ph.tilt_start = s.tilt_from;
    ph.tilt_end = s.tilt_to;
    ph.airborne = s.airborne;
    out.push_back(ph);
  }
  return out;
}

double total_duration(const std::vector<TrajectoryPhase>& phases) {
  double t = 0.0;
  for (const auto& p : phases) t += p.duration;
  return t;
}

int frame_count(const std::vector<TrajectoryPhase>& phases) {
  return static_cast<int>(std::lround(total_duration(phases) * kFrameRate));
}

namespace {

/// Phase index and normalized progress at time t.
std::pair<std::size_t, double> locate(const std::vector<TrajectoryPhase>& phases, double t) {
  double t0 = 0.0;
  for (std::size_t i = 0; i < phases.size(); ++i) {
    const double t1 = t0 + phases[i].duration;
    if (t < t1 || i + 1 == phases.size()) return {i, (t - t0) / phases[i].duration};
    t0 = t1;
  }
  return {0, 0.0};
}

}  // namespace

Pose gripper_pose_at(const std::vector<TrajectoryPhase>& phases, double t) {
  if (phases.empty()) throw ParamError("empty trajectory");
  const auto [i, s] = locate(phases, t);
  const TrajectoryPhase& ph = phases[i];
  const double k = min_jerk(s);
  const double tilt = ph.tilt_start + (ph.tilt_end - ph.tilt_start) * k;
  const Vec3 pos = ph.start.position + (ph.end.position - ph.start.position) * k;
  return {UnitQuaternion::from_axis_angle(kGripAxis, tilt), pos};
}

PoseLog simulate_slip(const ScenarioParams& params, const std::vector<TrajectoryPhase>& phases,
                      const SlipConfig& cfg) {
  params.validate();
  if (phases.empty()) throw ParamError("empty trajectory");
  if (!(cfg.integrator_rate >= kFrameRate)) throw ParamError("integrator rate below frame rate");
  const int substeps = static_cast<int>(std::lround(cfg.integrator_rate / kFrameRate));
  const double dt = 1.0 / (kFrameRate * substeps);

  const Vec3 g = grip_point(params);
  const Vec3 arm0 = -g;  // grip point -> centre of mass, object frame at grasp
  const double m = params.cuboid_mass;
  const double inertia = grip_axis_inertia(params);
  const double lever = std::sqrt(g.x * g.x + g.z * g.z);
  const double damping = cfg.damping_scale * std::sqrt(inertia * m * kGravity * lever);
  const double tau_f = params.friction_torque_max;

  double phi = 0.0;
  double omega = 0.0;
  bool stuck = true;

  auto gravity_torque = [&](const Pose& grip, double angle) {
    // Gravity in the gripper frame; torque about the gripper's y axis.
    const Vec3 g_local = grip.orientation.conjugate().rotate({0.0, 0.0, -kGravity * m});
    const Vec3 arm = rot_y(angle) * arm0;
    return arm.z * g_local.x - arm.x * g_local.z;
  };

  const int n = frame_count(phases);
  PoseLog log;
  log.records.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double t = k / kFrameRate;
    const Pose grip = gripper_pose_at(phases, t);
    const Pose rel{UnitQuaternion::from_axis_angle(kGripAxis, phi), rot_y(phi) * arm0};
    log.records.push_back({k, t, grip, grip.compose(rel)});
    log.slip_angle.push_back(phi);
    log.cube_in_gripper.push_back(rel);
    if (k + 1 == n) break;

    for (int s = 0; s < substeps; ++s) {
      const double ts = t + s * dt;
      const auto [phase, progress] = locate(phases, ts);
      (void)progress;
      if (!phases[phase].airborne) {
        omega = 0.0;
        stuck = true;
        continue;
      }
      const Pose gp = gripper_pose_at(phases, ts);
      const double tau_g = gravity_torque(gp, phi);
      if (!std::isfinite(tau_g)) {
        throw NumericalDivergence("non-finite gravity torque at t=" + std::to_string(ts));
      }
      if (stuck) {
        if (!(std::abs(tau_g) > tau_f)) continue;
        stuck = false;
      }
      const int dir = omega != 0.0 ? sign(omega) : sign(tau_g);
      const double accel = (tau_g - tau_f * dir - damping * omega) / inertia;
      double next = omega + accel * dt;
      if (sign(next) != dir && !(std::abs(tau_g) > tau_f)) {
        // Velocity reversed while static friction can hold the object.
        next = 0.0;
        stuck = true;
      }
      omega = next;
      phi += omega * dt;
      if (!std::isfinite(phi) || !std::isfinite(omega)) {
        throw NumericalDivergence("non-finite slip state at t=" + std::to_string(ts));
      }
    }
  }
  return log;
}

}  // namespace slipforge
