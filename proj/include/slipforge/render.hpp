#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "slipforge/geometry.hpp"

namespace slipforge {

inline constexpr int kSensorWidth = 346;
inline constexpr int kSensorHeight = 260;

/// Pinhole camera rigidly mounted on the gripper. Camera axes: x right,
/// y down, z along the optical axis.
struct CameraModel {
  int width = kSensorWidth;
  int height = kSensorHeight;
  double focal_px = 0.0;
  double cx = 0.5 * kSensorWidth;
  double cy = 0.5 * kSensorHeight;
  Pose mount;  // camera pose in the gripper frame

  /// Side-view camera `lateral_offset` metres behind the grip axis (gripper -y),
  /// looking along +y at the grip point with horizontal field of view `fov_deg`.
  static CameraModel side_view(double fov_deg = 60.0, double lateral_offset = 0.25);
};

struct SceneModel {
  double cube_width = 0.08;   // along cube x
  double cube_height = 0.10;  // along cube z
  double cube_depth = 0.05;   // along cube y (grip axis)
  int cube_texture = 0;
  int ground_texture = 1;
  int background_texture = 2;
  double ground_tile = 1.0;   // metres per texture repeat
  double sphere_radius = 3.0;
  double background_brightness = 0.3;  // also the ambient term
  double light_azimuth = -1.5707963267948966;
  double light_elevation = 0.6;
  double light_intensity = 0.7;
  /// Interpret (azimuth, elevation) in the camera frame instead of the world.
  bool light_in_camera_frame = false;
  int supersample = 1;  // samples per pixel side
};

struct Frame {
  int width = 0;
  int height = 0;
  double timestamp = 0.0;
  std::vector<float> pixels;  // row-major linear intensity in [0, 1]

  float at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

/// Row-major, 1 where the cuboid is the front-most surface.
struct ObjectMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> covered;

  bool at(int x, int y) const { return covered[static_cast<std::size_t>(y) * width + x] != 0; }
  std::size_t area() const;
};

/// Render with world poses of gripper and cube.
Frame render_frame(const SceneModel& scene, const CameraModel& camera, const Pose& gripper_pose,
                   const Pose& cube_pose, double timestamp = 0.0);
/// Render with the cube pose expressed in the gripper frame. Preferred when the
/// relative pose is known exactly, since it avoids re-deriving it per frame.
Frame render_frame_relative(const SceneModel& scene, const CameraModel& camera,
                            const Pose& gripper_pose, const Pose& cube_in_gripper,
                            double timestamp = 0.0);

ObjectMask object_mask(const SceneModel& scene, const CameraModel& camera, const Pose& gripper_pose,
                       const Pose& cube_pose);
ObjectMask object_mask_relative(const SceneModel& scene, const CameraModel& camera,
                                const Pose& gripper_pose, const Pose& cube_in_gripper);

/// 8-bit binary PGM (P5), intensities scaled by 255 and rounded.
void write_pgm(const std::filesystem::path& path, const Frame& frame);
Frame read_pgm(const std::filesystem::path& path, double timestamp = 0.0);

}  // namespace slipforge
