#include "slipforge/render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "slipforge/errors.hpp"
#include "slipforge/texture.hpp"

namespace slipforge {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTwoPi = 6.283185307179586;
constexpr double kPi = 3.14159265358979323846;

enum class Surface : std::uint8_t { sphere, ground, cube };

struct Hit {
  Surface surface = Surface::sphere;
  double depth = kInf;
  Vec3 point;    // world point (sphere, ground) or cube-local point
  int face = 0;  // cube face: 0..5 = -x,+x,-y,+y,-z,+z
  double cos_incidence = 1.0;  // |ray . surface normal|
};

/// Everything the per-pixel loop needs, resolved once per frame.
struct FrameSetup {
  RotationMatrix cam_to_world;
  Vec3 cam_origin_world;
  RotationMatrix cam_to_cube;  // transpose of cube-in-camera rotation
  Vec3 cam_origin_cube;
  Vec3 half;                   // cube half extents
  Vec3 cube_center_cam;        // cube centre in camera coordinates
  double cube_radius2 = 0.0;   // squared bounding-sphere radius
  Vec3 light_world;
  Vec3 light_cube;
  double focal = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  double pixel_angle = 1.0;  // angular size of one sample, rad
  const MipTexture* cube_tex = nullptr;
  const MipTexture* ground_tex = nullptr;
  const MipTexture* background_tex = nullptr;
};

Vec3 light_direction(double azimuth, double elevation) {
  return {std::cos(elevation) * std::cos(azimuth), std::cos(elevation) * std::sin(azimuth),
          std::sin(elevation)};
}

void validate(const SceneModel& scene, const CameraModel& camera) {
  if (!(camera.focal_px > 0.0)) throw ParamError("camera focal length must be positive");
  if (camera.width <= 0 || camera.height <= 0) throw ParamError("camera resolution must be positive");
  if (!(scene.cube_width > 0.0 && scene.cube_height > 0.0 && scene.cube_depth > 0.0)) {
    throw ParamError("cube dimensions must be positive");
  }
  if (scene.background_brightness < 0.0 || scene.background_brightness > 1.0 ||
      scene.light_intensity < 0.0 || scene.light_intensity > 1.0) {
    throw ParamError("brightness and light intensity must lie in [0, 1]");
  }
  if (scene.supersample < 1) throw ParamError("supersample must be >= 1");
}

FrameSetup setup(const SceneModel& scene, const CameraModel& camera, const Pose& gripper_pose,
                 const Pose& cube_in_gripper) {
  validate(scene, camera);
  FrameSetup s;
  const Pose cam_world = gripper_pose.compose(camera.mount);
  s.cam_to_world = quat_to_matrix(cam_world.orientation);
  s.cam_origin_world = cam_world.position;

  const Pose cube_cam = camera.mount.inverse().compose(cube_in_gripper);
  const RotationMatrix cube_to_cam = quat_to_matrix(cube_cam.orientation);
  s.cam_to_cube = cube_to_cam.transpose();
  s.cam_origin_cube = s.cam_to_cube * (-cube_cam.position);
  s.half = {0.5 * scene.cube_width, 0.5 * scene.cube_depth, 0.5 * scene.cube_height};
  s.cube_center_cam = cube_cam.position;
  // Slightly inflated so rounding never rejects a ray that grazes a corner.
  s.cube_radius2 = 1.0001 * dot(s.half, s.half);

  const Vec3 l = light_direction(scene.light_azimuth, scene.light_elevation);
  if (scene.light_in_camera_frame) {
    s.light_world = s.cam_to_world * l;
    s.light_cube = s.cam_to_cube * l;
  } else {
    s.light_world = l;
    s.light_cube = (s.cam_to_world * cube_to_cam).transpose() * l;
  }
  s.focal = camera.focal_px;
  s.cx = camera.cx;
  s.cy = camera.cy;
  s.pixel_angle = 1.0 / (camera.focal_px * scene.supersample);
  s.cube_tex = &MipTexture::get(scene.cube_texture);
  s.ground_tex = &MipTexture::get(scene.ground_texture);
  s.background_tex = &MipTexture::get(scene.background_texture);
  return s;
}

Vec3 pixel_ray(const FrameSetup& s, double px, double py) {
  const Vec3 d{(px - s.cx) / s.focal, (py - s.cy) / s.focal, 1.0};
  return d * (1.0 / norm(d));
}

/// Nearest surface along the camera ray `d_cam` (unit, camera frame).
Hit trace(const SceneModel& scene, const FrameSetup& s, const Vec3& d_cam) {
  Hit hit;
  const Vec3 d = s.cam_to_world * d_cam;
  const Vec3& o = s.cam_origin_world;

  // Background sphere centred at the world origin; the camera is inside it.
  const double b = dot(o, d);
  const double c = dot(o, o) - scene.sphere_radius * scene.sphere_radius;
  const double disc = b * b - c;
  if (disc >= 0.0) {
    const double t = -b + std::sqrt(disc);
    if (t > 0.0) {
      hit.depth = t;
      hit.point = o + d * t;
      hit.cos_incidence = std::abs(dot(hit.point, d)) / scene.sphere_radius;
    }
  }

  if (d.z < 0.0 && o.z > 0.0) {
    const double t = -o.z / d.z;
    if (t < hit.depth) {
      hit = {Surface::ground, t, o + d * t, 0, -d.z};
    }
  }

  // Rays that miss the bounding sphere cannot hit the cube.
  const double along = dot(s.cube_center_cam, d_cam);
  if (dot(s.cube_center_cam, s.cube_center_cam) - along * along > s.cube_radius2) return hit;

  // Slab test in the cube frame. Rotations keep |d| = 1, so depths compare
  // directly against the world-frame ones.
  const Vec3 db = s.cam_to_cube * d_cam;
  const Vec3& ob = s.cam_origin_cube;
  const double dv[3] = {db.x, db.y, db.z};
  const double ov[3] = {ob.x, ob.y, ob.z};
  const double hv[3] = {s.half.x, s.half.y, s.half.z};
  double t_near = -kInf, t_far = kInf;
  int face = -1;
  for (int a = 0; a < 3; ++a) {
    if (dv[a] == 0.0) {
      if (ov[a] < -hv[a] || ov[a] > hv[a]) return hit;
      continue;
    }
    double t0 = (-hv[a] - ov[a]) / dv[a];
    double t1 = (hv[a] - ov[a]) / dv[a];
    int f = 2 * a;  // entering through the negative face
    if (t0 > t1) {
      std::swap(t0, t1);
      f = 2 * a + 1;
    }
    if (t0 > t_near) {
      t_near = t0;
      face = f;
    }
    t_far = std::min(t_far, t1);
  }
  if (face >= 0 && t_near <= t_far && t_near > 0.0 && t_near < hit.depth) {
    hit = {Surface::cube, t_near, ob + db * t_near, face, std::abs(dv[face / 2])};
  }
  return hit;
}

/// Surface footprint of one sample, before scaling into texture units.
double footprint(const FrameSetup& s, const Hit& hit) {
  return hit.depth * s.pixel_angle / std::max(hit.cos_incidence, 1e-3);
}

double shade(const SceneModel& scene, const FrameSetup& s, const Hit& hit) {
  const double ambient = scene.background_brightness;
  const double fp = footprint(s, hit);
  switch (hit.surface) {
    case Surface::sphere: {
      const Vec3 p = hit.point * (1.0 / norm(hit.point));
      const double u = std::atan2(p.y, p.x) / kTwoPi + 0.5;
      const double v = std::acos(std::clamp(p.z, -1.0, 1.0)) / kPi;
      return scene.background_brightness *
             s.background_tex->sample(u, v, fp / (kPi * scene.sphere_radius));
    }
    case Surface::ground: {
      const double albedo = s.ground_tex->sample(hit.point.x / scene.ground_tile,
                                                 hit.point.y / scene.ground_tile,
                                                 fp / scene.ground_tile);
      return albedo * (ambient + scene.light_intensity * std::max(0.0, s.light_world.z));
    }
    case Surface::cube: {
      const Vec3& p = hit.point;
      const Vec3& h = s.half;
      double u = 0.0, v = 0.0, ndotl = 0.0, extent = 0.0;
      switch (hit.face) {
        case 0:
        case 1:
          u = (p.y + h.y) / (2 * h.y);
          v = 1.0 - (p.z + h.z) / (2 * h.z);
          ndotl = hit.face == 0 ? -s.light_cube.x : s.light_cube.x;
          extent = 2 * std::min(h.y, h.z);
          break;
        case 2:
        case 3:
          u = (p.x + h.x) / (2 * h.x);
          v = 1.0 - (p.z + h.z) / (2 * h.z);
          ndotl = hit.face == 2 ? -s.light_cube.y : s.light_cube.y;
          extent = 2 * std::min(h.x, h.z);
          break;
        default:
          u = (p.x + h.x) / (2 * h.x);
          v = (p.y + h.y) / (2 * h.y);
          ndotl = hit.face == 4 ? -s.light_cube.z : s.light_cube.z;
          extent = 2 * std::min(h.x, h.y);
          break;
      }
      const double albedo = s.cube_tex->sample(u, v, fp / extent, false);
      return albedo * (ambient + scene.light_intensity * std::max(0.0, ndotl));
    }
  }
  return 0.0;
}

}  // namespace

std::size_t ObjectMask::area() const {
  return static_cast<std::size_t>(std::count(covered.begin(), covered.end(), std::uint8_t{1}));
}

CameraModel CameraModel::side_view(double fov_deg, double lateral_offset) {
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw ParamError("field of view must be in (0, 180)");
  CameraModel cam;
  cam.focal_px = 0.5 * cam.width / std::tan(0.5 * fov_deg * kPi / 180.0);
  // Columns: camera x -> gripper x, camera y -> gripper -z, camera z -> gripper y.
  const RotationMatrix r({1, 0, 0, 0, 0, 1, 0, -1, 0});
  cam.mount = {matrix_to_quat(r), {0.0, -lateral_offset, 0.0}};
  return cam;
}

Frame render_frame_relative(const SceneModel& scene, const CameraModel& camera,
                            const Pose& gripper_pose, const Pose& cube_in_gripper, double timestamp) {
  const FrameSetup s = setup(scene, camera, gripper_pose, cube_in_gripper);
  Frame f;
  f.width = camera.width;
  f.height = camera.height;
  f.timestamp = timestamp;
  f.pixels.assign(static_cast<std::size_t>(f.width) * f.height, 0.0f);
  const int ss = scene.supersample;
  const double inv = 1.0 / (ss * ss);

#pragma omp parallel for schedule(static)
  for (int y = 0; y < f.height; ++y) {
    for (int x = 0; x < f.width; ++x) {
      double acc = 0.0;
      for (int sy = 0; sy < ss; ++sy) {
        for (int sx = 0; sx < ss; ++sx) {
          const double px = x + (sx + 0.5) / ss;
          const double py = y + (sy + 0.5) / ss;
          acc += shade(scene, s, trace(scene, s, pixel_ray(s, px, py)));
        }
      }
      f.pixels[static_cast<std::size_t>(y) * f.width + x] =
          static_cast<float>(std::clamp(acc * inv, 0.0, 1.0));
    }
  }
  return f;
}

Frame render_frame(const SceneModel& scene, const CameraModel& camera, const Pose& gripper_pose,
                   const Pose& cube_pose, double timestamp) {
  return render_frame_relative(scene, camera, gripper_pose,
                               gripper_pose.inverse().compose(cube_pose), timestamp);
}

ObjectMask object_mask_relative(const SceneModel& scene, const CameraModel& camera,
                                const Pose& gripper_pose, const Pose& cube_in_gripper) {
  const FrameSetup s = setup(scene, camera, gripper_pose, cube_in_gripper);
  ObjectMask m;
  m.width = camera.width;
  m.height = camera.height;
  m.covered.assign(static_cast<std::size_t>(m.width) * m.height, 0);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      const Hit h = trace(scene, s, pixel_ray(s, x + 0.5, y + 0.5));
      m.covered[static_cast<std::size_t>(y) * m.width + x] = h.surface == Surface::cube ? 1 : 0;
    }
  }
  return m;
}

ObjectMask object_mask(const SceneModel& scene, const CameraModel& camera, const Pose& gripper_pose,
                       const Pose& cube_pose) {
  return object_mask_relative(scene, camera, gripper_pose, gripper_pose.inverse().compose(cube_pose));
}

void write_pgm(const std::filesystem::path& path, const Frame& frame) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string());
  os << "P5\n" << frame.width << ' ' << frame.height << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(frame.width));
  for (int y = 0; y < frame.height; ++y) {
    for (int x = 0; x < frame.width; ++x) {
      row[static_cast<std::size_t>(x)] =
          static_cast<unsigned char>(std::lround(std::clamp(frame.at(x, y), 0.0f, 1.0f) * 255.0f));
    }
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw IoError("write failed for " + path.string());
}

Frame read_pgm(const std::filesystem::path& path, double timestamp) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  is >> magic >> w >> h >> maxval;
  if (magic != "P5" || w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) {
    throw ParseError("not an 8-bit binary PGM: " + path.string(), 1);
  }
  is.get();
  Frame f;
  f.width = w;
  f.height = h;
  f.timestamp = timestamp;
  std::vector<unsigned char> data(static_cast<std::size_t>(w) * h);
  is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (is.gcount() != static_cast<std::streamsize>(data.size())) {
    throw ParseError("truncated PGM payload", static_cast<long long>(is.gcount()));
  }
  f.pixels.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) f.pixels[i] = static_cast<float>(data[i]) / maxval;
  return f;
}

}  // namespace slipforge
