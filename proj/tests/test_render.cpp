#include <gtest/gtest.h>

#include "slipforge/errors.hpp"
#include "slipforge/render.hpp"
#include "slipforge/slipdyn.hpp"
#include "slipforge/texture.hpp"
#include "support.hpp"

using namespace slipforge;
using namespace slipforge::testing;

namespace {

SceneModel scene_for(const ScenarioParams& p) {
  SceneModel s;
  s.cube_width = p.cuboid_width;
  s.cube_height = p.cuboid_height;
  s.cube_depth = p.cuboid_depth;
  s.cube_texture = 3;
  s.ground_texture = 26;
  s.background_texture = 40;
  return s;
}

struct Fixture {
  ScenarioParams params;
  PoseLog log;
  SceneModel scene;
  CameraModel cam = CameraModel::side_view();
};

const Fixture& held_sample() {
  static const Fixture f = [] {
    Fixture x;
    x.params.cuboid_mass = 0.05;
    x.log = simulate_slip(x.params, build_trajectory(x.params));
    x.scene = scene_for(x.params);
    return x;
  }();
  return f;
}

}  // namespace

TEST(Texture, DeterministicAndPeriodic) {
  for (int id = 0; id < kTextureCount; ++id) {
    EXPECT_EQ(procedural_texture(id, 0.37, 0.81), procedural_texture(id, 0.37, 0.81));
    EXPECT_EQ(procedural_texture(id, 0.25, 0.5), procedural_texture(id, 1.25, -0.5));
  }
}

TEST(Texture, UnknownIdRejected) {
  EXPECT_THROW(procedural_texture(-1, 0, 0), ParamError);
  EXPECT_THROW(procedural_texture(kTextureCount, 0, 0), ParamError);
  EXPECT_THROW(MipTexture::get(kTextureCount), ParamError);
}

TEST(Texture, EveryTextureVariesWithMidRangeMean) {
  for (int id = 0; id < kTextureCount; ++id) {
    double sum = 0, sq = 0;
    for (int i = 0; i < 32; ++i) {
      for (int j = 0; j < 32; ++j) {
        const double v = procedural_texture(id, (i + 0.5) / 32, (j + 0.5) / 32);
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
        sum += v;
        sq += v * v;
      }
    }
    const double mean = sum / 1024, var = sq / 1024 - mean * mean;
    EXPECT_GT(var, 0.0) << "texture " << id;
    EXPECT_GE(mean, 0.2) << "texture " << id;
    EXPECT_LE(mean, 0.8) << "texture " << id;
  }
}

TEST(Texture, CheckerNeighboursContrast) {
  int checkers = 0;
  for (int id = 0; id < kTextureCount; ++id) {
    if (texture_kind(id) != TextureKind::checker) continue;
    ++checkers;
    const double half = 0.5 * checker_period(id);
    EXPECT_GE(std::abs(procedural_texture(id, 0.1, 0.1) - procedural_texture(id, 0.1 + half, 0.1)), 0.3) << id;
  }
  EXPECT_GT(checkers, 0);
  EXPECT_THROW(checker_period(30), ParamError);
}

TEST(MipTexture, BaseLevelMatchesAnalyticTexture) {
  const MipTexture& t = MipTexture::get(5);
  EXPECT_EQ(t.levels(), 10);  // 512 .. 1
  const int n = MipTexture::kBaseSize;
  for (int i = 0; i < n; i += 61) {
    const double u = (i + 0.5) / n, v = (2 * i % n + 0.5) / n;
    EXPECT_NEAR(t.sample(u, v, 1e-6), procedural_texture(5, u, v), 1e-6);
  }
}

TEST(MipTexture, CoarsestLevelIsTheMean) {
  const MipTexture& t = MipTexture::get(27);
  double mean = 0;
  const int n = MipTexture::kBaseSize;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) mean += procedural_texture(27, (i + 0.5) / n, (j + 0.5) / n);
  mean /= double(n) * n;
  EXPECT_NEAR(t.sample(0.3, 0.7, 4.0), mean, 1e-5);
}

TEST(Render, FramesHaveSensorShapeAndValidPixels) {
  const Fixture& f = held_sample();
  const Frame fr = render_frame_relative(f.scene, f.cam, f.log.records[200].gripper, f.log.cube_in_gripper[200], 1.0);
  EXPECT_EQ(fr.width, 346);
  EXPECT_EQ(fr.height, 260);
  ASSERT_EQ(fr.pixels.size(), 346u * 260u);
  EXPECT_EQ(fr.timestamp, 1.0);
  for (float v : fr.pixels) {
    ASSERT_TRUE(std::isfinite(v));
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
  }
}

TEST(Render, Deterministic) {
  const Fixture& f = held_sample();
  const auto& r = f.log.records[300];
  EXPECT_EQ(render_frame(f.scene, f.cam, r.gripper, r.cube).pixels, render_frame(f.scene, f.cam, r.gripper, r.cube).pixels);
}

TEST(Render, StationaryCameraAndCubeGiveIdenticalFrames) {
  const Fixture& f = held_sample();
  const auto& r = f.log.records[10];  // dwell phase
  EXPECT_EQ(render_frame(f.scene, f.cam, r.gripper, r.cube, 0.0).pixels,
            render_frame(f.scene, f.cam, f.log.records[20].gripper, f.log.records[20].cube, 0.1).pixels);
}

TEST(Render, DegenerateCameraRejected) {
  const Fixture& f = held_sample();
  CameraModel bad = f.cam;
  bad.focal_px = 0.0;
  EXPECT_THROW(render_frame(f.scene, bad, {}, {}), ParamError);
  SceneModel s = f.scene;
  s.cube_texture = 99;
  EXPECT_THROW(render_frame(s, f.cam, {}, {}), ParamError);
}

// With the light fixed in the camera frame, a held object is bitwise static.
TEST(Render, RigidGraspPixelsInsideMaskNeverChange) {
  const Fixture& f = held_sample();
  SceneModel s = f.scene;
  s.light_in_camera_frame = true;
  const ObjectMask mask = object_mask_relative(s, f.cam, f.log.records[0].gripper, f.log.cube_in_gripper[0]);
  ASSERT_GT(mask.area(), 1000u);
  const Frame first = render_frame_relative(s, f.cam, f.log.records[0].gripper, f.log.cube_in_gripper[0]);
  for (std::size_t k = 15; k < f.log.size(); k += 45) {
    const Frame fr = render_frame_relative(s, f.cam, f.log.records[k].gripper, f.log.cube_in_gripper[k]);
    const ObjectMask mk = object_mask_relative(s, f.cam, f.log.records[k].gripper, f.log.cube_in_gripper[k]);
    EXPECT_EQ(mk.covered, mask.covered) << "frame " << k;
    for (std::size_t i = 0; i < fr.pixels.size(); ++i) {
      if (mask.covered[i]) {
        ASSERT_EQ(fr.pixels[i], first.pixels[i]) << "frame " << k << " pixel " << i;
      }
    }
  }
}

TEST(ObjectMask, CubeBehindCameraIsInvisible) {
  const Fixture& f = held_sample();
  const Pose behind{UnitQuaternion(), {0.0, -1.0, 0.0}};
  const ObjectMask m = object_mask_relative(f.scene, f.cam, {}, behind);
  EXPECT_EQ(m.area(), 0u);
}

TEST(ObjectMask, CubeFillingTheViewCoversMostPixels) {
  SceneModel s;
  s.cube_width = 1.0;
  s.cube_height = 1.0;
  s.cube_depth = 0.01;
  const CameraModel cam = CameraModel::side_view();
  const ObjectMask m = object_mask_relative(s, cam, {}, {UnitQuaternion(), {0.0, -0.15, 0.0}});
  EXPECT_GE(m.area(), static_cast<std::size_t>(0.9 * 346 * 260));
  std::size_t ones = 0, zeros = 0;
  for (auto c : m.covered) (c == 1 ? ones : zeros) += (c <= 1);
  EXPECT_EQ(ones + zeros, m.covered.size());
}

TEST(Pgm, RoundTripQuantizes) {
  TempDir dir("pgm");
  Frame f;
  f.width = 7;
  f.height = 3;
  // Levels i * 12 plus a 0.3 offset that must round away; no ties.
  for (int i = 0; i < 21; ++i) f.pixels.push_back(static_cast<float>((i * 12 + 0.3) / 255.0));
  write_pgm(dir / "f.pgm", f);
  const Frame g = read_pgm(dir / "f.pgm");
  ASSERT_EQ(g.width, 7);
  ASSERT_EQ(g.height, 3);
  for (int i = 0; i < 21; ++i) EXPECT_NEAR(g.pixels[i], i * 12 / 255.0, 1e-6);
}
