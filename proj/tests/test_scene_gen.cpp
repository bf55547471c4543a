#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "ramp3d/scene_gen.hpp"

namespace ramp3d {
namespace {

TEST(GenerateScene, MinimalScene) {
  SceneConfig cfg;
  cfg.seed = 1;
  cfg.num_boxes = 1;
  cfg.surface_kinds = {SurfaceKind::kPalletSmall};
  cfg.num_distractors = 0;
  const SceneState s = generate_scene(cfg);
  EXPECT_EQ(s.boxes.size(), 1u);
  EXPECT_FALSE(s.boxes[0].placed());
  EXPECT_EQ(free_cells(s).size(), 4u);
  EXPECT_TRUE(check_invariants(s).empty());
}

TEST(GenerateScene, Deterministic) {
  SceneConfig cfg;
  cfg.seed = 424242;
  cfg.num_boxes = 17;
  cfg.num_distractors = 4;
  EXPECT_EQ(serialize_scene(generate_scene(cfg)), serialize_scene(generate_scene(cfg)));
  SceneConfig other = cfg;
  other.seed = 424243;
  EXPECT_NE(serialize_scene(generate_scene(cfg)), serialize_scene(generate_scene(other)));
}

TEST(GenerateScene, CapacityInfeasible) {
  SceneConfig cfg;
  cfg.num_boxes = 30;
  cfg.surface_kinds = {SurfaceKind::kPalletSmall};
  // 4 cells x 3 levels
  EXPECT_EQ(surface_capacity(cfg.geometry, SurfaceKind::kPalletSmall, 3), 4 * 3);
  try {
    generate_scene(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCapacityInfeasible);
  }
}

TEST(GenerateScene, CapacityArithmetic) {
  const WarehouseGeometry g;
  EXPECT_EQ(surface_capacity(g, SurfaceKind::kPalletLarge, 3), 18);
  EXPECT_EQ(surface_capacity(g, SurfaceKind::kPalletLarge, 2), 12);
  EXPECT_EQ(surface_capacity(g, SurfaceKind::kShelfSmall, 3), 4);
  EXPECT_EQ(surface_capacity(g, SurfaceKind::kShelfLarge, 1), 6);
}

TEST(GenerateScene, PlacementExhausted) {
  SceneConfig cfg;
  cfg.num_boxes = 20;
  cfg.object_region = {0.0, 1.6, 0.0, 1.6};
  cfg.max_attempts = 500;
  try {
    generate_scene(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kPlacementExhausted);
  }
}

TEST(GenerateScene, RejectsBadCounts) {
  SceneConfig cfg;
  cfg.num_boxes = 31;
  EXPECT_THROW(generate_scene(cfg), Error);
  cfg.num_boxes = 5;
  cfg.num_pallets = 4;
  EXPECT_THROW(generate_scene(cfg), Error);
}

TEST(GenerateScene, SeedSweepNoOverlapAndValid) {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    SceneConfig cfg;
    cfg.seed = seed;
    cfg.num_boxes = 1 + static_cast<int>(seed % 30);
    cfg.num_pallets = 3;
    cfg.num_shelves = 2;
    cfg.num_distractors = static_cast<int>(seed % 5);
    const SceneState s = generate_scene(cfg);
    ASSERT_TRUE(check_invariants(s).empty()) << "seed " << seed;
    for (std::size_t i = 0; i < s.surfaces.size(); ++i) {
      const Aabb a = s.surfaces[i].footprint(s.geometry);
      EXPECT_GE(a.lo.x, -6.0);
      EXPECT_LE(a.hi.x, 0.0);
      for (std::size_t j = i + 1; j < s.surfaces.size(); ++j) {
        const Aabb b = s.surfaces[j].footprint(s.geometry);
        const bool overlap = a.lo.x < b.hi.x && b.lo.x < a.hi.x && a.lo.y < b.hi.y && b.lo.y < a.hi.y;
        ASSERT_FALSE(overlap) << "seed " << seed;
      }
    }
    for (const auto& b : s.boxes) {
      EXPECT_GE(b.position.x, 0.0);
      EXPECT_GE(b.yaw, 0.0);
      EXPECT_LT(b.yaw, 2 * std::numbers::pi);
    }
  }
}

TEST(GenerateScene, ConfigJsonRoundTrip) {
  SceneConfig cfg;
  cfg.seed = 99;
  cfg.num_boxes = 12;
  cfg.surface_kinds = {SurfaceKind::kPalletLarge, SurfaceKind::kShelfSmall};
  const SceneConfig back = scene_config_from_json(to_json(cfg));
  EXPECT_EQ(canonical_dump(to_json(back)), canonical_dump(to_json(cfg)));
  EXPECT_EQ(serialize_scene(generate_scene(back)), serialize_scene(generate_scene(cfg)));
}

TEST(CameraRig, ThirtyViewsOnCircle) {
  const auto views = camera_rig();
  ASSERT_EQ(views.size(), 30u);
  const Vec3 p0 = views[0].camera_to_world.translation;
  EXPECT_NEAR(p0.x, 5.0, 1e-12);
  EXPECT_NEAR(p0.y, 0.0, 1e-12);
  EXPECT_NEAR(p0.z, 5.0, 1e-12);
  for (std::size_t i = 0; i < views.size(); ++i) {
    const Pose& T = views[i].camera_to_world;
    EXPECT_NEAR(std::hypot(T.translation.x, T.translation.y), 5.0, 1e-9);
    EXPECT_NEAR(T.translation.z, 5.0, 1e-9);
    // optical axis (third column) passes through the origin
    const Vec3 axis{T.rotation(0, 2), T.rotation(1, 2), T.rotation(2, 2)};
    const Vec3 to_origin = normalized(Vec3{} - T.translation);
    EXPECT_NEAR(dot(axis, to_origin), 1.0, 1e-12);
    // proper rotation
    const Vec3 x{T.rotation(0, 0), T.rotation(1, 0), T.rotation(2, 0)};
    const Vec3 y{T.rotation(0, 1), T.rotation(1, 1), T.rotation(2, 1)};
    EXPECT_NEAR(dot(cross(x, y), axis), 1.0, 1e-12);
    EXPECT_NEAR(dot(x, y), 0.0, 1e-12);
    // image "down" points toward world -z
    EXPECT_LT(y.z, 0.0);
    const Vec3 next = views[(i + 1) % views.size()].camera_to_world.translation;
    const double angle = std::acos(dot(normalized(Vec3{T.translation.x, T.translation.y, 0}),
                                       normalized(Vec3{next.x, next.y, 0})));
    EXPECT_NEAR(angle * 180.0 / std::numbers::pi, 12.0, 1e-9);
  }
  EXPECT_EQ(views[0].intrinsics.width, 512);
  EXPECT_DOUBLE_EQ(views[0].intrinsics.fx, 256.0);
  EXPECT_DOUBLE_EQ(views[0].intrinsics.cx, 256.0);
}

}  // namespace
}  // namespace ramp3d
