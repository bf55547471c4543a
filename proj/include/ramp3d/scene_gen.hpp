#pragma once

// Seeded procedural scene construction and the fixed multi-view camera rig.
//
// Sampling order for generate_scene (fixed, so other implementations can
// reproduce streams):
//   1. surface kinds        stream split(1): pallets first, then shelves,
//                           each kind drawn by size-mix weight
//   2. surface poses        stream split(2): per surface, repeat
//                           {quarter_turns = below(2); x; y} until clear
//   3. box colours          stream split(3): below(3) per box, id order
//   4. box/distractor poses stream split(4): boxes then distractors,
//                           {x; y; yaw} until spaced from earlier objects
//   5. distractor kinds     stream split(5)
// Entity ids: floor 0, boxes 1..N, then each surface followed by its cells,
// then distractors.

#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include "canonical_json.hpp"
#include "error.hpp"
#include "geometry.hpp"
#include "rng.hpp"
#include "warehouse.hpp"

namespace ramp3d {

struct Region {
  double x_min = 0.0;
  double x_max = 0.0;
  double y_min = 0.0;
  double y_max = 0.0;
  bool operator==(const Region&) const = default;
};

struct SceneConfig {
  std::uint64_t seed = 0;
  int num_boxes = 10;
  int num_pallets = 2;
  int num_shelves = 1;
  int num_distractors = 2;
  /// Relative weight of the large variant when drawing a pallet / shelf kind.
  double pallet_large_weight = 0.5;
  double shelf_large_weight = 0.5;
  /// Explicit surface kinds; when non-empty, overrides the counts and weights.
  std::vector<SurfaceKind> surface_kinds;
  /// Explicit box colours (size must equal num_boxes); empty means uniform draw.
  std::vector<Color> box_colors;
  Region surface_region{-6.0, 0.0, -6.0, 6.0};
  Region object_region{0.0, 6.0, -6.0, 6.0};
  double surface_clearance = 0.3;
  double spawn_spacing = 0.6;
  int max_attempts = 10000;
  /// Stack-height limit used for the capacity check.
  int capacity_height = 3;
  bool require_all_placed = true;
  WarehouseGeometry geometry;
};

inline int surface_capacity(const WarehouseGeometry& g, SurfaceKind kind, int height_limit) {
  Surface probe;
  probe.kind = kind;
  const int per_column = std::min(height_limit, probe.max_stack(g));
  return probe.cells_per_layer() * probe.layers() * per_column;
}

inline std::vector<SurfaceKind> draw_surface_kinds(const SceneConfig& cfg) {
  if (!cfg.surface_kinds.empty()) return cfg.surface_kinds;
  Rng rng = Rng(cfg.seed).split(1);
  std::vector<SurfaceKind> kinds;
  for (int i = 0; i < cfg.num_pallets; ++i)
    kinds.push_back(rng.weighted({1.0 - cfg.pallet_large_weight, cfg.pallet_large_weight}) == 1
                        ? SurfaceKind::kPalletLarge
                        : SurfaceKind::kPalletSmall);
  for (int i = 0; i < cfg.num_shelves; ++i)
    kinds.push_back(rng.weighted({1.0 - cfg.shelf_large_weight, cfg.shelf_large_weight}) == 1
                        ? SurfaceKind::kShelfLarge
                        : SurfaceKind::kShelfSmall);
  return kinds;
}

inline void validate_config(const SceneConfig& cfg, const std::vector<SurfaceKind>& kinds) {
  if (cfg.num_boxes < 1 || cfg.num_boxes > 30)
    throw Error(ErrorCode::kInvalidArgument, "num_boxes must be in [1, 30]");
  if (cfg.num_distractors < 0 || cfg.num_distractors > 4)
    throw Error(ErrorCode::kInvalidArgument, "num_distractors must be in [0, 4]");
  int pallets = 0;
  int shelves = 0;
  for (SurfaceKind k : kinds) (is_pallet(k) ? pallets : shelves)++;
  if (pallets > 3) throw Error(ErrorCode::kInvalidArgument, "at most 3 pallets");
  if (shelves > 2) throw Error(ErrorCode::kInvalidArgument, "at most 2 shelves");
  if (!cfg.box_colors.empty() && static_cast<int>(cfg.box_colors.size()) != cfg.num_boxes)
    throw Error(ErrorCode::kInvalidArgument, "box_colors size must equal num_boxes");
  if (cfg.require_all_placed) {
    int capacity = 0;
    for (SurfaceKind k : kinds) capacity += surface_capacity(cfg.geometry, k, cfg.capacity_height);
    if (capacity < cfg.num_boxes)
      throw Error(ErrorCode::kCapacityInfeasible,
                  "capacity " + std::to_string(capacity) + " < " + std::to_string(cfg.num_boxes) + " boxes");
  }
}

inline bool footprints_clear(const Aabb& a, const Aabb& b, double clearance) {
  return a.hi.x + clearance <= b.lo.x || b.hi.x + clearance <= a.lo.x ||
         a.hi.y + clearance <= b.lo.y || b.hi.y + clearance <= a.lo.y;
}

inline SceneState generate_scene(const SceneConfig& cfg) {
  const std::vector<SurfaceKind> kinds = draw_surface_kinds(cfg);
  validate_config(cfg, kinds);
  const auto& g = cfg.geometry;
  const Rng root(cfg.seed);

  SceneState state;
  state.geometry = g;
  int attempts = 0;
  auto spend_attempt = [&] {
    if (++attempts > cfg.max_attempts)
      throw Error(ErrorCode::kPlacementExhausted, "rejection sampling exceeded attempt budget");
  };

  EntityId next_id = static_cast<EntityId>(cfg.num_boxes) + 1;
  Rng pose_rng = root.split(2);
  for (SurfaceKind kind : kinds) {
    while (true) {
      spend_attempt();
      const int turns = static_cast<int>(pose_rng.below(2));
      Surface probe;
      probe.kind = kind;
      probe.quarter_turns = turns;
      Vec3 h = probe.local_half_extents(g);
      if (turns % 2 != 0) std::swap(h.x, h.y);
      const Region& r = cfg.surface_region;
      const double x = pose_rng.uniform(r.x_min + h.x, r.x_max - h.x);
      const double y = pose_rng.uniform(r.y_min + h.y, r.y_max - h.y);
      probe.position = {x, y, 0.0};
      const Aabb fp = probe.footprint(g);
      bool clear = true;
      for (const auto& other : state.surfaces)
        if (!footprints_clear(fp, other.footprint(g), cfg.surface_clearance)) clear = false;
      if (!clear) continue;
      const EntityId id = next_id;
      Surface s = make_surface(g, id, kind, probe.position, turns, id + 1);
      next_id = id + 1 + static_cast<EntityId>(s.cells.size());
      state.surfaces.push_back(std::move(s));
      break;
    }
  }

  Rng color_rng = root.split(3);
  Rng scatter_rng = root.split(4);
  Rng kind_rng = root.split(5);
  std::vector<Vec3> spawned;
  const Region& r = cfg.object_region;
  const double margin = 0.5 * std::numbers::sqrt2 * g.box_size;
  auto scatter = [&]() -> std::pair<Vec3, double> {
    while (true) {
      spend_attempt();
      const double x = scatter_rng.uniform(r.x_min + margin, r.x_max - margin);
      const double y = scatter_rng.uniform(r.y_min + margin, r.y_max - margin);
      const double yaw = scatter_rng.uniform(0.0, 2.0 * std::numbers::pi);
      bool ok = true;
      for (const auto& p : spawned)
        if (std::hypot(p.x - x, p.y - y) < cfg.spawn_spacing) ok = false;
      if (!ok) continue;
      spawned.push_back({x, y, 0.0});
      return {{x, y, 0.0}, yaw};
    }
  };

  for (int i = 0; i < cfg.num_boxes; ++i) {
    BoxItem b;
    b.id = static_cast<EntityId>(i + 1);
    b.color = cfg.box_colors.empty() ? kAllColors[color_rng.below(3)]
                                     : cfg.box_colors[static_cast<std::size_t>(i)];
    auto [pos, yaw] = scatter();
    b.position = {pos.x, pos.y, 0.5 * g.box_size};
    b.yaw = yaw;
    state.boxes.push_back(b);
  }
  for (int i = 0; i < cfg.num_distractors; ++i) {
    Distractor d;
    d.id = next_id++;
    d.kind = static_cast<DistractorKind>(kind_rng.below(kDistractorKindCount));
    auto [pos, yaw] = scatter();
    d.position = pos;
    d.yaw = yaw;
    state.distractors.push_back(d);
  }
  return state;
}

// Cameras.

struct Intrinsics {
  int width = 512;
  int height = 512;
  double fx = 256.0;
  double fy = 256.0;
  double cx = 256.0;
  double cy = 256.0;
  bool operator==(const Intrinsics&) const = default;
};

/// OpenCV convention: +x right, +y down, +z along the optical axis.
struct CameraView {
  Intrinsics intrinsics;
  Pose camera_to_world;
};

inline Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& world_up = {0, 0, 1}) {
  const Vec3 forward = normalized(target - eye);
  Vec3 right = cross(forward, world_up);
  if (norm(right) < 1e-12) right = {1.0, 0.0, 0.0};
  right = normalized(right);
  const Vec3 down = cross(forward, right);
  return {Mat3::from_columns(right, down, forward), eye};
}

struct CameraRigConfig {
  int num_views = 30;
  double radius = 5.0;
  double height = 5.0;
  Vec3 target{0.0, 0.0, 0.0};
  Intrinsics intrinsics;
};

inline std::vector<CameraView> camera_rig(const CameraRigConfig& cfg = {}) {
  std::vector<CameraView> views;
  for (int i = 0; i < cfg.num_views; ++i) {
    const double angle = 2.0 * std::numbers::pi * i / cfg.num_views;
    const Vec3 eye{cfg.radius * std::cos(angle), cfg.radius * std::sin(angle), cfg.height};
    views.push_back({cfg.intrinsics, look_at(eye, cfg.target)});
  }
  return views;
}

inline Json to_json(const Intrinsics& k) {
  return Json{{"width", k.width}, {"height", k.height}, {"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}};
}

inline Intrinsics intrinsics_from_json(const Json& j) {
  return {j.at("width").get<int>(), j.at("height").get<int>(), j.at("fx").get<double>(),
          j.at("fy").get<double>(), j.at("cx").get<double>(), j.at("cy").get<double>()};
}

inline Json to_json(const Pose& p) {
  Json rows = Json::array();
  for (int r = 0; r < 3; ++r)
    rows.push_back(Json::array({p.rotation(r, 0), p.rotation(r, 1), p.rotation(r, 2), r == 0   ? p.translation.x
                                                                                      : r == 1 ? p.translation.y
                                                                                               : p.translation.z}));
  rows.push_back(Json::array({0.0, 0.0, 0.0, 1.0}));
  return rows;
}

inline Json camera_rig_json(const std::vector<CameraView>& views) {
  Json out = Json::array();
  for (const auto& v : views)
    out.push_back(Json{{"K", to_json(v.intrinsics)}, {"T_camera_to_world", to_json(v.camera_to_world)}});
  return out;
}

// Config documents.

inline Json to_json(const Region& r) {
  return Json{{"x_min", r.x_min}, {"x_max", r.x_max}, {"y_min", r.y_min}, {"y_max", r.y_max}};
}

inline Region region_from_json(const Json& j, Region fallback) {
  fallback.x_min = j.value("x_min", fallback.x_min);
  fallback.x_max = j.value("x_max", fallback.x_max);
  fallback.y_min = j.value("y_min", fallback.y_min);
  fallback.y_max = j.value("y_max", fallback.y_max);
  return fallback;
}

inline Json to_json(const SceneConfig& c) {
  Json kinds = Json::array();
  for (auto k : c.surface_kinds) kinds.push_back(std::string(to_string(k)));
  Json colors = Json::array();
  for (auto col : c.box_colors) colors.push_back(std::string(to_string(col)));
  return Json{{"seed", c.seed},
              {"num_boxes", c.num_boxes},
              {"num_pallets", c.num_pallets},
              {"num_shelves", c.num_shelves},
              {"num_distractors", c.num_distractors},
              {"pallet_large_weight", c.pallet_large_weight},
              {"shelf_large_weight", c.shelf_large_weight},
              {"surface_kinds", kinds},
              {"box_colors", colors},
              {"surface_region", to_json(c.surface_region)},
              {"object_region", to_json(c.object_region)},
              {"surface_clearance", c.surface_clearance},
              {"spawn_spacing", c.spawn_spacing},
              {"max_attempts", c.max_attempts},
              {"capacity_height", c.capacity_height},
              {"require_all_placed", c.require_all_placed},
              {"geometry", to_json(c.geometry)}};
}

/// Missing keys keep their defaults, so partial documents are accepted.
inline SceneConfig scene_config_from_json(const Json& j) {
  SceneConfig c;
  c.seed = j.value("seed", c.seed);
  c.num_boxes = j.value("num_boxes", c.num_boxes);
  c.num_pallets = j.value("num_pallets", c.num_pallets);
  c.num_shelves = j.value("num_shelves", c.num_shelves);
  c.num_distractors = j.value("num_distractors", c.num_distractors);
  c.pallet_large_weight = j.value("pallet_large_weight", c.pallet_large_weight);
  c.shelf_large_weight = j.value("shelf_large_weight", c.shelf_large_weight);
  if (j.contains("surface_kinds"))
    for (const auto& k : j["surface_kinds"]) c.surface_kinds.push_back(surface_kind_from_string(k.get<std::string>()));
  if (j.contains("box_colors"))
    for (const auto& k : j["box_colors"]) c.box_colors.push_back(color_from_string(k.get<std::string>()));
  if (j.contains("surface_region")) c.surface_region = region_from_json(j["surface_region"], c.surface_region);
  if (j.contains("object_region")) c.object_region = region_from_json(j["object_region"], c.object_region);
  c.surface_clearance = j.value("surface_clearance", c.surface_clearance);
  c.spawn_spacing = j.value("spawn_spacing", c.spawn_spacing);
  c.max_attempts = j.value("max_attempts", c.max_attempts);
  c.capacity_height = j.value("capacity_height", c.capacity_height);
  c.require_all_placed = j.value("require_all_placed", c.require_all_placed);
  if (j.contains("geometry")) c.geometry = geometry_from_json(j["geometry"]);
  return c;
}

}  // namespace ramp3d
