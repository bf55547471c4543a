#pragma once

// Ground-truth warehouse world: surfaces with cell grids, box columns,
// distractors, and the pick-and-place transition.

#include <algorithm>
#include <compare>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "canonical_json.hpp"
#include "error.hpp"
#include "geometry.hpp"

namespace ramp3d {

using EntityId = std::uint32_t;

/// The floor is always entity 0; boxes are numbered from 1.
inline constexpr EntityId kFloorId = 0;

enum class Color : std::uint8_t { kRed = 0, kBlue = 1, kYellow = 2 };
inline constexpr std::array<Color, 3> kAllColors{Color::kRed, Color::kBlue, Color::kYellow};

constexpr std::string_view to_string(Color c) {
  switch (c) {
    case Color::kRed: return "red";
    case Color::kBlue: return "blue";
    case Color::kYellow: return "yellow";
  }
  return "red";
}

inline Color color_from_string(std::string_view s) {
  for (Color c : kAllColors)
    if (to_string(c) == s) return c;
  throw Error(ErrorCode::kInvalidArgument, "unknown color '" + std::string(s) + "'");
}

enum class SurfaceKind : std::uint8_t { kPalletSmall, kPalletLarge, kShelfSmall, kShelfLarge };
inline constexpr std::array<SurfaceKind, 4> kAllSurfaceKinds{
    SurfaceKind::kPalletSmall, SurfaceKind::kPalletLarge, SurfaceKind::kShelfSmall,
    SurfaceKind::kShelfLarge};

constexpr std::string_view to_string(SurfaceKind k) {
  switch (k) {
    case SurfaceKind::kPalletSmall: return "pallet-small";
    case SurfaceKind::kPalletLarge: return "pallet-large";
    case SurfaceKind::kShelfSmall: return "shelf-small";
    case SurfaceKind::kShelfLarge: return "shelf-large";
  }
  return "pallet-small";
}

inline SurfaceKind surface_kind_from_string(std::string_view s) {
  for (SurfaceKind k : kAllSurfaceKinds)
    if (to_string(k) == s) return k;
  throw Error(ErrorCode::kInvalidArgument, "unknown surface kind '" + std::string(s) + "'");
}

constexpr bool is_pallet(SurfaceKind k) {
  return k == SurfaceKind::kPalletSmall || k == SurfaceKind::kPalletLarge;
}
constexpr bool is_shelf(SurfaceKind k) { return !is_pallet(k); }
constexpr bool is_small(SurfaceKind k) {
  return k == SurfaceKind::kPalletSmall || k == SurfaceKind::kShelfSmall;
}

enum class DistractorKind : std::uint8_t {
  kBarrelBlue,
  kBarrelRed,
  kBarrelGreen,
  kBarrelRusty,
  kBarrelPlastic,
  kTrafficCone
};
inline constexpr int kDistractorKindCount = 6;

constexpr std::string_view to_string(DistractorKind k) {
  switch (k) {
    case DistractorKind::kBarrelBlue: return "barrel-blue";
    case DistractorKind::kBarrelRed: return "barrel-red";
    case DistractorKind::kBarrelGreen: return "barrel-green";
    case DistractorKind::kBarrelRusty: return "barrel-rusty";
    case DistractorKind::kBarrelPlastic: return "barrel-plastic";
    case DistractorKind::kTrafficCone: return "traffic-cone";
  }
  return "barrel-blue";
}

inline DistractorKind distractor_kind_from_string(std::string_view s) {
  for (int i = 0; i < kDistractorKindCount; ++i) {
    auto k = static_cast<DistractorKind>(i);
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown distractor kind '" + std::string(s) + "'");
}

/// Physical constants of the warehouse. Defaults pack cells with 0.05 m margins.
struct WarehouseGeometry {
  double box_size = 0.5;
  double cell_pitch = 0.55;
  double pallet_deck_height = 0.15;
  std::array<double, 2> shelf_layer_heights{0.10, 0.80};
  double shelf_board_thickness = 0.04;
  double shelf_depth = 0.60;
  double floor_half_extent = 6.0;
  int pallet_max_stack = 3;
  double snap_tolerance_fraction = 0.5;

  double snap_tolerance() const { return snap_tolerance_fraction * cell_pitch; }
  bool operator==(const WarehouseGeometry&) const = default;
};

/// (surface, cell, layer) identifies one vertical column of boxes.
struct ColumnRef {
  EntityId surface = 0;
  int cell = 0;
  int layer = 0;
  auto operator<=>(const ColumnRef&) const = default;
};

struct CellSlot {
  EntityId id = 0;
  EntityId surface = 0;
  int cell_index = 0;
  int layer = 0;
  Vec3 center;  // deck point under the column
  std::vector<EntityId> occupants;  // bottom to top

  ColumnRef column() const { return {surface, cell_index, layer}; }
  int height() const { return static_cast<int>(occupants.size()); }
  bool operator==(const CellSlot&) const = default;
};

struct Surface {
  EntityId id = 0;
  SurfaceKind kind = SurfaceKind::kPalletSmall;
  Vec3 position;  // footprint centre on the floor
  int quarter_turns = 0;  // yaw = quarter_turns * pi/2, 0 or 1
  std::vector<CellSlot> cells;  // layer-major, then cell index

  double yaw() const { return quarter_turns * std::numbers::pi / 2.0; }
  Yaw2 rotation() const { return Yaw2::from_quarter_turns(quarter_turns); }

  int max_stack(const WarehouseGeometry& g) const { return is_pallet(kind) ? g.pallet_max_stack : 1; }
  int layers() const { return is_pallet(kind) ? 1 : 2; }
  int grid_rows() const { return kind == SurfaceKind::kPalletSmall || kind == SurfaceKind::kPalletLarge ? 2 : 1; }
  int grid_cols() const {
    switch (kind) {
      case SurfaceKind::kPalletSmall: return 2;
      case SurfaceKind::kPalletLarge: return 3;
      case SurfaceKind::kShelfSmall: return 2;
      case SurfaceKind::kShelfLarge: return 3;
    }
    return 2;
  }
  int cells_per_layer() const { return grid_rows() * grid_cols(); }

  /// Half extents of the footprint in the surface frame (x along columns).
  Vec3 local_half_extents(const WarehouseGeometry& g) const {
    const double hx = 0.5 * grid_cols() * g.cell_pitch;
    const double hy = is_pallet(kind) ? 0.5 * grid_rows() * g.cell_pitch : 0.5 * g.shelf_depth;
    return {hx, hy, 0.0};
  }

  double height(const WarehouseGeometry& g) const {
    return is_pallet(kind) ? g.pallet_deck_height : g.shelf_layer_heights[1];
  }

  /// World-frame footprint AABB (exact for quarter-turn yaw).
  Aabb footprint(const WarehouseGeometry& g) const {
    Vec3 h = local_half_extents(g);
    if (quarter_turns % 2 != 0) std::swap(h.x, h.y);
    return {{position.x - h.x, position.y - h.y, 0.0},
            {position.x + h.x, position.y + h.y, height(g)}};
  }

  const CellSlot* find_cell(int cell_index, int layer) const {
    for (const auto& c : cells)
      if (c.cell_index == cell_index && c.layer == layer) return &c;
    return nullptr;
  }
  bool operator==(const Surface&) const = default;
};

struct BoxPlacement {
  ColumnRef column;
  int level = 0;
  bool operator==(const BoxPlacement&) const = default;
};

struct BoxItem {
  EntityId id = 0;
  Color color = Color::kRed;
  Vec3 position;  // box centre
  double yaw = 0.0;
  std::optional<BoxPlacement> placement;  // nullopt: unplaced on the floor

  bool placed() const { return placement.has_value(); }
  bool operator==(const BoxItem&) const = default;
};

struct Distractor {
  EntityId id = 0;
  DistractorKind kind = DistractorKind::kBarrelBlue;
  Vec3 position;  // base centre on the floor
  double yaw = 0.0;

  double radius() const { return kind == DistractorKind::kTrafficCone ? 0.18 : 0.30; }
  double height() const { return kind == DistractorKind::kTrafficCone ? 0.70 : 0.90; }
  bool operator==(const Distractor&) const = default;
};

enum class EntityKind : std::uint8_t { kFloor, kBox, kSurface, kCell, kDistractor, kUnknown };

struct FreeCell {
  ColumnRef column;
  bool operator==(const FreeCell&) const = default;
};
struct StackTop {
  EntityId base = 0;
  bool operator==(const StackTop&) const = default;
};
using PutdownSlot = std::variant<FreeCell, StackTop>;

/// One abstract pick-and-place action.
struct Action {
  EntityId pickup = 0;
  PutdownSlot putdown = FreeCell{};
  bool operator==(const Action&) const = default;
};

enum class ExecutionMode : std::uint8_t { kSnapToTarget, kFreeForm };

constexpr std::string_view to_string(ExecutionMode m) {
  return m == ExecutionMode::kSnapToTarget ? "snap" : "free-form";
}

inline ExecutionMode execution_mode_from_string(std::string_view s) {
  if (s == "snap" || s == "snap-to-target") return ExecutionMode::kSnapToTarget;
  if (s == "freeform" || s == "free-form") return ExecutionMode::kFreeForm;
  throw Error(ErrorCode::kInvalidArgument, "unknown execution mode '" + std::string(s) + "'");
}

/// Full world state. Treated as an immutable value: transitions return copies.
struct SceneState {
  WarehouseGeometry geometry;
  std::vector<BoxItem> boxes;  // sorted by id
  std::vector<Surface> surfaces;  // sorted by id
  std::vector<Distractor> distractors;
  int step = 0;
  std::optional<ColumnRef> last_extended;  // column that received the latest placement

  const BoxItem* find_box(EntityId id) const {
    for (const auto& b : boxes)
      if (b.id == id) return &b;
    return nullptr;
  }
  BoxItem* find_box(EntityId id) {
    for (auto& b : boxes)
      if (b.id == id) return &b;
    return nullptr;
  }
  const Surface* find_surface(EntityId id) const {
    for (const auto& s : surfaces)
      if (s.id == id) return &s;
    return nullptr;
  }
  const CellSlot* find_cell(const ColumnRef& col) const {
    const Surface* s = find_surface(col.surface);
    return s ? s->find_cell(col.cell, col.layer) : nullptr;
  }
  CellSlot* find_cell(const ColumnRef& col) {
    for (auto& s : surfaces)
      if (s.id == col.surface)
        for (auto& c : s.cells)
          if (c.cell_index == col.cell && c.layer == col.layer) return &c;
    return nullptr;
  }
  const CellSlot* find_cell_by_id(EntityId id) const {
    for (const auto& s : surfaces)
      for (const auto& c : s.cells)
        if (c.id == id) return &c;
    return nullptr;
  }
  const Distractor* find_distractor(EntityId id) const {
    for (const auto& d : distractors)
      if (d.id == id) return &d;
    return nullptr;
  }

  EntityKind kind_of(EntityId id) const {
    if (id == kFloorId) return EntityKind::kFloor;
    if (find_box(id)) return EntityKind::kBox;
    if (find_surface(id)) return EntityKind::kSurface;
    if (find_cell_by_id(id)) return EntityKind::kCell;
    if (find_distractor(id)) return EntityKind::kDistractor;
    return EntityKind::kUnknown;
  }

  /// Every column in (surface id, layer, cell) order.
  std::vector<const CellSlot*> all_cells() const {
    std::vector<const CellSlot*> out;
    for (const auto& s : surfaces)
      for (const auto& c : s.cells) out.push_back(&c);
    return out;
  }

  int column_max(const ColumnRef& col) const {
    const Surface* s = find_surface(col.surface);
    return s ? s->max_stack(geometry) : 0;
  }

  /// Centre a box would have if inserted on top of the column.
  Vec3 insertion_point(const CellSlot& cell) const {
    return {cell.center.x, cell.center.y,
            cell.center.z + (cell.height() + 0.5) * geometry.box_size};
  }

  bool is_column_top(EntityId box) const {
    const BoxItem* b = find_box(box);
    if (!b || !b->placed()) return false;
    const CellSlot* c = find_cell(b->placement->column);
    return c && !c->occupants.empty() && c->occupants.back() == box;
  }

  bool operator==(const SceneState&) const = default;
};

/// Builds a surface with its cell grid. Cell ids are first_cell_id, +1, ...
inline Surface make_surface(const WarehouseGeometry& g, EntityId id, SurfaceKind kind,
                            Vec3 position, int quarter_turns, EntityId first_cell_id) {
  Surface s;
  s.id = id;
  s.kind = kind;
  s.position = {position.x, position.y, 0.0};
  s.quarter_turns = quarter_turns;
  const Yaw2 rot = s.rotation();
  const int rows = s.grid_rows();
  const int cols = s.grid_cols();
  EntityId next = first_cell_id;
  for (int layer = 0; layer < s.layers(); ++layer) {
    const double deck = is_pallet(kind) ? g.pallet_deck_height
                                        : g.shelf_layer_heights[static_cast<std::size_t>(layer)];
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        const Vec3 local{(c - 0.5 * (cols - 1)) * g.cell_pitch, (r - 0.5 * (rows - 1)) * g.cell_pitch,
                         0.0};
        CellSlot cell;
        cell.id = next++;
        cell.surface = id;
        cell.cell_index = r * cols + c;
        cell.layer = layer;
        cell.center = s.position + rot.rotate(local);
        cell.center.z = deck;
        s.cells.push_back(cell);
      }
    }
  }
  return s;
}

inline Vec3 placed_box_center(const WarehouseGeometry& g, const CellSlot& cell, int level) {
  return {cell.center.x, cell.center.y, cell.center.z + (level + 0.5) * g.box_size};
}

/// Column the putdown slot refers to; throws kUnknownEntity if it does not exist.
inline ColumnRef resolve_putdown(const SceneState& state, const PutdownSlot& slot) {
  if (const auto* free = std::get_if<FreeCell>(&slot)) {
    if (!state.find_cell(free->column))
      throw Error(ErrorCode::kUnknownEntity, "no such cell");
    return free->column;
  }
  const EntityId base = std::get<StackTop>(slot).base;
  const BoxItem* b = state.find_box(base);
  if (!b || !b->placed()) throw Error(ErrorCode::kUnknownEntity, "stack base is not a placed box");
  if (!state.is_column_top(base)) throw Error(ErrorCode::kUnknownEntity, "stack base is not a column top");
  return b->placement->column;
}

inline bool is_accessible(const SceneState& state, EntityId box) {
  const BoxItem* b = state.find_box(box);
  if (!b) return false;
  return !b->placed() || state.is_column_top(box);
}

/// Locates the column whose snap window contains `point` on one surface.
/// Shelf layers are chosen by nearest deck height.
inline std::optional<ColumnRef> snap_to_surface(const SceneState& state, const Surface& surface,
                                                const Vec3& point) {
  const auto& g = state.geometry;
  const Vec3 local = surface.rotation().unrotate(point - surface.position);
  const double tol = g.snap_tolerance();
  const int rows = surface.grid_rows();
  const int cols = surface.grid_cols();
  std::optional<ColumnRef> best;
  double best_d = 0.0;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double dx = local.x - (c - 0.5 * (cols - 1)) * g.cell_pitch;
      const double dy = local.y - (r - 0.5 * (rows - 1)) * g.cell_pitch;
      if (std::abs(dx) > tol || std::abs(dy) > tol) continue;
      const double d = dx * dx + dy * dy;
      if (!best || d < best_d) {
        best = ColumnRef{surface.id, r * cols + c, 0};
        best_d = d;
      }
    }
  }
  if (best && is_shelf(surface.kind)) {
    const double d0 = std::abs(point.z - g.shelf_layer_heights[0]);
    const double d1 = std::abs(point.z - g.shelf_layer_heights[1]);
    best->layer = d1 < d0 ? 1 : 0;
  }
  return best;
}

/// Snaps a free-form point against every surface.
inline std::optional<ColumnRef> snap_to_any_surface(const SceneState& state, const Vec3& point) {
  for (const auto& s : state.surfaces)
    if (auto col = snap_to_surface(state, s, point)) return col;
  return std::nullopt;
}

/// Executes one pick-and-place. Throws Error on structurally impossible actions.
inline SceneState apply_action(const SceneState& state, const Action& action, ExecutionMode mode,
                               std::optional<Vec3> freeform_point = std::nullopt) {
  const BoxItem* pick = state.find_box(action.pickup);
  if (!pick) throw Error(ErrorCode::kUnknownEntity, "pickup is not a box");
  if (!is_accessible(state, action.pickup))
    throw Error(ErrorCode::kPickupInaccessible, "a box rests on the pickup");
  if (const auto* top = std::get_if<StackTop>(&action.putdown); top && top->base == action.pickup)
    throw Error(ErrorCode::kPickupEqualsSupport, "cannot stack a box on itself");

  ColumnRef target = resolve_putdown(state, action.putdown);
  if (mode == ExecutionMode::kFreeForm) {
    if (!freeform_point) throw Error(ErrorCode::kInvalidArgument, "free-form mode needs a putdown point");
    const Surface* surface = state.find_surface(target.surface);
    auto snapped = snap_to_surface(state, *surface, *freeform_point);
    if (!snapped) throw Error(ErrorCode::kSnapOutOfTolerance, "putdown point is not within any cell");
    target = *snapped;
  }

  if (pick->placed() && pick->placement->column == target)
    throw Error(ErrorCode::kPickupEqualsSupport, "pickup belongs to the target column");

  const CellSlot* target_cell = state.find_cell(target);
  if (target_cell->height() >= state.column_max(target))
    throw Error(ErrorCode::kSlotFull, "column is at maximum height");

  SceneState next = state;
  BoxItem* moved = next.find_box(action.pickup);
  if (moved->placed()) {
    CellSlot* origin = next.find_cell(moved->placement->column);
    origin->occupants.pop_back();
  }
  CellSlot* dest = next.find_cell(target);
  const int level = dest->height();
  dest->occupants.push_back(action.pickup);
  const Surface* surface = next.find_surface(target.surface);
  moved->placement = BoxPlacement{target, level};
  moved->position = placed_box_center(next.geometry, *dest, level);
  moved->yaw = surface->yaw();
  next.step = state.step + 1;
  next.last_extended = target;
  return next;
}

// Auxiliary scene predicates.

/// Columns that can accept another box (height below the surface maximum).
inline std::vector<ColumnRef> free_cells(const SceneState& state) {
  std::vector<ColumnRef> out;
  for (const auto& s : state.surfaces)
    for (const auto& c : s.cells)
      if (c.height() < s.max_stack(state.geometry)) out.push_back(c.column());
  return out;
}

inline std::set<EntityId> placed_boxes(const SceneState& state) {
  std::set<EntityId> out;
  for (const auto& b : state.boxes)
    if (b.placed()) out.insert(b.id);
  return out;
}

inline std::set<EntityId> unplaced_boxes(const SceneState& state) {
  std::set<EntityId> out;
  for (const auto& b : state.boxes)
    if (!b.placed()) out.insert(b.id);
  return out;
}

/// Members of columns holding more than one box.
inline std::set<EntityId> stacked_boxes(const SceneState& state) {
  std::set<EntityId> out;
  for (const auto& s : state.surfaces)
    for (const auto& c : s.cells)
      if (c.height() > 1) out.insert(c.occupants.begin(), c.occupants.end());
  return out;
}

inline std::set<EntityId> accessible_boxes(const SceneState& state) {
  std::set<EntityId> out;
  for (const auto& b : state.boxes)
    if (is_accessible(state, b.id)) out.insert(b.id);
  return out;
}

// Serialization. Canonical JSON (see canonical_json.hpp) is the snapshot format.

inline Json to_json(const Vec3& v) { return Json::array({v.x, v.y, v.z}); }
inline Vec3 vec3_from_json(const Json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

inline Json to_json(const ColumnRef& c) {
  return Json{{"surface", c.surface}, {"cell", c.cell}, {"layer", c.layer}};
}
inline ColumnRef column_from_json(const Json& j) {
  return {j.at("surface").get<EntityId>(), j.at("cell").get<int>(), j.at("layer").get<int>()};
}

inline Json to_json(const PutdownSlot& slot) {
  if (const auto* f = std::get_if<FreeCell>(&slot))
    return Json{{"kind", "free-cell"}, {"column", to_json(f->column)}};
  return Json{{"kind", "stack-top"}, {"base", std::get<StackTop>(slot).base}};
}
inline PutdownSlot putdown_from_json(const Json& j) {
  if (j.at("kind").get<std::string>() == "free-cell") return FreeCell{column_from_json(j.at("column"))};
  return StackTop{j.at("base").get<EntityId>()};
}

inline Json to_json(const Action& a) { return Json{{"pickup", a.pickup}, {"putdown", to_json(a.putdown)}}; }
inline Action action_from_json(const Json& j) {
  return {j.at("pickup").get<EntityId>(), putdown_from_json(j.at("putdown"))};
}

inline Json to_json(const WarehouseGeometry& g) {
  return Json{{"box_size", g.box_size},
              {"cell_pitch", g.cell_pitch},
              {"pallet_deck_height", g.pallet_deck_height},
              {"shelf_layer_heights", Json::array({g.shelf_layer_heights[0], g.shelf_layer_heights[1]})},
              {"shelf_board_thickness", g.shelf_board_thickness},
              {"shelf_depth", g.shelf_depth},
              {"floor_half_extent", g.floor_half_extent},
              {"pallet_max_stack", g.pallet_max_stack},
              {"snap_tolerance_fraction", g.snap_tolerance_fraction}};
}

inline WarehouseGeometry geometry_from_json(const Json& j) {
  WarehouseGeometry g;
  g.box_size = j.value("box_size", g.box_size);
  g.cell_pitch = j.value("cell_pitch", g.cell_pitch);
  g.pallet_deck_height = j.value("pallet_deck_height", g.pallet_deck_height);
  if (j.contains("shelf_layer_heights")) {
    g.shelf_layer_heights[0] = j["shelf_layer_heights"].at(0).get<double>();
    g.shelf_layer_heights[1] = j["shelf_layer_heights"].at(1).get<double>();
  }
  g.shelf_board_thickness = j.value("shelf_board_thickness", g.shelf_board_thickness);
  g.shelf_depth = j.value("shelf_depth", g.shelf_depth);
  g.floor_half_extent = j.value("floor_half_extent", g.floor_half_extent);
  g.pallet_max_stack = j.value("pallet_max_stack", g.pallet_max_stack);
  g.snap_tolerance_fraction = j.value("snap_tolerance_fraction", g.snap_tolerance_fraction);
  return g;
}

inline Json to_json(const SceneState& s) {
  Json boxes = Json::array();
  for (const auto& b : s.boxes) {
    Json jb{{"id", b.id}, {"color", to_string(b.color)}, {"position", to_json(b.position)}, {"yaw", b.yaw}};
    if (b.placement) {
      jb["location"] = Json{{"kind", "cell"}, {"column", to_json(b.placement->column)}, {"level", b.placement->level}};
    } else {
      jb["location"] = Json{{"kind", "unplaced-floor"}};
    }
    boxes.push_back(std::move(jb));
  }
  Json surfaces = Json::array();
  for (const auto& sf : s.surfaces) {
    Json cells = Json::array();
    for (const auto& c : sf.cells)
      cells.push_back(Json{{"id", c.id}, {"cell", c.cell_index}, {"layer", c.layer},
                           {"center", to_json(c.center)}, {"occupants", c.occupants}});
    surfaces.push_back(Json{{"id", sf.id}, {"kind", to_string(sf.kind)}, {"position", to_json(sf.position)},
                            {"quarter_turns", sf.quarter_turns}, {"cells", std::move(cells)}});
  }
  Json distractors = Json::array();
  for (const auto& d : s.distractors)
    distractors.push_back(Json{{"id", d.id}, {"kind", to_string(d.kind)}, {"position", to_json(d.position)}, {"yaw", d.yaw}});
  Json out{{"geometry", to_json(s.geometry)}, {"boxes", std::move(boxes)}, {"surfaces", std::move(surfaces)},
           {"distractors", std::move(distractors)}, {"step", s.step}};
  out["last_extended"] = s.last_extended ? to_json(*s.last_extended) : Json(nullptr);
  return out;
}

inline SceneState scene_from_json(const Json& j) {
  SceneState s;
  s.geometry = geometry_from_json(j.at("geometry"));
  for (const auto& jb : j.at("boxes")) {
    BoxItem b;
    b.id = jb.at("id").get<EntityId>();
    b.color = color_from_string(jb.at("color").get<std::string>());
    b.position = vec3_from_json(jb.at("position"));
    b.yaw = jb.at("yaw").get<double>();
    const auto& loc = jb.at("location");
    if (loc.at("kind").get<std::string>() == "cell")
      b.placement = BoxPlacement{column_from_json(loc.at("column")), loc.at("level").get<int>()};
    s.boxes.push_back(b);
  }
  for (const auto& js : j.at("surfaces")) {
    Surface sf;
    sf.id = js.at("id").get<EntityId>();
    sf.kind = surface_kind_from_string(js.at("kind").get<std::string>());
    sf.position = vec3_from_json(js.at("position"));
    sf.quarter_turns = js.at("quarter_turns").get<int>();
    for (const auto& jc : js.at("cells")) {
      CellSlot c;
      c.id = jc.at("id").get<EntityId>();
      c.surface = sf.id;
      c.cell_index = jc.at("cell").get<int>();
      c.layer = jc.at("layer").get<int>();
      c.center = vec3_from_json(jc.at("center"));
      c.occupants = jc.at("occupants").get<std::vector<EntityId>>();
      sf.cells.push_back(c);
    }
    s.surfaces.push_back(sf);
  }
  for (const auto& jd : j.at("distractors")) {
    Distractor d;
    d.id = jd.at("id").get<EntityId>();
    d.kind = distractor_kind_from_string(jd.at("kind").get<std::string>());
    d.position = vec3_from_json(jd.at("position"));
    d.yaw = jd.at("yaw").get<double>();
    s.distractors.push_back(d);
  }
  s.step = j.at("step").get<int>();
  if (!j.at("last_extended").is_null()) s.last_extended = column_from_json(j.at("last_extended"));
  return s;
}

inline std::string serialize_scene(const SceneState& s) { return canonical_dump(to_json(s)); }

inline std::string scene_digest(const SceneState& s) { return hex_digest(fnv1a64(serialize_scene(s))); }

/// Checks every structural invariant; returns a description per violation.
inline std::vector<std::string> check_invariants(const SceneState& s) {
  std::vector<std::string> problems;
  const auto& g = s.geometry;
  if (s.boxes.empty() || s.boxes.size() > 30) problems.push_back("box count outside [1,30]");
  int pallets = 0;
  int shelves = 0;
  for (const auto& sf : s.surfaces) (is_pallet(sf.kind) ? pallets : shelves)++;
  if (pallets > 3) problems.push_back("more than 3 pallets");
  if (shelves > 2) problems.push_back("more than 2 shelves");
  if (s.distractors.size() > 4) problems.push_back("more than 4 distractors");

  std::set<EntityId> seen_in_cells;
  for (const auto& sf : s.surfaces) {
    for (const auto& c : sf.cells) {
      if (c.height() > sf.max_stack(g)) problems.push_back("column exceeds max height");
      for (int level = 0; level < c.height(); ++level) {
        const EntityId id = c.occupants[static_cast<std::size_t>(level)];
        if (!seen_in_cells.insert(id).second) problems.push_back("box listed in two cells");
        const BoxItem* b = s.find_box(id);
        if (!b) {
          problems.push_back("cell lists unknown box");
          continue;
        }
        if (!b->placed() || b->placement->column != c.column() || b->placement->level != level)
          problems.push_back("box location disagrees with cell occupants");
        const Vec3 expect = placed_box_center(g, c, level);
        if (distance(expect, b->position) > 1e-9) problems.push_back("placed box pose inconsistent with slot");
        if (std::abs(b->yaw - sf.yaw()) > 1e-12) problems.push_back("placed box yaw not aligned");
      }
    }
  }
  for (const auto& b : s.boxes) {
    if (b.placed() && !seen_in_cells.count(b.id)) problems.push_back("placed box missing from its cell");
    if (!b.placed() && std::abs(b.position.z - 0.5 * g.box_size) > 1e-9)
      problems.push_back("unplaced box not resting on floor");
  }
  return problems;
}

}  // namespace ramp3d
