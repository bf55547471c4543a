#pragma once

// Hand-built scenes for unit tests.

#include <initializer_list>
#include <utility>
#include <vector>

#include "ramp3d/warehouse.hpp"

namespace ramp3d::testing {

/// Scene with the given surfaces (at the given centres, yaw 0) and unplaced
/// boxes at the given floor positions. Box ids are 1..N in argument order.
class SceneBuilder {
 public:
  SceneBuilder& surface(SurfaceKind kind, Vec3 position, int quarter_turns = 0) {
    surfaces_.push_back({kind, position, quarter_turns});
    return *this;
  }
  SceneBuilder& box(Color color, Vec3 floor_xy) {
    boxes_.push_back({color, floor_xy});
    return *this;
  }
  SceneBuilder& distractor(DistractorKind kind, Vec3 position) {
    distractors_.push_back({kind, position});
    return *this;
  }

  SceneState build() const {
    SceneState s;
    EntityId next = static_cast<EntityId>(boxes_.size()) + 1;
    for (const auto& [kind, pos, turns] : surfaces_) {
      Surface sf = make_surface(s.geometry, next, kind, pos, turns, next + 1);
      next += 1 + static_cast<EntityId>(sf.cells.size());
      s.surfaces.push_back(std::move(sf));
    }
    EntityId id = 1;
    for (const auto& [color, pos] : boxes_) {
      BoxItem b;
      b.id = id++;
      b.color = color;
      b.position = {pos.x, pos.y, 0.5 * s.geometry.box_size};
      s.boxes.push_back(b);
    }
    for (const auto& [kind, pos] : distractors_) {
      Distractor d;
      d.id = next++;
      d.kind = kind;
      d.position = {pos.x, pos.y, 0.0};
      s.distractors.push_back(d);
    }
    return s;
  }

 private:
  struct SurfaceSpec {
    SurfaceKind kind;
    Vec3 position;
    int turns;
  };
  std::vector<SurfaceSpec> surfaces_;
  std::vector<std::pair<Color, Vec3>> boxes_;
  std::vector<std::pair<DistractorKind, Vec3>> distractors_;
};

inline ColumnRef col(const SceneState& s, std::size_t surface_index, int cell, int layer = 0) {
  return {s.surfaces.at(surface_index).id, cell, layer};
}

inline Action place(EntityId box, ColumnRef column) { return {box, FreeCell{column}}; }

/// Places boxes in order into the listed columns with snap execution.
inline SceneState place_all(SceneState s, std::initializer_list<std::pair<EntityId, ColumnRef>> moves) {
  for (const auto& [box, column] : moves) s = apply_action(s, place(box, column), ExecutionMode::kSnapToTarget);
  return s;
}

}  // namespace ramp3d::testing
