#pragma once

// Privileged greedy planner: among valid (unplaced box, slot) pairs pick the
// one with the smallest pickup-to-putdown distance.

#include <array>
#include <optional>
#include <tuple>
#include <vector>

#include "error.hpp"
#include "tasks.hpp"
#include "warehouse.hpp"

namespace ramp3d {

struct OracleChoice {
  Action action;
  double distance = 0.0;  // box centre to insertion point
  int candidate_count = 0;  // valid pairs considered
};

/// Every putdown slot currently in the scene: free cells for empty columns,
/// stack tops otherwise. Full columns are included; validity filters them.
inline std::vector<PutdownSlot> enumerate_slots(const SceneState& state) {
  std::vector<PutdownSlot> slots;
  for (const auto* c : state.all_cells()) {
    if (c->occupants.empty()) {
      slots.emplace_back(FreeCell{c->column()});
    } else {
      slots.emplace_back(StackTop{c->occupants.back()});
    }
  }
  return slots;
}

inline double pickup_to_putdown_distance(const SceneState& state, const Action& action) {
  const ColumnRef col = resolve_putdown(state, action.putdown);
  return distance(state.find_box(action.pickup)->position, state.insertion_point(*state.find_cell(col)));
}

/// Lexicographic tie-break key (pickup id, surface id, cell index, layer).
inline std::tuple<EntityId, EntityId, int, int> tie_key(const SceneState& state, const Action& action) {
  const ColumnRef col = resolve_putdown(state, action.putdown);
  return {action.pickup, col.surface, col.cell, col.layer};
}

/// Valid putdown slots per pickup colour. For an unplaced pickup every rule
/// depends only on its colour and the target column, so one representative
/// box per colour decides validity for all boxes of that colour.
inline std::array<std::vector<PutdownSlot>, 3> valid_slots_by_color(const TaskInstance& task,
                                                                    const SceneState& state) {
  std::array<std::vector<PutdownSlot>, 3> out;
  std::array<std::optional<EntityId>, 3> representative;
  for (const auto& b : state.boxes)
    if (!b.placed() && !representative[static_cast<std::size_t>(b.color)])
      representative[static_cast<std::size_t>(b.color)] = b.id;
  const auto slots = enumerate_slots(state);
  for (std::size_t c = 0; c < 3; ++c) {
    if (!representative[c]) continue;
    for (const auto& slot : slots)
      if (action_valid(task, state, Action{*representative[c], slot}).valid) out[c].push_back(slot);
  }
  return out;
}

/// nullopt means the goal is already satisfied (done).
inline std::optional<OracleChoice> oracle_next(const TaskInstance& task, const SceneState& state) {
  if (goal_satisfied(task, state)) return std::nullopt;
  const auto by_color = valid_slots_by_color(task, state);
  std::optional<OracleChoice> best;
  int count = 0;
  for (const auto& b : state.boxes) {
    if (b.placed()) continue;
    for (const auto& slot : by_color[static_cast<std::size_t>(b.color)]) {
      ++count;
      const Action a{b.id, slot};
      const double d = pickup_to_putdown_distance(state, a);
      if (!best || d < best->distance ||
          (d == best->distance && tie_key(state, a) < tie_key(state, best->action))) {
        best = OracleChoice{a, d, 0};
      }
    }
  }
  if (!best) throw Error(ErrorCode::kDeadEnd, "no valid action and goal unsatisfied");
  best->candidate_count = count;
  return best;
}

struct OracleStep {
  SceneState state;  // snapshot before the action
  OracleChoice choice;
};

inline std::vector<OracleStep> oracle_rollout(const TaskInstance& task, const SceneState& scene) {
  std::vector<OracleStep> steps;
  SceneState state = scene;
  const std::size_t limit = state.boxes.size() + 1;
  while (auto choice = oracle_next(task, state)) {
    if (steps.size() >= limit) throw Error(ErrorCode::kDeadEnd, "oracle exceeded one placement per box");
    SceneState next = apply_action(state, choice->action, ExecutionMode::kSnapToTarget);
    steps.push_back({std::move(state), *choice});
    state = std::move(next);
  }
  return steps;
}

/// Final state reached by replaying an oracle rollout.
inline SceneState rollout_final_state(const SceneState& scene, const std::vector<OracleStep>& steps) {
  if (steps.empty()) return scene;
  return apply_action(steps.back().state, steps.back().choice.action, ExecutionMode::kSnapToTarget);
}

}  // namespace ramp3d
