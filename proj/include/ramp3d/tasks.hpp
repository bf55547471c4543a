#pragma once

// The eleven task variants: parameter sampling, goal templates, per-step
// action validity and terminal goal satisfaction.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "canonical_json.hpp"
#include "error.hpp"
#include "rng.hpp"
#include "task_catalog_data.hpp"
#include "warehouse.hpp"

namespace ramp3d {

enum class Variant : std::uint8_t {
  kBasicPlacement,
  kBoxTypePriority,
  kShelfPriority,
  kPalletPriority,
  kPlacementOrdering,
  kSizePriority,
  kAvoidStacking,
  kHomogeneousStacks,
  kBoxTypeSegregation,
  kFinishStackFirst,
  kBoxAccessibility,
};

inline constexpr int kVariantCount = 11;

inline constexpr std::array<Variant, kVariantCount> kAllVariants{
    Variant::kBasicPlacement,    Variant::kBoxTypePriority,    Variant::kShelfPriority,
    Variant::kPalletPriority,    Variant::kPlacementOrdering,  Variant::kSizePriority,
    Variant::kAvoidStacking,     Variant::kHomogeneousStacks,  Variant::kBoxTypeSegregation,
    Variant::kFinishStackFirst,  Variant::kBoxAccessibility};

constexpr std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kBasicPlacement: return "basic-placement";
    case Variant::kBoxTypePriority: return "box-type-priority";
    case Variant::kShelfPriority: return "shelf-priority";
    case Variant::kPalletPriority: return "pallet-priority";
    case Variant::kPlacementOrdering: return "placement-ordering";
    case Variant::kSizePriority: return "size-priority";
    case Variant::kAvoidStacking: return "avoid-stacking";
    case Variant::kHomogeneousStacks: return "homogeneous-stacks";
    case Variant::kBoxTypeSegregation: return "box-type-segregation";
    case Variant::kFinishStackFirst: return "finish-stack-first";
    case Variant::kBoxAccessibility: return "box-accessibility";
  }
  return "basic-placement";
}

inline Variant variant_from_string(std::string_view s) {
  for (Variant v : kAllVariants)
    if (to_string(v) == s) return v;
  throw Error(ErrorCode::kInvalidArgument, "unknown task variant '" + std::string(s) + "'");
}

enum class Direction : std::uint8_t { kLeftToRight, kRightToLeft };
enum class SizeClass : std::uint8_t { kSmall, kLarge };
enum class TemplateSet : std::uint8_t { kTraining, kHeldOut };

constexpr std::string_view to_string(Direction d) {
  return d == Direction::kLeftToRight ? "left to right" : "right to left";
}
constexpr std::string_view to_string(SizeClass s) { return s == SizeClass::kSmall ? "small" : "large"; }
constexpr std::string_view to_string(TemplateSet t) { return t == TemplateSet::kTraining ? "training" : "held-out"; }

struct TaskParams {
  int max_height = 3;
  std::optional<Color> priority_color;
  std::optional<Direction> direction;
  std::optional<SizeClass> priority_size;
  bool operator==(const TaskParams&) const = default;
};

struct TaskInstance {
  Variant variant = Variant::kBasicPlacement;
  TaskParams params;
  std::string goal_text;
  int template_id = 0;
  TemplateSet template_set = TemplateSet::kTraining;
  bool operator==(const TaskInstance&) const = default;
};

/// Variant descriptions and goal templates, loaded from a versioned JSON file.
class TaskCatalog {
 public:
  struct Entry {
    std::string description;
    std::vector<std::string> params;
    std::vector<std::string> training;
    std::vector<std::string> heldout;
  };

  static TaskCatalog from_json(const Json& j) {
    TaskCatalog c;
    c.schema_version_ = j.at("schema_version").get<std::string>();
    if (c.schema_version_ != "ramp3d.tasks/1")
      throw Error(ErrorCode::kSchemaMismatch, "unsupported task catalog " + c.schema_version_);
    c.suffix_ = j.at("grounding_suffix").get<std::string>();
    for (auto it = j.at("auxiliary_instructions").begin(); it != j.at("auxiliary_instructions").end(); ++it)
      c.aux_[it.key()] = it.value().get<std::string>();
    for (const auto& jv : j.at("variants")) {
      const Variant v = variant_from_string(jv.at("name").get<std::string>());
      Entry e;
      e.description = jv.at("description").get<std::string>();
      e.params = jv.at("params").get<std::vector<std::string>>();
      e.training = jv.at("training_templates").get<std::vector<std::string>>();
      e.heldout = jv.at("heldout_templates").get<std::vector<std::string>>();
      if (e.training.size() != 3 || e.heldout.size() != 3)
        throw Error(ErrorCode::kSchemaMismatch, "each variant needs exactly 3 training and 3 held-out templates");
      c.entries_[static_cast<std::size_t>(v)] = std::move(e);
      c.present_[static_cast<std::size_t>(v)] = true;
    }
    for (bool p : c.present_)
      if (!p) throw Error(ErrorCode::kSchemaMismatch, "task catalog is missing a variant");
    return c;
  }

  const std::string& schema_version() const { return schema_version_; }
  const std::string& grounding_suffix() const { return suffix_; }
  const Entry& entry(Variant v) const { return entries_[static_cast<std::size_t>(v)]; }
  const std::vector<std::string>& templates(Variant v, TemplateSet set) const {
    return set == TemplateSet::kTraining ? entry(v).training : entry(v).heldout;
  }
  const std::string& auxiliary_instruction(const std::string& predicate) const { return aux_.at(predicate); }

 private:
  std::string schema_version_;
  std::string suffix_;
  std::map<std::string, std::string> aux_;
  std::array<Entry, kVariantCount> entries_{};
  std::array<bool, kVariantCount> present_{};
};

inline const TaskCatalog& default_catalog() {
  static const TaskCatalog catalog = TaskCatalog::from_json(Json::parse(detail::kDefaultTaskCatalogJson));
  return catalog;
}

constexpr bool uses_color(Variant v) {
  return v == Variant::kBoxTypePriority || v == Variant::kBoxAccessibility;
}
constexpr bool uses_direction(Variant v) { return v == Variant::kPlacementOrdering; }
constexpr bool uses_size(Variant v) { return v == Variant::kSizePriority; }

inline std::string instantiate_template(std::string text, const TaskParams& p) {
  auto replace_all = [&](std::string_view key, std::string_view value) {
    for (std::size_t pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size()))
      text.replace(pos, key.size(), value);
  };
  replace_all("{max_height}", std::to_string(p.max_height));
  if (p.priority_color) replace_all("{color}", to_string(*p.priority_color));
  if (p.direction) replace_all("{direction}", to_string(*p.direction));
  if (p.priority_size) replace_all("{size}", to_string(*p.priority_size));
  return text;
}

/// Draw order from Rng(seed): max_height, colour, direction, size (each only
/// when the variant uses it), then the template index.
inline TaskInstance sample_task(Variant variant, std::uint64_t seed, TemplateSet set = TemplateSet::kTraining,
                                const TaskCatalog& catalog = default_catalog()) {
  Rng rng(seed);
  TaskInstance t;
  t.variant = variant;
  t.template_set = set;
  t.params.max_height = static_cast<int>(rng.range(1, 3));
  if (uses_color(variant)) t.params.priority_color = kAllColors[rng.below(3)];
  if (uses_direction(variant)) t.params.direction = rng.below(2) == 0 ? Direction::kLeftToRight : Direction::kRightToLeft;
  if (uses_size(variant)) t.params.priority_size = rng.below(2) == 0 ? SizeClass::kSmall : SizeClass::kLarge;
  t.template_id = static_cast<int>(rng.below(3));
  t.goal_text = instantiate_template(catalog.templates(variant, set)[static_cast<std::size_t>(t.template_id)], t.params);
  return t;
}

/// Returns a copy with the same parameters and template index rendered from another set.
inline TaskInstance with_template_set(const TaskInstance& task, TemplateSet set,
                                      const TaskCatalog& catalog = default_catalog()) {
  TaskInstance t = task;
  t.template_set = set;
  t.goal_text = instantiate_template(catalog.templates(task.variant, set)[static_cast<std::size_t>(task.template_id)],
                                     task.params);
  return t;
}

inline std::vector<std::string> heldout_templates(Variant v, const TaskCatalog& catalog = default_catalog()) {
  return catalog.templates(v, TemplateSet::kHeldOut);
}

/// Goal text as emitted for training: template text plus the grounding suffix.
inline std::string training_text(const TaskInstance& t, const TaskCatalog& catalog = default_catalog()) {
  return t.goal_text + " " + catalog.grounding_suffix();
}

inline Json to_json(const TaskInstance& t) {
  Json params{{"max_height", t.params.max_height}};
  if (t.params.priority_color) params["priority_color"] = to_string(*t.params.priority_color);
  if (t.params.direction) params["direction"] = to_string(*t.params.direction);
  if (t.params.priority_size) params["priority_size"] = to_string(*t.params.priority_size);
  return Json{{"variant", to_string(t.variant)}, {"params", params}, {"goal_text", t.goal_text},
              {"template_id", t.template_id}, {"template_set", to_string(t.template_set)}};
}

inline TaskInstance task_from_json(const Json& j) {
  TaskInstance t;
  t.variant = variant_from_string(j.at("variant").get<std::string>());
  const auto& p = j.at("params");
  t.params.max_height = p.at("max_height").get<int>();
  if (p.contains("priority_color")) t.params.priority_color = color_from_string(p["priority_color"].get<std::string>());
  if (p.contains("direction"))
    t.params.direction = p["direction"].get<std::string>() == "left to right" ? Direction::kLeftToRight : Direction::kRightToLeft;
  if (p.contains("priority_size"))
    t.params.priority_size = p["priority_size"].get<std::string>() == "small" ? SizeClass::kSmall : SizeClass::kLarge;
  t.goal_text = j.at("goal_text").get<std::string>();
  t.template_id = j.at("template_id").get<int>();
  t.template_set = j.at("template_set").get<std::string>() == "training" ? TemplateSet::kTraining : TemplateSet::kHeldOut;
  return t;
}

// ---------------------------------------------------------------------------
// Constraint semantics

/// Height cap of a column under the task: the limit H on pallets, 1 on shelves.
inline int column_cap(const TaskInstance& task, const SceneState& state, const CellSlot& cell) {
  return std::min(task.params.max_height, state.column_max(cell.column()));
}

inline Color box_color(const SceneState& state, EntityId id) { return state.find_box(id)->color; }

namespace detail {

inline std::array<int, 3> unplaced_color_counts(const SceneState& state) {
  std::array<int, 3> n{};
  for (const auto& b : state.boxes)
    if (!b.placed()) n[static_cast<std::size_t>(b.color)]++;
  return n;
}

inline bool has_room(const TaskInstance& task, const SceneState& state, const CellSlot& c) {
  return c.height() < column_cap(task, state, c);
}

// Homogeneous stacks: each colour's remaining boxes must fit its own
// non-full columns plus empty columns handed to it.
inline bool homogeneous_completable(const TaskInstance& task, const SceneState& state) {
  const auto remaining = unplaced_color_counts(state);
  std::array<int, 3> own_room{};
  int empty_tall = 0;
  int empty_short = 0;
  const int h = task.params.max_height;
  for (const auto* c : state.all_cells()) {
    const int cap = column_cap(task, state, *c);
    if (c->occupants.empty()) {
      (cap == h && cap > 1 ? empty_tall : empty_short)++;
      continue;
    }
    const Color col = box_color(state, c->occupants.front());
    own_room[static_cast<std::size_t>(col)] += cap - c->height();
  }
  std::array<int, 3> deficit{};
  for (std::size_t i = 0; i < 3; ++i) deficit[i] = std::max(0, remaining[i] - own_room[i]);
  const int tall_cap = h > 1 ? h : 1;
  for (int a0 = 0; a0 <= empty_tall; ++a0) {
    for (int a1 = 0; a0 + a1 <= empty_tall; ++a1) {
      const int a2 = empty_tall - a0 - a1;
      const int need = std::max(0, deficit[0] - tall_cap * a0) + std::max(0, deficit[1] - tall_cap * a1) +
                       std::max(0, deficit[2] - tall_cap * a2);
      if (need <= empty_short) return true;
    }
  }
  return false;
}

// Segregation: empty surfaces are assigned wholesale to colours.
inline bool segregation_completable(const TaskInstance& task, const SceneState& state) {
  const auto remaining = unplaced_color_counts(state);
  std::array<int, 3> own_room{};
  std::vector<int> empty_rooms;
  for (const auto& s : state.surfaces) {
    int room = 0;
    std::optional<Color> color;
    for (const auto& c : s.cells) {
      room += column_cap(task, state, c) - c.height();
      if (!c.occupants.empty()) color = box_color(state, c.occupants.front());
    }
    if (color) {
      own_room[static_cast<std::size_t>(*color)] += room;
    } else {
      empty_rooms.push_back(room);
    }
  }
  const std::size_t k = empty_rooms.size();
  std::size_t combos = 1;
  for (std::size_t i = 0; i < k; ++i) combos *= 3;
  for (std::size_t code = 0; code < combos; ++code) {
    std::array<int, 3> room = own_room;
    std::size_t x = code;
    for (std::size_t i = 0; i < k; ++i, x /= 3) room[x % 3] += empty_rooms[i];
    if (room[0] >= remaining[0] && room[1] >= remaining[1] && room[2] >= remaining[2]) return true;
  }
  return false;
}

// Accessibility: a column ends as [non-priority run][priority run]; a
// priority run may only exceed one box when nothing non-priority is below it.
// Minimises the priority capacity lost while seating all non-priority boxes.
inline bool accessibility_completable(const TaskInstance& task, const SceneState& state) {
  const Color prio = *task.params.priority_color;
  int prio_left = 0;
  int other_left = 0;
  for (const auto& b : state.boxes)
    if (!b.placed()) (b.color == prio ? prio_left : other_left)++;

  struct Option {
    int room;
    bool empty;
  };
  std::vector<Option> flexible;  // clean or empty columns
  int prio_capacity = 0;  // with no non-priority boxes placed
  for (const auto* c : state.all_cells()) {
    const int cap = column_cap(task, state, *c);
    const int room = cap - c->height();
    if (room <= 0) continue;
    if (c->occupants.empty()) {
      flexible.push_back({room, true});
      prio_capacity += room;
      continue;
    }
    bool any_prio = false;
    bool all_prio = true;
    for (EntityId id : c->occupants) {
      const bool p = box_color(state, id) == prio;
      any_prio = any_prio || p;
      all_prio = all_prio && p;
    }
    if (all_prio) {
      prio_capacity += room;
    } else if (!any_prio) {
      flexible.push_back({room, false});
      prio_capacity += 1;
    }
    // mixed column with a priority top: closed
  }
  // cost(k): priority capacity lost when k non-priority boxes go to a column.
  auto cost = [](const Option& o, int k) {
    if (k == 0) return 0;
    if (o.empty) return o.room - (k < o.room ? 1 : 0);
    return k == o.room ? 1 : 0;
  };
  constexpr int kInf = 1 << 20;
  std::vector<int> best(static_cast<std::size_t>(other_left) + 1, kInf);
  best[0] = 0;
  for (const auto& o : flexible) {
    std::vector<int> next(best.size(), kInf);
    for (int used = 0; used <= other_left; ++used) {
      if (best[static_cast<std::size_t>(used)] >= kInf) continue;
      for (int k = 0; k <= o.room && used + k <= other_left; ++k) {
        auto& slot = next[static_cast<std::size_t>(used + k)];
        slot = std::min(slot, best[static_cast<std::size_t>(used)] + cost(o, k));
      }
    }
    best = std::move(next);
  }
  if (best[static_cast<std::size_t>(other_left)] >= kInf) return false;
  return prio_capacity - best[static_cast<std::size_t>(other_left)] >= prio_left;
}

inline bool priority_column_ok(const SceneState& state, const CellSlot& c, Color prio) {
  bool all_prio = true;
  for (EntityId id : c.occupants) all_prio = all_prio && box_color(state, id) == prio;
  if (all_prio) return true;
  for (std::size_t i = 0; i + 1 < c.occupants.size(); ++i)
    if (box_color(state, c.occupants[i]) == prio) return false;
  return true;
}

}  // namespace detail

/// True when some sequence of valid actions can still reach the goal.
inline bool completable(const TaskInstance& task, const SceneState& state) {
  int room = 0;
  for (const auto* c : state.all_cells()) room += std::max(0, column_cap(task, state, *c) - c->height());
  if (room < static_cast<int>(unplaced_boxes(state).size())) return false;
  switch (task.variant) {
    case Variant::kHomogeneousStacks: return detail::homogeneous_completable(task, state);
    case Variant::kBoxTypeSegregation: return detail::segregation_completable(task, state);
    case Variant::kBoxAccessibility: return detail::accessibility_completable(task, state);
    default: return true;
  }
}

struct Verdict {
  bool valid = true;
  std::vector<std::string> violations;
  bool operator==(const Verdict&) const = default;
};

namespace detail {

struct OrderKey {
  std::int64_t x;
  std::int64_t y;
  EntityId surface;
  int layer;
  int cell;
  auto operator<=>(const OrderKey&) const = default;
};

inline OrderKey order_key(const CellSlot& c, Direction dir) {
  const auto q = [](double v) { return static_cast<std::int64_t>(std::llround(v * 1e6)); };
  const std::int64_t x = q(c.center.x);
  return {dir == Direction::kLeftToRight ? x : -x, q(c.center.y), c.surface, c.layer, c.cell_index};
}

}  // namespace detail

/// The frontier column for placement-ordering: extreme world-x among columns with room.
inline std::optional<ColumnRef> ordering_frontier(const TaskInstance& task, const SceneState& state) {
  const Direction dir = task.params.direction.value_or(Direction::kLeftToRight);
  std::optional<ColumnRef> best;
  std::optional<detail::OrderKey> best_key;
  for (const auto* c : state.all_cells()) {
    if (!detail::has_room(task, state, *c)) continue;
    const auto key = detail::order_key(*c, dir);
    if (!best_key || key < *best_key) {
      best_key = key;
      best = c->column();
    }
  }
  return best;
}

/// Checks one action against the structural rules and the variant's rule.
inline Verdict action_valid(const TaskInstance& task, const SceneState& state, const Action& action) {
  Verdict v;
  auto fail = [&](std::string name) {
    v.valid = false;
    v.violations.push_back(std::move(name));
  };

  const BoxItem* pick = state.find_box(action.pickup);
  if (!pick) {
    fail("pickup-not-a-box");
    return v;
  }
  if (pick->placed()) fail("pickup-not-unplaced");
  if (!is_accessible(state, action.pickup)) fail("pickup-inaccessible");
  if (const auto* top = std::get_if<StackTop>(&action.putdown); top && top->base == action.pickup) {
    fail("pickup-equals-support");
    return v;
  }
  ColumnRef column;
  try {
    column = resolve_putdown(state, action.putdown);
  } catch (const Error&) {
    fail("putdown-invalid");
    return v;
  }
  if (pick->placed() && pick->placement->column == column) {
    fail("pickup-equals-support");
    return v;
  }
  const CellSlot& target = *state.find_cell(column);
  const Surface& surface = *state.find_surface(column.surface);
  const int cap = column_cap(task, state, target);
  if (target.height() >= cap) fail("height-limit");
  if (!v.valid) return v;

  const Color color = pick->color;
  const auto rule = std::string(to_string(task.variant));
  switch (task.variant) {
    case Variant::kBasicPlacement:
      break;
    case Variant::kBoxTypePriority: {
      const Color prio = *task.params.priority_color;
      if (color != prio && detail::unplaced_color_counts(state)[static_cast<std::size_t>(prio)] > 0) fail(rule);
      break;
    }
    case Variant::kShelfPriority:
    case Variant::kPalletPriority: {
      const bool want_shelf = task.variant == Variant::kShelfPriority;
      if (is_shelf(surface.kind) != want_shelf) {
        bool open = false;
        for (const auto& s : state.surfaces)
          if (is_shelf(s.kind) == want_shelf)
            for (const auto& c : s.cells) open = open || detail::has_room(task, state, c);
        if (open) fail(rule);
      }
      break;
    }
    case Variant::kSizePriority: {
      const bool want_small = *task.params.priority_size == SizeClass::kSmall;
      if (is_small(surface.kind) != want_small) {
        bool open = false;
        for (const auto& s : state.surfaces)
          if (is_small(s.kind) == want_small)
            for (const auto& c : s.cells) open = open || detail::has_room(task, state, c);
        if (open) fail(rule);
      }
      break;
    }
    case Variant::kPlacementOrdering: {
      if (ordering_frontier(task, state) != column) fail(rule);
      break;
    }
    case Variant::kAvoidStacking: {
      if (target.height() > 0) {
        bool empty_exists = false;
        for (const auto* c : state.all_cells()) empty_exists = empty_exists || c->occupants.empty();
        if (empty_exists) fail(rule);
      }
      break;
    }
    case Variant::kHomogeneousStacks: {
      for (EntityId id : target.occupants)
        if (box_color(state, id) != color) {
          fail(rule);
          break;
        }
      break;
    }
    case Variant::kBoxTypeSegregation: {
      bool mixed = false;
      for (const auto& c : surface.cells)
        for (EntityId id : c.occupants) mixed = mixed || box_color(state, id) != color;
      if (mixed) fail(rule);
      break;
    }
    case Variant::kFinishStackFirst: {
      if (state.last_extended) {
        const CellSlot* current = state.find_cell(*state.last_extended);
        if (current && current->height() >= 1 && current->height() < column_cap(task, state, *current) &&
            current->column() != column)
          fail(rule);
      }
      break;
    }
    case Variant::kBoxAccessibility: {
      CellSlot after = target;
      after.occupants.push_back(action.pickup);
      if (!detail::priority_column_ok(state, after, *task.params.priority_color)) fail(rule);
      break;
    }
  }
  if (!v.valid) return v;

  if (task.variant == Variant::kHomogeneousStacks || task.variant == Variant::kBoxTypeSegregation ||
      task.variant == Variant::kBoxAccessibility) {
    // Cheap post-state: only the target column changes for an unplaced pickup.
    SceneState after = apply_action(state, action, ExecutionMode::kSnapToTarget);
    if (!completable(task, after)) fail("completability");
  }
  return v;
}

/// True iff every box is placed and every final-configuration clause holds.
inline bool goal_satisfied(const TaskInstance& task, const SceneState& state) {
  if (!unplaced_boxes(state).empty()) return false;
  for (const auto* c : state.all_cells())
    if (c->height() > column_cap(task, state, *c)) return false;
  switch (task.variant) {
    case Variant::kHomogeneousStacks:
      for (const auto* c : state.all_cells())
        for (EntityId id : c->occupants)
          if (box_color(state, id) != box_color(state, c->occupants.front())) return false;
      return true;
    case Variant::kBoxTypeSegregation:
      for (const auto& s : state.surfaces) {
        std::optional<Color> seen;
        for (const auto& c : s.cells)
          for (EntityId id : c.occupants) {
            const Color col = box_color(state, id);
            if (seen && *seen != col) return false;
            seen = col;
          }
      }
      return true;
    case Variant::kBoxAccessibility:
      for (const auto* c : state.all_cells())
        if (!detail::priority_column_ok(state, *c, *task.params.priority_color)) return false;
      return true;
    default:
      return true;
  }
}

}  // namespace ramp3d
