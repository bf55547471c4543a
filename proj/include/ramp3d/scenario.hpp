#pragma once

// Seeded (task, scene) pairs for evaluation and dataset generation. The
// sampler only returns pairs whose goal is reachable.

#include <array>
#include <cstdint>
#include <vector>

#include "error.hpp"
#include "rng.hpp"
#include "scene_gen.hpp"
#include "tasks.hpp"

namespace ramp3d {

struct BoxBucket {
  int lo = 1;
  int hi = 10;
  std::string label() const { return std::to_string(lo) + "-" + std::to_string(hi); }
  bool contains(int n) const { return n >= lo && n <= hi; }
};

inline constexpr std::array<BoxBucket, 3> kBoxBuckets{BoxBucket{1, 10}, BoxBucket{11, 20}, BoxBucket{21, 30}};

inline std::size_t bucket_index(int num_boxes) {
  for (std::size_t i = 0; i < kBoxBuckets.size(); ++i)
    if (kBoxBuckets[i].contains(num_boxes)) return i;
  throw Error(ErrorCode::kInvalidArgument, "box count outside 1-30");
}

struct Scenario {
  std::uint64_t seed = 0;
  TaskInstance task;
  SceneConfig config;
  SceneState scene;
};

inline Json to_json(const Scenario& s) {
  return Json{{"seed", s.seed}, {"task", to_json(s.task)}, {"scene_config", to_json(s.config)}};
}

namespace detail {

inline std::vector<std::vector<SurfaceKind>> surface_layouts() {
  std::vector<std::vector<SurfaceKind>> out;
  for (int ps = 0; ps <= 3; ++ps)
    for (int pl = 0; ps + pl <= 3; ++pl)
      for (int ss = 0; ss <= 2; ++ss)
        for (int sl = 0; ss + sl <= 2; ++sl) {
          if (ps + pl + ss + sl == 0) continue;
          std::vector<SurfaceKind> kinds;
          kinds.insert(kinds.end(), static_cast<std::size_t>(ps), SurfaceKind::kPalletSmall);
          kinds.insert(kinds.end(), static_cast<std::size_t>(pl), SurfaceKind::kPalletLarge);
          kinds.insert(kinds.end(), static_cast<std::size_t>(ss), SurfaceKind::kShelfSmall);
          kinds.insert(kinds.end(), static_cast<std::size_t>(sl), SurfaceKind::kShelfLarge);
          out.push_back(std::move(kinds));
        }
  return out;
}

}  // namespace detail

/// Per attempt k (stream derive_seed(seed, k)): task seed, box count in the
/// bucket, a surface layout drawn uniformly among layouts with enough
/// capacity under the task's height limit, distractor count, scene seed.
/// Attempts repeat until the scene is completable under the task.
inline Scenario sample_scenario(Variant variant, const BoxBucket& bucket, std::uint64_t seed,
                                TemplateSet templates = TemplateSet::kTraining, int max_attempts = 1000) {
  static const auto layouts = detail::surface_layouts();
  const WarehouseGeometry geometry;
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
    Scenario sc;
    sc.seed = seed;
    sc.task = sample_task(variant, rng.bits(), templates);
    const int n = static_cast<int>(rng.range(bucket.lo, bucket.hi));
    std::vector<const std::vector<SurfaceKind>*> fitting;
    for (const auto& layout : layouts) {
      int cap = 0;
      for (SurfaceKind k : layout) cap += surface_capacity(geometry, k, sc.task.params.max_height);
      if (cap >= n) fitting.push_back(&layout);
    }
    if (fitting.empty()) continue;
    const auto& layout = *fitting[rng.below(fitting.size())];
    sc.config.num_boxes = n;
    sc.config.surface_kinds = layout;
    sc.config.num_distractors = static_cast<int>(rng.range(0, 4));
    sc.config.capacity_height = sc.task.params.max_height;
    sc.config.seed = rng.bits();
    sc.config.geometry = geometry;
    try {
      sc.scene = generate_scene(sc.config);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kCapacityInfeasible || e.code() == ErrorCode::kPlacementExhausted) continue;
      throw;
    }
    if (!completable(sc.task, sc.scene)) continue;
    return sc;
  }
  throw Error(ErrorCode::kCapacityInfeasible, "no completable scenario found");
}

/// Rebuilds a scenario from its recorded task and scene config.
inline Scenario scenario_from_json(const Json& j) {
  Scenario sc;
  sc.seed = j.at("seed").get<std::uint64_t>();
  sc.task = task_from_json(j.at("task"));
  sc.config = scene_config_from_json(j.at("scene_config"));
  sc.scene = generate_scene(sc.config);
  return sc;
}

}  // namespace ramp3d
