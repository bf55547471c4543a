#pragma once

// Closed-loop episodes, teacher-forced one-step evaluation, suite runs and
// replay of recorded episodes.

#include <algorithm>
#include <atomic>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "error.hpp"
#include "oracle.hpp"
#include "pair_select.hpp"
#include "perception.hpp"
#include "policy.hpp"
#include "scenario.hpp"
#include "tasks.hpp"

namespace ramp3d {

enum class Outcome : std::uint8_t { kSuccess, kInvalidAction, kWrongDone, kStepLimit, kDecodeFailure };

constexpr std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::kSuccess: return "success";
    case Outcome::kInvalidAction: return "invalid-action";
    case Outcome::kWrongDone: return "wrong-done";
    case Outcome::kStepLimit: return "step-limit";
    case Outcome::kDecodeFailure: return "decode-failure";
  }
  return "?";
}

inline Outcome outcome_from_string(std::string_view s) {
  for (Outcome o : {Outcome::kSuccess, Outcome::kInvalidAction, Outcome::kWrongDone, Outcome::kStepLimit,
                    Outcome::kDecodeFailure})
    if (to_string(o) == s) return o;
  throw Error(ErrorCode::kSchemaMismatch, "unknown outcome '" + std::string(s) + "'");
}

struct HarnessConfig {
  ExecutionMode mode = ExecutionMode::kSnapToTarget;
  double resolution = 0.05;
  double floor_resolution = 0.25;
  DbscanConfig dbscan;
  PairSelectConfig pair;
  double done_threshold = 0.5;
  int step_slack = 5;
};

/// Cloud seed for a given step of an episode.
inline std::uint64_t step_cloud_seed(std::uint64_t scenario_seed, int step) {
  return derive_seed(scenario_seed, 0xC10D, static_cast<std::uint64_t>(step));
}

inline LabeledPointCloud observe(const SceneState& state, const HarnessConfig& cfg, std::uint64_t scenario_seed,
                                 int step) {
  return synthesize_cloud(state, CloudConfig{cfg.resolution, cfg.floor_resolution, step_cloud_seed(scenario_seed, step)});
}

/// Clouds observed during one scenario, by step. A cloud depends only on the
/// state and the step seed, so a later pass over the same scenario can reuse
/// it whenever it reaches an equal state at the same step.
class ObservationCache {
 public:
  const LabeledPointCloud& get(const SceneState& state, const HarnessConfig& cfg, std::uint64_t scenario_seed,
                               int step) {
    const auto k = static_cast<std::size_t>(step);
    if (k >= entries_.size()) entries_.resize(k + 1);
    auto& e = entries_[k];
    if (!e || e->state != state || e->resolution != cfg.resolution || e->floor_resolution != cfg.floor_resolution)
      e = Entry{state, cfg.resolution, cfg.floor_resolution, observe(state, cfg, scenario_seed, step)};
    return e->cloud;
  }

 private:
  struct Entry {
    SceneState state;
    double resolution, floor_resolution;
    LabeledPointCloud cloud;
  };
  std::vector<std::optional<Entry>> entries_;
};

struct DecodedAction {
  std::optional<Action> action;
  std::optional<Vec3> point;  // centroid of the filtered target mask
  EntityId pick_instance = 0;
  EntityId target_instance = 0;
  bool decode_failure = false;
  std::string failure;  // why no action could be formed
};

/// Masks to an action: DBSCAN-filter both masks, pick = best-covered
/// instance, target = best-covered instance (snap) or the snapped centroid
/// (free-form).
inline DecodedAction decode_masks(const SceneState& state, const LabeledPointCloud& cloud, const ActionMaskPair& masks,
                                  ExecutionMode mode, const DbscanConfig& dbscan = {}) {
  if (masks.pick.size() != cloud.size() || masks.target.size() != cloud.size())
    throw Error(ErrorCode::kProtocolViolation, "mask size differs from cloud");
  DecodedAction out;
  const Mask pick = dbscan_filter(cloud, masks.pick, dbscan);
  const Mask target = dbscan_filter(cloud, masks.target, dbscan);
  const bool pick_empty = popcount(pick) == 0;
  if (pick_empty || popcount(target) == 0) {
    out.decode_failure = true;
    out.failure = pick_empty ? "pick-mask-empty" : "target-mask-empty";
    return out;
  }
  out.pick_instance = mask_to_instance(cloud, pick).instance;
  out.target_instance = mask_to_instance(cloud, target).instance;
  out.point = freeform_putdown_point(cloud, target);

  std::optional<PutdownSlot> slot;
  if (mode == ExecutionMode::kSnapToTarget) {
    switch (state.kind_of(out.target_instance)) {
      case EntityKind::kCell: slot = FreeCell{state.find_cell_by_id(out.target_instance)->column()}; break;
      case EntityKind::kBox: slot = StackTop{out.target_instance}; break;
      default: out.failure = "putdown-not-a-slot"; return out;
    }
  } else {
    const auto col = snap_to_any_surface(state, *out.point);
    if (!col) {
      out.failure = "snap-out-of-tolerance";
      return out;
    }
    const CellSlot* cell = state.find_cell(*col);
    if (cell->occupants.empty()) slot = FreeCell{*col};
    else slot = StackTop{cell->occupants.back()};
  }
  out.action = Action{out.pick_instance, *slot};
  return out;
}

struct StepRecord {
  int step = 0;
  std::string cloud_digest;
  ActionMaskPair masks;
  bool done_signaled = false;
  DecodedAction decoded;
  bool valid = false;
  std::vector<std::string> violations;
  std::string state_digest;  // after the step
};

struct EpisodeRecord {
  std::string episode_id;
  Scenario scenario;
  ExecutionMode mode = ExecutionMode::kSnapToTarget;
  std::string policy;
  bool privileged = false;
  HarnessConfig config;
  int step_cap = 0;
  std::vector<StepRecord> steps;
  Outcome outcome = Outcome::kStepLimit;
  int actions = 0;  // executed placements
  std::string final_digest;

  std::size_t bucket() const { return bucket_index(static_cast<int>(scenario.scene.boxes.size())); }
};

namespace detail {

// Decodes, validates and executes one mask pair. Returns the next state when
// the action went through.
inline std::optional<SceneState> execute_step(const TaskInstance& task, const SceneState& state,
                                              const LabeledPointCloud& cloud, StepRecord& rec, ExecutionMode mode,
                                              const DbscanConfig& dbscan) {
  rec.decoded = decode_masks(state, cloud, rec.masks, mode, dbscan);
  if (rec.decoded.decode_failure) {
    rec.violations = {rec.decoded.failure};
    return std::nullopt;
  }
  if (!rec.decoded.action) {
    rec.violations = {rec.decoded.failure};
    return std::nullopt;
  }
  const Verdict v = action_valid(task, state, *rec.decoded.action);
  rec.valid = v.valid;
  rec.violations = v.violations;
  if (!v.valid) return std::nullopt;
  try {
    return apply_action(state, *rec.decoded.action, mode, rec.decoded.point);
  } catch (const Error& e) {
    rec.valid = false;
    rec.violations = {std::string(to_string(e.code()))};
    return std::nullopt;
  }
}

}  // namespace detail

inline EpisodeRecord run_episode(const Scenario& sc, Policy& policy, const HarnessConfig& cfg,
                                 const std::string& episode_id = "episode", ObservationCache* cache = nullptr) {
  ObservationCache local;
  if (!cache) cache = &local;
  EpisodeRecord rec;
  rec.episode_id = episode_id;
  rec.scenario = sc;
  rec.mode = cfg.mode;
  rec.policy = policy.name();
  rec.privileged = policy.privileged();
  rec.config = cfg;
  rec.step_cap = static_cast<int>(sc.scene.boxes.size()) + cfg.step_slack;
  const std::string goal = training_text(sc.task);
  SceneState state = sc.scene;
  for (int step = 0;; ++step) {
    if (step >= rec.step_cap) {
      rec.outcome = Outcome::kStepLimit;
      break;
    }
    const LabeledPointCloud& cloud = cache->get(state, cfg, sc.seed, step);
    Observation obs{episode_id, sc.seed, step, goal, &cloud, &state, &sc.task};
    StepRecord sr;
    sr.step = step;
    sr.cloud_digest = cloud_digest(cloud);
    sr.masks = resolve_response(policy.act(obs), cfg.pair);
    sr.done_signaled = decide_done(sr.masks.done_probability, cfg.done_threshold);
    if (sr.done_signaled) {
      sr.valid = goal_satisfied(sc.task, state);
      rec.outcome = sr.valid ? Outcome::kSuccess : Outcome::kWrongDone;
      sr.state_digest = scene_digest(state);
      rec.steps.push_back(std::move(sr));
      break;
    }
    auto next = detail::execute_step(sc.task, state, cloud, sr, cfg.mode, cfg.dbscan);
    if (next) {
      state = std::move(*next);
      ++rec.actions;
    }
    sr.state_digest = scene_digest(state);
    const bool failed_decode = sr.decoded.decode_failure;
    rec.steps.push_back(std::move(sr));
    if (!next) {
      rec.outcome = failed_decode ? Outcome::kDecodeFailure : Outcome::kInvalidAction;
      break;
    }
  }
  rec.final_digest = scene_digest(state);
  return rec;
}

// ---------------------------------------------------------------- one step

enum class TargetKind : std::uint8_t { kPalletCell, kShelfCell, kBox };
inline constexpr std::array<TargetKind, 3> kAllTargetKinds{TargetKind::kPalletCell, TargetKind::kShelfCell,
                                                          TargetKind::kBox};

constexpr std::string_view to_string(TargetKind k) {
  switch (k) {
    case TargetKind::kPalletCell: return "pallet-cell";
    case TargetKind::kShelfCell: return "shelf-cell";
    case TargetKind::kBox: return "box";
  }
  return "?";
}

inline TargetKind target_kind(const SceneState& state, const PutdownSlot& slot) {
  if (std::holds_alternative<StackTop>(slot)) return TargetKind::kBox;
  const Surface* s = state.find_surface(std::get<FreeCell>(slot).column.surface);
  return is_pallet(s->kind) ? TargetKind::kPalletCell : TargetKind::kShelfCell;
}

/// One prediction on a state from the oracle trajectory.
struct OneStepRecord {
  Variant variant = Variant::kBasicPlacement;
  std::size_t bucket = 0;
  ExecutionMode mode = ExecutionMode::kSnapToTarget;
  int step = 0;
  bool valid = false;
  bool decoded_gt_action = false;  // decoded action equals the oracle's
  TargetKind target_kind = TargetKind::kPalletCell;  // of the ground-truth target
  std::optional<double> placement_error;  // valid predictions only
  double pick_iou = 0.0;
  double target_iou = 0.0;
};

namespace detail {

inline double iou_or_zero(const Mask& pred, const Mask& gt) {
  if (popcount(pred) == 0 && popcount(gt) == 0) return 1.0;
  return mask_iou(pred, gt);
}

}  // namespace detail

/// Teacher forcing: the policy is queried on every state of the oracle
/// trajectory, independent of its own earlier predictions.
inline std::vector<OneStepRecord> evaluate_one_step(const Scenario& sc, Policy& policy, const HarnessConfig& cfg,
                                                    const std::string& episode_id = "episode",
                                                    ObservationCache* cache = nullptr) {
  ObservationCache local;
  if (!cache) cache = &local;
  std::vector<OneStepRecord> out;
  const std::string goal = training_text(sc.task);
  const auto trajectory = oracle_rollout(sc.task, sc.scene);
  for (std::size_t t = 0; t < trajectory.size(); ++t) {
    const auto& [state, choice] = trajectory[t];
    const int step = static_cast<int>(t);
    const LabeledPointCloud& cloud = cache->get(state, cfg, sc.seed, step);
    Observation obs{episode_id, sc.seed, step, goal, &cloud, &state, &sc.task};
    const ActionMaskPair pred = resolve_response(policy.act(obs), cfg.pair);
    const ActionMaskPair gt = gt_action_masks(cloud, state, choice.action);
    OneStepRecord r;
    r.variant = sc.task.variant;
    r.bucket = bucket_index(static_cast<int>(state.boxes.size()));
    r.mode = cfg.mode;
    r.step = step;
    r.target_kind = target_kind(state, choice.action.putdown);
    r.pick_iou = detail::iou_or_zero(pred.pick, gt.pick);
    r.target_iou = detail::iou_or_zero(pred.target, gt.target);
    const DecodedAction d = decode_masks(state, cloud, pred, cfg.mode, cfg.dbscan);
    if (d.action) {
      r.valid = action_valid(sc.task, state, *d.action).valid;
      r.decoded_gt_action = *d.action == choice.action;
      if (r.valid) r.placement_error = distance(*d.point, target_center(state, choice.action.putdown));
    }
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------- suite

using PolicyFactory = std::function<std::unique_ptr<Policy>()>;

struct SuiteConfig {
  std::uint64_t master_seed = 0;
  int episodes_per_variant = 200;
  std::vector<Variant> variants{kAllVariants.begin(), kAllVariants.end()};
  std::vector<ExecutionMode> modes{ExecutionMode::kSnapToTarget};
  TemplateSet templates = TemplateSet::kTraining;
  HarnessConfig harness;
  bool closed_loop = true;
  bool one_step = true;
  int workers = 1;
};

struct SuiteResult {
  std::string policy;
  bool privileged = false;
  std::vector<EpisodeRecord> episodes;
  std::vector<OneStepRecord> one_step;
};

/// Seed and bucket of the i-th scenario of a variant. Buckets cycle so each
/// holds a third of the scenarios.
inline Scenario suite_scenario(const SuiteConfig& cfg, Variant v, int i) {
  const std::uint64_t seed =
      derive_seed(cfg.master_seed, static_cast<std::uint64_t>(v), static_cast<std::uint64_t>(i));
  return sample_scenario(v, kBoxBuckets[static_cast<std::size_t>(i) % kBoxBuckets.size()], seed, cfg.templates);
}

inline std::string episode_id_for(Variant v, int i) {
  return std::string(to_string(v)) + "-" + std::to_string(i);
}

/// Runs every (variant, scenario, mode) job. Each worker owns one policy
/// instance; results land in job order, so the output does not depend on the
/// worker count.
inline SuiteResult evaluate_suite(const SuiteConfig& cfg, const PolicyFactory& factory) {
  struct Job {
    Variant variant;
    int index;
  };
  std::vector<Job> jobs;
  for (Variant v : cfg.variants)
    for (int i = 0; i < cfg.episodes_per_variant; ++i) jobs.push_back({v, i});
  const std::size_t nm = cfg.modes.size();
  std::vector<std::vector<EpisodeRecord>> episodes(jobs.size());
  std::vector<std::vector<OneStepRecord>> one_step(jobs.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::string> errors(static_cast<std::size_t>(std::max(cfg.workers, 1)));
  std::vector<std::optional<ErrorCode>> codes(errors.size());
  SuiteResult result;

  auto work = [&](std::size_t w) {
    try {
      auto policy = factory();
      if (w == 0) {
        result.policy = policy->name();
        result.privileged = policy->privileged();
      }
      for (std::size_t j; (j = next.fetch_add(1)) < jobs.size();) {
        const Scenario sc = suite_scenario(cfg, jobs[j].variant, jobs[j].index);
        const std::string id = episode_id_for(jobs[j].variant, jobs[j].index);
        ObservationCache cache;
        for (std::size_t m = 0; m < nm; ++m) {
          HarnessConfig h = cfg.harness;
          h.mode = cfg.modes[m];
          if (cfg.closed_loop) episodes[j].push_back(run_episode(sc, *policy, h, id, &cache));
          if (cfg.one_step) {
            auto recs = evaluate_one_step(sc, *policy, h, id, &cache);
            one_step[j].insert(one_step[j].end(), recs.begin(), recs.end());
          }
        }
      }
    } catch (const Error& e) {
      errors[w] = e.what();
      codes[w] = e.code();
      next.store(jobs.size());
    } catch (const std::exception& e) {
      errors[w] = e.what();
      next.store(jobs.size());
    }
  };
  const std::size_t workers = std::min<std::size_t>(errors.size(), std::max<std::size_t>(jobs.size(), 1));
  std::vector<std::thread> threads;
  for (std::size_t w = 1; w < workers; ++w) threads.emplace_back(work, w);
  work(0);
  for (auto& t : threads) t.join();
  for (std::size_t w = 0; w < errors.size(); ++w)
    if (!errors[w].empty()) {
      if (codes[w]) throw Error(*codes[w], errors[w]);
      throw std::runtime_error(errors[w]);
    }
  for (auto& e : episodes) std::move(e.begin(), e.end(), std::back_inserter(result.episodes));
  for (auto& o : one_step) result.one_step.insert(result.one_step.end(), o.begin(), o.end());
  return result;
}

// ---------------------------------------------------------------- records

inline Json to_json(const Vec3* p) { return p ? to_json(*p) : Json(nullptr); }

inline Json to_json(const StepRecord& s) {
  Json j{{"step", s.step},
         {"cloud_digest", s.cloud_digest},
         {"pick_mask", rle_to_json(s.masks.pick)},
         {"target_mask", rle_to_json(s.masks.target)},
         {"done_probability", s.masks.done_probability},
         {"done_signaled", s.done_signaled},
         {"valid", s.valid},
         {"violations", s.violations},
         {"state_digest", s.state_digest}};
  if (!s.done_signaled) {
    j["decoded"] = Json{{"action", s.decoded.action ? to_json(*s.decoded.action) : Json(nullptr)},
                        {"point", s.decoded.point ? to_json(*s.decoded.point) : Json(nullptr)},
                        {"pick_instance", s.decoded.pick_instance},
                        {"target_instance", s.decoded.target_instance},
                        {"decode_failure", s.decoded.decode_failure}};
  }
  return j;
}

inline Json to_json(const HarnessConfig& c) {
  return Json{{"mode", to_string(c.mode)},
              {"resolution", c.resolution},
              {"floor_resolution", c.floor_resolution},
              {"dbscan_eps", c.dbscan.eps},
              {"dbscan_min_pts", c.dbscan.min_pts},
              {"pair_top_k", c.pair.top_k},
              {"pair_lambda", c.pair.lambda},
              {"done_threshold", c.done_threshold},
              {"step_slack", c.step_slack}};
}

inline HarnessConfig harness_config_from_json(const Json& j) {
  HarnessConfig c;
  c.mode = execution_mode_from_string(j.at("mode").get<std::string>());
  c.resolution = j.at("resolution").get<double>();
  c.floor_resolution = j.at("floor_resolution").get<double>();
  c.dbscan.eps = j.at("dbscan_eps").get<double>();
  c.dbscan.min_pts = j.at("dbscan_min_pts").get<int>();
  c.pair.top_k = j.at("pair_top_k").get<int>();
  c.pair.lambda = j.at("pair_lambda").get<double>();
  c.done_threshold = j.at("done_threshold").get<double>();
  c.step_slack = j.at("step_slack").get<int>();
  return c;
}

inline constexpr std::string_view kEpisodeSchema = "ramp3d.episode/1";

inline Json to_json(const EpisodeRecord& r) {
  Json steps = Json::array();
  for (const auto& s : r.steps) steps.push_back(to_json(s));
  return Json{{"schema_version", kEpisodeSchema},
              {"episode_id", r.episode_id},
              {"scenario", to_json(r.scenario)},
              {"variant", to_string(r.scenario.task.variant)},
              {"num_boxes", r.scenario.scene.boxes.size()},
              {"bucket", kBoxBuckets[r.bucket()].label()},
              {"mode", to_string(r.mode)},
              {"policy", r.policy},
              {"privileged", r.privileged},
              {"harness", to_json(r.config)},
              {"step_cap", r.step_cap},
              {"steps", std::move(steps)},
              {"outcome", to_string(r.outcome)},
              {"actions", r.actions},
              {"final_digest", r.final_digest}};
}

struct ReplayResult {
  bool verified = true;
  std::vector<std::string> mismatches;
};

/// Re-executes a recorded episode from its scenario and stored masks and
/// checks every cloud digest, decoded action, verdict and state digest.
inline ReplayResult replay_episode(const Json& record) {
  if (record.value("schema_version", "") != kEpisodeSchema)
    throw Error(ErrorCode::kSchemaMismatch, "not an episode record");
  ReplayResult out;
  auto mismatch = [&](const std::string& what) {
    out.verified = false;
    out.mismatches.push_back(what);
  };
  const Scenario sc = scenario_from_json(record.at("scenario"));
  const HarnessConfig cfg = harness_config_from_json(record.at("harness"));
  SceneState state = sc.scene;
  std::optional<Outcome> outcome;
  int actions = 0;
  for (const auto& js : record.at("steps")) {
    const int step = js.at("step").get<int>();
    const std::string where = "step " + std::to_string(step) + ": ";
    const LabeledPointCloud cloud = observe(state, cfg, sc.seed, step);
    if (cloud_digest(cloud) != js.at("cloud_digest").get<std::string>()) mismatch(where + "cloud digest");
    StepRecord sr;
    sr.masks = {rle_from_json(js.at("pick_mask")), rle_from_json(js.at("target_mask")),
                js.at("done_probability").get<double>()};
    if (decide_done(sr.masks.done_probability, cfg.done_threshold)) {
      outcome = goal_satisfied(sc.task, state) ? Outcome::kSuccess : Outcome::kWrongDone;
      if (scene_digest(state) != js.at("state_digest").get<std::string>()) mismatch(where + "state digest");
      break;
    }
    auto next = detail::execute_step(sc.task, state, cloud, sr, cfg.mode, cfg.dbscan);
    const Json& dec = js.at("decoded");
    const Json action_json = sr.decoded.action ? to_json(*sr.decoded.action) : Json(nullptr);
    if (canonical_dump(action_json) != canonical_dump(dec.at("action"))) mismatch(where + "decoded action");
    if (sr.valid != js.at("valid").get<bool>()) mismatch(where + "validity");
    if (next) {
      state = std::move(*next);
      ++actions;
    }
    if (scene_digest(state) != js.at("state_digest").get<std::string>()) mismatch(where + "state digest");
    if (!next) {
      outcome = sr.decoded.decode_failure ? Outcome::kDecodeFailure : Outcome::kInvalidAction;
      break;
    }
  }
  if (!outcome) outcome = Outcome::kStepLimit;
  if (to_string(*outcome) != record.at("outcome").get<std::string>()) mismatch("outcome");
  if (actions != record.at("actions").get<int>()) mismatch("action count");
  if (scene_digest(state) != record.at("final_digest").get<std::string>()) mismatch("final digest");
  return out;
}

}  // namespace ramp3d
