#pragma once

// Policies answer one observation with an action-mask pair or with raw
// query-head outputs. Built-ins: oracle, noisy oracle, random-valid
// (privileged, reads ground truth), and external subprocesses speaking NDJSON.

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "error.hpp"
#include "oracle.hpp"
#include "pair_select.hpp"
#include "perception.hpp"
#include "rng.hpp"
#include "tasks.hpp"

namespace ramp3d {

struct Observation {
  std::string episode_id;
  std::uint64_t episode_seed = 0;
  int step = 0;
  std::string goal_text;
  const LabeledPointCloud* cloud = nullptr;
  // Ground truth; only privileged policies may look.
  const SceneState* state = nullptr;
  const TaskInstance* task = nullptr;
};

struct PolicyResponse {
  std::optional<ActionMaskPair> masks;
  std::optional<QueryOutputs> queries;
};

/// Reduces a response to one mask pair, running pair selection on query outputs.
inline ActionMaskPair resolve_response(const PolicyResponse& r, const PairSelectConfig& cfg = {}) {
  if (r.masks) return *r.masks;
  if (!r.queries) throw Error(ErrorCode::kProtocolViolation, "response carries neither masks nor queries");
  const QueryOutputs& q = *r.queries;
  if (q.masks.size() != q.size()) throw Error(ErrorCode::kProtocolViolation, "every query needs a mask");
  const PairChoice c = select_action_pair(q, cfg);
  return {q.masks[c.pick], q.masks[c.put], q.done_probability};
}

class Policy {
 public:
  virtual ~Policy() = default;
  virtual PolicyResponse act(const Observation& obs) = 0;
  virtual std::string name() const = 0;
  virtual bool privileged() const { return false; }
};

/// Ground-truth masks of the oracle's action; done probability 1 once the goal holds.
class OraclePolicy : public Policy {
 public:
  PolicyResponse act(const Observation& obs) override {
    const auto choice = oracle_next(*obs.task, *obs.state);
    if (!choice) return {ActionMaskPair{Mask(obs.cloud->size(), false), Mask(obs.cloud->size(), false), 1.0}, {}};
    return {gt_action_masks(*obs.cloud, *obs.state, choice->action), {}};
  }
  std::string name() const override { return "oracle"; }
  bool privileged() const override { return true; }
};

/// Oracle whose pick mask is replaced, with probability p, by the points of a
/// uniformly drawn instance that is not an unplaced box. The draw for
/// (episode, step) does not depend on p, so corrupted steps at p are a subset
/// of those at any larger p.
class NoisyOraclePolicy : public Policy {
 public:
  NoisyOraclePolicy(double p, std::uint64_t seed) : p_(p), seed_(seed) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "corruption probability outside [0, 1]");
  }

  PolicyResponse act(const Observation& obs) override {
    PolicyResponse r = oracle_.act(obs);
    if (r.masks->done_probability > 0.5) return r;
    Rng rng(derive_seed(seed_, obs.episode_seed, static_cast<std::uint64_t>(obs.step)));
    const double u = rng.uniform01();
    const auto unplaced = unplaced_boxes(*obs.state);
    std::set<EntityId> ids(obs.cloud->instance.begin(), obs.cloud->instance.end());
    std::vector<EntityId> candidates;
    for (auto id : ids)
      if (!unplaced.count(id)) candidates.push_back(id);
    const EntityId wrong = candidates[rng.below(candidates.size())];
    if (u < p_) r.masks->pick = instance_mask(*obs.cloud, wrong);
    return r;
  }
  std::string name() const override { return "noisy:" + format_p(p_); }
  bool privileged() const override { return true; }

  static std::string format_p(double p) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", p);
    return buf;
  }

 private:
  double p_;
  std::uint64_t seed_;
  OraclePolicy oracle_;
};

/// Uniform choice among currently valid actions. Privileged baseline.
class RandomValidPolicy : public Policy {
 public:
  explicit RandomValidPolicy(std::uint64_t seed) : seed_(seed) {}

  PolicyResponse act(const Observation& obs) override {
    const std::size_t n = obs.cloud->size();
    if (goal_satisfied(*obs.task, *obs.state)) return {ActionMaskPair{Mask(n, false), Mask(n, false), 1.0}, {}};
    std::vector<Action> valid;
    const auto slots = enumerate_slots(*obs.state);
    for (const auto& b : obs.state->boxes)
      for (const auto& slot : slots) {
        const Action a{b.id, slot};
        if (action_valid(*obs.task, *obs.state, a).valid) valid.push_back(a);
      }
    if (valid.empty()) throw Error(ErrorCode::kDeadEnd, "no valid action");
    Rng rng(derive_seed(seed_, obs.episode_seed, static_cast<std::uint64_t>(obs.step)));
    return {gt_action_masks(*obs.cloud, *obs.state, valid[rng.below(valid.size())]), {}};
  }
  std::string name() const override { return "random-valid"; }
  bool privileged() const override { return true; }

 private:
  std::uint64_t seed_;
};

enum class PolicyKind : std::uint8_t { kOracle, kNoisyOracle, kRandomValid, kExternal };

struct PolicySpec {
  PolicyKind kind = PolicyKind::kOracle;
  double corruption = 0.0;
  std::string command;  // external only

  std::string to_string() const {
    switch (kind) {
      case PolicyKind::kOracle: return "oracle";
      case PolicyKind::kNoisyOracle: return "noisy:" + NoisyOraclePolicy::format_p(corruption);
      case PolicyKind::kRandomValid: return "random-valid";
      case PolicyKind::kExternal: return "external:" + command;
    }
    return "?";
  }
};

/// "oracle" | "noisy:<p>" | "random-valid" | "external:<command line>"
inline PolicySpec parse_policy_spec(std::string_view s) {
  PolicySpec spec;
  if (s == "oracle") return spec;
  if (s == "random-valid") {
    spec.kind = PolicyKind::kRandomValid;
    return spec;
  }
  if (s.starts_with("noisy:")) {
    spec.kind = PolicyKind::kNoisyOracle;
    const std::string p(s.substr(6));
    std::size_t used = 0;
    try {
      spec.corruption = std::stod(p, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != p.size() || p.empty() || !(spec.corruption >= 0.0 && spec.corruption <= 1.0))
      throw Error(ErrorCode::kInvalidArgument, "noisy policy needs p in [0, 1]: '" + std::string(s) + "'");
    return spec;
  }
  if (s.starts_with("external:") && s.size() > 9) {
    spec.kind = PolicyKind::kExternal;
    spec.command = std::string(s.substr(9));
    return spec;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown policy '" + std::string(s) + "'");
}

}  // namespace ramp3d
