#include <gtest/gtest.h>

#include <filesystem>

#include "ramp3d/external_policy.hpp"
#include "ramp3d/harness.hpp"

using namespace ramp3d;

namespace {

Scenario scenario(Variant v, int bucket, std::uint64_t seed) { return sample_scenario(v, kBoxBuckets[bucket], seed); }

// Fixed answer every step.
class ScriptedPolicy : public Policy {
 public:
  explicit ScriptedPolicy(std::function<ActionMaskPair(const Observation&)> f) : f_(std::move(f)) {}
  PolicyResponse act(const Observation& obs) override { return {f_(obs), {}}; }
  std::string name() const override { return "scripted"; }

 private:
  std::function<ActionMaskPair(const Observation&)> f_;
};

std::string mock(const std::string& mode) { return std::string(MOCK_POLICY_PATH) + " " + mode; }

}  // namespace

TEST(Harness, OracleSnapSucceedsInExactlyNumBoxesPlacements) {
  OraclePolicy oracle;
  for (Variant v : kAllVariants)
    for (int b = 0; b < 3; ++b) {
      const Scenario sc = scenario(v, b, 100 + b);
      const auto rec = run_episode(sc, oracle, {});
      EXPECT_EQ(rec.outcome, Outcome::kSuccess) << to_string(v);
      EXPECT_EQ(rec.actions, static_cast<int>(sc.scene.boxes.size()));
      ASSERT_EQ(rec.steps.size(), sc.scene.boxes.size() + 1);
      EXPECT_TRUE(rec.steps.back().done_signaled);
      EXPECT_LE(static_cast<int>(rec.steps.size()), rec.step_cap);
    }
}

TEST(Harness, OracleFreeformSucceeds) {
  OraclePolicy oracle;
  HarnessConfig cfg;
  cfg.mode = ExecutionMode::kFreeForm;
  for (Variant v : kAllVariants) {
    const auto rec = run_episode(scenario(v, 2, 7), oracle, cfg);
    EXPECT_EQ(rec.outcome, Outcome::kSuccess) << to_string(v);
  }
}

TEST(Harness, StepCapGivesStepLimit) {
  OraclePolicy oracle;
  HarnessConfig cfg;
  cfg.step_slack = -1;
  const auto rec = run_episode(scenario(Variant::kBasicPlacement, 0, 3), oracle, cfg);
  EXPECT_EQ(rec.outcome, Outcome::kStepLimit);
  EXPECT_EQ(static_cast<int>(rec.steps.size()), rec.step_cap);
}

TEST(Harness, EarlyDoneIsWrongDone) {
  ScriptedPolicy p([](const Observation& o) {
    return ActionMaskPair{Mask(o.cloud->size(), false), Mask(o.cloud->size(), false), 0.51};
  });
  const auto rec = run_episode(scenario(Variant::kBasicPlacement, 0, 3), p, {});
  EXPECT_EQ(rec.outcome, Outcome::kWrongDone);
  EXPECT_EQ(rec.steps.size(), 1u);
}

TEST(Harness, DoneAtExactlyThresholdIsNotDone) {
  ScriptedPolicy p([](const Observation& o) {
    return ActionMaskPair{Mask(o.cloud->size(), false), Mask(o.cloud->size(), false), 0.5};
  });
  const auto rec = run_episode(scenario(Variant::kBasicPlacement, 0, 3), p, {});
  EXPECT_EQ(rec.outcome, Outcome::kDecodeFailure);
}

TEST(Harness, SparseFloorMaskDoesNotSurviveFiltering) {
  ScriptedPolicy p([](const Observation& o) {
    const auto choice = oracle_next(*o.task, *o.state);
    ActionMaskPair m = gt_action_masks(*o.cloud, *o.state, choice->action);
    m.target = instance_mask(*o.cloud, kFloorId);
    return m;
  });
  const auto rec = run_episode(scenario(Variant::kBasicPlacement, 0, 3), p, {});
  EXPECT_EQ(rec.outcome, Outcome::kDecodeFailure);
  EXPECT_EQ(rec.steps[0].violations, std::vector<std::string>{"target-mask-empty"});
}

TEST(Harness, DistractorTargetIsInvalidAction) {
  ScriptedPolicy p([](const Observation& o) {
    const auto choice = oracle_next(*o.task, *o.state);
    ActionMaskPair m = gt_action_masks(*o.cloud, *o.state, choice->action);
    m.target = instance_mask(*o.cloud, o.state->distractors.front().id);
    return m;
  });
  std::uint64_t seed = 3;
  Scenario sc = scenario(Variant::kBasicPlacement, 0, seed);
  while (sc.scene.distractors.empty()) sc = scenario(Variant::kBasicPlacement, 0, ++seed);
  const auto rec = run_episode(sc, p, {});
  EXPECT_EQ(rec.outcome, Outcome::kInvalidAction);
  EXPECT_EQ(rec.steps[0].violations, std::vector<std::string>{"putdown-not-a-slot"});
}

TEST(Harness, MaskSizeMismatchIsProtocolViolation) {
  ScriptedPolicy p([](const Observation& o) {
    return ActionMaskPair{Mask(o.cloud->size() - 1, true), Mask(o.cloud->size(), true), 0.0};
  });
  try {
    run_episode(scenario(Variant::kBasicPlacement, 0, 3), p, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kProtocolViolation);
  }
}

TEST(Harness, NoisyFullCorruptionFailsFirstStep) {
  int invalid_first = 0, total = 0;
  for (int i = 0; i < 60; ++i) {
    NoisyOraclePolicy p(1.0, 11);
    const auto rec = run_episode(scenario(kAllVariants[i % kAllVariants.size()], i % 3, 500 + i), p, {});
    ++total;
    if (rec.outcome == Outcome::kInvalidAction && rec.steps.size() == 1) ++invalid_first;
  }
  // Corrupted pick masks select surfaces, cells, placed boxes, distractors or
  // the floor; only placed accessible boxes can ever form a valid move.
  EXPECT_GE(invalid_first, total * 8 / 10);
}

TEST(Harness, NoisyZeroCorruptionMatchesOracle) {
  NoisyOraclePolicy noisy(0.0, 5);
  OraclePolicy oracle;
  const Scenario sc = scenario(Variant::kPlacementOrdering, 1, 21);
  EXPECT_EQ(canonical_dump(to_json(run_episode(sc, noisy, {}))["steps"]),
            canonical_dump(to_json(run_episode(sc, oracle, {}))["steps"]));
}

TEST(Harness, NoisyCorruptedStepsNestAcrossP) {
  // Common random numbers: a step corrupted at p is corrupted at every p' > p.
  const Scenario sc = scenario(Variant::kBasicPlacement, 2, 9);
  const auto traj = oracle_rollout(sc.task, sc.scene);
  NoisyOraclePolicy lo(0.3, 4), hi(0.7, 4);
  OraclePolicy oracle;
  for (std::size_t t = 0; t < traj.size(); ++t) {
    const auto cloud = observe(traj[t].state, {}, sc.seed, static_cast<int>(t));
    Observation obs{"e", sc.seed, static_cast<int>(t), "", &cloud, &traj[t].state, &sc.task};
    const Mask gt = oracle.act(obs).masks->pick;
    const bool corrupt_lo = lo.act(obs).masks->pick != gt;
    const bool corrupt_hi = hi.act(obs).masks->pick != gt;
    if (corrupt_lo) EXPECT_TRUE(corrupt_hi) << t;
  }
}

TEST(Harness, RandomValidNeverInvalid) {
  RandomValidPolicy p(3);
  for (int i = 0; i < 10; ++i) {
    const auto rec = run_episode(scenario(kAllVariants[i], 0, 40 + i), p, {});
    EXPECT_NE(rec.outcome, Outcome::kInvalidAction);
    EXPECT_NE(rec.outcome, Outcome::kDecodeFailure);
  }
}

TEST(Harness, RefereeAgreesWithExecutor) {
  // Every action the referee accepts executes; structurally impossible ones throw.
  Rng rng(77);
  int checked = 0;
  for (int i = 0; i < 20; ++i) {
    const Scenario sc = scenario(kAllVariants[i % kAllVariants.size()], 0, 900 + i);
    SceneState s = sc.scene;
    for (int step = 0; step < 6; ++step) {
      const auto slots = enumerate_slots(s);
      std::vector<Action> valid;
      for (const auto& b : s.boxes)
        for (const auto& slot : slots) {
          const Action a{b.id, slot};
          const bool ok = action_valid(sc.task, s, a).valid;
          if (ok) {
            EXPECT_NO_THROW(apply_action(s, a, ExecutionMode::kSnapToTarget));
            valid.push_back(a);
          }
          ++checked;
        }
      if (valid.empty()) break;
      s = apply_action(s, valid[rng.below(valid.size())], ExecutionMode::kSnapToTarget);
    }
  }
  EXPECT_GT(checked, 1000);
}

TEST(Harness, OneStepOracleIsPerfect) {
  OraclePolicy oracle;
  for (ExecutionMode mode : {ExecutionMode::kSnapToTarget, ExecutionMode::kFreeForm}) {
    HarnessConfig cfg;
    cfg.mode = mode;
    for (Variant v : {Variant::kBasicPlacement, Variant::kHomogeneousStacks}) {
      for (const auto& r : evaluate_one_step(scenario(v, 1, 31), oracle, cfg)) {
        EXPECT_TRUE(r.valid);
        EXPECT_TRUE(r.decoded_gt_action);
        EXPECT_DOUBLE_EQ(r.pick_iou, 1.0);
        EXPECT_DOUBLE_EQ(r.target_iou, 1.0);
        ASSERT_TRUE(r.placement_error);
        EXPECT_LT(*r.placement_error, 0.05);
      }
    }
  }
}

TEST(Harness, TargetKindFromSlot) {
  const Scenario sc = scenario(Variant::kBasicPlacement, 2, 12);
  const auto traj = oracle_rollout(sc.task, sc.scene);
  std::set<TargetKind> kinds;
  for (const auto& st : traj) {
    const TargetKind k = target_kind(st.state, st.choice.action.putdown);
    kinds.insert(k);
    EXPECT_EQ(k == TargetKind::kBox, std::holds_alternative<StackTop>(st.choice.action.putdown));
  }
  EXPECT_FALSE(kinds.empty());
}

TEST(Harness, ReplayVerifiesAndDetectsTampering) {
  NoisyOraclePolicy p(0.2, 8);
  for (int i = 0; i < 4; ++i) {
    const auto rec = run_episode(scenario(kAllVariants[i], i % 3, 60 + i), p, {});
    Json j = to_json(rec);
    const Json reparsed = Json::parse(canonical_dump(j));
    const auto ok = replay_episode(reparsed);
    EXPECT_TRUE(ok.verified) << (ok.mismatches.empty() ? "" : ok.mismatches[0]);
    j["final_digest"] = "0000000000000000";
    EXPECT_FALSE(replay_episode(j).verified);
  }
  Json bad = to_json(run_episode(scenario(Variant::kBasicPlacement, 0, 1), p, {}));
  bad["schema_version"] = "other/9";
  EXPECT_THROW(replay_episode(bad), Error);
}

TEST(Harness, SuiteIndependentOfWorkerCount) {
  SuiteConfig cfg;
  cfg.master_seed = 5;
  cfg.episodes_per_variant = 3;
  cfg.variants = {Variant::kBasicPlacement, Variant::kPlacementOrdering};
  cfg.modes = {ExecutionMode::kSnapToTarget, ExecutionMode::kFreeForm};
  auto factory = [] { return std::make_unique<NoisyOraclePolicy>(0.2, 1); };
  cfg.workers = 1;
  const auto a = evaluate_suite(cfg, factory);
  cfg.workers = 4;
  const auto b = evaluate_suite(cfg, factory);
  ASSERT_EQ(a.episodes.size(), 12u);
  ASSERT_EQ(a.episodes.size(), b.episodes.size());
  for (std::size_t i = 0; i < a.episodes.size(); ++i)
    EXPECT_EQ(canonical_dump(to_json(a.episodes[i])), canonical_dump(to_json(b.episodes[i])));
  ASSERT_EQ(a.one_step.size(), b.one_step.size());
  for (std::size_t i = 0; i < a.one_step.size(); ++i) EXPECT_EQ(a.one_step[i].valid, b.one_step[i].valid);
}

TEST(Harness, SuiteBucketsCycle) {
  SuiteConfig cfg;
  cfg.episodes_per_variant = 6;
  for (int i = 0; i < 6; ++i) {
    const auto sc = suite_scenario(cfg, Variant::kBasicPlacement, i);
    EXPECT_EQ(bucket_index(static_cast<int>(sc.scene.boxes.size())), static_cast<std::size_t>(i % 3));
  }
}

TEST(Harness, PolicySpecParsing) {
  EXPECT_EQ(parse_policy_spec("oracle").kind, PolicyKind::kOracle);
  EXPECT_EQ(parse_policy_spec("random-valid").kind, PolicyKind::kRandomValid);
  EXPECT_DOUBLE_EQ(parse_policy_spec("noisy:0.25").corruption, 0.25);
  EXPECT_EQ(parse_policy_spec("noisy:0.25").to_string(), "noisy:0.25");
  EXPECT_EQ(parse_policy_spec("external:./p --x").command, "./p --x");
  EXPECT_THROW(parse_policy_spec("noisy:1.5"), Error);
  EXPECT_THROW(parse_policy_spec("noisy:abc"), Error);
  EXPECT_THROW(parse_policy_spec("external:"), Error);
  EXPECT_THROW(parse_policy_spec("greedy"), Error);
}

// ---------------------------------------------------------------- external

TEST(External, OracleOverWireMatchesBuiltin) {
  ExternalPolicy ext({mock("oracle"), ""});
  EXPECT_EQ(ext.name(), "mock-oracle");
  EXPECT_TRUE(ext.privileged());
  OraclePolicy oracle;
  const Scenario sc = scenario(Variant::kFinishStackFirst, 1, 17);
  const auto a = run_episode(sc, ext, {});
  const auto b = run_episode(sc, oracle, {});
  EXPECT_EQ(a.outcome, Outcome::kSuccess);
  EXPECT_EQ(canonical_dump(to_json(a)["steps"]), canonical_dump(to_json(b)["steps"]));
}

TEST(External, QueriesResponseRunsPairSelection) {
  ExternalPolicy ext({mock("queries"), ""});
  const auto rec = run_episode(scenario(Variant::kBasicPlacement, 0, 17), ext, {});
  EXPECT_EQ(rec.outcome, Outcome::kSuccess);
}

TEST(External, CloudRefFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "ramp3d_cloud_ref_test";
  std::filesystem::create_directories(dir);
  ExternalPolicy ext({mock("cloud-ref"), dir.string()});
  const auto rec = run_episode(scenario(Variant::kBasicPlacement, 0, 17), ext, {}, "ep");
  EXPECT_EQ(rec.outcome, Outcome::kSuccess);
  EXPECT_TRUE(std::filesystem::exists(dir / "ep-0.cloud"));
  std::filesystem::remove_all(dir);
}

TEST(External, DoneImmediatelyIsWrongDone) {
  ExternalPolicy ext({mock("done"), ""});
  EXPECT_EQ(run_episode(scenario(Variant::kBasicPlacement, 0, 17), ext, {}).outcome, Outcome::kWrongDone);
}

TEST(External, ProtocolViolations) {
  auto code_of = [](const std::function<void()>& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kInvalidArgument;
  };
  const Scenario sc = scenario(Variant::kBasicPlacement, 0, 17);
  EXPECT_EQ(code_of([&] { ExternalPolicy p({mock("bad-version"), ""}); }), ErrorCode::kProtocolViolation);
  EXPECT_EQ(code_of([&] { ExternalPolicy p({"/bin/true", ""}); }), ErrorCode::kProtocolViolation);
  for (const char* mode : {"garbage", "short-mask", "exit"}) {
    EXPECT_EQ(code_of([&] {
                ExternalPolicy p({mock(mode), ""});
                run_episode(sc, p, {});
              }),
              ErrorCode::kProtocolViolation)
        << mode;
  }
}

TEST(External, WireCloudRoundTrip) {
  const Scenario sc = scenario(Variant::kBasicPlacement, 0, 2);
  const auto cloud = observe(sc.scene, {}, sc.seed, 0);
  const auto back = cloud_from_wire(Json::parse(cloud_to_wire(cloud).dump()));
  EXPECT_EQ(cloud_digest(back), cloud_digest(cloud));
  Json bad = cloud_to_wire(cloud);
  bad["count"] = cloud.size() + 1;
  EXPECT_THROW(cloud_from_wire(bad), Error);
}

TEST(External, ResponseValidation) {
  const Json ok{{"type", "action"},
                {"pick_mask", rle_to_json(Mask(4, true))},
                {"target_mask", rle_to_json(Mask(4, false))},
                {"done_probability", 0.1}};
  EXPECT_NO_THROW(response_from_wire(ok, 4));
  EXPECT_THROW(response_from_wire(ok, 5), Error);
  Json p = ok;
  p["done_probability"] = 1.5;
  EXPECT_THROW(response_from_wire(p, 4), Error);
  Json t = ok;
  t["type"] = "shrug";
  EXPECT_THROW(response_from_wire(t, 4), Error);
  Json m = ok;
  m.erase("pick_mask");
  EXPECT_THROW(response_from_wire(m, 4), Error);
}
