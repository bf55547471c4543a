#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "ramp3d/dataset.hpp"

using namespace ramp3d;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ramp3d_dataset_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

DatasetConfig five_box_basic(int episodes) {
  DatasetConfig cfg;
  cfg.episodes = episodes;
  cfg.variants = {Variant::kBasicPlacement};
  cfg.boxes = {5, 5};
  cfg.seed = 12;
  return cfg;
}

TrainingSample action_sample() {
  TrainingSample s;
  s.sample_id = "ep-000000-s-00-action";
  s.goal_text = "Place every box. " + default_catalog().grounding_suffix();
  s.pick_mask = {true, false, true};
  s.target_mask = {false, true, false};
  s.action = Action{1, StackTop{2}};
  return s;
}

}  // namespace

TEST(Dataset, CountsFollowRolloutLengths) {
  const auto dir = scratch("counts");
  const Json m = emit_dataset(five_box_basic(10), dir);
  EXPECT_EQ(m["counts"]["action"], 50);
  EXPECT_EQ(m["counts"]["terminal"], 10);
  const std::size_t aux = m["counts"]["auxiliary"];
  EXPECT_EQ(m["counts"]["total"], 60 + aux);

  // Manifest counts against what is on disk.
  std::size_t lines = 0, clouds = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "episodes")) {
    if (e.path().filename() == "samples.ndjson") {
      std::ifstream f(e.path());
      for (std::string l; std::getline(f, l);) ++lines;
    }
    if (e.path().extension() == ".bin") ++clouds;
  }
  EXPECT_EQ(lines, m["counts"]["total"].get<std::size_t>());
  EXPECT_EQ(clouds, 60u);
  fs::remove_all(dir);
}

TEST(Dataset, LoadRoundTripIsBitExact) {
  const auto dir = scratch("roundtrip");
  DatasetConfig cfg;
  cfg.episodes = 6;
  cfg.seed = 3;
  cfg.workers = 3;
  emit_dataset(cfg, dir);
  const auto ds = load_dataset(dir);
  std::map<std::string, std::string> rewritten;
  for (const auto& s : ds.samples) rewritten[s.episode_id] += canonical_dump(to_json(s)) + "\n";
  for (const auto& [ep, text] : rewritten) EXPECT_EQ(text, slurp(dir / "episodes" / ep / "samples.ndjson")) << ep;

  // Same samples as building the episodes in memory.
  std::vector<TrainingSample> direct;
  for (int i = 0; i < cfg.episodes; ++i) {
    auto ep = build_episode(cfg, i);
    direct.insert(direct.end(), ep.samples.begin(), ep.samples.end());
  }
  EXPECT_EQ(ds.samples, direct);
  fs::remove_all(dir);
}

TEST(Dataset, ActionMasksDecodeToStoredAction) {
  const auto dir = scratch("decode");
  DatasetConfig cfg;
  cfg.episodes = 11;
  cfg.seed = 8;
  emit_dataset(cfg, dir);
  const auto ds = load_dataset(dir);
  std::size_t checked = 0;
  for (const auto& s : ds.samples)
    if (s.kind == SampleKind::kAction) {
      EXPECT_TRUE(action_sample_consistent(dir, s)) << s.sample_id;
      ++checked;
    }
  EXPECT_GT(checked, 11u);
  fs::remove_all(dir);
}

TEST(Dataset, DeterministicBytes) {
  const auto a = scratch("det_a"), b = scratch("det_b");
  DatasetConfig cfg;
  cfg.episodes = 4;
  cfg.seed = 99;
  emit_dataset(cfg, a);
  cfg.workers = 2;
  emit_dataset(cfg, b);
  EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "manifest.json"));
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) EXPECT_EQ(slurp(e.path()), slurp(b / fs::relative(e.path(), a))) << e.path();
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Dataset, SplitQuotaAndDisjointness) {
  int test = 0;
  for (int i = 0; i < 950; ++i) test += split_for_episode(i, kDefaultTestFraction) == Split::kTest;
  EXPECT_EQ(test, 220);
  EXPECT_EQ(split_for_episode(0, 0.0), Split::kTrain);
  EXPECT_EQ(split_for_episode(0, 1.0), Split::kTest);

  const auto dir = scratch("split");
  DatasetConfig cfg;
  cfg.episodes = 13;
  emit_dataset(cfg, dir);
  const auto ds = load_dataset(dir);
  std::map<std::string, std::set<std::string>> splits_per_scene;
  std::map<std::string, std::uint64_t> seed_of;
  for (const auto& e : ds.manifest["episodes"]) seed_of[e["episode_id"]] = e["seed"];
  std::set<std::uint64_t> train_seeds, test_seeds;
  for (const auto& s : ds.samples) (s.split == Split::kTrain ? train_seeds : test_seeds).insert(seed_of[s.episode_id]);
  for (auto s : test_seeds) EXPECT_FALSE(train_seeds.count(s));
  EXPECT_EQ(test_seeds.size(), 3u);  // floor(13 * 2.2 / 9.5)
  fs::remove_all(dir);
}

TEST(Dataset, AuxiliaryRate) {
  EXPECT_NEAR(aux_probability(0.10), 1.0 / 9.0, 1e-15);
  // p/(1+p) of all samples are auxiliary when every snapshot draws once.
  const double p = aux_probability(0.10);
  EXPECT_NEAR(p / (1.0 + p), 0.10, 1e-15);
}

TEST(Dataset, PredicateMasks) {
  const Scenario sc = sample_scenario(Variant::kBasicPlacement, {6, 6}, 4);
  const auto traj = oracle_rollout(sc.task, sc.scene);
  const SceneState& mid = traj[3].state;
  const auto cloud = synthesize_cloud(mid, 0.05, 1);
  const Mask unplaced = predicate_mask(cloud, mid, AuxPredicate::kUnplacedBoxes);
  const Mask placed = predicate_mask(cloud, mid, AuxPredicate::kPlacedBoxes);
  EXPECT_EQ(popcount(unplaced), 3u * 600u);
  EXPECT_EQ(popcount(placed), 3u * 600u);
  for (std::size_t i = 0; i < cloud.size(); ++i) EXPECT_FALSE(unplaced[i] && placed[i]);
  const Mask free = predicate_mask(cloud, mid, AuxPredicate::kFreeCells);
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (free[i]) EXPECT_TRUE(cloud.semantic[i] != SemanticClass::kFloor);
  EXPECT_GT(popcount(free), 0u);
}

TEST(Dataset, TamperingAndSchemaErrors) {
  const auto dir = scratch("tamper");
  emit_dataset(five_box_basic(2), dir);
  {
    std::ofstream f(dir / "episodes" / "ep-000001" / "samples.ndjson", std::ios::app);
    f << " ";
  }
  try {
    load_dataset(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCorruptSample);
  }
  Json m = Json::parse(slurp(dir / "manifest.json"));
  m["schema_version"] = "ramp3d.dataset/99";
  std::ofstream(dir / "manifest.json") << m.dump();
  try {
    load_dataset(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSchemaMismatch);
  }
  fs::remove_all(dir);
}

TEST(Paraphrase, NoProviderIsPassthrough) {
  const auto out = paraphrase_hook(action_sample(), nullptr);
  EXPECT_TRUE(out.provider_absent);
  EXPECT_TRUE(out.samples.empty());
}

TEST(Paraphrase, ThreeTextsShareMasks) {
  std::string seen;
  ParaphraseProvider p = [&](const std::string& t) {
    seen = t;
    return std::vector<std::string>{"Put all boxes away.", "Store each box.", "Shelve the boxes."};
  };
  const TrainingSample s = action_sample();
  const auto out = paraphrase_hook(s, &p);
  EXPECT_EQ(seen, "Place every box.");
  ASSERT_EQ(out.samples.size(), 3u);
  for (const auto& c : out.samples) {
    EXPECT_EQ(c.pick_mask, s.pick_mask);
    EXPECT_EQ(c.target_mask, s.target_mask);
    EXPECT_EQ(c.action, s.action);
    EXPECT_EQ(c.paraphrase_of, s.sample_id);
    EXPECT_TRUE(c.goal_text.ends_with(" " + default_catalog().grounding_suffix()));
  }
  EXPECT_EQ(out.samples[0].goal_text, "Put all boxes away. " + default_catalog().grounding_suffix());
}

TEST(Paraphrase, EmptyRejectedExtraDroppedFailureLogged) {
  ParaphraseProvider p = [](const std::string&) { return std::vector<std::string>{"  ", "a", "b", "c", "d"}; };
  const auto out = paraphrase_hook(action_sample(), &p);
  EXPECT_EQ(out.samples.size(), 2u);
  EXPECT_EQ(out.rejected, 1u);
  EXPECT_EQ(out.log.size(), 2u);

  ParaphraseProvider bad = [](const std::string&) -> std::vector<std::string> {
    throw Error(ErrorCode::kProviderFailure, "offline");
  };
  const auto failed = paraphrase_hook(action_sample(), &bad);
  EXPECT_TRUE(failed.failed);
  EXPECT_TRUE(failed.samples.empty());
  ASSERT_EQ(failed.log.size(), 1u);
  EXPECT_NE(failed.log[0].find("offline"), std::string::npos);
}

TEST(Paraphrase, CommandProviderInDataset) {
  const std::string cmd = R"(while read -r line; do echo '{"texts":["Stow the boxes.","Put the boxes away."]}'; done)";
  CommandParaphraser cp(cmd);
  ParaphraseProvider p = cp;
  const auto dir = scratch("para");
  const Json m = emit_dataset(five_box_basic(2), dir, &p, "shell");
  EXPECT_EQ(m["counts"]["paraphrased"], 20);
  EXPECT_FALSE(m["paraphrase"]["passthrough"].get<bool>());
  const auto ds = load_dataset(dir);
  std::size_t copies = 0;
  for (const auto& s : ds.samples)
    if (s.paraphrase_of) {
      ++copies;
      EXPECT_TRUE(s.goal_text.starts_with("Stow") || s.goal_text.starts_with("Put"));
    }
  EXPECT_EQ(copies, 20u);
  fs::remove_all(dir);
}
