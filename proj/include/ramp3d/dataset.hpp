#pragma once

// Supervision dataset: oracle rollouts written as scene snapshots, binary
// clouds and one NDJSON line per sample, plus a manifest.
//
//   <out>/manifest.json
//   <out>/episodes/<episode>/episode.json      scenario
//   <out>/episodes/<episode>/scene-NN.json     state before step NN
//   <out>/episodes/<episode>/cloud-NN.bin      cloud of that state
//   <out>/episodes/<episode>/samples.ndjson

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "error.hpp"
#include "harness.hpp"
#include "oracle.hpp"
#include "perception.hpp"
#include "process.hpp"
#include "scenario.hpp"
#include "tasks.hpp"

namespace ramp3d {

inline constexpr std::string_view kDatasetSchema = "ramp3d.dataset/1";
inline constexpr double kDefaultTestFraction = 2.2 / 9.5;

enum class SampleKind : std::uint8_t { kAction, kAuxiliary, kTerminal };
enum class Split : std::uint8_t { kTrain, kTest };
enum class AuxPredicate : std::uint8_t { kFreeCells, kPlacedBoxes, kStackedBoxes, kAccessibleBoxes, kUnplacedBoxes };
inline constexpr std::array<AuxPredicate, 5> kAllAuxPredicates{AuxPredicate::kFreeCells, AuxPredicate::kPlacedBoxes,
                                                               AuxPredicate::kStackedBoxes, AuxPredicate::kAccessibleBoxes,
                                                               AuxPredicate::kUnplacedBoxes};

constexpr std::string_view to_string(SampleKind k) {
  switch (k) {
    case SampleKind::kAction: return "action";
    case SampleKind::kAuxiliary: return "auxiliary";
    case SampleKind::kTerminal: return "terminal";
  }
  return "?";
}
constexpr std::string_view to_string(Split s) { return s == Split::kTrain ? "train" : "test"; }
constexpr std::string_view to_string(AuxPredicate p) {
  switch (p) {
    case AuxPredicate::kFreeCells: return "free-cells";
    case AuxPredicate::kPlacedBoxes: return "placed-boxes";
    case AuxPredicate::kStackedBoxes: return "stacked-boxes";
    case AuxPredicate::kAccessibleBoxes: return "accessible-boxes";
    case AuxPredicate::kUnplacedBoxes: return "unplaced-boxes";
  }
  return "?";
}

inline SampleKind sample_kind_from_string(std::string_view s) {
  for (SampleKind k : {SampleKind::kAction, SampleKind::kAuxiliary, SampleKind::kTerminal})
    if (to_string(k) == s) return k;
  throw Error(ErrorCode::kCorruptSample, "unknown sample kind '" + std::string(s) + "'");
}
inline Split split_from_string(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw Error(ErrorCode::kCorruptSample, "unknown split '" + std::string(s) + "'");
}
inline AuxPredicate aux_predicate_from_string(std::string_view s) {
  for (AuxPredicate p : kAllAuxPredicates)
    if (to_string(p) == s) return p;
  throw Error(ErrorCode::kCorruptSample, "unknown predicate '" + std::string(s) + "'");
}

struct TrainingSample {
  std::string sample_id;
  std::string episode_id;
  int step = 0;
  SampleKind kind = SampleKind::kAction;
  std::optional<AuxPredicate> predicate;
  std::string scene_ref;  // relative to the dataset root
  std::string cloud_ref;
  std::string goal_text;
  Mask pick_mask;
  Mask target_mask;  // predicate mask for auxiliary samples
  std::optional<Action> action;
  double done_probability = 0.0;
  Split split = Split::kTrain;
  std::optional<std::string> paraphrase_of;
  bool operator==(const TrainingSample&) const = default;
};

inline Json to_json(const TrainingSample& s) {
  return Json{{"sample_id", s.sample_id},
              {"episode_id", s.episode_id},
              {"step", s.step},
              {"kind", to_string(s.kind)},
              {"predicate", s.predicate ? Json(to_string(*s.predicate)) : Json(nullptr)},
              {"scene_ref", s.scene_ref},
              {"cloud_ref", s.cloud_ref},
              {"camera_rig_ref", "manifest.json#camera_rig"},
              {"goal_text", s.goal_text},
              {"pick_mask", rle_to_json(s.pick_mask)},
              {"target_mask", rle_to_json(s.target_mask)},
              {"action", s.action ? to_json(*s.action) : Json(nullptr)},
              {"done_probability", s.done_probability},
              {"split", to_string(s.split)},
              {"paraphrase_of", s.paraphrase_of ? Json(*s.paraphrase_of) : Json(nullptr)}};
}

inline TrainingSample sample_from_json(const Json& j) {
  try {
    TrainingSample s;
    s.sample_id = j.at("sample_id").get<std::string>();
    s.episode_id = j.at("episode_id").get<std::string>();
    s.step = j.at("step").get<int>();
    s.kind = sample_kind_from_string(j.at("kind").get<std::string>());
    if (!j.at("predicate").is_null()) s.predicate = aux_predicate_from_string(j["predicate"].get<std::string>());
    s.scene_ref = j.at("scene_ref").get<std::string>();
    s.cloud_ref = j.at("cloud_ref").get<std::string>();
    s.goal_text = j.at("goal_text").get<std::string>();
    s.pick_mask = rle_from_json(j.at("pick_mask"));
    s.target_mask = rle_from_json(j.at("target_mask"));
    if (!j.at("action").is_null()) s.action = action_from_json(j["action"]);
    s.done_probability = j.at("done_probability").get<double>();
    s.split = split_from_string(j.at("split").get<std::string>());
    if (!j.at("paraphrase_of").is_null()) s.paraphrase_of = j["paraphrase_of"].get<std::string>();
    return s;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kCorruptSample, std::string("malformed sample: ") + e.what());
  }
}

/// Points of the entities a predicate selects. Free cells are shown where a
/// box would land: the deck of an empty cell, otherwise the column's top box.
inline Mask predicate_mask(const LabeledPointCloud& cloud, const SceneState& state, AuxPredicate p) {
  std::set<EntityId> ids;
  switch (p) {
    case AuxPredicate::kFreeCells:
      for (const ColumnRef& col : free_cells(state)) {
        const CellSlot* c = state.find_cell(col);
        ids.insert(c->occupants.empty() ? c->id : c->occupants.back());
      }
      break;
    case AuxPredicate::kPlacedBoxes: ids = placed_boxes(state); break;
    case AuxPredicate::kStackedBoxes: ids = stacked_boxes(state); break;
    case AuxPredicate::kAccessibleBoxes: ids = accessible_boxes(state); break;
    case AuxPredicate::kUnplacedBoxes: ids = unplaced_boxes(state); break;
  }
  Mask m(cloud.size(), false);
  for (std::size_t i = 0; i < cloud.size(); ++i) m[i] = ids.count(cloud.instance[i]) > 0;
  return m;
}

// ---------------------------------------------------------------- paraphrase

/// Text in, up to three texts out.
using ParaphraseProvider = std::function<std::vector<std::string>(const std::string&)>;

struct ParaphraseOutcome {
  std::vector<TrainingSample> samples;  // augmented copies only
  bool provider_absent = false;
  std::size_t rejected = 0;
  bool failed = false;
  std::vector<std::string> log;
};

inline constexpr std::size_t kMaxParaphrases = 3;

/// Copies of `sample` with paraphrased goal text. The grounding suffix is
/// removed before the provider sees the text and re-appended afterwards.
inline ParaphraseOutcome paraphrase_hook(const TrainingSample& sample, const ParaphraseProvider* provider,
                                         const TaskCatalog& catalog = default_catalog()) {
  ParaphraseOutcome out;
  if (!provider || !*provider) {
    out.provider_absent = true;
    return out;
  }
  const std::string suffix = " " + catalog.grounding_suffix();
  std::string base = sample.goal_text;
  if (base.size() >= suffix.size() && base.compare(base.size() - suffix.size(), suffix.size(), suffix) == 0)
    base.resize(base.size() - suffix.size());
  std::vector<std::string> texts;
  try {
    texts = (*provider)(base);
  } catch (const std::exception& e) {
    out.failed = true;
    out.log.push_back(sample.sample_id + ": provider-failure: " + e.what());
    return out;
  }
  if (texts.size() > kMaxParaphrases) {
    out.log.push_back(sample.sample_id + ": dropped " + std::to_string(texts.size() - kMaxParaphrases) +
                      " texts beyond the limit");
    texts.resize(kMaxParaphrases);
  }
  for (const auto& raw : texts) {
    const auto first = raw.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) {
      ++out.rejected;
      out.log.push_back(sample.sample_id + ": rejected empty paraphrase");
      continue;
    }
    const auto last = raw.find_last_not_of(" \t\r\n");
    TrainingSample copy = sample;
    copy.goal_text = raw.substr(first, last - first + 1) + suffix;
    copy.paraphrase_of = sample.sample_id;
    copy.sample_id = sample.sample_id + "-p" + std::to_string(out.samples.size() + 1);
    out.samples.push_back(std::move(copy));
  }
  return out;
}

/// Provider behind a child process: one {"text": ...} line in, one
/// {"texts": [...]} line out.
class CommandParaphraser {
 public:
  explicit CommandParaphraser(const std::string& command) : proc_(std::make_shared<LineProcess>(command)) {}

  std::vector<std::string> operator()(const std::string& text) const {
    if (!proc_->send(Json{{"text", text}}.dump())) throw Error(ErrorCode::kProviderFailure, "provider closed its input");
    const auto line = proc_->receive();
    if (!line) throw Error(ErrorCode::kProviderFailure, "provider closed its output");
    try {
      return Json::parse(*line).at("texts").get<std::vector<std::string>>();
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::kProviderFailure, std::string("malformed provider reply: ") + e.what());
    }
  }

 private:
  std::shared_ptr<LineProcess> proc_;
};

// ---------------------------------------------------------------- emission

struct DatasetConfig {
  int episodes = 20;
  std::vector<Variant> variants{kAllVariants.begin(), kAllVariants.end()};
  BoxBucket boxes{1, 10};
  double aux_rate = 0.10;
  double test_fraction = kDefaultTestFraction;
  std::uint64_t seed = 0;
  double resolution = 0.05;
  double floor_resolution = 0.25;
  TemplateSet templates = TemplateSet::kTraining;
  int workers = 1;
};

inline Json to_json(const DatasetConfig& c) {
  Json variants = Json::array();
  for (Variant v : c.variants) variants.push_back(to_string(v));
  return Json{{"episodes", c.episodes},
              {"variants", std::move(variants)},
              {"min_boxes", c.boxes.lo},
              {"max_boxes", c.boxes.hi},
              {"aux_rate", c.aux_rate},
              {"test_fraction", c.test_fraction},
              {"seed", c.seed},
              {"resolution", c.resolution},
              {"floor_resolution", c.floor_resolution},
              {"templates", to_string(c.templates)}};
}

/// Episode i goes to the test split iff floor((i+1) f) > floor(i f): exactly
/// floor(n f) of the first n episodes are test episodes.
inline Split split_for_episode(int i, double f) {
  return std::floor((i + 1) * f) > std::floor(i * f) ? Split::kTest : Split::kTrain;
}

/// Chance of an auxiliary sample per snapshot such that auxiliary samples make
/// up `rate` of everything emitted.
inline double aux_probability(double rate) { return rate / (1.0 - rate); }

inline std::string episode_dir_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ep-%06d", i);
  return buf;
}

inline std::uint64_t dataset_episode_seed(std::uint64_t seed, int i) {
  return derive_seed(seed, 0xDA7A, static_cast<std::uint64_t>(i));
}

struct EpisodeFiles {
  std::string episode_id;
  Scenario scenario;
  Split split = Split::kTrain;
  std::vector<std::pair<std::string, std::string>> files;  // name, bytes
  std::vector<TrainingSample> samples;
  std::size_t paraphrase_rejected = 0;
  std::size_t paraphrase_failures = 0;
  std::vector<std::string> log;
};

namespace detail {

inline std::string step_name(const char* stem, int t, const char* ext) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s-%02d%s", stem, t, ext);
  return buf;
}

}  // namespace detail

/// Everything one episode contributes, built in memory.
inline EpisodeFiles build_episode(const DatasetConfig& cfg, int index, const ParaphraseProvider* provider = nullptr) {
  const Variant variant = cfg.variants.at(static_cast<std::size_t>(index) % cfg.variants.size());
  EpisodeFiles ep;
  ep.episode_id = episode_dir_name(index);
  ep.scenario = sample_scenario(variant, cfg.boxes, dataset_episode_seed(cfg.seed, index), cfg.templates);
  ep.split = split_for_episode(index, cfg.test_fraction);
  const Scenario& sc = ep.scenario;
  ep.files.emplace_back("episode.json", canonical_dump(to_json(sc)));

  HarnessConfig hc;
  hc.resolution = cfg.resolution;
  hc.floor_resolution = cfg.floor_resolution;
  const auto trajectory = oracle_rollout(sc.task, sc.scene);
  const SceneState final_state = rollout_final_state(sc.scene, trajectory);
  const std::string goal = training_text(sc.task);
  const double p_aux = aux_probability(cfg.aux_rate);
  const std::string prefix = "episodes/" + ep.episode_id + "/";

  for (std::size_t t = 0; t <= trajectory.size(); ++t) {
    const int step = static_cast<int>(t);
    const bool terminal = t == trajectory.size();
    const SceneState& state = terminal ? final_state : trajectory[t].state;
    const LabeledPointCloud cloud = observe(state, hc, sc.seed, step);
    const std::string scene_name = detail::step_name("scene", step, ".json");
    const std::string cloud_name = detail::step_name("cloud", step, ".bin");
    ep.files.emplace_back(scene_name, canonical_dump(to_json(state)));
    ep.files.emplace_back(cloud_name, encode_cloud(cloud));

    TrainingSample base;
    base.episode_id = ep.episode_id;
    base.step = step;
    base.scene_ref = prefix + scene_name;
    base.cloud_ref = prefix + cloud_name;
    base.split = ep.split;
    base.goal_text = goal;

    TrainingSample main = base;
    main.sample_id = ep.episode_id + detail::step_name("-s", step, terminal ? "-terminal" : "-action");
    if (terminal) {
      main.kind = SampleKind::kTerminal;
      main.pick_mask = main.target_mask = Mask(cloud.size(), false);
      main.done_probability = 1.0;
    } else {
      main.kind = SampleKind::kAction;
      const ActionMaskPair m = gt_action_masks(cloud, state, trajectory[t].choice.action);
      main.pick_mask = m.pick;
      main.target_mask = m.target;
      main.action = trajectory[t].choice.action;
    }
    ep.samples.push_back(main);
    if (!terminal) {
      auto para = paraphrase_hook(main, provider);
      ep.paraphrase_rejected += para.rejected;
      ep.paraphrase_failures += para.failed ? 1 : 0;
      ep.log.insert(ep.log.end(), para.log.begin(), para.log.end());
      for (auto& s : para.samples) ep.samples.push_back(std::move(s));
    }

    Rng rng(derive_seed(sc.seed, 0xA0A, static_cast<std::uint64_t>(step)));
    if (rng.uniform01() < p_aux) {
      TrainingSample aux = base;
      aux.kind = SampleKind::kAuxiliary;
      aux.predicate = kAllAuxPredicates[rng.below(kAllAuxPredicates.size())];
      aux.sample_id = ep.episode_id + detail::step_name("-s", step, "-aux");
      aux.goal_text = default_catalog().auxiliary_instruction(std::string(to_string(*aux.predicate)));
      aux.pick_mask = Mask(cloud.size(), false);
      aux.target_mask = predicate_mask(cloud, state, *aux.predicate);
      ep.samples.push_back(std::move(aux));
    }
  }
  std::string lines;
  for (const auto& s : ep.samples) lines += canonical_dump(to_json(s)) + "\n";
  ep.files.emplace_back("samples.ndjson", std::move(lines));
  return ep;
}

struct DatasetSummary {
  std::size_t action = 0, auxiliary = 0, terminal = 0, paraphrased = 0;
  std::size_t train_samples = 0, test_samples = 0;
  std::size_t train_episodes = 0, test_episodes = 0;
  std::size_t total() const { return action + auxiliary + terminal; }
};

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIoFailure, "cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace detail

/// Writes the dataset under `out` and returns the manifest. Episodes are
/// built and written by `cfg.workers` threads; the manifest goes last.
inline Json emit_dataset(const DatasetConfig& cfg, const std::filesystem::path& out,
                         const ParaphraseProvider* provider = nullptr, const std::string& provider_name = "") {
  if (cfg.episodes < 0) throw Error(ErrorCode::kInvalidArgument, "episode count must be non-negative");
  if (!(cfg.aux_rate >= 0.0 && cfg.aux_rate < 1.0)) throw Error(ErrorCode::kInvalidArgument, "aux rate outside [0, 1)");
  if (!(cfg.test_fraction >= 0.0 && cfg.test_fraction <= 1.0))
    throw Error(ErrorCode::kInvalidArgument, "test fraction outside [0, 1]");
  if (cfg.variants.empty()) throw Error(ErrorCode::kInvalidArgument, "no variants");
  std::error_code ec;
  std::filesystem::create_directories(out / "episodes", ec);
  if (ec) throw Error(ErrorCode::kIoFailure, "cannot create " + (out / "episodes").string());

  struct Landed {
    std::string episode_id;
    Json entry;
    DatasetSummary counts;
    std::size_t rejected = 0, failures = 0;
    std::vector<std::string> log;
  };
  std::vector<Landed> landed(static_cast<std::size_t>(cfg.episodes));
  std::atomic<int> next{0};
  std::vector<std::string> errors(static_cast<std::size_t>(std::max(cfg.workers, 1)));
  std::vector<std::optional<ErrorCode>> codes(errors.size());
  // The external provider is one process; calls to it are serialized.
  std::mutex provider_mutex;
  ParaphraseProvider locked;
  if (provider && *provider)
    locked = [&](const std::string& text) {
      std::lock_guard lock(provider_mutex);
      return (*provider)(text);
    };

  auto work = [&](std::size_t w) {
    try {
      for (int i; (i = next.fetch_add(1)) < cfg.episodes;) {
        EpisodeFiles ep = build_episode(cfg, i, locked ? &locked : nullptr);
        const auto dir = out / "episodes" / ep.episode_id;
        std::filesystem::create_directories(dir);
        Json files = Json::object();
        for (const auto& [name, bytes] : ep.files) {
          detail::write_file(dir / name, bytes);
          files[name] = hex_digest(fnv1a64(bytes));
        }
        Landed& l = landed[static_cast<std::size_t>(i)];
        for (const auto& s : ep.samples) {
          if (s.paraphrase_of) ++l.counts.paraphrased;
          else if (s.kind == SampleKind::kAction) ++l.counts.action;
          else if (s.kind == SampleKind::kAuxiliary) ++l.counts.auxiliary;
          else ++l.counts.terminal;
          (s.split == Split::kTest ? l.counts.test_samples : l.counts.train_samples)++;
        }
        l.episode_id = ep.episode_id;
        l.rejected = ep.paraphrase_rejected;
        l.failures = ep.paraphrase_failures;
        l.log = std::move(ep.log);
        l.entry = Json{{"episode_id", ep.episode_id},
                       {"dir", "episodes/" + ep.episode_id},
                       {"variant", to_string(ep.scenario.task.variant)},
                       {"seed", ep.scenario.seed},
                       {"num_boxes", ep.scenario.scene.boxes.size()},
                       {"split", to_string(ep.split)},
                       {"samples", ep.samples.size()},
                       {"files", std::move(files)}};
      }
    } catch (const Error& e) {
      errors[w] = e.what();
      codes[w] = e.code();
      next.store(cfg.episodes);
    } catch (const std::exception& e) {
      errors[w] = e.what();
      codes[w] = ErrorCode::kIoFailure;
      next.store(cfg.episodes);
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t w = 1; w < errors.size(); ++w) threads.emplace_back(work, w);
  work(0);
  for (auto& t : threads) t.join();
  for (std::size_t w = 0; w < errors.size(); ++w)
    if (!errors[w].empty()) throw Error(*codes[w], errors[w]);

  DatasetSummary sum;
  Json episodes = Json::array();
  std::size_t rejected = 0, failures = 0;
  Json log = Json::array();
  for (auto& l : landed) {
    sum.action += l.counts.action;
    sum.auxiliary += l.counts.auxiliary;
    sum.terminal += l.counts.terminal;
    sum.paraphrased += l.counts.paraphrased;
    sum.train_samples += l.counts.train_samples;
    sum.test_samples += l.counts.test_samples;
    (l.entry["split"] == "test" ? sum.test_episodes : sum.train_episodes)++;
    rejected += l.rejected;
    failures += l.failures;
    for (auto& line : l.log) log.push_back(std::move(line));
    episodes.push_back(std::move(l.entry));
  }
  const std::size_t total = sum.total() + sum.paraphrased;
  const std::size_t n_eps = sum.train_episodes + sum.test_episodes;
  Json manifest{
      {"schema_version", kDatasetSchema},
      {"config", to_json(cfg)},
      {"counts",
       Json{{"action", sum.action},
            {"auxiliary", sum.auxiliary},
            {"terminal", sum.terminal},
            {"paraphrased", sum.paraphrased},
            {"total", total},
            {"train_samples", sum.train_samples},
            {"test_samples", sum.test_samples},
            {"train_episodes", sum.train_episodes},
            {"test_episodes", sum.test_episodes}}},
      {"auxiliary_fraction", total ? static_cast<double>(sum.auxiliary) / static_cast<double>(total) : 0.0},
      {"test_episode_fraction", n_eps ? static_cast<double>(sum.test_episodes) / static_cast<double>(n_eps) : 0.0},
      {"camera_rig", camera_rig_json(camera_rig())},
      {"grounding_suffix", default_catalog().grounding_suffix()},
      {"paraphrase",
       Json{{"provider", provider_name.empty() ? Json(nullptr) : Json(provider_name)},
            {"passthrough", !(provider && *provider)},
            {"augmented_samples", sum.paraphrased},
            {"rejected_texts", rejected},
            {"provider_failures", failures},
            {"log", std::move(log)}}},
      {"episodes", std::move(episodes)}};
  detail::write_file(out / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

// ---------------------------------------------------------------- loading

struct LoadedDataset {
  Json manifest;
  std::vector<TrainingSample> samples;
};

/// Reads and validates a dataset: schema, per-file digests, sample counts.
inline LoadedDataset load_dataset(const std::filesystem::path& root) {
  LoadedDataset ds;
  try {
    ds.manifest = Json::parse(detail::read_file(root / "manifest.json"));
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::kCorruptSample, std::string("manifest is not JSON: ") + e.what());
  }
  if (ds.manifest.value("schema_version", "") != kDatasetSchema)
    throw Error(ErrorCode::kSchemaMismatch, "unsupported dataset schema '" + ds.manifest.value("schema_version", "") + "'");
  std::size_t expected = 0;
  for (const auto& ep : ds.manifest.at("episodes")) {
    const std::filesystem::path dir = root / ep.at("dir").get<std::string>();
    for (const auto& [name, digest] : ep.at("files").items()) {
      const std::string bytes = detail::read_file(dir / name);
      if (hex_digest(fnv1a64(bytes)) != digest.get<std::string>())
        throw Error(ErrorCode::kCorruptSample, "digest mismatch for " + (dir / name).string());
    }
    std::istringstream lines(detail::read_file(dir / "samples.ndjson"));
    std::size_t n = 0;
    for (std::string line; std::getline(lines, line);) {
      try {
        ds.samples.push_back(sample_from_json(Json::parse(line)));
      } catch (const Json::parse_error& e) {
        throw Error(ErrorCode::kCorruptSample, std::string("sample line is not JSON: ") + e.what());
      }
      ++n;
    }
    if (n != ep.at("samples").get<std::size_t>())
      throw Error(ErrorCode::kCorruptSample, "sample count differs from manifest in " + dir.string());
    expected += n;
  }
  if (expected != ds.manifest.at("counts").at("total").get<std::size_t>())
    throw Error(ErrorCode::kCorruptSample, "total sample count differs from manifest");
  return ds;
}

inline LabeledPointCloud load_cloud(const std::filesystem::path& root, const TrainingSample& s) {
  return decode_cloud(detail::read_file(root / s.cloud_ref));
}

inline SceneState load_scene(const std::filesystem::path& root, const TrainingSample& s) {
  return scene_from_json(Json::parse(detail::read_file(root / s.scene_ref)));
}

/// True when the stored masks decode (filter, instance vote, snap) to the
/// stored action.
inline bool action_sample_consistent(const std::filesystem::path& root, const TrainingSample& s) {
  if (s.kind != SampleKind::kAction || !s.action) return false;
  const LabeledPointCloud cloud = load_cloud(root, s);
  const SceneState state = load_scene(root, s);
  const DecodedAction d = decode_masks(state, cloud, {s.pick_mask, s.target_mask, s.done_probability},
                                       ExecutionMode::kSnapToTarget);
  return d.action && *d.action == *s.action;
}

}  // namespace ramp3d
