// ramp3d: scene generation, dataset emission, evaluation, replay and reports.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "ramp3d/dataset.hpp"
#include "ramp3d/external_policy.hpp"
#include "ramp3d/harness.hpp"
#include "ramp3d/metrics.hpp"

#ifndef RAMP3D_VERSION
#define RAMP3D_VERSION "0.0.0"
#endif

using namespace ramp3d;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitProtocol = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitUsage = 64;
constexpr int kExitValidation = 65;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kProtocolViolation: return kExitProtocol;
    case ErrorCode::kIoFailure:
    case ErrorCode::kDeadEnd:
    case ErrorCode::kProviderFailure: return kExitRuntime;
    default: return kExitValidation;
  }
}


std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kInvalidArgument, "cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Json read_json(const std::string& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::kSchemaMismatch, path + " is not JSON: " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << text;
  if (!f) throw Error(ErrorCode::kIoFailure, "cannot write " + path);
}

// Options shared by the subcommands plus the per-command ones. A --config
// JSON object supplies values for flags not given on the command line; keys
// are flag names without dashes.
struct Options {
  std::uint64_t seed = 0;
  std::string config;
  std::string out;
  std::string mode = "snap";
  std::string policy = "oracle";
  int workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  bool json = false;

  std::string variant = "basic-placement";
  std::string variants = "all";
  int boxes = 5;
  std::string templates = "training";
  std::string cloud;

  int scenes = 200;
  bool skip_one_step = false;
  std::string episodes_out;
  std::string cloud_dir;
  int top_k = 5;
  double lambda = 1.0;

  int episodes = 20;
  int min_boxes = 1;
  int max_boxes = 10;
  double aux_rate = 0.10;
  double test_fraction = kDefaultTestFraction;
  std::string paraphrase_cmd;

  std::string input;
  std::string baseline;
};

template <typename T>
void merge(const Json& cfg, const CLI::App* app, const std::string& key, T& field) {
  if (!cfg.contains(key)) return;
  if (app->get_option_no_throw("--" + key) && app->count("--" + key) > 0) return;
  try {
    field = cfg[key].get<T>();
  } catch (const Json::exception&) {
    throw Error(ErrorCode::kInvalidArgument, "config value for '" + key + "' has the wrong type");
  }
}

void apply_config(Options& o, const CLI::App* app) {
  if (o.config.empty()) return;
  const Json cfg = read_json(o.config);
  if (!cfg.is_object()) throw Error(ErrorCode::kInvalidArgument, "config must be a JSON object");
  merge(cfg, app, "seed", o.seed);
  merge(cfg, app, "out", o.out);
  merge(cfg, app, "mode", o.mode);
  merge(cfg, app, "policy", o.policy);
  merge(cfg, app, "workers", o.workers);
  merge(cfg, app, "variant", o.variant);
  merge(cfg, app, "variants", o.variants);
  merge(cfg, app, "boxes", o.boxes);
  merge(cfg, app, "templates", o.templates);
  merge(cfg, app, "scenes", o.scenes);
  merge(cfg, app, "skip-one-step", o.skip_one_step);
  merge(cfg, app, "top-k", o.top_k);
  merge(cfg, app, "lambda", o.lambda);
  merge(cfg, app, "episodes", o.episodes);
  merge(cfg, app, "min-boxes", o.min_boxes);
  merge(cfg, app, "max-boxes", o.max_boxes);
  merge(cfg, app, "aux-rate", o.aux_rate);
  merge(cfg, app, "test-fraction", o.test_fraction);
  merge(cfg, app, "paraphrase-cmd", o.paraphrase_cmd);
}

TemplateSet parse_templates(const std::string& s) {
  if (s == "training") return TemplateSet::kTraining;
  if (s == "held-out") return TemplateSet::kHeldOut;
  throw Error(ErrorCode::kInvalidArgument, "templates must be training or held-out");
}

std::vector<ExecutionMode> parse_modes(const std::string& s) {
  if (s == "snap") return {ExecutionMode::kSnapToTarget};
  if (s == "freeform") return {ExecutionMode::kFreeForm};
  if (s == "both") return {ExecutionMode::kSnapToTarget, ExecutionMode::kFreeForm};
  throw Error(ErrorCode::kInvalidArgument, "mode must be snap, freeform or both");
}

std::vector<Variant> parse_variants(const std::string& s) {
  if (s == "all") return {kAllVariants.begin(), kAllVariants.end()};
  std::vector<Variant> out;
  std::stringstream ss(s);
  for (std::string name; std::getline(ss, name, ',');) {
    try {
      out.push_back(variant_from_string(name));
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidArgument, "unknown variant '" + name + "'");
    }
  }
  if (out.empty()) throw Error(ErrorCode::kInvalidArgument, "no variants given");
  return out;
}

Variant parse_variant(const std::string& s) {
  try {
    return variant_from_string(s);
  } catch (const std::exception&) {
    throw Error(ErrorCode::kInvalidArgument, "unknown variant '" + s + "'");
  }
}

/// Version, command, seed and a digest of the effective configuration.
Json run_header(const std::string& command, std::uint64_t seed, const Json& effective) {
  return Json{{"tool", "ramp3d"},
              {"version", RAMP3D_VERSION},
              {"command", command},
              {"seed", seed},
              {"config_digest", digest_of(effective)}};
}

void print_header(const Json& h) {
  std::cerr << "# ramp3d " << h["version"].get<std::string>() << " " << h["command"].get<std::string>()
            << " seed=" << h["seed"].get<std::uint64_t>() << " config=" << h["config_digest"].get<std::string>()
            << "\n";
}

// ---------------------------------------------------------------- commands

int cmd_gen_scene(const Options& o) {
  const Variant v = parse_variant(o.variant);
  const TemplateSet ts = parse_templates(o.templates);
  if (o.boxes < 1 || o.boxes > 30) throw Error(ErrorCode::kInvalidArgument, "--boxes must be in 1-30");
  const Json effective{{"variant", o.variant}, {"boxes", o.boxes}, {"templates", o.templates}};
  const Json header = run_header("gen-scene", o.seed, effective);
  print_header(header);
  const Scenario sc = sample_scenario(v, {o.boxes, o.boxes}, o.seed, ts);
  Json doc = to_json(sc);
  doc["scene"] = to_json(sc.scene);
  doc["goal_text"] = training_text(sc.task);
  doc["run_header"] = header;
  if (!o.cloud.empty()) {
    const auto cloud = synthesize_cloud(sc.scene, CloudConfig{0.05, 0.25, step_cloud_seed(sc.seed, 0)});
    write_text(o.cloud, encode_cloud(cloud));
  }
  const std::string text = doc.dump(2) + "\n";
  if (o.out.empty()) std::cout << text;
  else write_text(o.out, text);
  return kExitOk;
}

int cmd_oracle_rollout(const Options& o) {
  const Variant v = parse_variant(o.variant);
  const auto modes = parse_modes(o.mode);
  if (modes.size() != 1) throw Error(ErrorCode::kInvalidArgument, "oracle-rollout runs one mode");
  if (o.boxes < 1 || o.boxes > 30) throw Error(ErrorCode::kInvalidArgument, "--boxes must be in 1-30");
  const Json effective{{"variant", o.variant}, {"boxes", o.boxes}, {"mode", o.mode}, {"templates", o.templates}};
  const Json header = run_header("oracle-rollout", o.seed, effective);
  print_header(header);
  const Scenario sc = sample_scenario(v, {o.boxes, o.boxes}, o.seed, parse_templates(o.templates));
  HarnessConfig hc;
  hc.mode = modes[0];
  OraclePolicy oracle;
  const EpisodeRecord rec = run_episode(sc, oracle, hc, "rollout");
  Json j = to_json(rec);
  j["run_header"] = header;
  if (!o.out.empty()) write_text(o.out, canonical_dump(j) + "\n");
  if (o.json) {
    std::cout << canonical_dump(j) << "\n";
  } else {
    std::cout << "goal: " << training_text(sc.task) << "\n";
    for (const auto& s : rec.steps) {
      if (s.done_signaled) {
        std::cout << "step " << s.step << ": done\n";
        continue;
      }
      std::cout << "step " << s.step << ": " << canonical_dump(to_json(*s.decoded.action)) << "\n";
    }
    std::cout << "outcome: " << to_string(rec.outcome) << " after " << rec.actions << " placements\n";
  }
  return rec.outcome == Outcome::kSuccess ? kExitOk : kExitRuntime;
}

int cmd_evaluate(const Options& o) {
  SuiteConfig cfg;
  cfg.master_seed = o.seed;
  cfg.episodes_per_variant = o.scenes;
  cfg.variants = parse_variants(o.variants);
  cfg.modes = parse_modes(o.mode);
  cfg.templates = parse_templates(o.templates);
  cfg.one_step = !o.skip_one_step;
  cfg.workers = std::max(1, o.workers);
  cfg.harness.pair.top_k = o.top_k;
  cfg.harness.pair.lambda = o.lambda;
  if (o.scenes < 1) throw Error(ErrorCode::kInvalidArgument, "-n must be positive");
  const PolicySpec spec = parse_policy_spec(o.policy);
  Json effective{{"policy", spec.to_string()},   {"mode", o.mode},       {"scenes", o.scenes},
                 {"variants", o.variants},       {"templates", o.templates}, {"one_step", cfg.one_step},
                 {"top_k", o.top_k},             {"lambda", o.lambda}};
  const Json header = run_header("evaluate", o.seed, effective);
  print_header(header);
  if (!o.cloud_dir.empty()) fs::create_directories(o.cloud_dir);
  const SuiteResult result = evaluate_suite(cfg, [&] { return make_policy(spec, o.seed, o.cloud_dir); });
  const MetricsReport report = compute_metrics(result, cfg);
  Json j = to_json(report);
  j["run_header"] = header;
  if (!o.out.empty()) write_text(o.out, canonical_dump(j) + "\n");
  if (!o.episodes_out.empty()) {
    std::string lines;
    for (const auto& e : result.episodes) lines += canonical_dump(to_json(e)) + "\n";
    write_text(o.episodes_out, lines);
  }
  if (o.json) std::cout << canonical_dump(j) << "\n";
  else std::cout << render_table(report);
  return kExitOk;
}

int cmd_replay(const Options& o) {
  const std::string text = read_text(o.input);
  std::vector<Json> records;
  try {
    const Json whole = Json::parse(text);
    records.push_back(whole);
  } catch (const Json::parse_error&) {
    std::istringstream lines(text);
    for (std::string line; std::getline(lines, line);) {
      if (line.empty()) continue;
      try {
        records.push_back(Json::parse(line));
      } catch (const Json::parse_error& e) {
        throw Error(ErrorCode::kSchemaMismatch, std::string("record is not JSON: ") + e.what());
      }
    }
  }
  print_header(run_header("replay", 0, Json{{"input", fs::path(o.input).filename().string()}}));
  bool all = true;
  for (const auto& r : records) {
    const ReplayResult res = replay_episode(r);
    const std::string id = r.value("episode_id", "?");
    if (res.verified) {
      std::cout << id << ": verified\n";
    } else {
      all = false;
      std::cout << id << ": MISMATCH";
      for (const auto& m : res.mismatches) std::cout << " [" << m << "]";
      std::cout << "\n";
    }
  }
  return all ? kExitOk : kExitValidation;
}

int cmd_report(const Options& o) {
  const Json a = read_json(o.input);
  const MetricsReport report = report_from_json(a);
  if (o.baseline.empty()) {
    if (o.json) std::cout << canonical_dump(to_json(report)) << "\n";
    else std::cout << render_table(report);
    return kExitOk;
  }
  const Json b = read_json(o.baseline);
  report_from_json(b);
  Json da = a, db = b;
  da.erase("run_header");
  db.erase("run_header");
  const Json delta = ablation_delta(da, db);
  std::cout << (o.json ? canonical_dump(delta) : delta.dump(2)) << "\n";
  return kExitOk;
}

int cmd_gen_dataset(const Options& o) {
  if (o.out.empty()) throw Error(ErrorCode::kInvalidArgument, "--out is required");
  DatasetConfig cfg;
  cfg.episodes = o.episodes;
  cfg.variants = parse_variants(o.variants);
  cfg.boxes = {o.min_boxes, o.max_boxes};
  if (o.min_boxes < 1 || o.max_boxes > 30 || o.min_boxes > o.max_boxes)
    throw Error(ErrorCode::kInvalidArgument, "box range must lie in 1-30");
  cfg.aux_rate = o.aux_rate;
  cfg.test_fraction = o.test_fraction;
  cfg.seed = o.seed;
  cfg.templates = parse_templates(o.templates);
  cfg.workers = std::max(1, o.workers);
  Json effective = to_json(cfg);
  effective["paraphrase_cmd"] = o.paraphrase_cmd;
  const Json header = run_header("gen-dataset", o.seed, effective);
  print_header(header);
  std::optional<CommandParaphraser> para;
  ParaphraseProvider provider;
  if (!o.paraphrase_cmd.empty()) {
    para.emplace(o.paraphrase_cmd);
    provider = *para;
  }
  const Json manifest = emit_dataset(cfg, o.out, provider ? &provider : nullptr, o.paraphrase_cmd);
  write_text((fs::path(o.out) / "run_header.json").string(), header.dump(2) + "\n");
  const Json& c = manifest["counts"];
  std::cout << "episodes " << manifest["episodes"].size() << " (test " << c["test_episodes"] << ")\n"
            << "samples " << c["total"] << ": action " << c["action"] << ", auxiliary " << c["auxiliary"]
            << ", terminal " << c["terminal"] << ", paraphrased " << c["paraphrased"] << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Language-conditioned box rearrangement benchmark"};
  app.set_version_flag("--version", std::string(RAMP3D_VERSION));
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "Master seed");
    sub->add_option("--config", o.config, "JSON object of flag values");
    sub->add_option("--out", o.out, "Output path");
  };
  auto policy_flags = [&](CLI::App* sub) {
    sub->add_option("--mode", o.mode, "snap | freeform | both");
    sub->add_option("--policy", o.policy, "oracle | noisy:<p> | random-valid | external:<command>");
  };

  auto* gen_scene = app.add_subcommand("gen-scene", "Sample a task and scene");
  common(gen_scene);
  gen_scene->add_option("--variant", o.variant, "Task variant");
  gen_scene->add_option("--boxes", o.boxes, "Number of boxes (1-30)");
  gen_scene->add_option("--templates", o.templates, "training | held-out");
  gen_scene->add_option("--cloud", o.cloud, "Also write the initial cloud here");

  auto* gen_dataset = app.add_subcommand("gen-dataset", "Emit the supervision dataset");
  common(gen_dataset);
  gen_dataset->add_option("--episodes", o.episodes, "Oracle episodes");
  gen_dataset->add_option("--variants", o.variants, "Comma-separated variants or 'all'");
  gen_dataset->add_option("--min-boxes", o.min_boxes);
  gen_dataset->add_option("--max-boxes", o.max_boxes);
  gen_dataset->add_option("--aux-rate", o.aux_rate, "Fraction of auxiliary samples");
  gen_dataset->add_option("--test-fraction", o.test_fraction, "Fraction of episodes held out for test");
  gen_dataset->add_option("--templates", o.templates, "training | held-out");
  gen_dataset->add_option("--paraphrase-cmd", o.paraphrase_cmd, "Paraphrase provider command");
  gen_dataset->add_option("--workers", o.workers);

  auto* rollout = app.add_subcommand("oracle-rollout", "Run the oracle on one scene");
  common(rollout);
  policy_flags(rollout);
  rollout->add_option("--variant", o.variant, "Task variant");
  rollout->add_option("--boxes", o.boxes, "Number of boxes (1-30)");
  rollout->add_option("--templates", o.templates, "training | held-out");
  rollout->add_flag("--json", o.json, "Print the episode record");

  auto* evaluate = app.add_subcommand("evaluate", "Run the evaluation suite");
  common(evaluate);
  policy_flags(evaluate);
  evaluate->add_option("-n,--scenes", o.scenes, "Scenes per variant");
  evaluate->add_option("--variants", o.variants, "Comma-separated variants or 'all'");
  evaluate->add_option("--templates", o.templates, "training | held-out");
  evaluate->add_option("--workers", o.workers, "Parallel episodes");
  evaluate->add_flag("--skip-one-step", o.skip_one_step, "Closed-loop episodes only");
  evaluate->add_option("--episodes-out", o.episodes_out, "Write episode records (NDJSON)");
  evaluate->add_option("--cloud-dir", o.cloud_dir, "Send external policies cloud files from here");
  evaluate->add_option("--top-k", o.top_k, "Pick candidates for pair selection");
  evaluate->add_option("--lambda", o.lambda, "Pair score weight");
  evaluate->add_flag("--json", o.json, "Print the report as JSON");

  auto* replay = app.add_subcommand("replay", "Re-execute recorded episodes and verify digests");
  replay->add_option("record", o.input, "Episode record (JSON or NDJSON)")->required();

  auto* report = app.add_subcommand("report", "Print a stored report or the delta to a baseline");
  report->add_option("report", o.input, "Report JSON")->required();
  report->add_option("--baseline", o.baseline, "Report to subtract");
  report->add_flag("--json", o.json);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    apply_config(o, sub);
    if (sub == gen_scene) return cmd_gen_scene(o);
    if (sub == gen_dataset) return cmd_gen_dataset(o);
    if (sub == rollout) return cmd_oracle_rollout(o);
    if (sub == evaluate) return cmd_evaluate(o);
    if (sub == replay) return cmd_replay(o);
    if (sub == report) return cmd_report(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
