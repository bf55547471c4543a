#pragma once

// Aggregation of one-step and closed-loop records into a report, plus the
// fixed-layout text rendering and ablation deltas.

#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "error.hpp"
#include "harness.hpp"

namespace ramp3d {

inline constexpr std::array<double, 3> kIouThresholds{0.25, 0.5, 0.75};

struct Rate {
  std::size_t hits = 0;
  std::size_t total = 0;

  void add(bool hit) {
    ++total;
    if (hit) ++hits;
  }
  /// Absent when nothing was counted.
  std::optional<double> percent() const {
    if (total == 0) return std::nullopt;
    return 100.0 * static_cast<double>(hits) / static_cast<double>(total);
  }
  bool operator==(const Rate&) const = default;
};

struct BucketRates {
  Rate overall;
  std::array<Rate, kBoxBuckets.size()> buckets;

  void add(std::size_t bucket, bool hit) {
    overall.add(hit);
    buckets.at(bucket).add(hit);
  }
  bool operator==(const BucketRates&) const = default;
};

struct ErrorStats {
  std::size_t count = 0;
  double mean = 0.0;
  double std = 0.0;  // population
};

/// Mean and population standard deviation.
inline std::optional<ErrorStats> error_stats(const std::vector<double>& xs) {
  if (xs.empty()) return std::nullopt;
  ErrorStats s;
  s.count = xs.size();
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(xs.size()));
  return s;
}

inline BucketRates one_step_validity(const std::vector<OneStepRecord>& records) {
  if (records.empty()) throw Error(ErrorCode::kEmptyBucket, "no one-step records");
  BucketRates r;
  for (const auto& rec : records) r.add(rec.bucket, rec.valid);
  return r;
}

/// Placement error per ground-truth target kind, over valid predictions only.
inline std::map<TargetKind, std::optional<ErrorStats>> placement_error(const std::vector<OneStepRecord>& records) {
  std::map<TargetKind, std::vector<double>> by_kind;
  for (TargetKind k : kAllTargetKinds) by_kind[k];
  for (const auto& rec : records)
    if (rec.valid && rec.placement_error) by_kind[rec.target_kind].push_back(*rec.placement_error);
  std::map<TargetKind, std::optional<ErrorStats>> out;
  for (const auto& [k, xs] : by_kind) out[k] = error_stats(xs);
  return out;
}

inline bool joint_iou_hit(const OneStepRecord& r, double tau) { return std::min(r.pick_iou, r.target_iou) >= tau; }

inline BucketRates joint_iou_accuracy(const std::vector<OneStepRecord>& records, double tau) {
  BucketRates r;
  for (const auto& rec : records) r.add(rec.bucket, joint_iou_hit(rec, tau));
  return r;
}

struct PlanSuccess {
  BucketRates by_bucket;
  std::array<Rate, kVariantCount> by_variant;
  std::array<std::array<Rate, kVariantCount>, kBoxBuckets.size()> cells;  // bucket x variant
  bool operator==(const PlanSuccess&) const = default;
};

inline PlanSuccess plan_success(const std::vector<EpisodeRecord>& episodes) {
  PlanSuccess p;
  for (const auto& e : episodes) {
    const bool ok = e.outcome == Outcome::kSuccess;
    const auto v = static_cast<std::size_t>(e.scenario.task.variant);
    p.by_bucket.add(e.bucket(), ok);
    p.by_variant[v].add(ok);
    p.cells[e.bucket()][v].add(ok);
  }
  return p;
}

struct ModeMetrics {
  ExecutionMode mode = ExecutionMode::kSnapToTarget;
  std::optional<BucketRates> one_step_validity;
  std::map<TargetKind, std::optional<ErrorStats>> placement_error;
  std::array<BucketRates, kIouThresholds.size()> joint_iou;
  std::array<std::map<TargetKind, Rate>, kIouThresholds.size()> joint_iou_by_kind;
  std::optional<PlanSuccess> plan;
  std::map<Outcome, std::size_t> outcomes;
};

struct MetricsReport {
  std::string policy;
  bool privileged = false;
  std::uint64_t master_seed = 0;
  int episodes_per_variant = 0;
  std::vector<ModeMetrics> modes;
};

inline MetricsReport compute_metrics(const SuiteResult& result, const SuiteConfig& cfg) {
  MetricsReport report;
  report.policy = result.policy;
  report.privileged = result.privileged;
  report.master_seed = cfg.master_seed;
  report.episodes_per_variant = cfg.episodes_per_variant;
  for (ExecutionMode mode : cfg.modes) {
    ModeMetrics m;
    m.mode = mode;
    std::vector<OneStepRecord> steps;
    for (const auto& r : result.one_step)
      if (r.mode == mode) steps.push_back(r);
    std::vector<EpisodeRecord> eps;
    for (const auto& e : result.episodes)
      if (e.mode == mode) eps.push_back(e);
    if (!steps.empty()) {
      m.one_step_validity = one_step_validity(steps);
      m.placement_error = placement_error(steps);
      for (std::size_t t = 0; t < kIouThresholds.size(); ++t) {
        m.joint_iou[t] = joint_iou_accuracy(steps, kIouThresholds[t]);
        for (TargetKind k : kAllTargetKinds) m.joint_iou_by_kind[t][k];
        for (const auto& r : steps) m.joint_iou_by_kind[t][r.target_kind].add(joint_iou_hit(r, kIouThresholds[t]));
      }
    }
    if (!eps.empty()) m.plan = plan_success(eps);
    for (const auto& e : eps) ++m.outcomes[e.outcome];
    report.modes.push_back(std::move(m));
  }
  return report;
}

// ---------------------------------------------------------------- JSON

inline constexpr std::string_view kReportSchema = "ramp3d.report/1";

inline Json to_json(const Rate& r) {
  const auto p = r.percent();
  return Json{{"percent", p ? Json(*p) : Json(nullptr)}, {"hits", r.hits}, {"total", r.total}};
}

inline Json to_json(const BucketRates& b) {
  Json buckets = Json::object();
  for (std::size_t i = 0; i < kBoxBuckets.size(); ++i) buckets[kBoxBuckets[i].label()] = to_json(b.buckets[i]);
  return Json{{"overall", to_json(b.overall)}, {"buckets", std::move(buckets)}};
}

inline std::string format_tau(double tau) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", tau);
  return buf;
}

inline Json to_json(const ModeMetrics& m) {
  Json j{{"mode", to_string(m.mode)}};
  j["one_step_validity"] = m.one_step_validity ? to_json(*m.one_step_validity) : Json(nullptr);
  Json pe = Json::object();
  for (const auto& [k, s] : m.placement_error)
    pe[std::string(to_string(k))] =
        s ? Json{{"mean_m", s->mean}, {"std_m", s->std}, {"count", s->count}} : Json(nullptr);
  j["placement_error"] = std::move(pe);
  Json iou = Json::object(), iou_kind = Json::object();
  if (m.one_step_validity)
    for (std::size_t t = 0; t < kIouThresholds.size(); ++t) {
      iou[format_tau(kIouThresholds[t])] = to_json(m.joint_iou[t]);
      Json kinds = Json::object();
      for (const auto& [k, r] : m.joint_iou_by_kind[t]) kinds[std::string(to_string(k))] = to_json(r);
      iou_kind[format_tau(kIouThresholds[t])] = std::move(kinds);
    }
  j["joint_iou_accuracy"] = std::move(iou);
  j["joint_iou_accuracy_by_target_kind"] = std::move(iou_kind);
  if (m.plan) {
    Json by_variant = Json::object(), cells = Json::object();
    for (Variant v : kAllVariants) {
      const auto vi = static_cast<std::size_t>(v);
      by_variant[std::string(to_string(v))] = to_json(m.plan->by_variant[vi]);
    }
    for (std::size_t b = 0; b < kBoxBuckets.size(); ++b) {
      Json row = Json::object();
      for (Variant v : kAllVariants) row[std::string(to_string(v))] = to_json(m.plan->cells[b][static_cast<std::size_t>(v)]);
      cells[kBoxBuckets[b].label()] = std::move(row);
    }
    j["plan_success"] = Json{{"by_bucket", to_json(m.plan->by_bucket)},
                             {"by_variant", std::move(by_variant)},
                             {"by_bucket_variant", std::move(cells)}};
  } else {
    j["plan_success"] = nullptr;
  }
  Json outcomes = Json::object();
  for (Outcome o : {Outcome::kSuccess, Outcome::kInvalidAction, Outcome::kWrongDone, Outcome::kStepLimit,
                    Outcome::kDecodeFailure}) {
    const auto it = m.outcomes.find(o);
    outcomes[std::string(to_string(o))] = it == m.outcomes.end() ? 0 : it->second;
  }
  j["outcomes"] = std::move(outcomes);
  return j;
}

inline Json to_json(const MetricsReport& r) {
  Json modes = Json::array();
  for (const auto& m : r.modes) modes.push_back(to_json(m));
  return Json{{"schema_version", kReportSchema},
              {"policy", r.policy},
              {"privileged", r.privileged},
              {"master_seed", r.master_seed},
              {"episodes_per_variant", r.episodes_per_variant},
              {"std_kind", "population"},
              {"modes", std::move(modes)}};
}

inline Rate rate_from_json(const Json& j) { return {j.at("hits").get<std::size_t>(), j.at("total").get<std::size_t>()}; }

inline BucketRates bucket_rates_from_json(const Json& j) {
  BucketRates b;
  b.overall = rate_from_json(j.at("overall"));
  for (std::size_t i = 0; i < kBoxBuckets.size(); ++i) b.buckets[i] = rate_from_json(j.at("buckets").at(kBoxBuckets[i].label()));
  return b;
}

inline TargetKind target_kind_from_string(std::string_view s) {
  for (TargetKind k : kAllTargetKinds)
    if (to_string(k) == s) return k;
  throw Error(ErrorCode::kSchemaMismatch, "unknown target kind '" + std::string(s) + "'");
}

/// Inverse of to_json(MetricsReport).
inline MetricsReport report_from_json(const Json& j) {
  if (j.value("schema_version", "") != kReportSchema) throw Error(ErrorCode::kSchemaMismatch, "not a metrics report");
  try {
    MetricsReport r;
    r.policy = j.at("policy").get<std::string>();
    r.privileged = j.at("privileged").get<bool>();
    r.master_seed = j.at("master_seed").get<std::uint64_t>();
    r.episodes_per_variant = j.at("episodes_per_variant").get<int>();
    for (const auto& jm : j.at("modes")) {
      ModeMetrics m;
      m.mode = execution_mode_from_string(jm.at("mode").get<std::string>());
      if (!jm.at("one_step_validity").is_null()) {
        m.one_step_validity = bucket_rates_from_json(jm["one_step_validity"]);
        for (const auto& [k, v] : jm.at("placement_error").items()) {
          std::optional<ErrorStats> s;
          if (!v.is_null()) s = ErrorStats{v.at("count").get<std::size_t>(), v.at("mean_m").get<double>(), v.at("std_m").get<double>()};
          m.placement_error[target_kind_from_string(k)] = s;
        }
        for (std::size_t t = 0; t < kIouThresholds.size(); ++t) {
          const std::string tau = format_tau(kIouThresholds[t]);
          m.joint_iou[t] = bucket_rates_from_json(jm.at("joint_iou_accuracy").at(tau));
          for (const auto& [k, v] : jm.at("joint_iou_accuracy_by_target_kind").at(tau).items())
            m.joint_iou_by_kind[t][target_kind_from_string(k)] = rate_from_json(v);
        }
      }
      if (!jm.at("plan_success").is_null()) {
        const Json& p = jm["plan_success"];
        PlanSuccess ps;
        ps.by_bucket = bucket_rates_from_json(p.at("by_bucket"));
        for (Variant v : kAllVariants) {
          const auto vi = static_cast<std::size_t>(v);
          const std::string name(to_string(v));
          ps.by_variant[vi] = rate_from_json(p.at("by_variant").at(name));
          for (std::size_t b = 0; b < kBoxBuckets.size(); ++b)
            ps.cells[b][vi] = rate_from_json(p.at("by_bucket_variant").at(kBoxBuckets[b].label()).at(name));
        }
        m.plan = ps;
        for (const auto& [k, v] : jm.at("outcomes").items())
          if (v.get<std::size_t>() > 0) m.outcomes[outcome_from_string(k)] = v.get<std::size_t>();
      }
      r.modes.push_back(std::move(m));
    }
    return r;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kSchemaMismatch, std::string("malformed report: ") + e.what());
  }
}

// ---------------------------------------------------------------- deltas

/// Percentage-point difference a - b over every percent cell of two report
/// JSON documents. Cells absent on either side stay null; differing layout
/// (modes, buckets, variants, thresholds) is a structure mismatch.
inline Json ablation_delta(const Json& a, const Json& b) {
  if (a.is_object() != b.is_object() || a.is_array() != b.is_array())
    throw Error(ErrorCode::kStructureMismatch, "reports differ in layout");
  if (a.is_object()) {
    if (a.contains("percent") && a.contains("total")) {
      if (!b.contains("percent")) throw Error(ErrorCode::kStructureMismatch, "reports differ in layout");
      const Json& pa = a["percent"];
      const Json& pb = b["percent"];
      if (pa.is_null() || pb.is_null()) return nullptr;
      return pa.get<double>() - pb.get<double>();
    }
    Json out = Json::object();
    for (const auto& [key, va] : a.items()) {
      if (key == "placement_error" || key == "outcomes" || key == "master_seed" || key == "episodes_per_variant")
        continue;
      if (!b.contains(key)) throw Error(ErrorCode::kStructureMismatch, "key '" + key + "' missing in second report");
      if (va.is_string()) {
        if (key == "mode" && va != b[key]) throw Error(ErrorCode::kStructureMismatch, "modes differ");
        continue;
      }
      if (va.is_null() || b[key].is_null()) {
        out[key] = nullptr;
        continue;
      }
      if (!va.is_object() && !va.is_array()) continue;
      out[key] = ablation_delta(va, b[key]);
    }
    for (const auto& [key, vb] : b.items())
      if (!a.contains(key)) throw Error(ErrorCode::kStructureMismatch, "key '" + key + "' missing in first report");
    return out;
  }
  if (a.is_array()) {
    if (a.size() != b.size()) throw Error(ErrorCode::kStructureMismatch, "reports differ in mode count");
    Json out = Json::array();
    for (std::size_t i = 0; i < a.size(); ++i) out.push_back(ablation_delta(a[i], b[i]));
    return out;
  }
  return nullptr;
}

// ---------------------------------------------------------------- text

namespace detail {

inline std::string pct(const Rate& r) {
  const auto p = r.percent();
  if (!p) return "-";
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.1f", *p);
  return buf;
}

inline std::string cell(std::string s, std::size_t width) {
  if (s.size() < width) s.insert(0, width - s.size(), ' ');
  return s;
}

}  // namespace detail

inline std::string render_table(const MetricsReport& r) {
  using detail::cell;
  using detail::pct;
  std::string out;
  out += "policy " + r.policy + (r.privileged ? " (privileged)" : "") + ", master seed " +
         std::to_string(r.master_seed) + ", " + std::to_string(r.episodes_per_variant) + " scenes per variant\n";
  for (const auto& m : r.modes) {
    out += "\n== mode " + std::string(to_string(m.mode)) + " ==\n";
    if (m.one_step_validity) {
      out += "\nOne-step validity (%)\n";
      out += cell("", 22);
      for (const auto& b : kBoxBuckets) out += cell(b.label(), 9);
      out += cell("all", 9) + "\n";
      out += cell("valid", 22);
      for (const auto& b : m.one_step_validity->buckets) out += cell(pct(b), 9);
      out += cell(pct(m.one_step_validity->overall), 9) + "\n";

      out += "\nPlacement error (m, mean +- population std, valid predictions)\n";
      for (const auto& [k, s] : m.placement_error) {
        char buf[96];
        if (s) std::snprintf(buf, sizeof buf, "%.3f +- %.3f  (n=%zu)", s->mean, s->std, s->count);
        else std::snprintf(buf, sizeof buf, "-");
        out += cell(std::string(to_string(k)), 22) + "  " + buf + "\n";
      }

      out += "\nJoint IoU accuracy (%)\n";
      out += cell("tau", 22);
      for (const auto& b : kBoxBuckets) out += cell(b.label(), 9);
      out += cell("all", 9);
      for (TargetKind k : kAllTargetKinds) out += cell(std::string(to_string(k)), 13);
      out += "\n";
      for (std::size_t t = 0; t < kIouThresholds.size(); ++t) {
        out += cell(format_tau(kIouThresholds[t]), 22);
        for (const auto& b : m.joint_iou[t].buckets) out += cell(pct(b), 9);
        out += cell(pct(m.joint_iou[t].overall), 9);
        for (TargetKind k : kAllTargetKinds) out += cell(pct(m.joint_iou_by_kind[t].at(k)), 13);
        out += "\n";
      }
    }
    if (m.plan) {
      out += "\nPlan success (%)\n";
      out += cell("variant", 22);
      for (const auto& b : kBoxBuckets) out += cell(b.label(), 9);
      out += cell("all", 9) + "\n";
      for (Variant v : kAllVariants) {
        const auto vi = static_cast<std::size_t>(v);
        out += cell(std::string(to_string(v)), 22);
        for (std::size_t b = 0; b < kBoxBuckets.size(); ++b) out += cell(pct(m.plan->cells[b][vi]), 9);
        out += cell(pct(m.plan->by_variant[vi]), 9) + "\n";
      }
      out += cell("all", 22);
      for (const auto& b : m.plan->by_bucket.buckets) out += cell(pct(b), 9);
      out += cell(pct(m.plan->by_bucket.overall), 9) + "\n";
      out += "\nOutcomes:";
      for (const auto& [o, n] : m.outcomes) out += " " + std::string(to_string(o)) + "=" + std::to_string(n);
      out += "\n";
    }
  }
  return out;
}

}  // namespace ramp3d
