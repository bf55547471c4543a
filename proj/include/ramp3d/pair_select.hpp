#pragma once

// Joint pickup/putdown query selection from per-query head outputs.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "error.hpp"
#include "perception.hpp"

namespace ramp3d {

struct QueryOutputs {
  std::vector<double> pick_confidence;
  std::vector<double> put_confidence;
  std::vector<std::vector<double>> pickup_embedding;   // q_i
  std::vector<std::vector<double>> putdown_embedding;  // k_i
  std::vector<Mask> masks;  // optional; empty when only indices are needed
  double done_probability = 0.0;

  std::size_t size() const { return pick_confidence.size(); }
};

inline void validate(const QueryOutputs& o) {
  const std::size_t q = o.size();
  if (q < 2) throw Error(ErrorCode::kNoCandidates, "need at least two queries");
  if (o.put_confidence.size() != q || o.pickup_embedding.size() != q || o.putdown_embedding.size() != q)
    throw Error(ErrorCode::kDimensionMismatch, "per-query arrays differ in length");
  if (!o.masks.empty() && o.masks.size() != q) throw Error(ErrorCode::kDimensionMismatch, "mask count differs");
  const std::size_t dim = o.pickup_embedding[0].size();
  for (std::size_t i = 0; i < q; ++i) {
    if (o.pickup_embedding[i].size() != dim || o.putdown_embedding[i].size() != dim)
      throw Error(ErrorCode::kDimensionMismatch, "embeddings differ in dimension");
    if (!std::isfinite(o.pick_confidence[i]) || !std::isfinite(o.put_confidence[i]))
      throw Error(ErrorCode::kInvalidArgument, "confidences must be finite");
  }
}

/// s[i][j] = <q_i, k_j>. The diagonal is left at zero and never used.
inline std::vector<std::vector<double>> pair_scores(const QueryOutputs& o) {
  validate(o);
  const std::size_t q = o.size();
  std::vector<std::vector<double>> s(q, std::vector<double>(q, 0.0));
  for (std::size_t i = 0; i < q; ++i)
    for (std::size_t j = 0; j < q; ++j)
      if (i != j)
        s[i][j] = std::inner_product(o.pickup_embedding[i].begin(), o.pickup_embedding[i].end(),
                                     o.putdown_embedding[j].begin(), 0.0);
  return s;
}

struct PairSelectConfig {
  int top_k = 5;
  double lambda = 1.0;
};

struct PairChoice {
  std::size_t pick = 0;
  std::size_t put = 0;
  double score = 0.0;
  bool operator==(const PairChoice&) const = default;
};

inline constexpr double kConfidenceFloor = 1e-12;

inline double pair_objective(const QueryOutputs& o, const std::vector<std::vector<double>>& s, std::size_t i,
                             std::size_t j, double lambda) {
  return std::log(std::max(o.pick_confidence[i], kConfidenceFloor)) +
         std::log(std::max(o.put_confidence[j], kConfidenceFloor)) + lambda * s[i][j];
}

/// Indices of the K highest pick confidences; equal confidences keep the
/// lower index.
inline std::vector<std::size_t> top_pick_candidates(const QueryOutputs& o, int k) {
  std::vector<std::size_t> idx(o.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return o.pick_confidence[a] > o.pick_confidence[b]; });
  idx.resize(std::min(idx.size(), static_cast<std::size_t>(std::max(k, 1))));
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// Argmax over (i in top-K pick set, j != i) of
/// log c_i^pick + log c_j^put + lambda * s_ij; ties go to the smaller (i, j).
inline PairChoice select_action_pair(const QueryOutputs& o, const PairSelectConfig& cfg = {}) {
  const auto s = pair_scores(o);
  std::optional<PairChoice> best;
  for (std::size_t i : top_pick_candidates(o, cfg.top_k))
    for (std::size_t j = 0; j < o.size(); ++j) {
      if (j == i) continue;
      const double v = pair_objective(o, s, i, j, cfg.lambda);
      if (!best || v > best->score) best = PairChoice{i, j, v};
    }
  return *best;
}

inline bool decide_done(double done_probability, double threshold = 0.5) { return done_probability > threshold; }
inline bool decide_done(const QueryOutputs& o, double threshold = 0.5) {
  return decide_done(o.done_probability, threshold);
}

inline Json to_json(const QueryOutputs& o) {
  Json queries = Json::array();
  for (std::size_t i = 0; i < o.size(); ++i) {
    Json q{{"pick_confidence", o.pick_confidence[i]},
           {"put_confidence", o.put_confidence[i]},
           {"pickup_embedding", o.pickup_embedding[i]},
           {"putdown_embedding", o.putdown_embedding[i]}};
    if (!o.masks.empty()) q["mask"] = rle_to_json(o.masks[i]);
    queries.push_back(std::move(q));
  }
  return Json{{"queries", std::move(queries)}, {"done_probability", o.done_probability}};
}

inline QueryOutputs query_outputs_from_json(const Json& j) {
  QueryOutputs o;
  try {
    for (const auto& q : j.at("queries")) {
      o.pick_confidence.push_back(q.at("pick_confidence").get<double>());
      o.put_confidence.push_back(q.at("put_confidence").get<double>());
      o.pickup_embedding.push_back(q.at("pickup_embedding").get<std::vector<double>>());
      o.putdown_embedding.push_back(q.at("putdown_embedding").get<std::vector<double>>());
      if (q.contains("mask")) o.masks.push_back(rle_from_json(q.at("mask")));
    }
    o.done_probability = j.at("done_probability").get<double>();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kProtocolViolation, std::string("malformed query outputs: ") + e.what());
  }
  validate(o);
  return o;
}

}  // namespace ramp3d
