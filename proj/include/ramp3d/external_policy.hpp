#pragma once

// Policy running in a child process, one JSON object per line on its stdin
// and stdout.
//
//   harness -> {"type":"hello","protocol_version":1}
//   policy  -> {"type":"handshake","protocol_version":1,"policy_name":...,"reentrant":bool,
//               "privileged_observation":bool (optional)}
//   harness -> {"type":"step","episode_id":...,"step":n,"goal_text":...,"cloud":{...}}
//              or with "cloud_ref":"<path to binary cloud file>" instead of "cloud"
//   policy  -> {"type":"action","pick_mask":RLE,"target_mask":RLE,"done_probability":p}
//              or {"type":"queries","queries":[...],"done_probability":p}
//   harness -> {"type":"bye"}
//
// RLE masks are {"size":n,"counts":[zeros, ones, zeros, ...]}.

#include <filesystem>
#include <fstream>
#include <string>

#include "canonical_json.hpp"
#include "error.hpp"
#include "policy.hpp"
#include "process.hpp"

namespace ramp3d {

inline constexpr int kProtocolVersion = 1;

/// Inline cloud payload: flat xyz plus per-point labels.
inline Json cloud_to_wire(const LabeledPointCloud& c) {
  std::vector<double> xyz;
  xyz.reserve(c.size() * 3);
  std::vector<int> sem, col;
  for (std::size_t i = 0; i < c.size(); ++i) {
    xyz.push_back(c.points[i].x);
    xyz.push_back(c.points[i].y);
    xyz.push_back(c.points[i].z);
    sem.push_back(static_cast<int>(c.semantic[i]));
    col.push_back(static_cast<int>(c.color[i]));
  }
  return Json{{"count", c.size()},       {"resolution", c.resolution}, {"floor_resolution", c.floor_resolution},
              {"xyz", std::move(xyz)}, {"instance", c.instance},     {"semantic", std::move(sem)},
              {"color", std::move(col)}};
}

inline LabeledPointCloud cloud_from_wire(const Json& j) {
  LabeledPointCloud c;
  c.resolution = j.at("resolution").get<double>();
  c.floor_resolution = j.at("floor_resolution").get<double>();
  const auto xyz = j.at("xyz").get<std::vector<double>>();
  const auto inst = j.at("instance").get<std::vector<EntityId>>();
  const auto sem = j.at("semantic").get<std::vector<int>>();
  const auto col = j.at("color").get<std::vector<int>>();
  const std::size_t n = j.at("count").get<std::size_t>();
  if (xyz.size() != 3 * n || inst.size() != n || sem.size() != n || col.size() != n)
    throw Error(ErrorCode::kProtocolViolation, "cloud arrays disagree with count");
  for (std::size_t i = 0; i < n; ++i)
    c.push({xyz[3 * i], xyz[3 * i + 1], xyz[3 * i + 2]}, inst[i], static_cast<SemanticClass>(sem[i]),
           static_cast<std::uint8_t>(col[i]));
  return c;
}

inline PolicyResponse response_from_wire(const Json& j, std::size_t cloud_size) {
  try {
    const std::string type = j.at("type").get<std::string>();
    PolicyResponse r;
    if (type == "action") {
      ActionMaskPair m{rle_from_json(j.at("pick_mask")), rle_from_json(j.at("target_mask")),
                       j.at("done_probability").get<double>()};
      r.masks = std::move(m);
    } else if (type == "queries") {
      r.queries = query_outputs_from_json(j);
      for (const auto& m : r.queries->masks)
        if (m.size() != cloud_size) throw Error(ErrorCode::kProtocolViolation, "query mask size differs from cloud");
    } else {
      throw Error(ErrorCode::kProtocolViolation, "unexpected message type '" + type + "'");
    }
    if (r.masks && (r.masks->pick.size() != cloud_size || r.masks->target.size() != cloud_size))
      throw Error(ErrorCode::kProtocolViolation, "mask size differs from cloud");
    const double p = r.masks ? r.masks->done_probability : r.queries->done_probability;
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::kProtocolViolation, "done_probability outside [0, 1]");
    return r;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kProtocolViolation, std::string("malformed response: ") + e.what());
  }
}

struct ExternalPolicyOptions {
  std::string command;
  std::string cloud_dir;  // non-empty: send cloud_ref files instead of inline clouds
};

class ExternalPolicy : public Policy {
 public:
  explicit ExternalPolicy(ExternalPolicyOptions opts) : opts_(std::move(opts)), proc_(opts_.command) {
    try {
      handshake();
    } catch (...) {
      proc_.close(kBye);
      throw;
    }
  }

  ~ExternalPolicy() override { proc_.close(kBye); }

  PolicyResponse act(const Observation& obs) override {
    Json req{{"type", "step"}, {"episode_id", obs.episode_id}, {"step", obs.step}, {"goal_text", obs.goal_text}};
    if (opts_.cloud_dir.empty()) {
      req["cloud"] = cloud_to_wire(*obs.cloud);
    } else {
      const auto path = std::filesystem::path(opts_.cloud_dir) /
                        (obs.episode_id + "-" + std::to_string(obs.step) + ".cloud");
      std::ofstream f(path, std::ios::binary);
      f << encode_cloud(*obs.cloud);
      if (!f) throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
      req["cloud_ref"] = path.string();
    }
    if (privileged_) {
      req["scene"] = to_json(*obs.state);
      req["task"] = to_json(*obs.task);
    }
    send(req);
    return response_from_wire(receive(), obs.cloud->size());
  }

  std::string name() const override { return name_; }
  bool privileged() const override { return privileged_; }
  bool reentrant() const { return reentrant_; }

 private:
  static constexpr const char* kBye = R"({"type":"bye"})";

  void handshake() {
    send(Json{{"type", "hello"}, {"protocol_version", kProtocolVersion}});
    const Json hs = receive();
    if (hs.value("type", "") != "handshake") throw Error(ErrorCode::kProtocolViolation, "expected handshake");
    if (hs.value("protocol_version", -1) != kProtocolVersion)
      throw Error(ErrorCode::kProtocolViolation, "unsupported protocol version");
    if (!hs.contains("policy_name") || !hs["policy_name"].is_string() || !hs.contains("reentrant") ||
        !hs["reentrant"].is_boolean())
      throw Error(ErrorCode::kProtocolViolation, "handshake needs policy_name and reentrant");
    name_ = hs["policy_name"].get<std::string>();
    reentrant_ = hs["reentrant"].get<bool>();
    privileged_ = hs.value("privileged_observation", false);
  }

  void send(const Json& j) {
    if (!proc_.send(j.dump())) throw Error(ErrorCode::kProtocolViolation, "policy process closed its input");
  }

  Json receive() {
    const auto line = proc_.receive();
    if (!line) throw Error(ErrorCode::kProtocolViolation, "policy process closed its output");
    try {
      Json j = Json::parse(*line);
      if (!j.is_object()) throw Error(ErrorCode::kProtocolViolation, "message is not a JSON object");
      return j;
    } catch (const Json::parse_error& e) {
      throw Error(ErrorCode::kProtocolViolation, std::string("malformed message: ") + e.what());
    }
  }

  ExternalPolicyOptions opts_;
  LineProcess proc_;
  std::string name_;
  bool reentrant_ = false;
  bool privileged_ = false;
};

/// Instantiates a policy from its spec. External policies start their process here.
inline std::unique_ptr<Policy> make_policy(const PolicySpec& spec, std::uint64_t seed,
                                           const std::string& cloud_dir = "") {
  switch (spec.kind) {
    case PolicyKind::kOracle: return std::make_unique<OraclePolicy>();
    case PolicyKind::kNoisyOracle: return std::make_unique<NoisyOraclePolicy>(spec.corruption, seed);
    case PolicyKind::kRandomValid: return std::make_unique<RandomValidPolicy>(seed);
    case PolicyKind::kExternal: return std::make_unique<ExternalPolicy>(ExternalPolicyOptions{spec.command, cloud_dir});
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown policy kind");
}

}  // namespace ramp3d
