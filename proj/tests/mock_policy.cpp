// Test double for the external policy protocol.
//
//   mock_policy oracle        privileged oracle answering with masks
//   mock_policy queries       privileged oracle answering with query outputs
//   mock_policy done          signals done on the first step
//   mock_policy garbage       answers steps with non-JSON
//   mock_policy bad-version   handshake with an unsupported version
//   mock_policy short-mask    masks one point shorter than the cloud
//   mock_policy exit          exits right after the handshake
//   mock_policy cloud-ref     like oracle, but requires cloud_ref requests

#include <cstdio>
#include <iostream>
#include <string>

#include "ramp3d/external_policy.hpp"

using namespace ramp3d;

namespace {

void emit(const Json& j) { std::cout << j.dump() << "\n" << std::flush; }

LabeledPointCloud request_cloud(const Json& req) {
  if (req.contains("cloud_ref")) {
    std::ifstream f(req["cloud_ref"].get<std::string>(), std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_cloud(bytes);
  }
  return cloud_from_wire(req.at("cloud"));
}

Json answer_masks(const ActionMaskPair& m) {
  return Json{{"type", "action"},
              {"pick_mask", rle_to_json(m.pick)},
              {"target_mask", rle_to_json(m.target)},
              {"done_probability", m.done_probability}};
}

// Two queries: pickup first, putdown second, embeddings favouring (0, 1).
Json answer_queries(const ActionMaskPair& m) {
  QueryOutputs q;
  q.pick_confidence = {0.9, 0.1};
  q.put_confidence = {0.1, 0.9};
  q.pickup_embedding = {{1.0, 0.0}, {0.0, 1.0}};
  q.putdown_embedding = {{0.0, 1.0}, {1.0, 0.0}};
  q.masks = {m.pick, m.target};
  q.done_probability = m.done_probability;
  Json j = to_json(q);
  j["type"] = "queries";
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "oracle";
  std::string line;
  if (!std::getline(std::cin, line)) return 1;
  const Json hello = Json::parse(line);
  if (hello.value("type", "") != "hello") return 1;
  emit(Json{{"type", "handshake"},
            {"protocol_version", mode == "bad-version" ? 99 : kProtocolVersion},
            {"policy_name", "mock-" + mode},
            {"reentrant", false},
            {"privileged_observation", true}});
  if (mode == "exit") return 0;

  OraclePolicy oracle;
  while (std::getline(std::cin, line)) {
    const Json req = Json::parse(line);
    const std::string type = req.value("type", "");
    if (type == "bye") return 0;
    if (type != "step") return 1;
    if (mode == "garbage") {
      std::cout << "not json at all\n" << std::flush;
      continue;
    }
    if (mode == "cloud-ref" && !req.contains("cloud_ref")) return 1;
    const LabeledPointCloud cloud = request_cloud(req);
    if (mode == "done") {
      emit(answer_masks({Mask(cloud.size(), false), Mask(cloud.size(), false), 0.9}));
      continue;
    }
    const SceneState state = scene_from_json(req.at("scene"));
    const TaskInstance task = task_from_json(req.at("task"));
    Observation obs{req.at("episode_id").get<std::string>(), 0, req.at("step").get<int>(),
                    req.at("goal_text").get<std::string>(), &cloud, &state, &task};
    ActionMaskPair m = *oracle.act(obs).masks;
    if (mode == "short-mask") {
      m.pick.pop_back();
      m.target.pop_back();
    }
    emit(mode == "queries" && m.done_probability < 0.5 ? answer_queries(m) : answer_masks(m));
  }
  return 0;
}
