#include "mdpcg/io.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

namespace mdpcg {

namespace {

using json = nlohmann::ordered_json;

constexpr double kHeadSumTol = 1e-9;

[[noreturn]] void fail(const std::string& message) { throw ParseError(message); }

double require_number(const json& node, const std::string& key, const std::string& context) {
  if (!node.contains(key) || !node[key].is_number()) {
    fail(context + ": missing or non-numeric \"" + key + "\"");
  }
  return node[key].get<double>();
}

int require_int(const json& node, const std::string& key, const std::string& context) {
  if (!node.contains(key) || !node[key].is_number_integer()) {
    fail(context + ": missing or non-integer \"" + key + "\"");
  }
  return node[key].get<int>();
}

}  // namespace

GameDocument parse_game_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& err) {
    fail(std::string("invalid JSON: ") + err.what());
  }
  if (!doc.is_object()) fail("game file must be a JSON object");

  const int states = require_int(doc, "states", "game file");
  if (states < 1) fail("\"states\" must be a positive integer");
  const double mass = require_number(doc, "mass", "game file");
  if (!(mass > 0.0)) fail("\"mass\" must be positive");

  if (!doc.contains("hyperarcs") || !doc["hyperarcs"].is_array() || doc["hyperarcs"].empty()) {
    fail("game file needs a nonempty \"hyperarcs\" array");
  }

  std::vector<Hyperarc> arcs;
  std::vector<double> slope, intercept;
  int index = 0;
  for (const json& node : doc["hyperarcs"]) {
    ++index;
    const std::string context = "hyperarc " + std::to_string(index);
    if (!node.is_object()) fail(context + ": must be an object");

    Hyperarc arc;
    arc.state = require_int(node, "state", context) - 1;
    if (arc.state < 0 || arc.state >= states) fail(context + ": \"state\" out of range");
    if (!node.contains("action") || !node["action"].is_string()) {
      fail(context + ": missing \"action\" string");
    }
    arc.action = node["action"].get<std::string>();

    if (!node.contains("heads") || !node["heads"].is_array() || node["heads"].empty()) {
      fail(context + ": needs a nonempty \"heads\" array");
    }
    double sum = 0.0;
    for (const json& head : node["heads"]) {
      const int head_state = require_int(head, "state", context + " head") - 1;
      if (head_state < 0 || head_state >= states) fail(context + ": head \"state\" out of range");
      const double prob = require_number(head, "prob", context + " head");
      if (prob < 0.0) fail(context + ": head probability is negative");
      arc.heads.emplace_back(head_state, prob);
      sum += prob;
    }
    if (std::abs(sum - 1.0) > kHeadSumTol) {
      std::ostringstream os;
      os << context << ": head probabilities sum to " << sum << " (must be 1 within 1e-9)";
      fail(os.str());
    }
    for (auto& [state, prob] : arc.heads) prob /= sum;

    if (!node.contains("cost") || !node["cost"].is_object()) {
      fail(context + ": missing \"cost\" object");
    }
    slope.push_back(require_number(node["cost"], "a", context + " cost"));
    intercept.push_back(require_number(node["cost"], "b", context + " cost"));
    arcs.push_back(std::move(arc));
  }

  const int K = static_cast<int>(arcs.size());
  Vector a(K), b(K);
  for (int k = 0; k < K; ++k) {
    a(k) = slope[k];
    b(k) = intercept[k];
  }

  Vector perturbation = Vector::Zero(K);
  bool has_perturbation = false;
  if (doc.contains("perturbation")) {
    if (!doc["perturbation"].is_array() ||
        static_cast<int>(doc["perturbation"].size()) != K) {
      fail("\"perturbation\" must be an array of K numbers");
    }
    int k = 0;
    for (const json& value : doc["perturbation"]) {
      if (!value.is_number()) fail("\"perturbation\" must contain numbers only");
      perturbation(k++) = value.get<double>();
    }
    has_perturbation = true;
  }

  try {
    GameSpec spec(states, std::move(arcs), CostModel::affine(std::move(a), std::move(b)), mass);
    return GameDocument{std::move(spec), std::move(perturbation), has_perturbation};
  } catch (const std::exception& err) {
    fail(std::string("invalid game: ") + err.what());
  }
}

GameDocument load_game_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_game_json(buffer.str());
}

std::string serialize_game(const GameDocument& doc) {
  const GameSpec& spec = doc.spec;
  json out;
  out["states"] = spec.num_states();
  out["mass"] = spec.mass();
  out["hyperarcs"] = json::array();
  for (int k = 0; k < spec.num_hyperarcs(); ++k) {
    const Hyperarc& arc = spec.hyperarcs()[k];
    json node;
    node["state"] = arc.state + 1;
    node["action"] = arc.action;
    node["heads"] = json::array();
    for (const auto& [head, prob] : arc.heads) {
      node["heads"].push_back(json{{"state", head + 1}, {"prob", prob}});
    }
    node["cost"] = json{{"a", spec.costs().slope()(k)}, {"b", spec.costs().intercept()(k)}};
    out["hyperarcs"].push_back(std::move(node));
  }
  if (doc.has_perturbation) {
    json eps = json::array();
    for (int k = 0; k < spec.num_hyperarcs(); ++k) eps.push_back(doc.perturbation(k));
    out["perturbation"] = std::move(eps);
  }
  return out.dump(2) + "\n";
}

}  // namespace mdpcg
