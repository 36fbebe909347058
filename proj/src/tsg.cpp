#include "hats/tsg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hats/error.hpp"

namespace hats {

namespace {

template <std::size_t N>
bool member_of(const std::array<const char*, N>& names, const std::string& s) {
  return std::any_of(names.begin(), names.end(), [&](const char* n) { return s == n; });
}

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out + "\"";
}

void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ValidationError("tsg " + path + ": " + what);
}

void require_keys(const nlohmann::json& j, const std::string& path, std::initializer_list<const char*> required,
                  std::initializer_list<const char*> optional = {}) {
  require(j.is_object(), path, "expected an object");
  for (const char* k : required) require(j.contains(k), path, std::string("missing '") + k + "'");
  for (const auto& [k, v] : j.items()) {
    const bool known = std::any_of(required.begin(), required.end(), [&](const char* r) { return k == r; }) ||
                       std::any_of(optional.begin(), optional.end(), [&](const char* r) { return k == r; });
    require(known, path, "unexpected key '" + k + "'");
  }
}

void require_probability(const nlohmann::json& v, const std::string& path) {
  require(v.is_number(), path, "expected a number");
  const double x = v.get<double>();
  require(std::isfinite(x) && x >= 0.0 && x <= 1.0, path, "expected a value in [0, 1]");
}

}  // namespace

std::string display_color(const std::string& level) {
  for (std::size_t i = 0; i < kDisplayLevels.size(); ++i) {
    if (level == kDisplayLevels[i]) return kDisplayColors[i];
  }
  throw VocabularyError("unknown display level '" + level + "'");
}

std::size_t TrafficSceneGraph::selected_count() const {
  return static_cast<std::size_t>(std::count_if(entities.begin(), entities.end(), [](const TsgEntity& e) { return e.selected; }));
}

TrafficSceneGraph assemble_tsg(const ScenePrediction& prediction, const SceneSample& sample) {
  if (prediction.id != sample.id) {
    throw ValidationError("prediction for scene '" + prediction.id + "' does not match sample '" + sample.id + "'");
  }
  if (prediction.entities.size() != sample.entities.size()) {
    throw ValidationError("scene " + sample.id + ": prediction covers " + std::to_string(prediction.entities.size()) +
                          " entities, sample has " + std::to_string(sample.entities.size()));
  }
  TrafficSceneGraph g;
  g.scene_id = sample.id;
  for (std::size_t i = 0; i < prediction.entities.size(); ++i) {
    const auto& p = prediction.entities[i];
    TsgEntity e;
    e.index = i;
    e.semantic_class = kSemanticClasses.at(sample.entities[i].semantic_class);
    e.selected = p.selected;
    e.relevance = p.relevance;
    if (p.selected) {
      TsgRelation r;
      const std::size_t m = p.argmax_mechanism(), s = p.argmax_side(), v = p.argmax_severity();
      r.mechanism = kMechanisms[m];
      r.side = kSides[s];
      r.severity = kSeverities[v];
      r.mechanism_confidence = p.mechanism[m];
      r.side_confidence = p.side[s];
      r.severity_confidence = p.severity[v];
      e.display_level = r.severity;
      e.relation = r;
    }
    g.entities.push_back(std::move(e));
  }
  return g;
}

nlohmann::ordered_json to_json(const TrafficSceneGraph& g) {
  nlohmann::ordered_json entities = nlohmann::ordered_json::array();
  for (const auto& e : g.entities) {
    nlohmann::ordered_json j = {{"index", e.index},
                                {"semantic_class", e.semantic_class},
                                {"selected", e.selected},
                                {"relevance", e.relevance},
                                {"display_level", e.display_level},
                                {"color", display_color(e.display_level)}};
    if (e.relation) {
      const auto& r = *e.relation;
      j["relation"] = {{"mechanism", r.mechanism},
                       {"side", r.side},
                       {"severity", r.severity},
                       {"confidence",
                        {{"mechanism", r.mechanism_confidence},
                         {"side", r.side_confidence},
                         {"severity", r.severity_confidence}}}};
    }
    entities.push_back(std::move(j));
  }
  nlohmann::ordered_json levels = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < kDisplayLevels.size(); ++i) levels[kDisplayLevels[i]] = kDisplayColors[i];
  return {{"schema", kTsgSchemaVersion},
          {"scene_id", g.scene_id},
          {"ego", {{"id", g.ego}}},
          {"palette", levels},
          {"entities", entities}};
}

void validate_tsg_json(const nlohmann::json& j) {
  require_keys(j, "$", {"schema", "scene_id", "ego", "palette", "entities"});
  require(j["schema"] == kTsgSchemaVersion, "$.schema", std::string("expected '") + kTsgSchemaVersion + "'");
  require(j["scene_id"].is_string(), "$.scene_id", "expected a string");
  require_keys(j["ego"], "$.ego", {"id"});
  require(j["ego"]["id"].is_string() && !j["ego"]["id"].get<std::string>().empty(), "$.ego.id",
          "expected a non-empty string");

  const auto& palette = j["palette"];
  require(palette.is_object() && palette.size() == kDisplayLevels.size(), "$.palette",
          "expected one color per display level");
  for (std::size_t i = 0; i < kDisplayLevels.size(); ++i) {
    require(palette.contains(kDisplayLevels[i]) && palette[kDisplayLevels[i]] == kDisplayColors[i],
            std::string("$.palette.") + kDisplayLevels[i], "color mismatch");
  }

  require(j["entities"].is_array(), "$.entities", "expected an array");
  for (std::size_t i = 0; i < j["entities"].size(); ++i) {
    const auto& e = j["entities"][i];
    const std::string path = "$.entities[" + std::to_string(i) + "]";
    require_keys(e, path, {"index", "semantic_class", "selected", "relevance", "display_level", "color"}, {"relation"});
    require(e["index"].is_number_unsigned() && e["index"].get<std::size_t>() == i, path + ".index",
            "expected " + std::to_string(i));
    require(e["semantic_class"].is_string() && member_of(kSemanticClasses, e["semantic_class"].get<std::string>()),
            path + ".semantic_class", "unknown class");
    require(e["selected"].is_boolean(), path + ".selected", "expected a boolean");
    require_probability(e["relevance"], path + ".relevance");
    require(e["display_level"].is_string() && member_of(kDisplayLevels, e["display_level"].get<std::string>()),
            path + ".display_level", "unknown display level");
    const std::string level = e["display_level"];
    require(e["color"] == display_color(level), path + ".color", "does not match the palette");
    const bool selected = e["selected"].get<bool>();
    require(selected == e.contains("relation"), path, "relation must be present exactly for selected entities");
    if (!selected) {
      require(level == kIrrelevantLevel, path + ".display_level", "unselected entities are irrelevant");
      continue;
    }
    const auto& r = e["relation"];
    require_keys(r, path + ".relation", {"mechanism", "side", "severity", "confidence"});
    require(r["mechanism"].is_string() && member_of(kMechanisms, r["mechanism"].get<std::string>()),
            path + ".relation.mechanism", "unknown mechanism");
    require(r["side"].is_string() && member_of(kSides, r["side"].get<std::string>()), path + ".relation.side",
            "unknown side");
    require(r["severity"].is_string() && member_of(kSeverities, r["severity"].get<std::string>()),
            path + ".relation.severity", "unknown severity");
    require(r["severity"] == level, path + ".display_level", "must equal the predicted severity");
    require_keys(r["confidence"], path + ".relation.confidence", {"mechanism", "side", "severity"});
    for (const char* k : {"mechanism", "side", "severity"}) {
      require_probability(r["confidence"][k], path + ".relation.confidence." + k);
    }
  }
}

TrafficSceneGraph tsg_from_json(const nlohmann::json& j) {
  validate_tsg_json(j);
  TrafficSceneGraph g;
  g.scene_id = j["scene_id"];
  g.ego = j["ego"]["id"];
  for (const auto& e : j["entities"]) {
    TsgEntity t;
    t.index = e["index"];
    t.semantic_class = e["semantic_class"];
    t.selected = e["selected"];
    t.relevance = e["relevance"];
    t.display_level = e["display_level"];
    if (t.selected) {
      const auto& r = e["relation"];
      t.relation = TsgRelation{r["mechanism"],
                               r["side"],
                               r["severity"],
                               r["confidence"]["mechanism"],
                               r["confidence"]["side"],
                               r["confidence"]["severity"]};
    }
    g.entities.push_back(std::move(t));
  }
  return g;
}

std::string render_dot(const TrafficSceneGraph& g) {
  std::ostringstream out;
  out << "digraph tsg {\n";
  out << "  label=" << quoted(g.scene_id) << ";\n";
  out << "  node [style=filled, fontname=\"Helvetica\"];\n";
  out << "  " << quoted(g.ego) << " [label=\"ego\", shape=doublecircle, fillcolor=\"#ffffff\"];\n";
  for (const auto& e : g.entities) {
    if (!e.selected) continue;
    const std::string id = "e" + std::to_string(e.index);
    const std::string color = display_color(e.display_level);
    out << "  " << quoted(id) << " [label=" << quoted(e.semantic_class + " #" + std::to_string(e.index) + "\n" + e.display_level)
        << ", shape=box, fillcolor=" << quoted(color) << "];\n";
  }
  for (const auto& e : g.entities) {
    if (!e.selected) continue;
    out << "  " << quoted(g.ego) << " -> " << quoted("e" + std::to_string(e.index))
        << " [label=" << quoted(e.relation->mechanism + "/" + e.relation->side)
        << ", color=" << quoted(display_color(e.display_level)) << "];\n";
  }
  out << "}\n";
  return out.str();
}

}  // namespace hats
