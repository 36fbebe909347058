#pragma once

// Ego-centric hazard-aware traffic scene graph: one ego node, one tagged edge
// per selected entity, JSON export/import and DOT rendering.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "hats/scene.hpp"
#include "json.hpp"

namespace hats {

inline constexpr const char* kTsgSchemaVersion = "hats.tsg/1";
inline constexpr const char* kIrrelevantLevel = "irrelevant";

// Four predicted severities followed by the irrelevant display level.
inline constexpr std::array<const char*, 5> kDisplayLevels = {"info", "caution", "imminent",
                                                              "relevant_but_not_critical", "irrelevant"};
inline constexpr std::array<const char*, 5> kDisplayColors = {"#1f77b4", "#ffbf00", "#d62728", "#2ca02c",
                                                              "#c7c7c7"};

// Hex fill color of a display level; VocabularyError for an unknown level.
std::string display_color(const std::string& level);

struct TsgRelation {
  std::string mechanism, side, severity;
  double mechanism_confidence = 0, side_confidence = 0, severity_confidence = 0;
  bool operator==(const TsgRelation&) const = default;
};

struct TsgEntity {
  std::size_t index = 0;
  std::string semantic_class;
  bool selected = false;
  double relevance = 0;
  std::string display_level = kIrrelevantLevel;
  std::optional<TsgRelation> relation;  // present iff selected
  bool operator==(const TsgEntity&) const = default;
};

struct TrafficSceneGraph {
  std::string scene_id;
  std::string ego = "ego";
  std::vector<TsgEntity> entities;
  std::size_t selected_count() const;
  bool operator==(const TrafficSceneGraph&) const = default;
};

// Tags come from the argmax of each head; unselected entities stay irrelevant.
// ValidationError when the prediction does not belong to the sample.
TrafficSceneGraph assemble_tsg(const ScenePrediction& prediction, const SceneSample& sample);

nlohmann::ordered_json to_json(const TrafficSceneGraph& g);
// Structural and vocabulary checks; ValidationError naming the offending path.
void validate_tsg_json(const nlohmann::json& j);
TrafficSceneGraph tsg_from_json(const nlohmann::json& j);

std::string render_dot(const TrafficSceneGraph& g);

}  // namespace hats
