#pragma once

// Declarative schema of the traffic-accident knowledge graph: node types with
// their vocabularies and properties, relation types with legal endpoints and
// qualifiers, and the node/edge count pairings checked for coherence.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace hats {

struct CategoricalPropSpec {
  std::string name;
  std::string domain;  // node type whose vocabulary bounds the value; empty = free text
};

struct NodeTypeSpec {
  std::string label;
  std::string level;  // entity | attribute | bridge
  std::string group;  // e.g. "Environment Condition"
  int stage = 1;
  // Vocabulary-backed types get one node per value; entity types built from
  // table rows leave it empty.
  std::vector<std::string> vocabulary;
  std::vector<CategoricalPropSpec> categorical;  // type-specific only
  std::vector<std::string> numeric;              // exact set, all required
};

struct EdgeTypeSpec {
  std::string relation;
  int stage = 2;
  std::string group;  // schema | causality | bridging
  std::vector<std::pair<std::string, std::string>> endpoints;  // head "*" = any stage-I type
  std::vector<std::string> qualifiers;                       // allowed qualifier relations
  bool qualifiers_required = false;
};

struct PairingRule {
  std::string relation;
  std::string label;
};

struct KgSchema {
  std::string version;
  std::vector<NodeTypeSpec> node_types;
  std::vector<EdgeTypeSpec> edge_types;
  std::map<std::string, std::vector<std::string>> qualifier_values;
  std::vector<PairingRule> pairings;

  const NodeTypeSpec* node_type(const std::string& label) const;
  const EdgeTypeSpec* edge_type(const std::string& relation) const;
  const NodeTypeSpec& require_node_type(const std::string& label) const;
  const EdgeTypeSpec& require_edge_type(const std::string& relation) const;

  bool legal(const std::string& head_label, const std::string& relation,
             const std::string& tail_label) const;
  bool qualifier_value_ok(const std::string& qualifier, const std::string& value) const;

  std::size_t stage_node_type_count(int stage) const;
  std::size_t stage_edge_type_count(int stage) const;
  // Fixed order of the categorical properties every node may carry.
  std::vector<std::string> categorical_property_names() const;
};

// The universal categorical properties present on every node.
inline constexpr const char* kUniversalProps[] = {"name", "type", "level"};

const KgSchema& default_schema();

nlohmann::ordered_json schema_to_json(const KgSchema& schema);
KgSchema schema_from_json(const nlohmann::ordered_json& j);

}  // namespace hats
