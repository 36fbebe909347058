#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hats/kg_schema.hpp"
#include "json.hpp"

namespace hats {

using Qualifiers = std::vector<std::pair<std::string, std::string>>;

struct NodeRecord {
  std::string id;
  std::string label;
  std::string level;
  std::map<std::string, std::string> categorical;
  std::map<std::string, double> numeric;

  bool operator==(const NodeRecord&) const = default;
};

struct EdgeRecord {
  std::string head;
  std::string relation;
  std::string tail;
  Qualifiers qualifiers;

  bool operator==(const EdgeRecord&) const = default;
};

struct Provenance {
  std::string table;  // empty for vocabulary and bridge elements
  std::int64_t row = -1;
  int stage = 0;

  bool operator==(const Provenance&) const = default;
};

// Builds the attribute/scene/bridge node for one vocabulary value.
NodeRecord vocabulary_node(const NodeTypeSpec& type, const std::string& value);
std::string vocabulary_node_id(const std::string& label, const std::string& value);

class PropertyGraph {
 public:
  explicit PropertyGraph(const KgSchema& schema = default_schema());

  const KgSchema& schema() const { return *schema_; }

  // Returns true when the node was inserted, false for an identical repeat.
  // Throws VocabularyError / SchemaError for invalid records and ConflictError
  // when the id exists with a different payload.
  bool upsert_node(const NodeRecord& node, const Provenance& prov = {});
  // Same contract for edges; duplicates are (head, relation, tail, qualifiers).
  // Throws WiringError for a missing endpoint, SchemaError for an illegal
  // endpoint pair, DecodeError for a qualifier outside its enumeration.
  bool add_edge(const EdgeRecord& edge, const Provenance& prov = {});

  // Unchecked insertion used by import; coherence is then a report concern.
  void insert_node_raw(const NodeRecord& node, const Provenance& prov);
  void insert_edge_raw(const EdgeRecord& edge, const Provenance& prov);
  // Drops a node but keeps its edges, which become dangling.
  bool remove_node(const std::string& id);

  const std::vector<NodeRecord>& nodes() const { return nodes_; }
  const std::vector<EdgeRecord>& edges() const { return edges_; }
  const Provenance& node_provenance(std::size_t i) const { return node_prov_[i]; }
  const Provenance& edge_provenance(std::size_t i) const { return edge_prov_[i]; }

  const NodeRecord* find_node(const std::string& id) const;
  bool has_node(const std::string& id) const { return index_.count(id) > 0; }
  std::size_t node_index(const std::string& id) const;

  const std::vector<std::size_t>& edges_from(const std::string& head, const std::string& relation) const;
  const std::vector<std::size_t>& edges_to(const std::string& tail, const std::string& relation) const;

  std::size_t count_nodes(const std::string& label) const;
  std::size_t count_edges(const std::string& relation) const;
  std::map<std::string, std::size_t> node_counts() const;
  std::map<std::string, std::size_t> edge_counts() const;

  // Deep equality over nodes, edges and provenance in insertion order.
  bool operator==(const PropertyGraph& other) const;

  // Verifies the adjacency indices against the edge list.
  bool indices_consistent() const;

 private:
  using Key = std::pair<std::string, std::string>;
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept;
  };

  void validate_node(const NodeRecord& node) const;
  void index_edge(std::size_t i);
  static std::string edge_key(const EdgeRecord& e);

  const KgSchema* schema_;
  std::vector<NodeRecord> nodes_;
  std::vector<Provenance> node_prov_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<EdgeRecord> edges_;
  std::vector<Provenance> edge_prov_;
  std::unordered_set<std::string> edge_keys_;
  std::unordered_map<Key, std::vector<std::size_t>, KeyHash> by_head_;
  std::unordered_map<Key, std::vector<std::size_t>, KeyHash> by_tail_;
};

// Newline-delimited JSON, nodes first then edges, fixed field order.
std::string export_ndjson(const PropertyGraph& g);
PropertyGraph import_ndjson(const std::string& text, const KgSchema& schema = default_schema());
// FNV-1a 64 over the NDJSON export, as 16 hex digits.
std::string graph_hash(const PropertyGraph& g);

struct CoherenceResult {
  std::string rule;      // e.g. "pairing:VehicleInvolved=VEHICLE"
  std::string category;  // pairing | dangling | endpoint_legality | qualifier_enum | qualifier_scope | property_schema
  bool passed = true;
  std::size_t violations = 0;
  std::string detail;
};

struct CoherenceReport {
  std::vector<CoherenceResult> results;
  bool all_passed() const;
  std::vector<std::string> failed_categories() const;  // sorted, unique
  nlohmann::ordered_json to_json() const;
};

CoherenceReport validate_coherence(const PropertyGraph& g);

}  // namespace hats
