#pragma once

// The four construction stages: nodes from decoded rows (I), schema-driven
// edges (II), causality edges with provenance qualifiers (III), and bridge
// nodes with CorrespondsTo mappings (IV).

#include <map>
#include <string>
#include <vector>

#include "hats/contract.hpp"
#include "hats/graph.hpp"
#include "json.hpp"

namespace hats {

using DecodedTables = std::map<std::string, std::vector<DecodedRow>>;

void build_stage_nodes(PropertyGraph& g, const ContractSet& contracts, const DecodedTables& rows);
void wire_schema_edges(PropertyGraph& g, const ContractSet& contracts, const DecodedTables& rows);
void wire_causality(PropertyGraph& g, const ContractSet& contracts, const DecodedTables& rows);

struct BridgeCorrespondence {
  std::string taxonomy;   // cityscapes | mechanism
  std::string node_type;  // stage-I type
  std::string value;      // vocabulary value of that type
  std::string target;     // bridge vocabulary value
};

struct BridgeMapping {
  std::vector<BridgeCorrespondence> entries;
};

// Throws ConfigError for unknown node types, values, taxonomies or targets.
BridgeMapping bridge_mapping_from_json(const nlohmann::json& j, const KgSchema& schema = default_schema());
nlohmann::ordered_json bridge_mapping_to_json(const BridgeMapping& m);
const BridgeMapping& default_bridge_mapping();

void wire_bridges(PropertyGraph& g, const BridgeMapping& mapping);

struct StageStats {
  int stage = 0;
  std::map<std::string, std::size_t> nodes;  // label -> count after this stage
  std::map<std::string, std::size_t> edges;  // relation -> count after this stage
  std::size_t total_nodes = 0;
  std::size_t total_edges = 0;
  std::size_t added_nodes = 0;
  std::size_t added_edges = 0;
};

StageStats snapshot_stats(const PropertyGraph& g, int stage, const StageStats* previous);

struct TableSet {
  std::map<std::string, std::string> csv;  // table name -> bytes
  nlohmann::json mapping;                  // bridge mapping document
};

struct IngestResult {
  PropertyGraph graph;
  std::vector<StageStats> stages;
  std::map<std::string, DecodeResult> decoded;  // rows and rejects per table
};

IngestResult ingest_dataset(const TableSet& tables, const ContractSet& contracts,
                            const KgSchema& schema = default_schema());
// Runs the four stages over already decoded rows into `g`, which may already
// hold an earlier build (idempotent re-run).
std::vector<StageStats> run_stages(PropertyGraph& g, const ContractSet& contracts,
                                   const DecodedTables& rows, const BridgeMapping& mapping);

nlohmann::ordered_json stats_to_json(const std::vector<StageStats>& stages, const KgSchema& schema);

}  // namespace hats
