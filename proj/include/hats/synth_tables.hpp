#pragma once

// Synthetic crash-table generator. Besides the CSV bytes it reports the node
// and edge counts the construction stages must reproduce, tallied while the
// rows are drawn rather than by re-running the builders.

#include <cstdint>
#include <map>
#include <string>

#include "hats/contract.hpp"
#include "hats/kg_build.hpp"

namespace hats {

struct SynthScale {
  std::size_t crashes = 3331;
  std::size_t vehicles_per_crash = 3;     // maximum; each crash draws 1..max
  std::size_t occupants_per_vehicle = 2;  // maximum; each vehicle draws 1..max
};

struct SynthGroundTruth {
  std::map<std::string, std::size_t> nodes;  // label -> count in the final graph
  std::map<std::string, std::size_t> edges;  // relation -> count in the final graph
  std::map<std::string, std::size_t> rows;   // table -> row count
  std::size_t total_nodes() const;
  std::size_t total_edges() const;
};

struct SyntheticDataset {
  TableSet tables;
  DecodedTables rows;
  SynthGroundTruth truth;
};

SyntheticDataset generate_synthetic_dataset(std::uint64_t seed, const SynthScale& scale = {},
                                            const ContractSet& contracts = default_contracts(),
                                            const KgSchema& schema = default_schema(),
                                            const BridgeMapping& mapping = default_bridge_mapping());

}  // namespace hats
