#pragma once

// Table contracts: column domains with raw-code decode maps, plus the rules
// that turn a decoded row into graph nodes and edges.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hats/kg_schema.hpp"
#include "json.hpp"

namespace hats {

// RFC 4180 style: comma separator, double-quote quoting with "" escapes,
// records end at LF (a preceding CR is dropped).
std::vector<std::vector<std::string>> parse_csv(const std::string& text,
                                                std::vector<std::size_t>* line_numbers = nullptr);
std::string csv_field(const std::string& value);
std::string write_csv(const std::vector<std::vector<std::string>>& records);

struct ColumnSpec {
  std::string name;
  std::string kind;    // key | code | number
  std::string domain;  // code only: node type label, "qualifier:<name>" or "enum"
  std::vector<std::string> labels;                         // domain "enum" only
  std::vector<std::pair<std::string, std::string>> codes;  // raw code -> label
  bool nullable = false;
  bool integer = false;  // number only
  double min = 0.0, max = 0.0;
};

struct NodeRef {
  enum class Kind { kSelf, kAttr, kRef };
  Kind kind = Kind::kSelf;
  std::string column;            // kAttr: column holding the vocabulary value
  std::string label;             // kRef: referenced entity type
  std::vector<std::string> key;  // kRef: columns forming the referenced key
};

struct QualifierRule {
  std::string relation;
  std::string value;   // constant, or
  std::string column;  // value read from this column
};

struct EdgeRule {
  std::string relation;
  NodeRef from, to;
  std::string when_column, when_equals;  // optional row filter
  std::vector<QualifierRule> qualifiers;
};

struct EntityRule {
  std::string label;
  std::vector<std::string> key;
  std::string name_const, name_column;
  std::vector<std::pair<std::string, std::string>> categorical;  // property -> column
  std::vector<std::pair<std::string, std::string>> numeric;      // property -> column
};

struct TableContract {
  std::string table;
  std::vector<ColumnSpec> columns;
  std::optional<EntityRule> entity;
  std::vector<EdgeRule> edges;

  const ColumnSpec* column(const std::string& name) const;
};

struct ContractSet {
  std::string version;
  std::vector<TableContract> tables;

  const TableContract& table(const std::string& name) const;
  // Table whose entity rule emits nodes of `label`.
  const TableContract& entity_table(const std::string& label) const;
};

// Builds the contract set used by the synthetic generator and the CLI.
ContractSet default_contracts(const KgSchema& schema = default_schema());
nlohmann::ordered_json contracts_to_json(const ContractSet& c);
ContractSet contracts_from_json(const nlohmann::ordered_json& j);
// Decode maps must be total over their domains and rules may only name
// declared columns; throws ContractError otherwise.
void validate_contracts(const ContractSet& c, const KgSchema& schema = default_schema());

struct DecodedRow {
  std::string table;
  std::size_t row = 0;  // 0-based data row index
  std::map<std::string, std::optional<std::string>> values;

  const std::optional<std::string>& get(const std::string& column) const;
  bool operator==(const DecodedRow&) const = default;
};

struct RejectRecord {
  std::size_t row = 0;
  std::size_t line = 0;
  std::string column;
  std::string value;
  std::string reason;
};

struct DecodeResult {
  std::vector<DecodedRow> rows;
  std::vector<RejectRecord> rejects;
  std::size_t input_rows = 0;
};

DecodeResult decode_table(const std::string& csv_bytes, const TableContract& contract);
// Inverse of decode for rows that satisfy the contract: first listed raw code
// per label, empty field for null.
std::string encode_table(const std::vector<DecodedRow>& rows, const TableContract& contract);
std::string rejects_csv(const std::string& table, const std::vector<RejectRecord>& rejects);

std::string entity_node_id(const std::string& table, const std::vector<std::string>& key_values);
std::string format_number(double v);

}  // namespace hats
