#include <gtest/gtest.h>

#include <random>

#include "hats/archive.hpp"
#include "hats/error.hpp"
#include "hats/kg_build.hpp"
#include "hats/synth_tables.hpp"

namespace hats {
namespace {

const TableContract& crash_contract() {
  static const ContractSet c = default_contracts();
  return c.table("crash");
}

TEST(Csv, QuotingAndLineEndings) {
  auto recs = parse_csv("a,\"b,c\",\"say \"\"hi\"\"\"\r\n\"multi\nline\",,x\n");
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0], (std::vector<std::string>{"a", "b,c", "say \"hi\""}));
  EXPECT_EQ(recs[1], (std::vector<std::string>{"multi\nline", "", "x"}));
  const std::vector<std::vector<std::string>> table = {{"x", "y,z"}, {"q\"uote", ""}};
  EXPECT_EQ(parse_csv(write_csv(table)), table);
}

TEST(Csv, MalformedInputCitesLine) {
  try {
    parse_csv("a,b\n1,2\n3,\"open\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_csv("a,b\n1,x\"y\n"), ParseError);
}

TEST(DecodeTable, EmptyDataSection) {
  std::string header = encode_table({}, crash_contract());
  auto r = decode_table(header, crash_contract());
  EXPECT_EQ(r.rows.size(), 0u);
  EXPECT_EQ(r.rejects.size(), 0u);
}

TEST(DecodeTable, OutOfDomainCodeIsRejectedWithColumnAndCode) {
  auto data = generate_synthetic_dataset(3, {5, 1, 1});
  auto recs = parse_csv(data.tables.csv.at("crash"));
  std::size_t weather = std::find(recs[0].begin(), recs[0].end(), "weather") - recs[0].begin();
  recs[2][weather] = "57";
  auto r = decode_table(write_csv(recs), crash_contract());
  ASSERT_EQ(r.rejects.size(), 1u);
  EXPECT_EQ(r.rows.size(), 4u);
  EXPECT_EQ(r.rejects[0].column, "weather");
  EXPECT_EQ(r.rejects[0].value, "57");
  EXPECT_EQ(r.rejects[0].row, 1u);
  EXPECT_EQ(r.rejects[0].line, 3u);
  EXPECT_NE(r.rejects[0].reason.find("57"), std::string::npos);
  EXPECT_NE(rejects_csv("crash", r.rejects).find("weather,57"), std::string::npos);
}

TEST(DecodeTable, HeaderOrderInsensitiveAndMandatoryColumns) {
  auto data = generate_synthetic_dataset(4, {6, 2, 1});
  auto recs = parse_csv(data.tables.csv.at("crash"));
  for (auto& r : recs) std::reverse(r.begin(), r.end());
  auto reversed = decode_table(write_csv(recs), crash_contract());
  EXPECT_EQ(reversed.rows, data.rows.at("crash"));

  for (auto& r : recs) r.erase(r.begin());  // drops "month", which is mandatory
  EXPECT_THROW(decode_table(write_csv(recs), crash_contract()), ContractError);
}

TEST(DecodeTable, FieldCountMismatchIsParseErrorWithLine) {
  std::string csv = encode_table({}, crash_contract()) + "C1,1\n";
  try {
    decode_table(csv, crash_contract());
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(DecodeTable, NotReportedCodesDecodeToUnknown) {
  auto data = generate_synthetic_dataset(5, {2, 1, 1});
  auto recs = parse_csv(data.tables.csv.at("crash"));
  std::size_t light = std::find(recs[0].begin(), recs[0].end(), "light") - recs[0].begin();
  recs[1][light] = "98";
  recs[2][light] = "99";
  auto r = decode_table(write_csv(recs), crash_contract());
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(*r.rows[0].get("light"), "unknown");
  EXPECT_EQ(*r.rows[1].get("light"), "unknown");
}

TEST(DecodeTable, GeneratorTableOfHundredRows) {
  auto data = generate_synthetic_dataset(6, {100, 1, 1});
  auto r = decode_table(data.tables.csv.at("crash"), crash_contract());
  EXPECT_EQ(r.rows.size(), 100u);
  EXPECT_EQ(r.rejects.size(), 0u);
}

TEST(DecodeTable, RejectsPlusDecodedEqualsInput) {
  auto data = generate_synthetic_dataset(7, {200, 3, 2});
  ContractSet contracts = default_contracts();
  std::mt19937_64 rng(8);
  for (const auto& t : contracts.tables) {
    auto recs = parse_csv(data.tables.csv.at(t.table));
    std::uniform_int_distribution<std::size_t> col(0, recs[0].size() - 1);
    for (std::size_t i = 1; i < recs.size(); i += 3) recs[i][col(rng)] = "#bad#";
    auto r = decode_table(write_csv(recs), t);
    EXPECT_EQ(r.rows.size() + r.rejects.size(), recs.size() - 1) << t.table;
    EXPECT_EQ(r.input_rows, recs.size() - 1);
    for (const auto& row : r.rows) EXPECT_EQ(row.values.size(), t.columns.size());
  }
}

TEST(Contracts, DefaultsValidateAndMatchShippedFile) {
  ContractSet c = default_contracts();
  EXPECT_NO_THROW(validate_contracts(c));
  auto j = contracts_to_json(c);
  EXPECT_EQ(contracts_to_json(contracts_from_json(j)), j);
  const auto shipped = nlohmann::ordered_json::parse(read_text_file(HATS_DATA_DIR "/contracts.json"));
  EXPECT_EQ(shipped, j);
}

TEST(Contracts, DecodeMapsMustBeTotalAndInDomain) {
  ContractSet c = default_contracts();
  auto& weather = c.tables[0].columns[4];
  ASSERT_EQ(weather.name, "weather");
  weather.codes.pop_back();
  weather.codes.pop_back();  // no code left for "unknown"
  EXPECT_THROW(validate_contracts(c), ContractError);
  weather.codes.emplace_back("98", "lava");
  EXPECT_THROW(validate_contracts(c), ContractError);

  ContractSet d = default_contracts();
  d.tables[1].edges[0].from.key = {"no_such_column"};
  EXPECT_THROW(validate_contracts(d), ContractError);
}

TEST(Generator, DeterministicBytes) {
  auto a = generate_synthetic_dataset(42, {50, 3, 2});
  auto b = generate_synthetic_dataset(42, {50, 3, 2});
  auto c = generate_synthetic_dataset(43, {50, 3, 2});
  EXPECT_EQ(a.tables.csv, b.tables.csv);
  EXPECT_NE(a.tables.csv, c.tables.csv);
}

TEST(Generator, DecodeInvertsEncode) {
  auto data = generate_synthetic_dataset(9, {150, 3, 2});
  for (const auto& t : default_contracts().tables) {
    auto r = decode_table(data.tables.csv.at(t.table), t);
    EXPECT_TRUE(r.rejects.empty()) << t.table;
    EXPECT_EQ(r.rows, data.rows.at(t.table)) << t.table;
  }
}

TEST(Generator, ScaleValidation) {
  EXPECT_THROW(generate_synthetic_dataset(1, {0, 1, 1}), ConfigError);
}

// Ground truth is tallied by the generator while drawing rows; the builders
// must land on exactly the same per-type counts.
TEST(Generator, CountsMatchBookkeepingAcrossSeeds) {
  for (std::uint64_t seed : {1u, 2u, 3u, 17u, 99u, 12345u}) {
    for (SynthScale scale : {SynthScale{1, 1, 1}, SynthScale{40, 3, 2}, SynthScale{60, 5, 4}}) {
      auto data = generate_synthetic_dataset(seed, scale);
      auto result = ingest_dataset(data.tables, default_contracts());
      EXPECT_EQ(result.graph.node_counts(), data.truth.nodes) << "seed " << seed;
      EXPECT_EQ(result.graph.edge_counts(), data.truth.edges) << "seed " << seed;
      EXPECT_TRUE(validate_coherence(result.graph).all_passed()) << "seed " << seed;
      for (const auto& [table, d] : result.decoded) {
        EXPECT_TRUE(d.rejects.empty());
        EXPECT_EQ(d.rows.size(), data.truth.rows[table]);
      }
    }
  }
}

TEST(Ingest, StageStatisticsAreMonotone) {
  auto data = generate_synthetic_dataset(21, {80, 3, 2});
  auto result = ingest_dataset(data.tables, default_contracts());
  ASSERT_EQ(result.stages.size(), 4u);
  for (std::size_t i = 1; i < 4; ++i) {
    EXPECT_GE(result.stages[i].total_nodes, result.stages[i - 1].total_nodes);
    EXPECT_GE(result.stages[i].total_edges, result.stages[i - 1].total_edges);
    for (const auto& [rel, n] : result.stages[i - 1].edges) EXPECT_EQ(result.stages[i].edges.at(rel), n);
  }
  EXPECT_EQ(result.stages[0].added_edges, 0u);
  EXPECT_EQ(result.stages[3].added_nodes, 27u);
  EXPECT_EQ(result.stages[3].total_edges, data.truth.total_edges());
  auto j = stats_to_json(result.stages, default_schema());
  EXPECT_EQ(j[0]["nodes"].begin().key(), "LIGHTCOND");
}

TEST(Ingest, DanglingVehicleReferenceFailsAtStageTwo) {
  auto data = generate_synthetic_dataset(22, {10, 2, 1});
  auto recs = parse_csv(data.tables.csv.at("vehicle"));
  recs[4][0] = "C999999";
  data.tables.csv["vehicle"] = write_csv(recs);
  try {
    ingest_dataset(data.tables, default_contracts());
    FAIL();
  } catch (const WiringError& e) {
    EXPECT_NE(std::string(e.what()).find("table vehicle, row 3"), std::string::npos) << e.what();
  }
}

TEST(Ingest, ReingestSameBytesGivesSameHash) {
  auto data = generate_synthetic_dataset(23, {120, 3, 2});
  auto a = ingest_dataset(data.tables, default_contracts());
  auto b = ingest_dataset(data.tables, default_contracts());
  EXPECT_EQ(graph_hash(a.graph), graph_hash(b.graph));
  EXPECT_TRUE(a.graph == b.graph);
}

TEST(Ingest, DefaultScaleCrashCount) {
  auto data = generate_synthetic_dataset(2024);
  PropertyGraph g;
  DecodedTables rows;
  ContractSet contracts = default_contracts();
  for (const auto& t : contracts.tables) rows[t.table] = decode_table(data.tables.csv.at(t.table), t).rows;
  build_stage_nodes(g, contracts, rows);
  EXPECT_EQ(g.count_nodes("CRASH"), 3331u);
}

}  // namespace
}  // namespace hats
