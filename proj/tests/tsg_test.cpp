#include <gtest/gtest.h>

#include <random>
#include <regex>
#include <set>
#include <sstream>

#include "hats/error.hpp"
#include "hats/tsg.hpp"

namespace hats {
namespace {

SceneSample sample_with(std::size_t n) {
  SceneSample s;
  s.id = "scene-7";
  s.height = s.width = 2;
  s.rgb_channels = s.disp_channels = 1;
  s.rgb.assign(4, 0.0);
  s.disp.assign(4, 0.0);
  s.path_mask = {1, 0, 0, 0};
  s.vehicle_mask = {0, 0, 0, 1};
  for (std::size_t i = 0; i < n; ++i) {
    SceneEntity e;
    e.mask = {0, 1, 0, 0};
    e.embedding = {0.0};
    e.semantic_class = 11 + i;
    s.entities.push_back(e);
  }
  return s;
}

EntityPrediction selected(std::size_t entity, std::size_t mech, std::size_t side, std::size_t sev) {
  EntityPrediction p;
  p.entity = entity;
  p.selected = true;
  p.relevance = 0.8;
  p.mechanism.fill(0.05);
  p.mechanism[mech] = 0.65;
  p.side.fill(0.25);
  p.side[side] = 0.5;
  p.severity.fill(0.1);
  p.severity[sev] = 0.7;
  return p;
}

EntityPrediction unselected(std::size_t entity) {
  EntityPrediction p;
  p.entity = entity;
  p.relevance = 0.2;
  return p;
}

// Minimal DOT grammar for the subset emitted: one digraph with attribute,
// node and edge statements.
bool parses_as_dot(const std::string& dot, std::size_t* nodes, std::size_t* edges) {
  const std::string id = R"("(?:[^"\\]|\\.)*")";
  const std::string attr = R"([a-z]+=(?:)" + id + R"(|[A-Za-z0-9_]+))";
  const std::string attrs = R"(\[)" + attr + R"((?:, )" + attr + R"()*\])";
  const std::regex node("  " + id + " " + attrs + ";");
  const std::regex edge("  " + id + " -> " + id + " " + attrs + ";");
  const std::regex graph_attr("  label=" + id + ";");
  const std::regex defaults("  node " + attrs + ";");
  std::istringstream in(dot);
  std::string line;
  if (!std::getline(in, line) || line != "digraph tsg {") return false;
  *nodes = *edges = 0;
  bool closed = false;
  while (std::getline(in, line)) {
    if (closed) return false;
    if (line == "}") {
      closed = true;
    } else if (std::regex_match(line, edge)) {
      ++*edges;
    } else if (std::regex_match(line, node)) {
      ++*nodes;
    } else if (!std::regex_match(line, graph_attr) && !std::regex_match(line, defaults)) {
      return false;
    }
  }
  return closed;
}

TEST(TsgAssembly, NoSelectionGivesEgoOnly) {
  const auto s = sample_with(3);
  ScenePrediction p{s.id, {unselected(0), unselected(1), unselected(2)}};
  const auto g = assemble_tsg(p, s);
  EXPECT_EQ(g.selected_count(), 0u);
  ASSERT_EQ(g.entities.size(), 3u);
  for (const auto& e : g.entities) {
    EXPECT_EQ(e.display_level, "irrelevant");
    EXPECT_FALSE(e.relation.has_value());
  }
  std::size_t nodes = 0, edges = 0;
  ASSERT_TRUE(parses_as_dot(render_dot(g), &nodes, &edges));
  EXPECT_EQ(nodes, 1u);
  EXPECT_EQ(edges, 0u);
}

TEST(TsgAssembly, TagIsArgmaxTriplet) {
  const auto s = sample_with(2);
  ScenePrediction p{s.id, {selected(0, mechanism_index("sideswipe"), side_index("right"), severity_index("imminent")),
                           unselected(1)}};
  const auto g = assemble_tsg(p, s);
  ASSERT_TRUE(g.entities[0].relation.has_value());
  const auto& r = *g.entities[0].relation;
  EXPECT_EQ(r.mechanism, "sideswipe");
  EXPECT_EQ(r.side, "right");
  EXPECT_EQ(r.severity, "imminent");
  EXPECT_EQ(r.mechanism_confidence, 0.65);
  EXPECT_EQ(r.side_confidence, 0.5);
  EXPECT_EQ(r.severity_confidence, 0.7);
  EXPECT_EQ(g.entities[0].display_level, "imminent");
  EXPECT_EQ(g.entities[0].semantic_class, "person");
  EXPECT_EQ(g.entities[1].display_level, "irrelevant");
  const std::string dot = render_dot(g);
  EXPECT_NE(dot.find("label=\"sideswipe/right\""), std::string::npos);
  EXPECT_NE(dot.find(display_color("imminent")), std::string::npos);
}

TEST(TsgAssembly, MismatchedPredictionIsRejected) {
  const auto s = sample_with(2);
  EXPECT_THROW(assemble_tsg(ScenePrediction{"other", {unselected(0), unselected(1)}}, s), ValidationError);
  EXPECT_THROW(assemble_tsg(ScenePrediction{s.id, {unselected(0)}}, s), ValidationError);
}

TEST(TsgPalette, TotalAndInjective) {
  std::set<std::string> colors;
  for (const char* level : kDisplayLevels) colors.insert(display_color(level));
  EXPECT_EQ(colors.size(), 5u);
  for (const char* sev : kSeverities) EXPECT_NO_THROW(display_color(sev));
  EXPECT_THROW(display_color("fatal"), VocabularyError);
}

class TsgRandomGraphs : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(TsgRandomGraphs, JsonRoundTripDotCountsAndDeterminism) {
  std::mt19937_64 rng(GetParam());
  const std::size_t n = rng() % 7;
  const auto s = sample_with(n);
  ScenePrediction p{s.id, {}};
  std::size_t chosen = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (rng() % 2) {
      p.entities.push_back(selected(i, rng() % 8, rng() % 3, rng() % 4));
      ++chosen;
    } else {
      p.entities.push_back(unselected(i));
    }
  }
  const auto g = assemble_tsg(p, s);
  const auto j = to_json(g);
  EXPECT_NO_THROW(validate_tsg_json(j));
  EXPECT_EQ(tsg_from_json(nlohmann::json::parse(j.dump())), g);

  const std::string dot = render_dot(g);
  EXPECT_EQ(dot, render_dot(tsg_from_json(j)));
  std::size_t nodes = 0, edges = 0;
  ASSERT_TRUE(parses_as_dot(dot, &nodes, &edges)) << dot;
  EXPECT_EQ(nodes, chosen + 1);
  EXPECT_EQ(edges, chosen);
}

INSTANTIATE_TEST_SUITE_P(Seeds, TsgRandomGraphs, ::testing::Range<std::uint64_t>(0, 25));

TEST(TsgSchema, RejectsMalformedDocuments) {
  const auto s = sample_with(2);
  ScenePrediction p{s.id, {selected(0, 1, 2, 3), unselected(1)}};
  const nlohmann::json good = to_json(assemble_tsg(p, s));
  ASSERT_NO_THROW(validate_tsg_json(good));

  auto expect_invalid = [](nlohmann::json j) { EXPECT_THROW(validate_tsg_json(j), ValidationError) << j.dump(); };
  auto j = good;
  j["schema"] = "hats.tsg/0";
  expect_invalid(j);
  j = good;
  j.erase("ego");
  expect_invalid(j);
  j = good;
  j["extra"] = 1;
  expect_invalid(j);
  j = good;
  j["palette"]["info"] = "#000000";
  expect_invalid(j);
  j = good;
  j["entities"][0].erase("relation");
  expect_invalid(j);
  j = good;
  j["entities"][1]["display_level"] = "info";
  j["entities"][1]["color"] = display_color("info");
  expect_invalid(j);
  j = good;
  j["entities"][0]["relation"]["mechanism"] = "teleport";
  expect_invalid(j);
  j = good;
  j["entities"][0]["relation"]["confidence"]["side"] = 1.5;
  expect_invalid(j);
  j = good;
  j["entities"][0]["display_level"] = "caution";
  j["entities"][0]["color"] = display_color("caution");
  expect_invalid(j);
  j = good;
  j["entities"][1]["index"] = 5;
  expect_invalid(j);
  EXPECT_THROW(tsg_from_json(nlohmann::json::array()), ValidationError);
}

}  // namespace
}  // namespace hats
