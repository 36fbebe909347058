#include "hats/kg_build.hpp"

#include <algorithm>
#include <charconv>

#include "hats/error.hpp"

namespace hats {

namespace {

std::string taxonomy_label(const std::string& taxonomy) {
  if (taxonomy == "cityscapes") return "CITYSCAPES";
  if (taxonomy == "mechanism") return "MECHANISM";
  throw ConfigError("unknown bridge taxonomy '" + taxonomy + "'");
}

const std::vector<DecodedRow>& rows_of(const DecodedTables& rows, const std::string& table) {
  static const std::vector<DecodedRow> empty;
  auto it = rows.find(table);
  return it == rows.end() ? empty : it->second;
}

// Resolves a node reference for one row; nullopt when a needed value is null.
std::optional<std::string> resolve(const NodeRef& r, const DecodedRow& row, const TableContract& t,
                                   const ContractSet& contracts) {
  auto key_of = [&](const std::string& table, const std::vector<std::string>& cols)
      -> std::optional<std::string> {
    std::vector<std::string> vals;
    for (const auto& c : cols) {
      const auto& v = row.get(c);
      if (!v) return std::nullopt;
      vals.push_back(*v);
    }
    return entity_node_id(table, vals);
  };
  switch (r.kind) {
    case NodeRef::Kind::kSelf:
      return key_of(t.table, t.entity->key);
    case NodeRef::Kind::kAttr: {
      const auto& v = row.get(r.column);
      if (!v) return std::nullopt;
      return vocabulary_node_id(t.column(r.column)->domain, *v);
    }
    case NodeRef::Kind::kRef:
      return key_of(contracts.entity_table(r.label).table, r.key);
  }
  return std::nullopt;
}

void emit_edges(PropertyGraph& g, const ContractSet& contracts, const DecodedTables& rows, int stage) {
  const KgSchema& schema = g.schema();
  for (const auto& t : contracts.tables) {
    for (const auto& row : rows_of(rows, t.table)) {
      for (const auto& rule : t.edges) {
        if (schema.require_edge_type(rule.relation).stage != stage) continue;
        if (!rule.when_column.empty()) {
          const auto& v = row.get(rule.when_column);
          if (!v || *v != rule.when_equals) continue;
        }
        auto head = resolve(rule.from, row, t, contracts);
        auto tail = resolve(rule.to, row, t, contracts);
        if (!head || !tail) continue;
        EdgeRecord e{*head, rule.relation, *tail, {}};
        for (const auto& q : rule.qualifiers) {
          if (q.column.empty()) {
            e.qualifiers.emplace_back(q.relation, q.value);
          } else if (const auto& v = row.get(q.column)) {
            e.qualifiers.emplace_back(q.relation, *v);
          }
        }
        g.add_edge(e, Provenance{t.table, static_cast<std::int64_t>(row.row), stage});
      }
    }
  }
}

}  // namespace

void build_stage_nodes(PropertyGraph& g, const ContractSet& contracts, const DecodedTables& rows) {
  const KgSchema& schema = g.schema();
  for (const auto& type : schema.node_types) {
    if (type.stage != 1) continue;
    for (const auto& value : type.vocabulary) g.upsert_node(vocabulary_node(type, value), {"", -1, 1});
  }
  for (const auto& t : contracts.tables) {
    if (!t.entity) continue;
    const auto& rule = *t.entity;
    const auto& type = schema.require_node_type(rule.label);
    for (const auto& row : rows_of(rows, t.table)) {
      NodeRecord n;
      n.id = *resolve(NodeRef{}, row, t, contracts);
      n.label = rule.label;
      n.level = type.level;
      std::string name = rule.name_const;
      if (!rule.name_column.empty()) {
        const auto& v = row.get(rule.name_column);
        if (!v) throw SchemaError(t.table + " row " + std::to_string(row.row) + ": entity name is null");
        name = *v;
      }
      n.categorical = {{"name", name}, {"type", rule.label}, {"level", type.level}};
      for (const auto& [prop, col] : rule.categorical) {
        if (const auto& v = row.get(col)) n.categorical[prop] = *v;
      }
      for (const auto& [prop, col] : rule.numeric) {
        const auto& v = row.get(col);
        if (!v) throw SchemaError(t.table + " row " + std::to_string(row.row) + ": numeric " + prop + " is null");
        double x = 0;
        std::from_chars(v->data(), v->data() + v->size(), x);
        n.numeric[prop] = x;
      }
      g.upsert_node(n, Provenance{t.table, static_cast<std::int64_t>(row.row), 1});
    }
  }
}

void wire_schema_edges(PropertyGraph& g, const ContractSet& contracts, const DecodedTables& rows) {
  emit_edges(g, contracts, rows, 2);
}

void wire_causality(PropertyGraph& g, const ContractSet& contracts, const DecodedTables& rows) {
  emit_edges(g, contracts, rows, 3);
}

BridgeMapping bridge_mapping_from_json(const nlohmann::json& j, const KgSchema& schema) {
  BridgeMapping m;
  if (j.is_null()) return m;
  try {
    for (const auto& e : j.value("correspondences", nlohmann::json::array())) {
      BridgeCorrespondence c{e.at("taxonomy").get<std::string>(), e.at("node_type").get<std::string>(),
                             e.at("value").get<std::string>(), e.at("target").get<std::string>()};
      const NodeTypeSpec* type = schema.node_type(c.node_type);
      if (!type || type->stage != 1) {
        throw ConfigError("bridge mapping references unknown node type '" + c.node_type + "'");
      }
      if (!type->vocabulary.empty() &&
          std::find(type->vocabulary.begin(), type->vocabulary.end(), c.value) == type->vocabulary.end()) {
        throw ConfigError("bridge mapping value '" + c.value + "' is not in " + c.node_type);
      }
      const auto& bridge = schema.require_node_type(taxonomy_label(c.taxonomy)).vocabulary;
      if (std::find(bridge.begin(), bridge.end(), c.target) == bridge.end()) {
        throw ConfigError("bridge mapping target '" + c.target + "' is not a " + c.taxonomy + " class");
      }
      m.entries.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("malformed bridge mapping: ") + ex.what());
  }
  return m;
}

nlohmann::ordered_json bridge_mapping_to_json(const BridgeMapping& m) {
  nlohmann::ordered_json j;
  j["version"] = "1.0";
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& c : m.entries) {
    list.push_back({{"taxonomy", c.taxonomy}, {"node_type", c.node_type}, {"value", c.value}, {"target", c.target}});
  }
  j["correspondences"] = list;
  return j;
}

const BridgeMapping& default_bridge_mapping() {
  static const BridgeMapping mapping = [] {
    BridgeMapping m;
    auto add = [&](const char* tax, const char* type, std::initializer_list<const char*> values,
                   const char* target) {
      for (const char* v : values) m.entries.push_back({tax, type, v, target});
    };
    const char* cs = "cityscapes";
    add(cs, "VEHCLASS",
        {"compact_car", "midsize_car", "fullsize_car", "subcompact_car", "sports_car", "station_wagon",
         "convertible", "hatchback", "minivan", "compact_utility", "midsize_utility", "fullsize_utility"},
        "car");
    add(cs, "VEHCLASS",
        {"fullsize_van", "compact_pickup", "standard_pickup", "large_pickup", "cargo_van", "step_van",
         "medium_truck", "heavy_truck", "truck_tractor", "other_light_truck", "motorhome"},
        "truck");
    add(cs, "VEHCLASS", {"school_bus", "transit_bus"}, "bus");
    add(cs, "VEHCLASS", {"motorcycle", "moped"}, "motorcycle");
    add(cs, "OBJCONT", {"tree"}, "vegetation");
    add(cs, "OBJCONT", {"utility_pole", "light_support", "sign_post", "traffic_signal_support", "bollard"}, "pole");
    add(cs, "OBJCONT", {"guardrail", "cable_barrier", "bridge_rail", "fence"}, "fence");
    add(cs, "OBJCONT", {"concrete_barrier", "bridge_pier", "wall"}, "wall");
    add(cs, "OBJCONT", {"building"}, "building");
    add(cs, "OBJCONT", {"curb"}, "sidewalk");
    add(cs, "OBJCONT", {"ditch", "embankment", "culvert"}, "terrain");
    add(cs, "OBJCONT", {"ground"}, "road");
    add(cs, "OBJCONT", {"pedestrian"}, "person");
    add(cs, "OBJCONT", {"cyclist"}, "rider");
    add(cs, "OBJCONT", {"cyclist"}, "bicycle");
    add(cs, "OBJCONT", {"parked_vehicle"}, "car");
    add(cs, "OBJCONT", {"train"}, "train");
    add(cs, "TRAFDEV", {"traffic_signal", "flashing_signal"}, "traffic_light");
    add(cs, "TRAFDEV", {"stop_sign", "yield_sign", "warning_sign", "school_zone_sign"}, "traffic_sign");

    const char* mech = "mechanism";
    add(mech, "MANCOLL", {"front_to_rear"}, "rear_end");
    add(mech, "MANCOLL", {"front_to_front"}, "head_on");
    add(mech, "MANCOLL", {"angle"}, "cross_traffic_conflict");
    add(mech, "MANCOLL", {"sideswipe_same_direction", "sideswipe_opposite_direction"}, "sideswipe");
    add(mech, "CRASHCONF", {"right_roadside_departure", "left_roadside_departure"}, "edge_proximity");
    add(mech, "CRASHCONF", {"forward_impact"}, "fixed_object_near_edge");
    add(mech, "CRASHCONF", {"rear_end"}, "rear_end");
    add(mech, "CRASHCONF", {"sideswipe_same_direction", "sideswipe_opposite_direction"}, "sideswipe");
    add(mech, "CRASHCONF", {"head_on"}, "head_on");
    add(mech, "CRASHCONF", {"turn_across_path"}, "intersection");
    add(mech, "CRASHCONF", {"intersecting_paths"}, "cross_traffic_conflict");
    add(mech, "RELTOJUNCT", {"intersection"}, "intersection");
    add(mech, "CRITEVENT",
        {"loss_of_control_tire_failure", "loss_of_control_brake_failure",
         "loss_of_control_steering_failure", "loss_of_control_other_vehicle_failure",
         "loss_of_control_poor_road_conditions", "loss_of_control_excessive_speed",
         "loss_of_control_other", "traveling_too_fast_for_conditions", "animal_in_road",
         "object_fell_from_vehicle", "debris_in_road", "other_critical_event"},
        "control");
    add(mech, "CRITEVENT",
        {"off_left_edge_of_road", "off_right_edge_of_road", "pedestrian_approaching_road",
         "pedalcyclist_approaching_road"},
        "edge_proximity");
    add(mech, "CRITEVENT", {"end_departure", "object_in_road", "parked_vehicle"}, "fixed_object_near_edge");
    add(mech, "CRITEVENT",
        {"over_left_lane_line", "other_vehicle_opposite_over_lane_line", "other_vehicle_opposite_in_lane"},
        "head_on");
    add(mech, "CRITEVENT",
        {"turning_left_at_junction", "turning_right_at_junction", "crossing_over_junction",
         "other_vehicle_crossing_turning_same_direction",
         "other_vehicle_crossing_turning_opposite_direction"},
        "intersection");
    add(mech, "CRITEVENT",
        {"decelerating_in_lane", "accelerating_in_lane", "starting_in_lane", "stopped_in_lane",
         "backing", "other_vehicle_stopped", "other_vehicle_slower", "other_vehicle_decelerating",
         "other_vehicle_accelerating", "other_vehicle_backing"},
        "rear_end");
    add(mech, "CRITEVENT",
        {"over_right_lane_line", "other_vehicle_same_direction_over_left_line",
         "other_vehicle_same_direction_over_right_line", "other_vehicle_encroaching_from_left",
         "other_vehicle_encroaching_from_right", "sudden_lane_change"},
        "sideswipe");
    add(mech, "CRITEVENT",
        {"making_u_turn", "other_vehicle_crossing_across_path", "other_vehicle_from_driveway",
         "other_vehicle_entering_from_parking", "pedestrian_in_road", "pedalcyclist_in_road"},
        "cross_traffic_conflict");
    return m;
  }();
  return mapping;
}

void wire_bridges(PropertyGraph& g, const BridgeMapping& mapping) {
  const KgSchema& schema = g.schema();
  for (const auto& type : schema.node_types) {
    if (type.stage != 4) continue;
    for (const auto& value : type.vocabulary) g.upsert_node(vocabulary_node(type, value), {"", -1, 4});
  }
  std::int64_t index = 0;
  for (const auto& c : mapping.entries) {
    const std::string label = taxonomy_label(c.taxonomy);
    if (!schema.node_type(c.node_type)) {
      throw ConfigError("bridge mapping references unknown node type '" + c.node_type + "'");
    }
    EdgeRecord e{vocabulary_node_id(c.node_type, c.value), "CorrespondsTo",
                 vocabulary_node_id(label, c.target), {{"taxonomy", c.taxonomy}}};
    g.add_edge(e, Provenance{"mapping", index++, 4});
  }
}

StageStats snapshot_stats(const PropertyGraph& g, int stage, const StageStats* previous) {
  StageStats s;
  s.stage = stage;
  s.nodes = g.node_counts();
  s.edges = g.edge_counts();
  s.total_nodes = g.nodes().size();
  s.total_edges = g.edges().size();
  s.added_nodes = s.total_nodes - (previous ? previous->total_nodes : 0);
  s.added_edges = s.total_edges - (previous ? previous->total_edges : 0);
  return s;
}

std::vector<StageStats> run_stages(PropertyGraph& g, const ContractSet& contracts,
                                   const DecodedTables& rows, const BridgeMapping& mapping) {
  std::vector<StageStats> stats;
  const std::size_t base_nodes = g.nodes().size(), base_edges = g.edges().size();
  StageStats base;
  base.total_nodes = base_nodes;
  base.total_edges = base_edges;
  build_stage_nodes(g, contracts, rows);
  stats.push_back(snapshot_stats(g, 1, &base));
  wire_schema_edges(g, contracts, rows);
  stats.push_back(snapshot_stats(g, 2, &stats.back()));
  wire_causality(g, contracts, rows);
  stats.push_back(snapshot_stats(g, 3, &stats.back()));
  wire_bridges(g, mapping);
  stats.push_back(snapshot_stats(g, 4, &stats.back()));
  return stats;
}

IngestResult ingest_dataset(const TableSet& tables, const ContractSet& contracts, const KgSchema& schema) {
  validate_contracts(contracts, schema);
  IngestResult result{PropertyGraph(schema), {}, {}};
  DecodedTables rows;
  for (const auto& t : contracts.tables) {
    auto it = tables.csv.find(t.table);
    if (it == tables.csv.end()) throw ContractError("input lacks table '" + t.table + "'");
    auto decoded = decode_table(it->second, t);
    rows[t.table] = decoded.rows;
    result.decoded[t.table] = std::move(decoded);
  }
  const BridgeMapping mapping = bridge_mapping_from_json(tables.mapping, schema);
  result.stages = run_stages(result.graph, contracts, rows, mapping);
  return result;
}

nlohmann::ordered_json stats_to_json(const std::vector<StageStats>& stages, const KgSchema& schema) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& s : stages) {
    nlohmann::ordered_json j;
    j["stage"] = s.stage;
    nlohmann::ordered_json nodes = nlohmann::ordered_json::object();
    nlohmann::ordered_json edges = nlohmann::ordered_json::object();
    // Table layout order: declared types first, in schema order.
    for (const auto& t : schema.node_types) {
      auto it = s.nodes.find(t.label);
      if (it != s.nodes.end()) nodes[t.label] = it->second;
    }
    for (const auto& t : schema.edge_types) {
      auto it = s.edges.find(t.relation);
      if (it != s.edges.end()) edges[t.relation] = it->second;
    }
    j["nodes"] = nodes;
    j["edges"] = edges;
    j["total_nodes"] = s.total_nodes;
    j["total_edges"] = s.total_edges;
    j["added_nodes"] = s.added_nodes;
    j["added_edges"] = s.added_edges;
    out.push_back(j);
  }
  return out;
}

}  // namespace hats
