#include "hats/kg_schema.hpp"

#include <algorithm>

#include "hats/error.hpp"

namespace hats {

namespace {

using Vocab = std::vector<std::string>;

const Vocab kInjury = {"not_injured", "minor",   "moderate", "serious",
                       "severe",      "critical", "maximum", "injured_unknown_severity",
                       "unknown"};

Vocab with(Vocab base, std::initializer_list<std::string> extra) {
  base.insert(base.end() - 1, extra);  // keep "unknown" last
  return base;
}

NodeTypeSpec attr(std::string label, std::string group, Vocab vocab,
                  std::string level = "attribute") {
  NodeTypeSpec s;
  s.label = std::move(label);
  s.level = std::move(level);
  s.group = std::move(group);
  s.stage = 1;
  s.vocabulary = std::move(vocab);
  return s;
}

EdgeTypeSpec edge(std::string rel, std::string head, std::string tail, int stage = 2) {
  EdgeTypeSpec e;
  e.relation = std::move(rel);
  e.stage = stage;
  e.group = stage == 2 ? "schema" : stage == 3 ? "causality" : "bridging";
  e.endpoints.emplace_back(std::move(head), std::move(tail));
  return e;
}

KgSchema build_default() {
  KgSchema s;
  s.version = "1.0";
  auto& n = s.node_types;

  const std::string env = "Environment Condition";
  n.push_back(attr("LIGHTCOND", env,
                   {"daylight", "dark_not_lighted", "dark_lighted", "dawn", "dusk", "unknown"}));
  n.push_back(attr("WEATHER", env,
                   {"clear", "cloudy", "rain", "snow", "sleet_hail", "fog_smog_smoke",
                    "severe_crosswinds", "blowing_sand_soil_dirt", "freezing_rain_drizzle",
                    "blowing_snow", "other", "unknown"}));
  n.push_back(attr("RELTOJUNCT", env,
                   {"non_junction", "intersection", "intersection_related",
                    "driveway_alley_access", "unknown"}));
  n.push_back(attr("SURFCOND", env,
                   {"dry", "wet", "snow", "ice_frost", "sand", "water_standing", "oil", "slush",
                    "unknown"}));
  n.push_back(attr("SURFTYPE", env,
                   {"concrete", "asphalt", "brick_block", "slag_gravel_stone", "dirt", "unknown"}));
  n.push_back(attr("ALIGNMENT", env, {"straight", "curve_right", "curve_left", "unknown"}));

  n.push_back(attr("MANCOLL", "Crash Attributes",
                   {"not_collision_with_vehicle", "front_to_rear", "front_to_front", "angle",
                    "sideswipe_same_direction", "sideswipe_opposite_direction", "unknown"}));
  n.push_back(attr("CAIS", "Crash Attributes", kInjury));

  const std::string veh = "Vehicle Attributes";
  n.push_back(attr(
      "VEHCLASS", veh,
      {"compact_car",     "midsize_car",     "fullsize_car",    "subcompact_car",
       "sports_car",      "station_wagon",   "convertible",     "hatchback",
       "minivan",         "fullsize_van",    "compact_utility", "midsize_utility",
       "fullsize_utility", "compact_pickup", "standard_pickup", "large_pickup",
       "cargo_van",       "step_van",        "motorhome",       "school_bus",
       "transit_bus",     "medium_truck",    "heavy_truck",     "truck_tractor",
       "motorcycle",      "moped",           "atv",             "other_light_truck",
       "unknown"}));
  n.push_back(attr("CRASHCAT", veh,
                   {"single_driver", "same_trafficway_same_direction",
                    "same_trafficway_opposite_direction", "changing_trafficway", "miscellaneous",
                    "unknown"}));
  n.push_back(attr("CRASHCONF", veh,
                   {"right_roadside_departure", "left_roadside_departure", "forward_impact",
                    "rear_end", "sideswipe_same_direction", "head_on",
                    "sideswipe_opposite_direction", "turn_across_path", "intersecting_paths",
                    "unknown"}));
  n.push_back(attr("CONSEQ", veh,
                   {"no_consequence", "rollover", "fire", "immersion", "jackknife", "cargo_loss",
                    "fell_from_vehicle", "unknown"}));
  n.push_back(attr("DAMPLANE", veh,
                   {"front", "right_side", "left_side", "back", "top", "undercarriage",
                    "overhead_rollover", "other", "unknown"}));
  n.push_back(attr("DAMSEV", veh, {"minor", "moderate", "disabling", "unknown"}));
  n.push_back(attr("VAIS", veh, with(kInjury, {"no_occupants"})));
  n.push_back(attr("PREMOVE", veh,
                   {"going_straight", "decelerating", "accelerating", "starting_in_lane",
                    "stopped_in_lane", "passing", "disabled_or_parked", "leaving_parking",
                    "entering_parking", "turning_right", "turning_left", "making_u_turn",
                    "backing", "negotiating_curve", "changing_lanes", "merging",
                    "successful_avoidance", "other", "no_driver", "unknown"}));
  n.push_back(attr("ROLLINITYP", veh,
                   {"no_rollover", "trip_over", "flip_over", "turn_over", "climb_over",
                    "fall_over", "bounce_over", "collision_with_vehicle", "end_over_end", "other",
                    "unknown"}));

  n.push_back(attr("TREATMENT", "Occupant Attributes",
                   {"no_treatment", "treated_at_scene", "treated_released", "hospitalized",
                    "transported_unknown", "fatality_at_scene", "fatality_en_route",
                    "fatality_in_hospital", "other", "unknown"}));
  n.push_back(attr("MAIS", "Occupant Attributes", kInjury));

  NodeTypeSpec crash;
  crash.label = "CRASH";
  crash.level = "entity";
  crash.group = "Crash";
  crash.categorical = {{"collision_manner", "MANCOLL"}};
  crash.numeric = {"vehicle_count", "event_count", "hour", "weekday", "month"};
  n.push_back(crash);

  NodeTypeSpec vehicle;
  vehicle.label = "VEHICLE";
  vehicle.level = "entity";
  vehicle.group = "Vehicle";
  vehicle.categorical = {{"class", "VEHCLASS"}};
  n.push_back(vehicle);

  NodeTypeSpec occupant;
  occupant.label = "OCCUPANT";
  occupant.level = "entity";
  occupant.group = "Occupant";
  occupant.categorical = {{"most_severe_injury", "MAIS"}, {"treatment", "TREATMENT"}};
  n.push_back(occupant);

  n.push_back(attr("OBJCONT", "Scene Entity",
                   {"tree",
                    "utility_pole",
                    "light_support",
                    "sign_post",
                    "guardrail",
                    "concrete_barrier",
                    "cable_barrier",
                    "bridge_rail",
                    "bridge_pier",
                    "curb",
                    "ditch",
                    "embankment",
                    "culvert",
                    "fence",
                    "wall",
                    "building",
                    "mailbox",
                    "fire_hydrant",
                    "bollard",
                    "traffic_signal_support",
                    "impact_attenuator",
                    "boulder",
                    "ground",
                    "pedestrian",
                    "cyclist",
                    "animal",
                    "parked_vehicle",
                    "train",
                    "debris",
                    "work_zone_equipment",
                    "snow_bank",
                    "other_fixed_object",
                    "other_nonfixed_object",
                    "vehicle_part",
                    "unknown"},
                   "entity"));
  n.push_back(attr("TRAFDEV", "Scene Entity",
                   {"no_controls", "traffic_signal", "stop_sign", "yield_sign", "flashing_signal",
                    "warning_sign", "school_zone_sign", "railroad_crossing_device", "unknown"},
                   "entity"));

  n.push_back(attr("CRITEVENT", "Cause",
                   {"loss_of_control_tire_failure",
                    "loss_of_control_brake_failure",
                    "loss_of_control_steering_failure",
                    "loss_of_control_other_vehicle_failure",
                    "loss_of_control_poor_road_conditions",
                    "loss_of_control_excessive_speed",
                    "loss_of_control_other",
                    "traveling_too_fast_for_conditions",
                    "over_left_lane_line",
                    "over_right_lane_line",
                    "off_left_edge_of_road",
                    "off_right_edge_of_road",
                    "end_departure",
                    "turning_left_at_junction",
                    "turning_right_at_junction",
                    "crossing_over_junction",
                    "decelerating_in_lane",
                    "accelerating_in_lane",
                    "starting_in_lane",
                    "stopped_in_lane",
                    "backing",
                    "making_u_turn",
                    "other_vehicle_stopped",
                    "other_vehicle_slower",
                    "other_vehicle_decelerating",
                    "other_vehicle_accelerating",
                    "other_vehicle_opposite_over_lane_line",
                    "other_vehicle_opposite_in_lane",
                    "other_vehicle_same_direction_over_left_line",
                    "other_vehicle_same_direction_over_right_line",
                    "other_vehicle_crossing_turning_same_direction",
                    "other_vehicle_crossing_across_path",
                    "other_vehicle_crossing_turning_opposite_direction",
                    "other_vehicle_from_driveway",
                    "other_vehicle_entering_from_parking",
                    "other_vehicle_backing",
                    "pedestrian_in_road",
                    "pedestrian_approaching_road",
                    "pedalcyclist_in_road",
                    "pedalcyclist_approaching_road",
                    "animal_in_road",
                    "object_in_road",
                    "object_fell_from_vehicle",
                    "parked_vehicle",
                    "debris_in_road",
                    "other_vehicle_encroaching_from_left",
                    "other_vehicle_encroaching_from_right",
                    "sudden_lane_change",
                    "other_critical_event",
                    "unknown"}));
  n.push_back(attr("CRITCAT", "Cause",
                   {"this_vehicle_loss_of_control", "this_vehicle_traveling",
                    "other_vehicle_in_lane", "other_vehicle_encroaching",
                    "pedestrian_pedalcyclist_nonmotorist", "object_or_animal", "other",
                    "unknown"}));

  NodeTypeSpec cityscapes =
      attr("CITYSCAPES", "Bridging Node",
           {"road", "sidewalk", "building", "wall", "fence", "pole", "traffic_light",
            "traffic_sign", "vegetation", "terrain", "sky", "person", "rider", "car", "truck",
            "bus", "train", "motorcycle", "bicycle"},
           "bridge");
  cityscapes.stage = 4;
  n.push_back(cityscapes);
  NodeTypeSpec mechanism =
      attr("MECHANISM", "Bridging Node",
           {"control", "edge_proximity", "fixed_object_near_edge", "head_on", "intersection",
            "rear_end", "sideswipe", "cross_traffic_conflict"},
           "bridge");
  mechanism.stage = 4;
  n.push_back(mechanism);

  auto& e = s.edge_types;
  e.push_back(edge("LightCondition", "CRASH", "LIGHTCOND"));
  e.push_back(edge("RelationToJunction", "CRASH", "RELTOJUNCT"));
  e.push_back(edge("WeatherCondition", "CRASH", "WEATHER"));
  e.push_back(edge("SurfaceCondition", "CRASH", "SURFCOND"));
  e.push_back(edge("SurfaceType", "VEHICLE", "SURFTYPE"));
  e.push_back(edge("RoadwayAlignment", "VEHICLE", "ALIGNMENT"));
  e.push_back(edge("CollisionManner", "CRASH", "MANCOLL"));
  e.push_back(edge("MostSevereInjuryInCrash", "CRASH", "CAIS"));
  e.push_back(edge("InstanceOf", "VEHICLE", "VEHCLASS"));
  e.push_back(edge("CrashCategory", "VEHICLE", "CRASHCAT"));
  e.push_back(edge("CrashConfiguration", "VEHICLE", "CRASHCONF"));
  e.push_back(edge("GeneralConsequence", "VEHICLE", "CONSEQ"));
  e.push_back(edge("VehicleDamagePosition", "VEHICLE", "DAMPLANE"));
  e.push_back(edge("DamageSeverityLevel", "VEHICLE", "DAMSEV"));
  e.push_back(edge("MostSevereInjuryInVehicle", "VEHICLE", "VAIS"));
  e.push_back(edge("Pre-crashVehicleMovement", "VEHICLE", "PREMOVE"));
  e.push_back(edge("Post-crashRolloverType", "VEHICLE", "ROLLINITYP"));
  e.push_back(edge("TreatmentReceived", "OCCUPANT", "TREATMENT"));
  e.push_back(edge("MostSevereInjury", "OCCUPANT", "MAIS"));
  e.push_back(edge("VehicleInvolved", "CRASH", "VEHICLE"));
  e.push_back(edge("OccupantInvolved", "CRASH", "OCCUPANT"));
  e.push_back(edge("EntityInvolved", "CRASH", "OBJCONT"));
  EdgeTypeSpec contact_v = edge("ContactWith", "VEHICLE", "VEHICLE");
  contact_v.qualifiers = {"sequence"};
  contact_v.qualifiers_required = true;
  e.push_back(contact_v);
  e.push_back(edge("HasOccupant", "VEHICLE", "OCCUPANT"));
  EdgeTypeSpec contact_o = edge("Contactwith", "VEHICLE", "OBJCONT");
  contact_o.qualifiers = {"sequence"};
  contact_o.qualifiers_required = true;
  e.push_back(contact_o);
  e.push_back(edge("SignBestControlsTraffic", "VEHICLE", "TRAFDEV"));

  EdgeTypeSpec lead;
  lead.relation = "LeadTo";
  lead.stage = 3;
  lead.group = "causality";
  for (const char* h : {"VEHICLE", "OBJCONT", "CRITEVENT", "CRITCAT"}) lead.endpoints.emplace_back(h, "CRASH");
  lead.qualifiers = {"source", "role"};
  lead.qualifiers_required = true;
  e.push_back(lead);
  EdgeTypeSpec imminent;
  imminent.relation = "MakeCrashImminentFor";
  imminent.stage = 3;
  imminent.group = "causality";
  for (const char* h : {"CRITEVENT", "CRITCAT"}) {
    for (const char* t : {"VEHICLE", "OBJCONT"}) imminent.endpoints.emplace_back(h, t);
  }
  imminent.qualifiers = {"source", "role"};
  imminent.qualifiers_required = true;
  e.push_back(imminent);
  EdgeTypeSpec implicated;
  implicated.relation = "ImplicatedBy";
  implicated.stage = 3;
  implicated.group = "causality";
  for (const char* h : {"VEHICLE", "OBJCONT"}) {
    for (const char* t : {"CRITEVENT", "CRITCAT"}) implicated.endpoints.emplace_back(h, t);
  }
  implicated.qualifiers = {"source", "role"};
  implicated.qualifiers_required = true;
  e.push_back(implicated);

  EdgeTypeSpec corresponds;
  corresponds.relation = "CorrespondsTo";
  corresponds.stage = 4;
  corresponds.group = "bridging";
  corresponds.endpoints = {{"*", "CITYSCAPES"}, {"*", "MECHANISM"}};
  corresponds.qualifiers = {"taxonomy"};
  corresponds.qualifiers_required = true;
  e.push_back(corresponds);

  s.qualifier_values = {{"source", {"actor", "victim"}},
                        {"role", {"event", "factor", "witness"}},
                        {"sequence", {"first", "subsequent"}},
                        {"taxonomy", {"cityscapes", "mechanism"}}};

  s.pairings = {{"VehicleInvolved", "VEHICLE"},       {"InstanceOf", "VEHICLE"},
                {"MostSevereInjuryInVehicle", "VEHICLE"}, {"OccupantInvolved", "OCCUPANT"},
                {"HasOccupant", "OCCUPANT"},          {"MostSevereInjury", "OCCUPANT"},
                {"MostSevereInjuryInCrash", "CRASH"}};
  return s;
}

}  // namespace

const NodeTypeSpec* KgSchema::node_type(const std::string& label) const {
  for (const auto& t : node_types) {
    if (t.label == label) return &t;
  }
  return nullptr;
}

const EdgeTypeSpec* KgSchema::edge_type(const std::string& relation) const {
  for (const auto& t : edge_types) {
    if (t.relation == relation) return &t;
  }
  return nullptr;
}

const NodeTypeSpec& KgSchema::require_node_type(const std::string& label) const {
  if (const auto* t = node_type(label)) return *t;
  throw VocabularyError("unknown node type '" + label + "'");
}

const EdgeTypeSpec& KgSchema::require_edge_type(const std::string& relation) const {
  if (const auto* t = edge_type(relation)) return *t;
  throw VocabularyError("unknown relation '" + relation + "'");
}

bool KgSchema::legal(const std::string& head_label, const std::string& relation,
                     const std::string& tail_label) const {
  const auto* spec = edge_type(relation);
  if (!spec) return false;
  for (const auto& [h, t] : spec->endpoints) {
    if (t != tail_label) continue;
    if (h == head_label) return true;
    if (h == "*") {
      const auto* ht = node_type(head_label);
      if (ht && ht->stage == 1) return true;
    }
  }
  return false;
}

bool KgSchema::qualifier_value_ok(const std::string& qualifier, const std::string& value) const {
  auto it = qualifier_values.find(qualifier);
  if (it == qualifier_values.end()) return false;
  return std::find(it->second.begin(), it->second.end(), value) != it->second.end();
}

std::size_t KgSchema::stage_node_type_count(int stage) const {
  return std::count_if(node_types.begin(), node_types.end(),
                       [&](const NodeTypeSpec& t) { return t.stage == stage; });
}

std::size_t KgSchema::stage_edge_type_count(int stage) const {
  return std::count_if(edge_types.begin(), edge_types.end(),
                       [&](const EdgeTypeSpec& t) { return t.stage == stage; });
}

std::vector<std::string> KgSchema::categorical_property_names() const {
  std::vector<std::string> names(std::begin(kUniversalProps), std::end(kUniversalProps));
  for (const auto& t : node_types) {
    for (const auto& p : t.categorical) {
      if (std::find(names.begin(), names.end(), p.name) == names.end()) names.push_back(p.name);
    }
  }
  return names;
}

const KgSchema& default_schema() {
  static const KgSchema schema = build_default();
  return schema;
}

nlohmann::ordered_json schema_to_json(const KgSchema& s) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["version"] = s.version;
  ordered_json nodes = ordered_json::array();
  for (const auto& t : s.node_types) {
    ordered_json n;
    n["label"] = t.label;
    n["level"] = t.level;
    n["group"] = t.group;
    n["stage"] = t.stage;
    n["vocabulary"] = t.vocabulary;
    ordered_json cat = ordered_json::array();
    for (const auto& p : t.categorical) cat.push_back({{"name", p.name}, {"domain", p.domain}});
    n["categorical"] = cat;
    n["numeric"] = t.numeric;
    nodes.push_back(n);
  }
  j["node_types"] = nodes;
  ordered_json edges = ordered_json::array();
  for (const auto& t : s.edge_types) {
    ordered_json e;
    e["relation"] = t.relation;
    e["stage"] = t.stage;
    e["group"] = t.group;
    ordered_json ends = ordered_json::array();
    for (const auto& [h, tl] : t.endpoints) ends.push_back({h, tl});
    e["endpoints"] = ends;
    e["qualifiers"] = t.qualifiers;
    e["qualifiers_required"] = t.qualifiers_required;
    edges.push_back(e);
  }
  j["edge_types"] = edges;
  ordered_json quals = ordered_json::object();
  for (const auto& [k, v] : s.qualifier_values) quals[k] = v;
  j["qualifier_values"] = quals;
  ordered_json pairs = ordered_json::array();
  for (const auto& p : s.pairings) pairs.push_back({{"relation", p.relation}, {"label", p.label}});
  j["pairings"] = pairs;
  return j;
}

KgSchema schema_from_json(const nlohmann::ordered_json& j) {
  KgSchema s;
  try {
    s.version = j.at("version").get<std::string>();
    for (const auto& n : j.at("node_types")) {
      NodeTypeSpec t;
      t.label = n.at("label").get<std::string>();
      t.level = n.at("level").get<std::string>();
      t.group = n.value("group", "");
      t.stage = n.at("stage").get<int>();
      t.vocabulary = n.value("vocabulary", std::vector<std::string>{});
      for (const auto& p : n.value("categorical", nlohmann::ordered_json::array())) {
        t.categorical.push_back({p.at("name").get<std::string>(), p.value("domain", "")});
      }
      t.numeric = n.value("numeric", std::vector<std::string>{});
      if (t.level != "entity" && t.level != "attribute" && t.level != "bridge") {
        throw SchemaError("node type '" + t.label + "' has unknown level '" + t.level + "'");
      }
      s.node_types.push_back(std::move(t));
    }
    for (const auto& e : j.at("edge_types")) {
      EdgeTypeSpec t;
      t.relation = e.at("relation").get<std::string>();
      t.stage = e.at("stage").get<int>();
      t.group = e.at("group").get<std::string>();
      for (const auto& pair : e.at("endpoints")) {
        t.endpoints.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<std::string>());
      }
      t.qualifiers = e.value("qualifiers", std::vector<std::string>{});
      t.qualifiers_required = e.value("qualifiers_required", false);
      s.edge_types.push_back(std::move(t));
    }
    for (const auto& [k, v] : j.at("qualifier_values").items()) {
      s.qualifier_values[k] = v.get<std::vector<std::string>>();
    }
    for (const auto& p : j.value("pairings", nlohmann::ordered_json::array())) {
      s.pairings.push_back({p.at("relation").get<std::string>(), p.at("label").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& ex) {
    throw SchemaError(std::string("malformed schema file: ") + ex.what());
  }
  for (const auto& t : s.edge_types) {
    for (const auto& [h, tl] : t.endpoints) {
      if ((h != "*" && !s.node_type(h)) || !s.node_type(tl)) {
        throw SchemaError("relation '" + t.relation + "' names an undeclared endpoint type");
      }
    }
    for (const auto& q : t.qualifiers) {
      if (!s.qualifier_values.count(q)) {
        throw SchemaError("relation '" + t.relation + "' uses undeclared qualifier '" + q + "'");
      }
    }
  }
  return s;
}

}  // namespace hats
