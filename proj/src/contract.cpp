#include "hats/contract.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include "hats/error.hpp"

namespace hats {

// ---------------------------------------------------------------- CSV dialect

std::vector<std::vector<std::string>> parse_csv(const std::string& text,
                                                std::vector<std::size_t>* line_numbers) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false, field_started = false, after_quote = false;
  std::size_t line = 1, record_line = 1;

  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = after_quote = false;
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(record));
    record.clear();
    if (line_numbers) line_numbers->push_back(record_line);
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
          after_quote = true;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == ',') {
      end_field();
    } else if (c == '\n' || (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n')) {
      if (c == '\r') ++i;
      end_record();
      ++line;
      record_line = line;
    } else if (c == '"') {
      if (field_started || after_quote) {
        throw ParseError("line " + std::to_string(line) + ": stray quote inside unquoted field");
      }
      in_quotes = true;
      field_started = true;
    } else {
      if (after_quote) {
        throw ParseError("line " + std::to_string(line) + ": text after closing quote");
      }
      field += c;
      field_started = true;
    }
  }
  if (in_quotes) throw ParseError("line " + std::to_string(record_line) + ": unterminated quoted field");
  if (field_started || after_quote || !record.empty()) end_record();
  return records;
}

std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\r\n") == std::string::npos) return value;
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string write_csv(const std::vector<std::vector<std::string>>& records) {
  std::string out;
  for (const auto& r : records) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) out += ',';
      out += csv_field(r[i]);
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------- helpers

std::string format_number(double v) {
  if (std::floor(v) == v && std::abs(v) < 1e15) {
    return std::to_string(static_cast<long long>(v));
  }
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string entity_node_id(const std::string& table, const std::vector<std::string>& key_values) {
  std::string id = table + ":";
  for (std::size_t i = 0; i < key_values.size(); ++i) {
    if (i) id += '/';
    id += key_values[i];
  }
  return id;
}

const ColumnSpec* TableContract::column(const std::string& name) const {
  for (const auto& c : columns) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

const TableContract& ContractSet::table(const std::string& name) const {
  for (const auto& t : tables) {
    if (t.table == name) return t;
  }
  throw ContractError("no contract for table '" + name + "'");
}

const TableContract& ContractSet::entity_table(const std::string& label) const {
  for (const auto& t : tables) {
    if (t.entity && t.entity->label == label) return t;
  }
  throw ContractError("no table emits " + label + " entities");
}

const std::optional<std::string>& DecodedRow::get(const std::string& column) const {
  static const std::optional<std::string> none;
  auto it = values.find(column);
  return it == values.end() ? none : it->second;
}

namespace {

std::vector<std::string> domain_values(const ColumnSpec& c, const KgSchema& schema) {
  if (c.domain == "enum") return c.labels;
  if (c.domain.rfind("qualifier:", 0) == 0) {
    auto it = schema.qualifier_values.find(c.domain.substr(10));
    if (it == schema.qualifier_values.end()) {
      throw ContractError("column '" + c.name + "' names unknown qualifier domain " + c.domain);
    }
    return it->second;
  }
  const NodeTypeSpec* t = schema.node_type(c.domain);
  if (!t || t->vocabulary.empty()) {
    throw ContractError("column '" + c.name + "' names unknown vocabulary domain '" + c.domain + "'");
  }
  return t->vocabulary;
}

std::vector<std::pair<std::string, std::string>> sequential_codes(const std::vector<std::string>& vocab) {
  std::vector<std::pair<std::string, std::string>> codes;
  int next = 1;
  for (const auto& v : vocab) {
    if (v == "unknown") {
      // Not-reported codes all collapse onto the explicit unknown label.
      codes.emplace_back("98", v);
      codes.emplace_back("99", v);
    } else {
      codes.emplace_back(std::to_string(next++), v);
    }
  }
  return codes;
}

ColumnSpec key_col(std::string name, bool nullable = false) {
  ColumnSpec c;
  c.name = std::move(name);
  c.kind = "key";
  c.nullable = nullable;
  return c;
}

ColumnSpec code_col(const KgSchema& s, std::string name, std::string domain, bool nullable) {
  ColumnSpec c;
  c.name = std::move(name);
  c.kind = "code";
  c.domain = std::move(domain);
  c.nullable = nullable;
  c.codes = sequential_codes(domain_values(c, s));
  return c;
}

ColumnSpec enum_col(std::string name, std::vector<std::string> labels, bool nullable = false) {
  ColumnSpec c;
  c.name = std::move(name);
  c.kind = "code";
  c.domain = "enum";
  c.labels = std::move(labels);
  c.nullable = nullable;
  for (std::size_t i = 0; i < c.labels.size(); ++i) c.codes.emplace_back(std::to_string(i + 1), c.labels[i]);
  return c;
}

ColumnSpec num_col(std::string name, double lo, double hi) {
  ColumnSpec c;
  c.name = std::move(name);
  c.kind = "number";
  c.integer = true;
  c.min = lo;
  c.max = hi;
  return c;
}

NodeRef self() { return {}; }
NodeRef attr(std::string column) { return {NodeRef::Kind::kAttr, std::move(column), {}, {}}; }
NodeRef ref(std::string label, std::vector<std::string> key) {
  return {NodeRef::Kind::kRef, {}, std::move(label), std::move(key)};
}

EdgeRule rule(std::string rel, NodeRef from, NodeRef to, std::vector<QualifierRule> q = {},
              std::string when_column = {}, std::string when_equals = {}) {
  return {std::move(rel), std::move(from), std::move(to), std::move(when_column),
          std::move(when_equals), std::move(q)};
}

QualifierRule qconst(std::string rel, std::string value) { return {std::move(rel), std::move(value), {}}; }
QualifierRule qcol(std::string rel, std::string column) { return {std::move(rel), {}, std::move(column)}; }

}  // namespace

ContractSet default_contracts(const KgSchema& s) {
  ContractSet set;
  set.version = "1.0";

  TableContract crash;
  crash.table = "crash";
  crash.columns = {key_col("crash_id"),
                   code_col(s, "manner", "MANCOLL", true),
                   code_col(s, "max_injury", "CAIS", false),
                   code_col(s, "light", "LIGHTCOND", true),
                   code_col(s, "weather", "WEATHER", true),
                   code_col(s, "junction", "RELTOJUNCT", true),
                   code_col(s, "surface_condition", "SURFCOND", true),
                   num_col("vehicle_count", 1, 99),
                   num_col("event_count", 0, 999),
                   num_col("hour", 0, 23),
                   num_col("weekday", 1, 7),
                   num_col("month", 1, 12)};
  crash.entity = EntityRule{"CRASH",
                            {"crash_id"},
                            "crash",
                            {},
                            {{"collision_manner", "manner"}},
                            {{"vehicle_count", "vehicle_count"},
                             {"event_count", "event_count"},
                             {"hour", "hour"},
                             {"weekday", "weekday"},
                             {"month", "month"}}};
  crash.edges = {rule("LightCondition", self(), attr("light")),
                 rule("RelationToJunction", self(), attr("junction")),
                 rule("WeatherCondition", self(), attr("weather")),
                 rule("SurfaceCondition", self(), attr("surface_condition")),
                 rule("CollisionManner", self(), attr("manner")),
                 rule("MostSevereInjuryInCrash", self(), attr("max_injury"))};
  set.tables.push_back(crash);

  TableContract vehicle;
  vehicle.table = "vehicle";
  vehicle.columns = {key_col("crash_id"),
                     key_col("vehicle_no"),
                     code_col(s, "class", "VEHCLASS", false),
                     code_col(s, "surface_type", "SURFTYPE", true),
                     code_col(s, "alignment", "ALIGNMENT", true),
                     code_col(s, "crash_category", "CRASHCAT", true),
                     code_col(s, "crash_config", "CRASHCONF", true),
                     code_col(s, "consequence", "CONSEQ", true),
                     code_col(s, "damage_plane", "DAMPLANE", true),
                     code_col(s, "damage_severity", "DAMSEV", true),
                     code_col(s, "max_injury", "VAIS", false),
                     code_col(s, "pre_movement", "PREMOVE", true),
                     code_col(s, "rollover", "ROLLINITYP", true),
                     code_col(s, "traffic_device", "TRAFDEV", true)};
  vehicle.entity = EntityRule{"VEHICLE", {"crash_id", "vehicle_no"}, "vehicle", {}, {{"class", "class"}}, {}};
  vehicle.edges = {rule("VehicleInvolved", ref("CRASH", {"crash_id"}), self()),
                   rule("InstanceOf", self(), attr("class")),
                   rule("SurfaceType", self(), attr("surface_type")),
                   rule("RoadwayAlignment", self(), attr("alignment")),
                   rule("CrashCategory", self(), attr("crash_category")),
                   rule("CrashConfiguration", self(), attr("crash_config")),
                   rule("GeneralConsequence", self(), attr("consequence")),
                   rule("VehicleDamagePosition", self(), attr("damage_plane")),
                   rule("DamageSeverityLevel", self(), attr("damage_severity")),
                   rule("MostSevereInjuryInVehicle", self(), attr("max_injury")),
                   rule("Pre-crashVehicleMovement", self(), attr("pre_movement")),
                   rule("Post-crashRolloverType", self(), attr("rollover")),
                   rule("SignBestControlsTraffic", self(), attr("traffic_device"))};
  set.tables.push_back(vehicle);

  TableContract occupant;
  occupant.table = "occupant";
  occupant.columns = {key_col("crash_id"),
                      key_col("vehicle_no"),
                      key_col("occupant_no"),
                      enum_col("seat", {"driver", "passenger"}),
                      code_col(s, "max_injury", "MAIS", false),
                      code_col(s, "treatment", "TREATMENT", true)};
  occupant.entity = EntityRule{"OCCUPANT",
                               {"crash_id", "vehicle_no", "occupant_no"},
                               {},
                               "seat",
                               {{"most_severe_injury", "max_injury"}, {"treatment", "treatment"}},
                               {}};
  occupant.edges = {rule("OccupantInvolved", ref("CRASH", {"crash_id"}), self()),
                    rule("HasOccupant", ref("VEHICLE", {"crash_id", "vehicle_no"}), self()),
                    rule("MostSevereInjury", self(), attr("max_injury")),
                    rule("TreatmentReceived", self(), attr("treatment"))};
  set.tables.push_back(occupant);

  TableContract contact;
  contact.table = "contact";
  contact.columns = {key_col("crash_id"),
                     key_col("vehicle_no"),
                     key_col("contact_no"),
                     code_col(s, "sequence", "qualifier:sequence", false),
                     enum_col("other_kind", {"vehicle", "object"}),
                     key_col("other_vehicle_no", true),
                     code_col(s, "object", "OBJCONT", true)};
  const NodeRef own_vehicle = ref("VEHICLE", {"crash_id", "vehicle_no"});
  contact.edges = {
      rule("ContactWith", own_vehicle, ref("VEHICLE", {"crash_id", "other_vehicle_no"}),
           {qcol("sequence", "sequence")}, "other_kind", "vehicle"),
      rule("Contactwith", own_vehicle, attr("object"), {qcol("sequence", "sequence")}, "other_kind",
           "object"),
      rule("EntityInvolved", ref("CRASH", {"crash_id"}), attr("object"), {}, "other_kind", "object")};
  set.tables.push_back(contact);

  TableContract event;
  event.table = "event";
  event.columns = {key_col("crash_id"),
                   key_col("event_no"),
                   key_col("actor_vehicle_no"),
                   code_col(s, "event", "CRITEVENT", false),
                   code_col(s, "category", "CRITCAT", false),
                   enum_col("victim_kind", {"vehicle", "object"}),
                   key_col("victim_vehicle_no", true),
                   code_col(s, "victim_object", "OBJCONT", true)};
  const NodeRef actor = ref("VEHICLE", {"crash_id", "actor_vehicle_no"});
  const NodeRef victim_vehicle = ref("VEHICLE", {"crash_id", "victim_vehicle_no"});
  const NodeRef the_crash = ref("CRASH", {"crash_id"});
  event.edges = {
      rule("LeadTo", actor, the_crash, {qconst("source", "actor")}),
      rule("LeadTo", attr("event"), the_crash, {qconst("role", "event")}),
      rule("LeadTo", attr("category"), the_crash, {qconst("role", "factor")}),
      rule("MakeCrashImminentFor", attr("event"), victim_vehicle, {qconst("role", "event")},
           "victim_kind", "vehicle"),
      rule("MakeCrashImminentFor", attr("category"), victim_vehicle, {qconst("role", "factor")},
           "victim_kind", "vehicle"),
      rule("MakeCrashImminentFor", attr("event"), attr("victim_object"), {qconst("role", "event")},
           "victim_kind", "object"),
      rule("MakeCrashImminentFor", attr("category"), attr("victim_object"),
           {qconst("role", "factor")}, "victim_kind", "object"),
      rule("ImplicatedBy", actor, attr("event"), {qconst("source", "actor"), qconst("role", "event")}),
      rule("ImplicatedBy", actor, attr("category"),
           {qconst("source", "actor"), qconst("role", "factor")}),
      rule("ImplicatedBy", victim_vehicle, attr("event"),
           {qconst("source", "victim"), qconst("role", "witness")}, "victim_kind", "vehicle"),
      rule("ImplicatedBy", attr("victim_object"), attr("event"),
           {qconst("source", "victim"), qconst("role", "witness")}, "victim_kind", "object")};
  set.tables.push_back(event);
  return set;
}

// ---------------------------------------------------------------- JSON

namespace {

nlohmann::ordered_json ref_json(const NodeRef& r) {
  switch (r.kind) {
    case NodeRef::Kind::kSelf:
      return {{"self", true}};
    case NodeRef::Kind::kAttr:
      return {{"attr", r.column}};
    case NodeRef::Kind::kRef:
      return {{"ref", r.label}, {"key", r.key}};
  }
  return {};
}

NodeRef ref_from(const nlohmann::ordered_json& j) {
  NodeRef r;
  if (j.contains("attr")) {
    r.kind = NodeRef::Kind::kAttr;
    r.column = j.at("attr").get<std::string>();
  } else if (j.contains("ref")) {
    r.kind = NodeRef::Kind::kRef;
    r.label = j.at("ref").get<std::string>();
    r.key = j.at("key").get<std::vector<std::string>>();
  } else if (!j.value("self", false)) {
    throw ContractError("node reference needs one of self/attr/ref");
  }
  return r;
}

using Pairs = std::vector<std::pair<std::string, std::string>>;

nlohmann::ordered_json pairs_json(const Pairs& p) {
  nlohmann::ordered_json a = nlohmann::ordered_json::array();
  for (const auto& [k, v] : p) a.push_back({k, v});
  return a;
}

Pairs pairs_from(const nlohmann::ordered_json& j) {
  Pairs p;
  for (const auto& e : j) p.emplace_back(e.at(0).get<std::string>(), e.at(1).get<std::string>());
  return p;
}

}  // namespace

nlohmann::ordered_json contracts_to_json(const ContractSet& c) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["version"] = c.version;
  ordered_json tables = ordered_json::array();
  for (const auto& t : c.tables) {
    ordered_json tj;
    tj["table"] = t.table;
    ordered_json cols = ordered_json::array();
    for (const auto& col : t.columns) {
      ordered_json cj;
      cj["name"] = col.name;
      cj["kind"] = col.kind;
      cj["nullable"] = col.nullable;
      if (col.kind == "code") {
        cj["domain"] = col.domain;
        if (col.domain == "enum") cj["labels"] = col.labels;
        cj["codes"] = pairs_json(col.codes);
      } else if (col.kind == "number") {
        cj["integer"] = col.integer;
        cj["min"] = col.min;
        cj["max"] = col.max;
      }
      cols.push_back(cj);
    }
    tj["columns"] = cols;
    if (t.entity) {
      ordered_json ej;
      ej["label"] = t.entity->label;
      ej["key"] = t.entity->key;
      if (!t.entity->name_column.empty()) {
        ej["name"] = {{"column", t.entity->name_column}};
      } else {
        ej["name"] = {{"const", t.entity->name_const}};
      }
      ej["categorical"] = pairs_json(t.entity->categorical);
      ej["numeric"] = pairs_json(t.entity->numeric);
      tj["entity"] = ej;
    }
    ordered_json edges = ordered_json::array();
    for (const auto& e : t.edges) {
      ordered_json ej;
      ej["relation"] = e.relation;
      ej["from"] = ref_json(e.from);
      ej["to"] = ref_json(e.to);
      if (!e.when_column.empty()) ej["when"] = {{"column", e.when_column}, {"equals", e.when_equals}};
      ordered_json q = ordered_json::array();
      for (const auto& qr : e.qualifiers) {
        if (qr.column.empty()) {
          q.push_back({{"relation", qr.relation}, {"value", qr.value}});
        } else {
          q.push_back({{"relation", qr.relation}, {"column", qr.column}});
        }
      }
      ej["qualifiers"] = q;
      edges.push_back(ej);
    }
    tj["edges"] = edges;
    tables.push_back(tj);
  }
  j["tables"] = tables;
  return j;
}

ContractSet contracts_from_json(const nlohmann::ordered_json& j) {
  ContractSet c;
  try {
    c.version = j.at("version").get<std::string>();
    for (const auto& tj : j.at("tables")) {
      TableContract t;
      t.table = tj.at("table").get<std::string>();
      for (const auto& cj : tj.at("columns")) {
        ColumnSpec col;
        col.name = cj.at("name").get<std::string>();
        col.kind = cj.at("kind").get<std::string>();
        col.nullable = cj.value("nullable", false);
        if (col.kind == "code") {
          col.domain = cj.at("domain").get<std::string>();
          col.labels = cj.value("labels", std::vector<std::string>{});
          col.codes = pairs_from(cj.at("codes"));
        } else if (col.kind == "number") {
          col.integer = cj.value("integer", false);
          col.min = cj.at("min").get<double>();
          col.max = cj.at("max").get<double>();
        } else if (col.kind != "key") {
          throw ContractError("column '" + col.name + "' has unknown kind '" + col.kind + "'");
        }
        t.columns.push_back(std::move(col));
      }
      if (tj.contains("entity")) {
        const auto& ej = tj.at("entity");
        EntityRule e;
        e.label = ej.at("label").get<std::string>();
        e.key = ej.at("key").get<std::vector<std::string>>();
        const auto& name = ej.at("name");
        if (name.contains("column")) {
          e.name_column = name.at("column").get<std::string>();
        } else {
          e.name_const = name.at("const").get<std::string>();
        }
        e.categorical = pairs_from(ej.value("categorical", nlohmann::ordered_json::array()));
        e.numeric = pairs_from(ej.value("numeric", nlohmann::ordered_json::array()));
        t.entity = std::move(e);
      }
      for (const auto& ej : tj.value("edges", nlohmann::ordered_json::array())) {
        EdgeRule e;
        e.relation = ej.at("relation").get<std::string>();
        e.from = ref_from(ej.at("from"));
        e.to = ref_from(ej.at("to"));
        if (ej.contains("when")) {
          e.when_column = ej.at("when").at("column").get<std::string>();
          e.when_equals = ej.at("when").at("equals").get<std::string>();
        }
        for (const auto& q : ej.value("qualifiers", nlohmann::ordered_json::array())) {
          e.qualifiers.push_back({q.at("relation").get<std::string>(), q.value("value", ""),
                                  q.value("column", "")});
        }
        t.edges.push_back(std::move(e));
      }
      c.tables.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ContractError(std::string("malformed contract file: ") + ex.what());
  }
  return c;
}

void validate_contracts(const ContractSet& c, const KgSchema& schema) {
  std::set<std::string> names;
  for (const auto& t : c.tables) {
    if (!names.insert(t.table).second) throw ContractError("duplicate table contract '" + t.table + "'");
    auto need_col = [&](const std::string& col, const std::string& what) -> const ColumnSpec& {
      const ColumnSpec* spec = t.column(col);
      if (!spec) throw ContractError(t.table + ": " + what + " names undeclared column '" + col + "'");
      return *spec;
    };
    for (const auto& col : t.columns) {
      if (col.kind != "code") continue;
      const auto domain = domain_values(col, schema);
      std::set<std::string> covered;
      std::set<std::string> raw;
      for (const auto& [code, label] : col.codes) {
        if (!raw.insert(code).second) {
          throw ContractError(t.table + "." + col.name + ": raw code '" + code + "' listed twice");
        }
        if (std::find(domain.begin(), domain.end(), label) == domain.end()) {
          throw ContractError(t.table + "." + col.name + ": code '" + code + "' decodes to '" + label +
                              "' outside " + col.domain);
        }
        covered.insert(label);
      }
      for (const auto& v : domain) {
        if (!covered.count(v)) {
          throw ContractError(t.table + "." + col.name + ": no raw code decodes to '" + v + "'");
        }
      }
    }
    auto check_ref = [&](const NodeRef& r, const std::string& rel) {
      if (r.kind == NodeRef::Kind::kAttr) {
        const auto& col = need_col(r.column, rel);
        if (col.kind != "code" || !schema.node_type(col.domain)) {
          throw ContractError(t.table + ": " + rel + " attribute column '" + r.column +
                              "' is not a vocabulary column");
        }
      } else if (r.kind == NodeRef::Kind::kRef) {
        for (const auto& k : r.key) need_col(k, rel);
        const NodeTypeSpec* nt = schema.node_type(r.label);
        if (!nt) throw ContractError(t.table + ": " + rel + " references unknown type " + r.label);
      } else if (!t.entity) {
        throw ContractError(t.table + ": " + rel + " uses self but the table emits no entity");
      }
    };
    if (t.entity) {
      if (!schema.node_type(t.entity->label)) {
        throw ContractError(t.table + ": entity label '" + t.entity->label + "' is not declared");
      }
      for (const auto& k : t.entity->key) need_col(k, "entity key");
      if (!t.entity->name_column.empty()) need_col(t.entity->name_column, "entity name");
      for (const auto& [p, col] : t.entity->categorical) need_col(col, "property " + p);
      for (const auto& [p, col] : t.entity->numeric) {
        if (need_col(col, "property " + p).kind != "number") {
          throw ContractError(t.table + ": numeric property " + p + " reads non-number column");
        }
      }
    }
    for (const auto& e : t.edges) {
      if (!schema.edge_type(e.relation)) {
        throw ContractError(t.table + ": unknown relation '" + e.relation + "'");
      }
      check_ref(e.from, e.relation);
      check_ref(e.to, e.relation);
      if (!e.when_column.empty()) need_col(e.when_column, e.relation + " condition");
      for (const auto& q : e.qualifiers) {
        if (!q.column.empty()) need_col(q.column, e.relation + " qualifier");
      }
    }
  }
  for (const auto& t : c.tables) {
    for (const auto& e : t.edges) {
      for (const NodeRef* r : {&e.from, &e.to}) {
        if (r->kind == NodeRef::Kind::kRef) c.entity_table(r->label);
      }
    }
  }
}

// ---------------------------------------------------------------- decoding

DecodeResult decode_table(const std::string& csv_bytes, const TableContract& contract) {
  std::vector<std::size_t> lines;
  auto records = parse_csv(csv_bytes, &lines);
  DecodeResult result;
  if (records.empty()) {
    throw ContractError(contract.table + ": missing header row");
  }
  const auto& header = records.front();
  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < header.size(); ++i) position[header[i]] = i;
  for (const auto& col : contract.columns) {
    if (!position.count(col.name) && !col.nullable) {
      throw ContractError(contract.table + ": missing mandatory column '" + col.name + "'");
    }
  }

  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    const std::size_t row_index = r - 1;
    if (rec.size() != header.size()) {
      throw ParseError(contract.table + " line " + std::to_string(lines[r]) + ": expected " +
                       std::to_string(header.size()) + " fields, found " + std::to_string(rec.size()));
    }
    ++result.input_rows;
    DecodedRow row;
    row.table = contract.table;
    row.row = row_index;
    std::optional<RejectRecord> reject;
    for (const auto& col : contract.columns) {
      auto pos = position.find(col.name);
      const std::string raw = pos == position.end() ? std::string() : rec[pos->second];
      auto fail = [&](const std::string& reason) {
        reject = RejectRecord{row_index, lines[r], col.name, raw, reason};
      };
      if (raw.empty()) {
        if (!col.nullable) {
          fail("missing value");
          break;
        }
        row.values[col.name] = std::nullopt;
        continue;
      }
      if (col.kind == "key") {
        if (raw.find_first_of("/:") != std::string::npos) {
          fail("key contains a reserved character");
          break;
        }
        row.values[col.name] = raw;
      } else if (col.kind == "code") {
        auto it = std::find_if(col.codes.begin(), col.codes.end(),
                               [&](const auto& p) { return p.first == raw; });
        if (it == col.codes.end()) {
          fail("code '" + raw + "' outside domain " + col.domain);
          break;
        }
        row.values[col.name] = it->second;
      } else {
        double v = 0;
        auto res = std::from_chars(raw.data(), raw.data() + raw.size(), v);
        if (res.ec != std::errc() || res.ptr != raw.data() + raw.size() || !std::isfinite(v)) {
          fail("not a number");
          break;
        }
        if (col.integer && std::floor(v) != v) {
          fail("not an integer");
          break;
        }
        if (v < col.min || v > col.max) {
          fail("value outside [" + format_number(col.min) + ", " + format_number(col.max) + "]");
          break;
        }
        row.values[col.name] = format_number(v);
      }
    }
    if (reject) {
      result.rejects.push_back(*reject);
    } else {
      result.rows.push_back(std::move(row));
    }
  }
  return result;
}

std::string encode_table(const std::vector<DecodedRow>& rows, const TableContract& contract) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> header;
  for (const auto& c : contract.columns) header.push_back(c.name);
  records.push_back(header);
  for (const auto& row : rows) {
    std::vector<std::string> rec;
    for (const auto& col : contract.columns) {
      const auto& v = row.get(col.name);
      if (!v) {
        rec.emplace_back();
      } else if (col.kind == "code") {
        auto it = std::find_if(col.codes.begin(), col.codes.end(),
                               [&](const auto& p) { return p.second == *v; });
        if (it == col.codes.end()) {
          throw ContractError(contract.table + "." + col.name + ": no code for label '" + *v + "'");
        }
        rec.push_back(it->first);
      } else {
        rec.push_back(*v);
      }
    }
    records.push_back(std::move(rec));
  }
  return write_csv(records);
}

std::string rejects_csv(const std::string& table, const std::vector<RejectRecord>& rejects) {
  std::vector<std::vector<std::string>> records{{"table", "row", "line", "column", "value", "reason"}};
  for (const auto& r : rejects) {
    records.push_back({table, std::to_string(r.row), std::to_string(r.line), r.column, r.value, r.reason});
  }
  return write_csv(records);
}

}  // namespace hats
