#include "hats/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "hats/error.hpp"

namespace hats {

std::string vocabulary_node_id(const std::string& label, const std::string& value) {
  return label + ":" + value;
}

NodeRecord vocabulary_node(const NodeTypeSpec& type, const std::string& value) {
  NodeRecord n;
  n.id = vocabulary_node_id(type.label, value);
  n.label = type.label;
  n.level = type.level;
  n.categorical = {{"name", value}, {"type", type.label}, {"level", type.level}};
  return n;
}

std::size_t PropertyGraph::KeyHash::operator()(const Key& k) const noexcept {
  return std::hash<std::string>{}(k.first) * 31 + std::hash<std::string>{}(k.second);
}

PropertyGraph::PropertyGraph(const KgSchema& schema) : schema_(&schema) {}

void PropertyGraph::validate_node(const NodeRecord& n) const {
  const NodeTypeSpec* type = schema_->node_type(n.label);
  if (!type) throw VocabularyError("node '" + n.id + "' has unknown label '" + n.label + "'");
  if (n.id.empty()) throw SchemaError("node of type " + n.label + " has an empty id");
  if (n.level != type->level) {
    throw SchemaError("node '" + n.id + "' has level '" + n.level + "', type " + n.label +
                      " requires '" + type->level + "'");
  }
  for (const char* p : kUniversalProps) {
    if (!n.categorical.count(p)) {
      throw SchemaError("node '" + n.id + "' lacks categorical property '" + p + "'");
    }
  }
  if (n.categorical.at("type") != n.label || n.categorical.at("level") != n.level) {
    throw SchemaError("node '" + n.id + "' type/level properties disagree with its label");
  }
  if (!type->vocabulary.empty()) {
    const auto& name = n.categorical.at("name");
    if (std::find(type->vocabulary.begin(), type->vocabulary.end(), name) == type->vocabulary.end()) {
      throw VocabularyError("value '" + name + "' is not in the " + n.label + " vocabulary");
    }
  }
  for (const auto& [key, value] : n.categorical) {
    if (key == "name" || key == "type" || key == "level") continue;
    auto it = std::find_if(type->categorical.begin(), type->categorical.end(),
                           [&](const CategoricalPropSpec& p) { return p.name == key; });
    if (it == type->categorical.end()) {
      throw SchemaError("node '" + n.id + "' carries undeclared property '" + key + "' for type " +
                        n.label);
    }
    if (!it->domain.empty()) {
      const auto& vocab = schema_->require_node_type(it->domain).vocabulary;
      if (std::find(vocab.begin(), vocab.end(), value) == vocab.end()) {
        throw SchemaError("node '" + n.id + "' property '" + key + "' value '" + value +
                          "' is outside " + it->domain);
      }
    }
  }
  if (n.numeric.size() != type->numeric.size()) {
    throw SchemaError("node '" + n.id + "' has " + std::to_string(n.numeric.size()) +
                      " numeric properties, type " + n.label + " requires " +
                      std::to_string(type->numeric.size()));
  }
  for (const auto& name : type->numeric) {
    auto it = n.numeric.find(name);
    if (it == n.numeric.end()) {
      throw SchemaError("node '" + n.id + "' lacks numeric property '" + name + "'");
    }
    if (!std::isfinite(it->second)) {
      throw SchemaError("node '" + n.id + "' numeric property '" + name + "' is not finite");
    }
  }
}

bool PropertyGraph::upsert_node(const NodeRecord& node, const Provenance& prov) {
  validate_node(node);
  if (const NodeRecord* existing = find_node(node.id)) {
    if (*existing == node) return false;
    throw ConflictError("node '" + node.id + "' already exists with a different payload");
  }
  insert_node_raw(node, prov);
  return true;
}

void PropertyGraph::insert_node_raw(const NodeRecord& node, const Provenance& prov) {
  if (index_.count(node.id)) throw ConflictError("duplicate node id '" + node.id + "'");
  index_.emplace(node.id, nodes_.size());
  nodes_.push_back(node);
  node_prov_.push_back(prov);
}

bool PropertyGraph::remove_node(const std::string& id) {
  auto it = index_.find(id);
  if (it == index_.end()) return false;
  const std::size_t pos = it->second;
  nodes_.erase(nodes_.begin() + static_cast<std::ptrdiff_t>(pos));
  node_prov_.erase(node_prov_.begin() + static_cast<std::ptrdiff_t>(pos));
  index_.clear();
  for (std::size_t i = 0; i < nodes_.size(); ++i) index_.emplace(nodes_[i].id, i);
  return true;
}

std::string PropertyGraph::edge_key(const EdgeRecord& e) {
  std::string k = e.head + '\x1f' + e.relation + '\x1f' + e.tail;
  for (const auto& [q, v] : e.qualifiers) k += '\x1e' + q + '=' + v;
  return k;
}

bool PropertyGraph::add_edge(const EdgeRecord& e, const Provenance& prov) {
  const EdgeTypeSpec* spec = schema_->edge_type(e.relation);
  if (!spec) throw VocabularyError("unknown relation '" + e.relation + "'");
  const NodeRecord* head = find_node(e.head);
  const NodeRecord* tail = find_node(e.tail);
  if (!head || !tail) {
    std::string where = prov.table.empty() ? std::string("")
                                           : " (table " + prov.table + ", row " +
                                                 std::to_string(prov.row) + ")";
    throw WiringError(e.relation + " edge references missing node '" + (!head ? e.head : e.tail) +
                      "'" + where);
  }
  if (!schema_->legal(head->label, e.relation, tail->label)) {
    throw SchemaError(e.relation + " may not connect " + head->label + " to " + tail->label);
  }
  if (e.qualifiers.empty() && spec->qualifiers_required) {
    throw SchemaError(e.relation + " edge requires qualifiers");
  }
  for (const auto& [q, v] : e.qualifiers) {
    if (std::find(spec->qualifiers.begin(), spec->qualifiers.end(), q) == spec->qualifiers.end()) {
      throw SchemaError(e.relation + " does not take qualifier '" + q + "'");
    }
    if (!schema_->qualifier_value_ok(q, v)) {
      throw DecodeError("qualifier " + q + "=" + v + " is outside its enumeration");
    }
  }
  if (edge_keys_.count(edge_key(e))) return false;
  insert_edge_raw(e, prov);
  return true;
}

void PropertyGraph::insert_edge_raw(const EdgeRecord& e, const Provenance& prov) {
  edge_keys_.insert(edge_key(e));
  edges_.push_back(e);
  edge_prov_.push_back(prov);
  index_edge(edges_.size() - 1);
}

void PropertyGraph::index_edge(std::size_t i) {
  const auto& e = edges_[i];
  by_head_[{e.head, e.relation}].push_back(i);
  by_tail_[{e.tail, e.relation}].push_back(i);
}

const NodeRecord* PropertyGraph::find_node(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &nodes_[it->second];
}

std::size_t PropertyGraph::node_index(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw VocabularyError("unknown node '" + id + "'");
  return it->second;
}

const std::vector<std::size_t>& PropertyGraph::edges_from(const std::string& head,
                                                          const std::string& relation) const {
  static const std::vector<std::size_t> empty;
  auto it = by_head_.find({head, relation});
  return it == by_head_.end() ? empty : it->second;
}

const std::vector<std::size_t>& PropertyGraph::edges_to(const std::string& tail,
                                                        const std::string& relation) const {
  static const std::vector<std::size_t> empty;
  auto it = by_tail_.find({tail, relation});
  return it == by_tail_.end() ? empty : it->second;
}

std::size_t PropertyGraph::count_nodes(const std::string& label) const {
  return std::count_if(nodes_.begin(), nodes_.end(),
                       [&](const NodeRecord& n) { return n.label == label; });
}

std::size_t PropertyGraph::count_edges(const std::string& relation) const {
  return std::count_if(edges_.begin(), edges_.end(),
                       [&](const EdgeRecord& e) { return e.relation == relation; });
}

std::map<std::string, std::size_t> PropertyGraph::node_counts() const {
  std::map<std::string, std::size_t> c;
  for (const auto& n : nodes_) ++c[n.label];
  return c;
}

std::map<std::string, std::size_t> PropertyGraph::edge_counts() const {
  std::map<std::string, std::size_t> c;
  for (const auto& e : edges_) ++c[e.relation];
  return c;
}

bool PropertyGraph::operator==(const PropertyGraph& o) const {
  return nodes_ == o.nodes_ && node_prov_ == o.node_prov_ && edges_ == o.edges_ &&
         edge_prov_ == o.edge_prov_;
}

bool PropertyGraph::indices_consistent() const {
  std::size_t head_total = 0, tail_total = 0;
  for (const auto& [key, list] : by_head_) {
    for (std::size_t i : list) {
      if (i >= edges_.size() || edges_[i].head != key.first || edges_[i].relation != key.second) {
        return false;
      }
    }
    head_total += list.size();
  }
  for (const auto& [key, list] : by_tail_) {
    for (std::size_t i : list) {
      if (i >= edges_.size() || edges_[i].tail != key.first || edges_[i].relation != key.second) {
        return false;
      }
    }
    tail_total += list.size();
  }
  return head_total == edges_.size() && tail_total == edges_.size();
}

namespace {

nlohmann::ordered_json prov_json(const Provenance& p) {
  return {{"table", p.table}, {"row", p.row}, {"stage", p.stage}};
}

Provenance prov_from(const nlohmann::json& j) {
  Provenance p;
  if (j.is_null()) return p;
  p.table = j.value("table", "");
  p.row = j.value("row", std::int64_t{-1});
  p.stage = j.value("stage", 0);
  return p;
}

}  // namespace

std::string export_ndjson(const PropertyGraph& g) {
  std::string out;
  for (std::size_t i = 0; i < g.nodes().size(); ++i) {
    const auto& n = g.nodes()[i];
    nlohmann::ordered_json j;
    j["kind"] = "node";
    j["id"] = n.id;
    j["label"] = n.label;
    j["level"] = n.level;
    nlohmann::ordered_json cat = nlohmann::ordered_json::object();
    for (const auto& [k, v] : n.categorical) cat[k] = v;
    j["categorical"] = cat;
    nlohmann::ordered_json num = nlohmann::ordered_json::object();
    for (const auto& [k, v] : n.numeric) num[k] = v;
    j["numeric"] = num;
    j["provenance"] = prov_json(g.node_provenance(i));
    out += j.dump();
    out += '\n';
  }
  for (std::size_t i = 0; i < g.edges().size(); ++i) {
    const auto& e = g.edges()[i];
    nlohmann::ordered_json j;
    j["kind"] = "edge";
    j["head"] = e.head;
    j["relation"] = e.relation;
    j["tail"] = e.tail;
    nlohmann::ordered_json q = nlohmann::ordered_json::array();
    for (const auto& [k, v] : e.qualifiers) q.push_back({k, v});
    j["qualifiers"] = q;
    j["provenance"] = prov_json(g.edge_provenance(i));
    out += j.dump();
    out += '\n';
  }
  return out;
}

PropertyGraph import_ndjson(const std::string& text, const KgSchema& schema) {
  PropertyGraph g(schema);
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      const std::string kind = j.at("kind").get<std::string>();
      if (kind == "node") {
        NodeRecord n;
        n.id = j.at("id").get<std::string>();
        n.label = j.at("label").get<std::string>();
        n.level = j.at("level").get<std::string>();
        for (const auto& [k, v] : j.at("categorical").items()) n.categorical[k] = v.get<std::string>();
        for (const auto& [k, v] : j.at("numeric").items()) n.numeric[k] = v.get<double>();
        g.insert_node_raw(n, prov_from(j.value("provenance", nlohmann::json())));
      } else if (kind == "edge") {
        EdgeRecord e;
        e.head = j.at("head").get<std::string>();
        e.relation = j.at("relation").get<std::string>();
        e.tail = j.at("tail").get<std::string>();
        for (const auto& q : j.at("qualifiers")) {
          e.qualifiers.emplace_back(q.at(0).get<std::string>(), q.at(1).get<std::string>());
        }
        g.insert_edge_raw(e, prov_from(j.value("provenance", nlohmann::json())));
      } else {
        throw ParseError("unknown record kind '" + kind + "'");
      }
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError("graph line " + std::to_string(line_no) + ": " + ex.what());
    } catch (const ParseError& ex) {
      throw ParseError("graph line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return g;
}

std::string graph_hash(const PropertyGraph& g) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : export_ndjson(g)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

bool CoherenceReport::all_passed() const {
  return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; });
}

std::vector<std::string> CoherenceReport::failed_categories() const {
  std::set<std::string> s;
  for (const auto& r : results) {
    if (!r.passed) s.insert(r.category);
  }
  return {s.begin(), s.end()};
}

nlohmann::ordered_json CoherenceReport::to_json() const {
  nlohmann::ordered_json j;
  j["all_passed"] = all_passed();
  nlohmann::ordered_json rules = nlohmann::ordered_json::array();
  for (const auto& r : results) {
    rules.push_back({{"rule", r.rule},
                     {"category", r.category},
                     {"passed", r.passed},
                     {"violations", r.violations},
                     {"detail", r.detail}});
  }
  j["rules"] = rules;
  return j;
}

namespace {

CoherenceResult make_result(std::string rule, std::string category) {
  CoherenceResult r;
  r.rule = std::move(rule);
  r.category = std::move(category);
  return r;
}

}  // namespace

CoherenceReport validate_coherence(const PropertyGraph& g) {
  const KgSchema& s = g.schema();
  CoherenceReport report;
  auto edge_counts = g.edge_counts();
  auto node_counts = g.node_counts();

  for (const auto& p : s.pairings) {
    CoherenceResult r;
    r.rule = "pairing:" + p.relation + "=" + p.label;
    r.category = "pairing";
    const std::size_t ec = edge_counts[p.relation], nc = node_counts[p.label];
    r.passed = ec == nc;
    r.violations = ec > nc ? ec - nc : nc - ec;
    r.detail = p.relation + " " + std::to_string(ec) + " vs " + p.label + " " + std::to_string(nc);
    report.results.push_back(r);
  }

  CoherenceResult dangling = make_result("dangling:endpoints", "dangling");
  std::map<std::string, CoherenceResult> legality;
  for (const auto& t : s.edge_types) {
    legality[t.relation] = make_result("endpoint_legality:" + t.relation, "endpoint_legality");
  }
  CoherenceResult unknown_rel = make_result("endpoint_legality:declared_relation", "endpoint_legality");
  CoherenceResult qenum = make_result("qualifier_enum:values", "qualifier_enum");
  CoherenceResult qscope = make_result("qualifier_scope:relations", "qualifier_scope");

  for (const auto& e : g.edges()) {
    const NodeRecord* h = g.find_node(e.head);
    const NodeRecord* t = g.find_node(e.tail);
    if (!h || !t) {
      ++dangling.violations;
      if (dangling.detail.empty()) dangling.detail = "first: " + e.head + " -" + e.relation + "-> " + e.tail;
    }
    const EdgeTypeSpec* spec = s.edge_type(e.relation);
    if (!spec) {
      ++unknown_rel.violations;
      continue;
    }
    if (h && t && !s.legal(h->label, e.relation, t->label)) {
      auto& r = legality[e.relation];
      ++r.violations;
      if (r.detail.empty()) r.detail = "first: " + h->label + " -> " + t->label;
    }
    if (spec->qualifiers_required && e.qualifiers.empty()) {
      ++qscope.violations;
    }
    for (const auto& [q, v] : e.qualifiers) {
      if (std::find(spec->qualifiers.begin(), spec->qualifiers.end(), q) == spec->qualifiers.end()) {
        ++qscope.violations;
      }
      if (!s.qualifier_value_ok(q, v)) ++qenum.violations;
    }
  }

  CoherenceResult props = make_result("property_schema:nodes", "property_schema");
  {
    PropertyGraph probe(s);
    for (const auto& n : g.nodes()) {
      try {
        probe.upsert_node(n);
      } catch (const Error& ex) {
        ++props.violations;
        if (props.detail.empty()) props.detail = ex.what();
      }
    }
  }

  for (auto* r : {&dangling}) {
    r->passed = r->violations == 0;
    report.results.push_back(*r);
  }
  for (auto& t : s.edge_types) {
    auto& r = legality[t.relation];
    r.passed = r.violations == 0;
    report.results.push_back(r);
  }
  for (auto* r : {&unknown_rel, &qenum, &qscope, &props}) {
    r->passed = r->violations == 0;
    report.results.push_back(*r);
  }
  return report;
}

}  // namespace hats
