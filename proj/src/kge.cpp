#include "hats/kge.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "hats/archive.hpp"
#include "hats/contract.hpp"
#include "hats/error.hpp"
#include "hats/ops.hpp"

namespace hats {

FeatureVocab feature_vocab_from_graph(const PropertyGraph& g) {
  FeatureVocab v;
  v.property_names = g.schema().categorical_property_names();
  std::vector<std::set<std::string>> seen(v.property_names.size());
  for (const auto& n : g.nodes()) {
    for (std::size_t k = 0; k < v.property_names.size(); ++k) {
      auto it = n.categorical.find(v.property_names[k]);
      if (it != n.categorical.end()) seen[k].insert(it->second);
    }
  }
  for (const auto& s : seen) v.values.emplace_back(s.begin(), s.end());
  return v;
}

KgeNodeFeatures node_features_from_graph(const PropertyGraph& g, const FeatureVocab& vocab) {
  KgeNodeFeatures f;
  f.node_count = g.nodes().size();
  f.property_names = vocab.property_names;
  f.property_vocab = vocab.values;
  f.values.resize(vocab.property_names.size());
  std::vector<std::map<std::string, std::size_t>> lookup(vocab.values.size());
  for (std::size_t k = 0; k < vocab.values.size(); ++k) {
    for (std::size_t i = 0; i < vocab.values[k].size(); ++i) lookup[k].emplace(vocab.values[k][i], i);
  }

  std::vector<double> raw;
  for (std::size_t i = 0; i < g.nodes().size(); ++i) {
    const auto& n = g.nodes()[i];
    for (std::size_t k = 0; k < vocab.property_names.size(); ++k) {
      auto it = n.categorical.find(vocab.property_names[k]);
      if (it == n.categorical.end()) continue;
      auto hit = lookup[k].find(it->second);
      if (hit == lookup[k].end()) {
        throw VocabularyError("node " + n.id + ": value '" + it->second + "' of property " +
                              vocab.property_names[k] + " is not in the feature vocabulary");
      }
      f.values[k].emplace_back(i, hit->second);
    }
    const NodeTypeSpec* type = g.schema().node_type(n.label);
    if (!type || type->numeric.size() != kNumericWidth) continue;
    f.numeric_nodes.push_back(i);
    for (const auto& name : type->numeric) {
      auto it = n.numeric.find(name);
      raw.push_back(it == n.numeric.end() ? 0.0 : it->second);
    }
  }

  // Standardize each numeric column over the graph.
  const std::size_t rows = f.numeric_nodes.size();
  for (std::size_t c = 0; c < kNumericWidth; ++c) {
    double mean = 0.0, var = 0.0;
    for (std::size_t r = 0; r < rows; ++r) mean += raw[r * kNumericWidth + c];
    if (rows) mean /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) var += std::pow(raw[r * kNumericWidth + c] - mean, 2);
    if (rows) var /= static_cast<double>(rows);
    const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
    f.numeric_mean[c] = mean;
    f.numeric_std[c] = sd;
    for (std::size_t r = 0; r < rows; ++r) raw[r * kNumericWidth + c] = (raw[r * kNumericWidth + c] - mean) / sd;
  }
  f.numeric = std::move(raw);
  return f;
}

void KgeConfig::validate() const {
  if (dim == 0) throw ConfigError("dim must be positive");
  if (heads == 0 || dim % heads != 0) throw ConfigError("dim must be divisible by heads");
  if (layers < 1) throw ConfigError("layers must be at least 1");
  if (encoder_layers < 1) throw ConfigError("encoder_layers must be at least 1");
  if (!(smoothing >= 0.0 && smoothing < 0.5)) throw ConfigError("smoothing must lie in [0, 0.5)");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
}

nlohmann::ordered_json to_json(const KgeConfig& c) {
  nlohmann::ordered_json j;
  j["dim"] = c.dim;
  j["layers"] = c.layers;
  j["heads"] = c.heads;
  j["encoder_layers"] = c.encoder_layers;
  j["smoothing"] = c.smoothing;
  j["lr"] = c.lr;
  j["weight_decay"] = c.weight_decay;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  j["degree_norm"] = c.degree_norm;
  j["scaled_score"] = c.scaled_score;
  j["logit_offset"] = c.logit_offset;
  j["literal_node_ids"] = c.literal_node_ids;
  return j;
}

KgeConfig kge_config_from_json(const nlohmann::json& j, KgeConfig c) {
  if (j.is_null()) return c;
  if (!j.is_object()) throw ConfigError("kge config must be an object");
  static const std::set<std::string> known = {"dim",        "layers",       "heads",  "encoder_layers",
                                              "smoothing",  "lr",           "weight_decay", "batch_size",
                                              "epochs",     "seed",         "degree_norm", "scaled_score",
                                              "logit_offset", "literal_node_ids"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown kge config key '" + key + "'");
  }
  try {
    c.dim = j.value("dim", c.dim);
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
    c.smoothing = j.value("smoothing", c.smoothing);
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.degree_norm = j.value("degree_norm", c.degree_norm);
    c.scaled_score = j.value("scaled_score", c.scaled_score);
    c.logit_offset = j.value("logit_offset", c.logit_offset);
    c.literal_node_ids = j.value("literal_node_ids", c.literal_node_ids);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad kge config value: ") + e.what());
  }
  return c;
}

MessageGraph message_graph(const std::vector<TripletRecord>& records, std::size_t node_count) {
  MessageGraph g;
  g.node_count = node_count;
  for (const auto& r : records) {
    if (r.head >= node_count || r.tail >= node_count) throw DimensionError("triplet node index out of range");
    g.heads.push_back(r.head);
    g.relations.push_back(r.relation);
    g.tails.push_back(r.tail);
    g.qualifiers.push_back(r.qualifiers);
  }
  return g;
}

KgeShape KgeData::shape() const {
  KgeShape s;
  s.nodes = features.node_count;
  s.relations = vocab.relation_count();
  s.qualifier_relations = vocab.qualifier_relations.size();
  s.qualifier_values = vocab.qualifier_values.size();
  for (const auto& v : features.property_vocab) s.property_sizes.push_back(v.size());
  return s;
}

KgeData make_kge_data(TripletSet set, KgeNodeFeatures features, std::uint64_t split_seed) {
  if (features.node_count != set.vocab.nodes.size()) {
    throw DimensionError("feature table covers " + std::to_string(features.node_count) + " nodes, vocabulary has " +
                         std::to_string(set.vocab.nodes.size()));
  }
  KgeData d;
  const std::size_t base = set.vocab.base_relation_count();
  d.splits = with_reciprocals(split_811(set.records, split_seed), base);
  d.filter = build_filter_index(d.splits);
  d.graph = message_graph(d.splits.train, features.node_count);
  d.vocab = std::move(set.vocab);
  d.features = std::move(features);
  return d;
}

KgeData planted_kge_data(std::uint64_t seed, const PlantedKgConfig& config) {
  if (config.members == 0 || config.relations == 0 || config.values_per_relation == 0) {
    throw ConfigError("planted KG needs members, relations and values");
  }
  if (!(config.keep > 0.0 && config.keep <= 1.0)) throw ConfigError("planted KG keep rate must lie in (0, 1]");
  std::mt19937_64 rng(seed);
  TripletSet set;
  KgeNodeFeatures f;
  f.property_names = {"kind"};
  f.property_vocab = {{"member", "attribute"}};
  for (std::size_t r = 0; r < config.relations; ++r) {
    set.vocab.relations.push_back("r" + std::to_string(r));
    f.property_names.push_back("p" + std::to_string(r));
    f.property_vocab.emplace_back();
    for (std::size_t v = 0; v < config.values_per_relation; ++v) f.property_vocab.back().push_back("v" + std::to_string(v));
  }
  f.values.resize(f.property_names.size());

  std::uniform_int_distribution<std::size_t> value(0, config.values_per_relation - 1);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const std::size_t members = config.members;
  for (std::size_t m = 0; m < members; ++m) {
    set.vocab.nodes.push_back("member:" + std::to_string(m));
    f.values[0].emplace_back(m, 0);
  }
  for (std::size_t r = 0; r < config.relations; ++r) {
    for (std::size_t v = 0; v < config.values_per_relation; ++v) {
      f.values[0].emplace_back(set.vocab.nodes.size(), 1);
      set.vocab.nodes.push_back("attr:" + std::to_string(r) + "/" + std::to_string(v));
    }
  }
  f.node_count = set.vocab.nodes.size();
  for (std::size_t m = 0; m < members; ++m) {
    for (std::size_t r = 0; r < config.relations; ++r) {
      const std::size_t v = value(rng);
      f.values[1 + r].emplace_back(m, v);
      if (coin(rng) < config.keep) {
        set.records.push_back(TripletRecord{m, r, members + r * config.values_per_relation + v, {}, false});
      }
    }
  }
  return make_kge_data(std::move(set), std::move(f), seed + 1);
}

KgeModel KgeModel::create(const KgeShape& shape, const KgeConfig& config) {
  if (config.dim == 0 || config.heads == 0 || config.dim % config.heads != 0) {
    throw ConfigError("dim must be positive and divisible by heads");
  }
  KgeModel m;
  m.shape_ = shape;
  m.config_ = config;
  const std::size_t d = config.dim;
  Initializer init(config.seed);
  auto& p = m.params_;
  m.node_emb_ = p.add("node_emb", init.uniform({shape.nodes, d}, d));
  for (std::size_t k = 0; k < shape.property_sizes.size(); ++k) {
    m.categorical_.push_back(p.add("cat." + std::to_string(k), init.uniform({shape.property_sizes[k], d}, d)));
  }
  m.num1_ = nn::Linear::create(p, "num1", kNumericWidth, d, init);
  m.num2_ = nn::Linear::create(p, "num2", d, d, init);
  m.lit_ = nn::Linear::create(p, "lit", d, d, init);
  m.qual_rel_ = p.add("qual_rel", init.uniform({shape.qualifier_relations, d}, d));
  m.qual_val_ = p.add("qual_val", init.uniform({shape.qualifier_values, d}, d));
  m.w_rel_ = p.add("w_rel", init.uniform({shape.relations, d, d}, d));
  m.b_rel_ = p.add("b_rel", Tensor::zeros({shape.relations, d}, true));
  // FiLM starts as the identity modulation.
  m.gamma_ = nn::Linear::create(p, "film_gamma", d, d, init);
  m.beta_ = nn::Linear::create(p, "film_beta", d, d, init);
  for (Tensor* t : {&m.gamma_.weight, &m.gamma_.bias, &m.beta_.weight, &m.beta_.bias}) {
    std::fill(t->mutable_data().begin(), t->mutable_data().end(), 0.0);
  }
  for (std::size_t l = 0; l < config.layers; ++l) {
    m.norms_.push_back(nn::LayerNorm::create(p, "norm." + std::to_string(l), d));
  }
  m.rel_emb_ = p.add("rel_emb", init.uniform({shape.relations, d}, d));
  m.seq_ = nn::Linear::create(p, "seq", d, d, init);
  m.encoder_ = nn::TransformerEncoder::create(p, "encoder", d, config.encoder_layers, config.heads, init);
  if (config.logit_offset) {
    // Starts at the negative target's logit so early steps need not bend the geometry.
    const double floor = std::max(config.smoothing, 1.0 / static_cast<double>(std::max<std::size_t>(shape.nodes, 2)));
    m.offset_ = p.add("logit_offset", Tensor::from({1}, {std::log(floor / (1.0 - floor))}, true));
  }
  return m;
}

Tensor KgeModel::encode_literals(const KgeNodeFeatures& f) const {
  const std::size_t n = shape_.nodes, d = config_.dim;
  if (f.node_count != n) throw DimensionError("feature table does not match the model's node count");
  if (f.values.size() != categorical_.size()) throw DimensionError("feature table has the wrong property count");
  Tensor lit;
  auto accumulate = [&](const Tensor& part) { lit = lit.defined() ? ops::add(lit, part) : part; };
  for (std::size_t k = 0; k < f.values.size(); ++k) {
    if (f.values[k].empty()) continue;
    std::vector<std::size_t> nodes, vals;
    for (const auto& [node, value] : f.values[k]) {
      if (value >= shape_.property_sizes[k]) {
        throw VocabularyError("value index " + std::to_string(value) + " outside property " + std::to_string(k));
      }
      nodes.push_back(node);
      vals.push_back(value);
    }
    accumulate(ops::scatter_add_rows(ops::index_select(categorical_[k], vals), nodes, n));
  }
  if (!f.numeric_nodes.empty()) {
    Tensor x = Tensor::from({f.numeric_nodes.size(), kNumericWidth}, f.numeric);
    accumulate(ops::scatter_add_rows(num2_(ops::relu(num1_(x))), f.numeric_nodes, n));
  }
  if (!lit.defined()) lit = Tensor::zeros({n, d});
  if (config_.literal_node_ids) return ops::add(node_emb_, lit_(lit));
  std::vector<double> keep(n, 1.0);
  for (const auto& column : f.values) {
    for (const auto& [node, value] : column) keep[node] = 0.0;
  }
  for (std::size_t node : f.numeric_nodes) keep[node] = 0.0;
  return ops::add(ops::mul(node_emb_, Tensor::from({n, 1}, std::move(keep))), lit_(lit));
}

Tensor KgeModel::encode_qualifiers(const std::vector<QualifierIndex>& lists) const {
  std::vector<std::size_t> owner, qr, qv;
  for (std::size_t i = 0; i < lists.size(); ++i) {
    for (const auto& [r, v] : lists[i]) {
      if (r >= shape_.qualifier_relations || v >= shape_.qualifier_values) {
        throw DimensionError("qualifier index out of range");
      }
      owner.push_back(i);
      qr.push_back(r);
      qv.push_back(v);
    }
  }
  if (owner.empty()) return Tensor::zeros({lists.size(), config_.dim});
  Tensor q = ops::add(ops::index_select(qual_rel_, qr), ops::index_select(qual_val_, qv));
  return ops::scatter_add_rows(q, owner, lists.size());
}

Tensor KgeModel::propagate(const Tensor& states, const MessageGraph& graph) const {
  Tensor h = states;
  if (norms_.empty()) return h;
  const std::size_t n = states.dim(0);
  if (graph.heads.empty()) {
    for (const auto& norm : norms_) h = norm(h);
    return h;
  }
  for (std::size_t r : graph.relations) {
    if (r >= shape_.relations) throw DimensionError("relation index " + std::to_string(r) + " out of range");
  }
  // Messages depend only on (head, relation, qualifiers), and FiLM terms only
  // on the qualifier list, so both are computed once per distinct key.
  std::map<QualifierIndex, std::size_t> qual_ix;
  std::vector<QualifierIndex> quals;
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::size_t> msg_ix;
  std::vector<std::size_t> msg_head, msg_rel, msg_qual, edge_msg(graph.heads.size());
  for (std::size_t e = 0; e < graph.heads.size(); ++e) {
    auto [qi, new_q] = qual_ix.emplace(graph.qualifiers[e], quals.size());
    if (new_q) quals.push_back(graph.qualifiers[e]);
    auto [mi, new_m] = msg_ix.emplace(std::make_tuple(graph.heads[e], graph.relations[e], qi->second), msg_head.size());
    if (new_m) {
      msg_head.push_back(graph.heads[e]);
      msg_rel.push_back(graph.relations[e]);
      msg_qual.push_back(qi->second);
    }
    edge_msg[e] = mi->second;
  }
  const Tensor qual = encode_qualifiers(quals);
  const Tensor gain = ops::index_select(ops::add_scalar(gamma_(qual), 1.0), msg_qual);
  const Tensor shift = ops::index_select(beta_(qual), msg_qual);
  Tensor inv_degree;
  if (config_.degree_norm) {
    std::vector<double> deg(n, 0.0), w(graph.tails.size());
    for (std::size_t t : graph.tails) deg[t] += 1.0;
    for (std::size_t e = 0; e < w.size(); ++e) w[e] = 1.0 / deg[graph.tails[e]];
    const std::size_t edges = w.size();
    inv_degree = Tensor::from({edges, 1}, std::move(w));
  }
  for (const auto& norm : norms_) {
    Tensor m = ops::relation_linear(ops::index_select(h, msg_head), msg_rel, w_rel_, b_rel_);
    m = ops::index_select(ops::add(ops::mul(gain, m), shift), edge_msg);
    if (inv_degree.defined()) m = ops::mul(m, inv_degree);
    h = norm(ops::add(h, ops::scatter_add_rows(m, graph.tails, n)));
  }
  return h;
}

Tensor KgeModel::query_vectors(const Tensor& states, std::span<const std::size_t> heads,
                               std::span<const std::size_t> relations,
                               const std::vector<QualifierIndex>& qualifiers) const {
  const std::size_t b = heads.size(), d = config_.dim;
  if (relations.size() != b || qualifiers.size() != b) throw DimensionError("query fields differ in length");
  for (std::size_t r : relations) {
    if (r >= shape_.relations) throw DimensionError("relation index " + std::to_string(r) + " out of range");
  }
  Tensor head = ops::reshape(ops::index_select(states, heads), {b, 1, d});
  Tensor rel = ops::add(ops::index_select(rel_emb_, relations), seq_(encode_qualifiers(qualifiers)));
  Tensor tokens = ops::concat({head, ops::reshape(rel, {b, 1, d})}, 1);
  return ops::reshape(ops::slice(encoder_(tokens), 1, 1, 2), {b, d});
}

Tensor KgeModel::score_queries(const Tensor& states, std::span<const std::size_t> heads,
                               std::span<const std::size_t> relations,
                               const std::vector<QualifierIndex>& qualifiers) const {
  Tensor s = ops::matmul(query_vectors(states, heads, relations, qualifiers), states, false, true);
  return config_.scaled_score ? ops::scale(s, 1.0 / std::sqrt(static_cast<double>(config_.dim))) : s;
}

Tensor KgeModel::training_logits(const Tensor& scores) const {
  return offset_.defined() ? ops::add(scores, offset_) : scores;
}

Tensor KgeModel::node_states(const KgeData& data) const {
  return propagate(encode_literals(data.features), data.graph);
}

namespace {

nlohmann::ordered_json shape_json(const KgeShape& s) {
  nlohmann::ordered_json j;
  j["nodes"] = s.nodes;
  j["relations"] = s.relations;
  j["qualifier_relations"] = s.qualifier_relations;
  j["qualifier_values"] = s.qualifier_values;
  j["property_sizes"] = s.property_sizes;
  return j;
}

}  // namespace

void KgeModel::save(const std::filesystem::path& path, const nlohmann::ordered_json& extra) const {
  nlohmann::ordered_json manifest;
  manifest["kind"] = "kge";
  manifest["config"] = to_json(config_);
  manifest["shape"] = shape_json(shape_);
  manifest["step"] = params_.step;
  if (!extra.is_null()) manifest["extra"] = extra;
  save_checkpoint(path, params_, manifest);
}

KgeModel KgeModel::load(const std::filesystem::path& path) {
  const auto manifest = read_manifest(path);
  if (manifest.value("kind", "") != "kge") throw ValidationError(path.string() + " is not a KGE checkpoint");
  KgeShape s;
  const auto& js = manifest.at("shape");
  s.nodes = js.at("nodes");
  s.relations = js.at("relations");
  s.qualifier_relations = js.at("qualifier_relations");
  s.qualifier_values = js.at("qualifier_values");
  s.property_sizes = js.at("property_sizes").get<std::vector<std::size_t>>();
  KgeModel m = create(s, kge_config_from_json(nlohmann::json::parse(manifest.at("config").dump())));
  load_checkpoint(path, m.params_);
  return m;
}

Tensor one_to_n_loss(const Tensor& logits, const std::vector<const QueryGroup*>& groups, double smoothing) {
  const std::size_t n = logits.dim(1);
  std::vector<double> targets(groups.size() * n, smoothing);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    for (std::size_t t : groups[i]->positives) targets[i * n + t] = 1.0 - smoothing;
  }
  return ops::bce_with_logits(logits, Tensor::from({groups.size(), n}, std::move(targets)));
}

Tensor kge_loss(const KgeModel& model, const KgeData& data, const std::vector<const QueryGroup*>& tail,
                const std::vector<const QueryGroup*>& head, double smoothing) {
  const Tensor states = model.node_states(data);
  auto direction = [&](const std::vector<const QueryGroup*>& groups) {
    std::vector<std::size_t> heads, rels;
    std::vector<QualifierIndex> quals;
    for (const auto* g : groups) {
      heads.push_back(g->head);
      rels.push_back(g->relation);
      quals.push_back(g->qualifiers);
    }
    return one_to_n_loss(model.training_logits(model.score_queries(states, heads, rels, quals)), groups, smoothing);
  };
  if (tail.empty() && head.empty()) throw ValidationError("loss needs at least one query group");
  if (head.empty()) return direction(tail);
  if (tail.empty()) return direction(head);
  return ops::scale(ops::add(direction(tail), direction(head)), 0.5);
}

KgeTrainResult train_kge(KgeModel& model, const KgeData& data,
                         const std::function<void(std::size_t, double)>& on_epoch,
                         const std::function<bool(std::size_t)>& stop) {
  const KgeConfig& cfg = model.config();
  cfg.validate();
  const std::size_t base = data.vocab.base_relation_count();
  const auto groups = group_queries(data.splits.train, Split::kTrain);
  std::vector<const QueryGroup*> tail, head;
  for (const auto& g : groups) (g.relation < base ? tail : head).push_back(&g);
  if (tail.empty() && head.empty()) throw ValidationError("training split has no triplets");

  std::mt19937_64 rng(cfg.seed ^ 0x5eedf00dULL);
  AdamWConfig opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;
  opt.skip_missing_grads = true;

  // Each step takes batch_size groups from both directions. An epoch is one
  // pass over the larger direction; the smaller one is cycled, reshuffling on
  // every wrap.
  struct Stream {
    std::vector<const QueryGroup*>* groups;
    std::size_t pos = 0;
  };
  auto draw = [&](Stream& s, std::size_t count) {
    std::vector<const QueryGroup*> out;
    auto& v = *s.groups;
    if (v.empty()) return out;
    count = std::min(count, v.size());
    while (out.size() < count) {
      if (s.pos == v.size()) {
        std::shuffle(v.begin(), v.end(), rng);
        s.pos = 0;
      }
      out.push_back(v[s.pos++]);
    }
    return out;
  };
  Stream tail_stream{&tail, tail.size()}, head_stream{&head, head.size()};
  const std::size_t larger = std::max(tail.size(), head.size());
  const std::size_t steps = (larger + cfg.batch_size - 1) / cfg.batch_size;

  KgeTrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double total = 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
      auto t = draw(tail_stream, cfg.batch_size);
      auto h = draw(head_stream, cfg.batch_size);
      Tensor loss = kge_loss(model, data, t, h, cfg.smoothing);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw DivergenceError("non-finite KGE loss at epoch " + std::to_string(epoch + 1) + ", step " +
                              std::to_string(s + 1) + " (lr " + format_number(cfg.lr) + ")");
      }
      model.params().clear_grads();
      loss.backward();
      adamw_step(model.params(), opt);
      total += value;
    }
    result.epoch_loss.push_back(total / static_cast<double>(steps));
    if (on_epoch) on_epoch(epoch + 1, result.epoch_loss.back());
    if (stop && stop(epoch + 1)) break;
  }
  return result;
}

nlohmann::ordered_json to_json(const KgeEvaluation& e) {
  nlohmann::ordered_json j;
  j["object"] = to_json(e.object);
  j["subject"] = to_json(e.subject);
  j["triplet"] = to_json(e.triplet);
  return j;
}

KgeEvaluation evaluate_link_prediction(const ScoreFn& score, const std::vector<TripletRecord>& records,
                                       std::size_t base_relation_count, const FilterIndex* filter) {
  struct Query {
    std::size_t head, relation, gold;
    const QualifierIndex* qualifiers;
  };
  std::vector<Query> object, subject;
  for (const auto& r : records) {
    if (r.reciprocal) continue;
    object.push_back({r.head, r.relation, r.tail, &r.qualifiers});
    subject.push_back({r.tail, r.relation + base_relation_count, r.head, &r.qualifiers});
  }
  auto rank_all = [&](const std::vector<Query>& queries) {
    constexpr std::size_t kBatch = 256;
    std::vector<std::size_t> ranks;
    ranks.reserve(queries.size());
    for (std::size_t from = 0; from < queries.size(); from += kBatch) {
      const std::size_t to = std::min(queries.size(), from + kBatch);
      std::vector<std::size_t> heads, rels;
      std::vector<QualifierIndex> quals;
      for (std::size_t i = from; i < to; ++i) {
        heads.push_back(queries[i].head);
        rels.push_back(queries[i].relation);
        quals.push_back(*queries[i].qualifiers);
      }
      const auto scores = score(heads, rels, quals);
      for (std::size_t i = from; i < to; ++i) {
        const auto& q = queries[i];
        ranks.push_back(filtered_rank(scores[i - from], q.gold, filter ? &filter->positives(q.head, q.relation) : nullptr));
      }
    }
    return ranks;
  };
  const auto obj = rank_all(object);
  const auto sub = rank_all(subject);
  std::vector<std::size_t> both = obj;
  both.insert(both.end(), sub.begin(), sub.end());
  return {summarize_ranks(obj), summarize_ranks(sub), summarize_ranks(both)};
}

KgeEvaluation evaluate_kge(const KgeModel& model, const KgeData& data, Split split, bool filtered) {
  NoGradGuard no_grad;
  const Tensor states = model.node_states(data);
  ScoreFn fn = [&](std::span<const std::size_t> heads, std::span<const std::size_t> rels,
                   const std::vector<QualifierIndex>& quals) {
    Tensor s = model.score_queries(states, heads, rels, quals);
    const std::size_t n = s.dim(1);
    std::vector<std::vector<double>> out(heads.size());
    for (std::size_t i = 0; i < heads.size(); ++i) {
      out[i].assign(s.data().begin() + static_cast<std::ptrdiff_t>(i * n),
                    s.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
    }
    return out;
  };
  return evaluate_link_prediction(fn, data.splits.get(split), data.vocab.base_relation_count(),
                                  filtered ? &data.filter : nullptr);
}

std::string export_embeddings(const KgeModel& model, const KgeData& data) {
  NoGradGuard no_grad;
  const Tensor states = model.node_states(data);
  const std::size_t d = states.dim(1);
  std::string out;
  for (std::size_t i = 0; i < data.vocab.nodes.size(); ++i) {
    nlohmann::ordered_json j;
    j["id"] = data.vocab.nodes[i];
    j["embedding"] = std::vector<double>(states.data().begin() + static_cast<std::ptrdiff_t>(i * d),
                                         states.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
    out += j.dump() + '\n';
  }
  return out;
}

std::map<std::string, std::vector<double>> import_embeddings(const std::string& ndjson) {
  std::map<std::string, std::vector<double>> out;
  std::istringstream in(ndjson);
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      auto v = j.at("embedding").get<std::vector<double>>();
      if (width == 0) width = v.size();
      if (v.size() != width) throw ParseError("embedding width changes at line " + std::to_string(line_no));
      out[j.at("id").get<std::string>()] = std::move(v);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("embedding export line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace hats
