#include "hats/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "hats/archive.hpp"
#include "hats/error.hpp"
#include "hats/graph.hpp"
#include "hats/ops.hpp"

namespace hats {

namespace {

template <std::size_t N>
std::size_t lookup(const std::array<const char*, N>& names, const std::string& name, const char* what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (name == names[i]) return i;
  }
  throw VocabularyError(std::string("unknown ") + what + " '" + name + "'");
}

void check_keys(const nlohmann::json& j, const nlohmann::ordered_json& defaults, const std::string& what) {
  if (!j.is_object()) throw ConfigError(what + " config must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!defaults.contains(key)) throw ConfigError("unknown " + what + " config key '" + key + "'");
  }
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& field, const std::string& what) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad " + what + " config value for '" + key + "': " + e.what());
  }
}

Tensor row_vector(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor::from({1, n}, std::move(v));
}

// Repeats a [1, d] row n times.
Tensor repeat_row(const Tensor& row, std::size_t n) {
  const std::vector<std::size_t> zeros(n, 0);
  return ops::index_select(row, zeros);
}

// Sums the k equal-width blocks of x: [n, k * w] -> [n, w].
Tensor block_sum(const Tensor& x, std::size_t k) {
  const std::size_t n = x.dim(0), w = x.dim(1) / k;
  return ops::sum_dim(ops::reshape(x, {n, k, w}), 1);
}

}  // namespace

std::size_t mechanism_index(const std::string& name) { return lookup(kMechanisms, name, "mechanism"); }
std::size_t side_index(const std::string& name) { return lookup(kSides, name, "side"); }
std::size_t severity_index(const std::string& name) { return lookup(kSeverities, name, "severity"); }
std::size_t semantic_class_index(const std::string& name) {
  return lookup(kSemanticClasses, name, "semantic class");
}

bool SceneSample::labeled() const {
  return !entities.empty() && entities.front().labels.has_value();
}

void SceneSample::validate() const {
  const std::size_t hw = height * width;
  if (hw == 0) throw DimensionError("scene " + id + ": empty spatial grid");
  if (rgb.size() != rgb_channels * hw || disp.size() != disp_channels * hw) {
    throw DimensionError("scene " + id + ": feature maps do not match " + std::to_string(height) + "x" +
                         std::to_string(width));
  }
  auto binary = [&](const std::vector<std::uint8_t>& m, const std::string& name) {
    if (m.size() != hw) throw DimensionError("scene " + id + ": " + name + " mask has the wrong size");
    for (auto v : m) {
      if (v > 1) throw ValidationError("scene " + id + ": " + name + " mask is not binary");
    }
  };
  binary(path_mask, "path");
  binary(vehicle_mask, "vehicle");
  const bool with_labels = labeled();
  for (std::size_t i = 0; i < entities.size(); ++i) {
    const auto& e = entities[i];
    binary(e.mask, "entity " + std::to_string(i));
    if (e.embedding.size() != embed_dim()) {
      throw DimensionError("scene " + id + ": entity " + std::to_string(i) + " embedding width differs");
    }
    if (e.semantic_class >= kSemanticClasses.size()) {
      throw ValidationError("scene " + id + ": entity " + std::to_string(i) + " has class id " +
                            std::to_string(e.semantic_class));
    }
    if (e.labels.has_value() != with_labels) {
      throw ValidationError("scene " + id + ": labels must be present on all entities or none");
    }
    if (e.labels && (e.labels->mechanism >= kMechanisms.size() || e.labels->side >= kSides.size() ||
                     e.labels->severity >= kSeverities.size())) {
      throw ValidationError("scene " + id + ": entity " + std::to_string(i) + " label out of range");
    }
  }
}

std::vector<double> masked_pool(std::span<const double> map, std::size_t channels,
                                std::span<const std::uint8_t> mask, double eps) {
  const std::size_t hw = mask.size();
  if (map.size() != channels * hw) throw DimensionError("feature map and mask sizes disagree");
  double count = 0.0;
  for (auto m : mask) count += m;
  std::vector<double> out(channels, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    double s = 0.0;
    for (std::size_t p = 0; p < hw; ++p) s += map[c * hw + p] * mask[p];
    out[c] = s / (count + eps);
  }
  return out;
}

Geometry compute_geometry(std::span<const std::uint8_t> entity, std::span<const std::uint8_t> path,
                          std::span<const std::uint8_t> vehicle, std::size_t height, std::size_t width) {
  const std::size_t hw = height * width;
  if (entity.size() != hw || path.size() != hw || vehicle.size() != hw) {
    throw DimensionError("geometry masks disagree with the grid size");
  }
  auto centroid = [&](std::span<const std::uint8_t> m, double& y, double& x) {
    double n = 0.0;
    y = x = 0.0;
    for (std::size_t p = 0; p < hw; ++p) {
      if (!m[p]) continue;
      n += 1.0;
      y += static_cast<double>(p / width);
      x += static_cast<double>(p % width);
    }
    if (n > 0) {
      y /= n;
      x /= n;
    }
    return n;
  };
  Geometry g;
  double area = 0.0, inter = 0.0;
  for (std::size_t p = 0; p < hw; ++p) {
    area += entity[p];
    inter += entity[p] && path[p];
  }
  if (area == 0.0) return g;
  g.overlap = inter / area;
  double ey, ex, vy, vx;
  centroid(entity, ey, ex);
  if (centroid(vehicle, vy, vx) == 0.0) return g;
  const double diag = std::hypot(static_cast<double>(height), static_cast<double>(width));
  g.proximity = std::clamp(1.0 - std::hypot(ey - vy, ex - vx) / diag, 0.0, 1.0);
  return g;
}

PreparedScene prepare_scene(const SceneSample& s) {
  s.validate();
  PreparedScene p;
  p.id = s.id;
  auto visual = [&](std::span<const std::uint8_t> mask) {
    auto v = masked_pool(s.rgb, s.rgb_channels, mask);
    auto d = masked_pool(s.disp, s.disp_channels, mask);
    v.insert(v.end(), d.begin(), d.end());
    return v;
  };
  p.path_rgb = row_vector(masked_pool(s.rgb, s.rgb_channels, s.path_mask));
  p.path_visual = row_vector(visual(s.path_mask));
  p.vehicle_visual = row_vector(visual(s.vehicle_mask));
  const std::size_t o = s.entities.size(), width = s.rgb_channels + s.disp_channels, dim = s.embed_dim();
  std::vector<double> vis, emb, geo;
  for (const auto& e : s.entities) {
    auto v = visual(e.mask);
    vis.insert(vis.end(), v.begin(), v.end());
    emb.insert(emb.end(), e.embedding.begin(), e.embedding.end());
    const auto g = compute_geometry(e.mask, s.path_mask, s.vehicle_mask, s.height, s.width);
    geo.push_back(g.overlap);
    geo.push_back(g.proximity);
    p.classes.push_back(e.semantic_class);
    p.labels.push_back(e.labels);
  }
  p.entity_visual = Tensor::from({o, width}, std::move(vis));
  p.embeddings = Tensor::from({o, dim}, std::move(emb));
  p.geometry = Tensor::from({o, 2}, std::move(geo));
  return p;
}

KgeContext KgeContext::from_embeddings(const std::map<std::string, std::vector<double>>& embeddings) {
  KgeContext k;
  auto fetch = [&](const std::string& id) -> const std::vector<double>* {
    auto it = embeddings.find(id);
    if (it == embeddings.end()) return nullptr;
    if (k.dim == 0) k.dim = it->second.size();
    if (it->second.size() != k.dim || k.dim == 0) throw DimensionError("embedding of " + id + " has the wrong width");
    return &it->second;
  };
  std::vector<double> protos;
  for (const char* m : kMechanisms) {
    const auto* row = fetch(vocabulary_node_id("MECHANISM", m));
    if (!row) throw ConfigError(std::string("KGE export has no MECHANISM node for '") + m + "'");
    protos.insert(protos.end(), row->begin(), row->end());
  }
  k.mechanism_prototypes = Tensor::from({kMechanisms.size(), k.dim}, std::move(protos));
  for (std::size_t c = 0; c < kSemanticClasses.size(); ++c) {
    if (const auto* row = fetch(vocabulary_node_id("CITYSCAPES", kSemanticClasses[c]))) k.class_embeddings[c] = *row;
  }
  for (std::size_t g = 0; g < kSeverityGroups.size(); ++g) {
    const std::string prefix = std::string(kSeverityGroups[g]) + ":";
    std::vector<double> rows;
    std::size_t n = 0;
    for (auto it = embeddings.lower_bound(prefix); it != embeddings.end() && it->first.starts_with(prefix); ++it) {
      fetch(it->first);
      rows.insert(rows.end(), it->second.begin(), it->second.end());
      ++n;
    }
    if (n == 0) throw ConfigError(std::string("KGE export has no nodes in severity group ") + kSeverityGroups[g]);
    k.groups[g] = Tensor::from({n, k.dim}, std::move(rows));
  }
  return k;
}

Tensor KgeContext::class_rows(std::span<const std::size_t> classes) const {
  std::vector<double> rows;
  for (std::size_t c : classes) {
    auto it = class_embeddings.find(c);
    if (it == class_embeddings.end()) {
      throw ConfigError("semantic class '" +
                        std::string(c < kSemanticClasses.size() ? kSemanticClasses[c] : "?") +
                        "' has no bridge node embedding");
    }
    rows.insert(rows.end(), it->second.begin(), it->second.end());
  }
  return Tensor::from({classes.size(), dim}, std::move(rows));
}

void SceneModelConfig::validate() const {
  if (rgb_channels == 0 || disp_channels == 0 || embed_dim == 0 || kge_dim == 0 || pair_dim == 0 ||
      prior_dim == 0) {
    throw ConfigError("scene model widths must be positive");
  }
  if (eres_heads == 0 || embed_dim % eres_heads != 0) throw ConfigError("embed_dim must be divisible by eres_heads");
  if (prior_heads == 0 || kge_dim % prior_heads != 0) throw ConfigError("kge_dim must be divisible by prior_heads");
  if (!(init_temperature > 0.0)) throw ConfigError("init_temperature must be positive");
}

nlohmann::ordered_json to_json(const SceneModelConfig& c) {
  return {{"rgb_channels", c.rgb_channels}, {"disp_channels", c.disp_channels},
          {"embed_dim", c.embed_dim},       {"kge_dim", c.kge_dim},
          {"pair_dim", c.pair_dim},         {"prior_dim", c.prior_dim},
          {"eres_heads", c.eres_heads},     {"prior_heads", c.prior_heads},
          {"init_temperature", c.init_temperature},
          {"use_kge", c.use_kge},           {"use_eres", c.use_eres},
          {"seed", c.seed}};
}

SceneModelConfig scene_model_config_from_json(const nlohmann::json& j, SceneModelConfig c) {
  if (j.is_null()) return c;
  const std::string what = "scene model";
  check_keys(j, to_json(c), what);
  read_field(j, "rgb_channels", c.rgb_channels, what);
  read_field(j, "disp_channels", c.disp_channels, what);
  read_field(j, "embed_dim", c.embed_dim, what);
  read_field(j, "kge_dim", c.kge_dim, what);
  read_field(j, "pair_dim", c.pair_dim, what);
  read_field(j, "prior_dim", c.prior_dim, what);
  read_field(j, "eres_heads", c.eres_heads, what);
  read_field(j, "prior_heads", c.prior_heads, what);
  read_field(j, "init_temperature", c.init_temperature, what);
  read_field(j, "use_kge", c.use_kge, what);
  read_field(j, "use_eres", c.use_eres, what);
  read_field(j, "seed", c.seed, what);
  return c;
}

std::vector<std::size_t> select_relevant(const Tensor& logits) {
  if (logits.rank() != 2 || logits.dim(1) != 2) throw DimensionError("relevance logits must be [O, 2]");
  std::vector<std::size_t> kept;
  const auto d = logits.data();
  for (std::size_t o = 0; o < logits.dim(0); ++o) {
    if (d[2 * o + 1] > d[2 * o]) kept.push_back(o);
  }
  return kept;
}

SceneModel SceneModel::create(const SceneModelConfig& config) {
  config.validate();
  SceneModel m;
  m.config_ = config;
  Initializer init(config.seed);
  auto& p = m.params_;
  const std::size_t d = config.embed_dim, dp = config.pair_dim, dk = config.kge_dim, pr = config.prior_dim;
  const std::size_t vis = config.rgb_channels + config.disp_channels;
  const std::size_t groups = kSeverityGroups.size();

  m.phi_path_ = nn::Linear::create(p, "eres.phi_path", config.rgb_channels, d, init);
  m.eres_attn_ = nn::MultiHeadAttention::create(p, "eres.attn", d, config.eres_heads, init);
  m.gamma_ctx_ = p.add("eres.gamma_ctx", Tensor::full({1}, 1.0, true));
  m.gamma_gate_ = p.add("eres.gamma_gate", Tensor::full({1}, 1.0, true));
  m.eres1_ = nn::Linear::create(p, "eres.mlp1", d + 1, d, init);
  m.eres2_ = nn::Linear::create(p, "eres.mlp2", d, 2, init);

  m.phi_vis_ = nn::Linear::create(p, "pair.phi_vis", vis, dp, init);
  m.phi_sem_ = nn::Linear::create(p, "pair.phi_sem", d + 2, dp, init);
  m.phi_geo_ = nn::Linear::create(p, "pair.phi_geo", 2, dp, init);
  m.phi_kge_ = nn::Linear::create(p, "pair.phi_kge", dk, dp, init);
  m.pair_norm_ = nn::LayerNorm::create(p, "pair.norm", 6 * dp);
  m.gate1_ = nn::Linear::create(p, "pair.gate1", 6 * dp, dp, init);
  m.gate2_ = nn::Linear::create(p, "pair.gate2", dp, 6 * dp, init);

  m.align_ = nn::Linear::create(p, "prior.align", dp, dk, init);
  m.prior_attn_ = nn::MultiHeadAttention::create(p, "prior.attn", dk, config.prior_heads, init);
  for (std::size_t g = 0; g < groups; ++g) {
    m.phi_prior_.push_back(nn::Linear::create(p, std::string("prior.phi.") + kSeverityGroups[g], dk, pr, init));
  }
  m.prior_norm_ = nn::LayerNorm::create(p, "prior.norm", groups * pr);

  m.mech_ = nn::Linear::create(p, "mech.align", dp, dk, init);
  m.mech_norm_ = nn::LayerNorm::create(p, "mech.norm", dk);
  m.log_temperature_ = p.add("mech.log_temperature", Tensor::full({1}, std::log(config.init_temperature), true));

  m.side_gate_norm_ = nn::LayerNorm::create(p, "side.gate_norm", 5 * dp);
  m.side_gate1_ = nn::Linear::create(p, "side.gate1", 5 * dp, dp, init);
  m.side_gate2_ = nn::Linear::create(p, "side.gate2", dp, 5 * dp, init);
  m.side_norm_ = nn::LayerNorm::create(p, "side.norm", dp);
  m.side1_ = nn::Linear::create(p, "side.mlp1", dp, dp, init);
  m.side2_ = nn::Linear::create(p, "side.mlp2", dp, kSides.size(), init);

  m.sev1_ = nn::Linear::create(p, "sev.mlp1", dp + groups * pr, dp, init);
  m.sev_norm_ = nn::LayerNorm::create(p, "sev.norm", dp);
  m.sev2_ = nn::Linear::create(p, "sev.mlp2", dp, kSeverities.size(), init);
  return m;
}

double SceneModel::temperature() const { return std::exp(log_temperature_.item()); }

EresOutput SceneModel::eres_forward(const PreparedScene& scene) const {
  EresOutput out;
  const std::size_t o = scene.size();
  out.path_token = phi_path_(scene.path_rgb);
  if (o == 0) return out;
  const auto att = eres_attn_(out.path_token, scene.embeddings, scene.embeddings);
  out.context = att.out;
  Tensor aw = ops::reshape(att.weights, {o, 1});
  out.weights = ops::reshape(att.weights, {o});
  out.fused = ops::add(ops::add(scene.embeddings, ops::mul(gamma_ctx_, out.context)),
                       ops::mul(gamma_gate_, ops::mul(aw, out.path_token)));
  out.logits = eres2_(ops::gelu(eres1_(ops::concat({out.fused, aw}, 1))));
  return out;
}

Tensor SceneModel::pair_blocks(const PreparedScene& scene, const EresOutput& eres,
                               std::span<const std::size_t> entities, const KgeContext& kge) const {
  const std::size_t n = entities.size(), dp = config_.pair_dim;
  if (n == 0) throw DimensionError("pair descriptor needs at least one entity");
  for (std::size_t e : entities) {
    if (e >= scene.size()) throw DimensionError("entity index out of range in scene " + scene.id);
  }
  const Tensor h_ep = repeat_row(phi_vis_(scene.path_visual), n);
  const Tensor h_ev = repeat_row(phi_vis_(scene.vehicle_visual), n);
  const Tensor h_vis = phi_vis_(ops::index_select(scene.entity_visual, entities));
  const Tensor logits = config_.use_eres ? ops::index_select(eres.logits, entities) : Tensor::zeros({n, 2});
  const Tensor h_sem = phi_sem_(ops::concat({ops::index_select(scene.embeddings, entities), logits}, 1));
  const Tensor h_geo = phi_geo_(ops::index_select(scene.geometry, entities));
  Tensor h_kge;
  if (config_.use_kge) {
    std::vector<std::size_t> classes;
    for (std::size_t e : entities) classes.push_back(scene.classes[e]);
    h_kge = phi_kge_(kge.class_rows(classes));
  } else {
    h_kge = Tensor::zeros({n, dp});
  }
  return ops::concat({h_ep, h_ev, h_vis, h_sem, h_geo, h_kge}, 1);
}

PairDescriptor SceneModel::fuse_pair(const Tensor& blocks) const {
  PairDescriptor d;
  d.blocks = blocks;
  d.gates = ops::sigmoid(gate2_(ops::gelu(gate1_(pair_norm_(blocks)))));
  d.pair = block_sum(ops::mul(d.gates, blocks), 6);
  return d;
}

PairDescriptor SceneModel::build_pair_descriptor(const PreparedScene& scene, const EresOutput& eres,
                                                 std::span<const std::size_t> entities,
                                                 const KgeContext& kge) const {
  return fuse_pair(pair_blocks(scene, eres, entities, kge));
}

Tensor SceneModel::aggregate_priors(const Tensor& pair, const KgeContext& kge) const {
  const std::size_t n = pair.dim(0);
  if (!config_.use_kge) return Tensor::zeros({n, kSeverityGroups.size() * config_.prior_dim});
  const Tensor query = align_(pair);
  std::vector<Tensor> parts;
  for (std::size_t g = 0; g < kSeverityGroups.size(); ++g) {
    const Tensor& nodes = kge.groups[g];
    if (!nodes.defined() || nodes.dim(0) == 0) {
      throw ConfigError(std::string("severity group ") + kSeverityGroups[g] + " is empty");
    }
    parts.push_back(phi_prior_[g](prior_attn_(query, nodes, nodes).out));
  }
  return prior_norm_(ops::concat(parts, 1));
}

HeadLogits SceneModel::predict_relations(const PairDescriptor& descriptor, const Tensor& prior,
                                         const KgeContext& kge) const {
  HeadLogits h;
  const std::size_t dp = config_.pair_dim;
  const Tensor aligned = ops::relu(mech_norm_(mech_(descriptor.pair)));
  h.mechanism = ops::mul(ops::cosine_similarity(aligned, kge.mechanism_prototypes), ops::exp(log_temperature_));

  const Tensor image = ops::slice(descriptor.blocks, 1, 0, 5 * dp);
  const Tensor gates = ops::sigmoid(side_gate2_(ops::gelu(side_gate1_(side_gate_norm_(image)))));
  const Tensor side = block_sum(ops::mul(gates, image), 5);
  h.side = side2_(ops::gelu(side1_(side_norm_(side))));

  h.severity = sev2_(ops::gelu(sev_norm_(sev1_(ops::concat({descriptor.pair, prior}, 1)))));
  return h;
}

void SceneModel::save(const std::filesystem::path& path, const nlohmann::ordered_json& extra) const {
  nlohmann::ordered_json manifest;
  manifest["kind"] = "scene_heads";
  manifest["config"] = to_json(config_);
  manifest["step"] = params_.step;
  if (!extra.is_null()) manifest["extra"] = extra;
  save_checkpoint(path, params_, manifest);
}

SceneModel SceneModel::load(const std::filesystem::path& path) {
  const auto manifest = read_manifest(path);
  if (manifest.value("kind", "") != "scene_heads") {
    throw ValidationError(path.string() + " is not a scene-head checkpoint");
  }
  SceneModel m = create(scene_model_config_from_json(nlohmann::json::parse(manifest.at("config").dump())));
  load_checkpoint(path, m.params_);
  return m;
}

SceneBatchOutput forward_scenes(const SceneModel& model, std::span<const PreparedScene* const> scenes,
                                const KgeContext& kge, Selection selection) {
  SceneBatchOutput out;
  std::vector<Tensor> relevance, blocks;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const PreparedScene& scene = *scenes[s];
    if (scene.size() == 0) continue;
    const EresOutput eres = model.eres_forward(scene);
    relevance.push_back(eres.logits);
    std::vector<std::size_t> chosen;
    switch (selection) {
      case Selection::kGold:
        for (std::size_t o = 0; o < scene.size(); ++o) {
          if (!scene.labels[o]) throw ValidationError("scene " + scene.id + " has no labels");
          if (scene.labels[o]->relevant) chosen.push_back(o);
        }
        break;
      case Selection::kPredicted:
        if (model.config().use_eres) {
          chosen = select_relevant(eres.logits);
        } else {
          chosen.resize(scene.size());
          std::iota(chosen.begin(), chosen.end(), 0);
        }
        break;
      case Selection::kAll:
        chosen.resize(scene.size());
        std::iota(chosen.begin(), chosen.end(), 0);
        break;
    }
    if (chosen.empty()) continue;
    blocks.push_back(model.pair_blocks(scene, eres, chosen, kge));
    for (std::size_t o : chosen) out.rows.emplace_back(s, o);
  }
  if (!relevance.empty()) out.relevance = ops::concat(relevance, 0);
  if (out.rows.empty()) return out;
  out.descriptor = model.fuse_pair(ops::concat(blocks, 0));
  out.prior = model.aggregate_priors(out.descriptor.pair, kge);
  out.heads = model.predict_relations(out.descriptor, out.prior, kge);
  return out;
}

}  // namespace hats
