#pragma once

// Scene-graph branch: ego-path relevance selection over ingested entity
// embeddings, the gated ego-entity pair descriptor, the severity prior
// aggregator over KG node groups, and the mechanism / side / severity heads.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hats/metrics.hpp"
#include "hats/nn.hpp"
#include "json.hpp"

namespace hats {

inline constexpr std::array<const char*, 8> kMechanisms = {
    "control",   "edge_proximity", "fixed_object_near_edge", "head_on",
    "intersection", "rear_end",    "sideswipe",              "cross_traffic_conflict"};
inline constexpr std::array<const char*, 3> kSides = {"left", "front", "right"};
inline constexpr std::array<const char*, 4> kSeverities = {"info", "caution", "imminent",
                                                           "relevant_but_not_critical"};
inline constexpr std::array<const char*, 19> kSemanticClasses = {
    "road",   "sidewalk", "building", "wall",  "fence", "pole",  "traffic_light",
    "traffic_sign", "vegetation", "terrain", "sky", "person", "rider", "car",
    "truck",  "bus",      "train",    "motorcycle", "bicycle"};
inline constexpr std::array<const char*, 7> kSeverityGroups = {"CAIS",   "VAIS",      "MAIS",      "DAMSEV",
                                                               "CONSEQ", "TREATMENT", "ROLLINITYP"};

std::size_t mechanism_index(const std::string& name);  // VocabularyError when unknown
std::size_t side_index(const std::string& name);
std::size_t severity_index(const std::string& name);
std::size_t semantic_class_index(const std::string& name);

struct EntityLabels {
  bool relevant = false;
  std::size_t mechanism = 0;
  std::size_t side = 0;
  std::size_t severity = 0;
  bool operator==(const EntityLabels&) const = default;
};

struct SceneEntity {
  std::vector<std::uint8_t> mask;  // H*W, 0/1
  std::vector<double> embedding;   // D
  std::size_t semantic_class = 0;
  std::optional<EntityLabels> labels;
};

struct SceneSample {
  std::string id;
  std::size_t height = 0, width = 0;
  std::size_t rgb_channels = 0, disp_channels = 0;
  std::vector<double> rgb;   // C_rgb x H x W
  std::vector<double> disp;  // C_disp x H x W
  std::vector<std::uint8_t> path_mask, vehicle_mask;
  std::vector<SceneEntity> entities;

  std::size_t embed_dim() const { return entities.empty() ? 0 : entities.front().embedding.size(); }
  bool labeled() const;
  // Shapes, binary masks, consistent embedding width, class range and
  // all-or-none labels; DimensionError / ValidationError.
  void validate() const;
};

// Mask-weighted channel mean over a C x H x W map: sum(F M) / (sum(M) + eps).
std::vector<double> masked_pool(std::span<const double> map, std::size_t channels,
                                std::span<const std::uint8_t> mask, double eps = 1e-6);

struct Geometry {
  double overlap = 0.0;    // |Me & Mp| / |Me|
  double proximity = 0.0;  // 1 - centroid distance / image diagonal, clamped to [0, 1]
};
Geometry compute_geometry(std::span<const std::uint8_t> entity, std::span<const std::uint8_t> path,
                          std::span<const std::uint8_t> vehicle, std::size_t height, std::size_t width);

// Constant per-scene inputs: pooled features, embeddings and geometry.
struct PreparedScene {
  std::string id;
  Tensor path_rgb;       // [1, C_rgb]
  Tensor path_visual;    // [1, C_rgb + C_disp]
  Tensor vehicle_visual; // [1, C_rgb + C_disp]
  Tensor entity_visual;  // [O, C_rgb + C_disp]
  Tensor embeddings;     // [O, D]
  Tensor geometry;       // [O, 2]
  std::vector<std::size_t> classes;
  std::vector<std::optional<EntityLabels>> labels;
  std::size_t size() const { return classes.size(); }
};
PreparedScene prepare_scene(const SceneSample& sample);

// Frozen knowledge inputs taken from a KGE export.
struct KgeContext {
  std::size_t dim = 0;
  std::map<std::size_t, std::vector<double>> class_embeddings;  // semantic class -> row
  Tensor mechanism_prototypes;                                  // [8, d]
  std::array<Tensor, kSeverityGroups.size()> groups;            // [n_g, d] each
  // ConfigError when a mechanism node or a whole severity group is missing.
  static KgeContext from_embeddings(const std::map<std::string, std::vector<double>>& embeddings);
  // [n, d] rows for the given classes; ConfigError for a class without a bridge node.
  Tensor class_rows(std::span<const std::size_t> classes) const;
};

struct SceneModelConfig {
  std::size_t rgb_channels = 16;
  std::size_t disp_channels = 8;
  std::size_t embed_dim = 16;  // D
  std::size_t kge_dim = 64;
  std::size_t pair_dim = 32;   // D_pair
  std::size_t prior_dim = 8;   // per-group prior width
  std::size_t eres_heads = 2;
  std::size_t prior_heads = 2;
  double init_temperature = 10.0;
  bool use_kge = true;   // false zeroes h_kge and the priors
  bool use_eres = true;  // false keeps every entity and zeroes the relevance logits fed to h_sem
  std::uint64_t seed = 1;
  void validate() const;  // ConfigError
};
nlohmann::ordered_json to_json(const SceneModelConfig& c);
SceneModelConfig scene_model_config_from_json(const nlohmann::json& j, SceneModelConfig base = {});

struct EresOutput {
  Tensor logits;      // [O, 2]
  Tensor weights;     // [O]
  Tensor context;     // [1, D]
  Tensor path_token;  // [1, D]
  Tensor fused;       // [O, D]
};

// Kept iff the relevant logit strictly exceeds the irrelevant one.
std::vector<std::size_t> select_relevant(const Tensor& logits);

struct PairDescriptor {
  Tensor blocks;  // [n, 6 * D_pair]: ep, ev, vis, sem, geo, kge
  Tensor gates;   // [n, 6 * D_pair]
  Tensor pair;    // [n, D_pair]
};

struct HeadLogits {
  Tensor mechanism;  // [n, 8]
  Tensor side;       // [n, 3]
  Tensor severity;   // [n, 4]
};

class SceneModel {
 public:
  static SceneModel create(const SceneModelConfig& config);
  SceneModel(const SceneModel&) = delete;
  SceneModel& operator=(const SceneModel&) = delete;
  SceneModel(SceneModel&&) = default;
  SceneModel& operator=(SceneModel&&) = default;

  const SceneModelConfig& config() const { return config_; }
  SceneModelConfig& mutable_config() { return config_; }
  ParamGroup& params() { return params_; }
  const ParamGroup& params() const { return params_; }
  double temperature() const;

  EresOutput eres_forward(const PreparedScene& scene) const;
  // The six projected blocks for the listed entities of one scene.
  Tensor pair_blocks(const PreparedScene& scene, const EresOutput& eres,
                     std::span<const std::size_t> entities, const KgeContext& kge) const;
  PairDescriptor fuse_pair(const Tensor& blocks) const;
  PairDescriptor build_pair_descriptor(const PreparedScene& scene, const EresOutput& eres,
                                       std::span<const std::size_t> entities, const KgeContext& kge) const;
  // [n, 7 * prior_dim].
  Tensor aggregate_priors(const Tensor& pair, const KgeContext& kge) const;
  HeadLogits predict_relations(const PairDescriptor& descriptor, const Tensor& prior,
                               const KgeContext& kge) const;

  void save(const std::filesystem::path& path, const nlohmann::ordered_json& extra = {}) const;
  static SceneModel load(const std::filesystem::path& path);

 private:
  SceneModel() = default;
  SceneModelConfig config_;
  ParamGroup params_;
  nn::Linear phi_path_, eres1_, eres2_;
  nn::MultiHeadAttention eres_attn_;
  Tensor gamma_ctx_, gamma_gate_;
  nn::Linear phi_vis_, phi_sem_, phi_geo_, phi_kge_;
  nn::LayerNorm pair_norm_, side_gate_norm_, side_norm_, sev_norm_, prior_norm_, mech_norm_;
  nn::Linear gate1_, gate2_, side_gate1_, side_gate2_;
  nn::Linear align_;
  nn::MultiHeadAttention prior_attn_;
  std::vector<nn::Linear> phi_prior_;
  nn::Linear mech_, side1_, side2_, sev1_, sev2_;
  Tensor log_temperature_;
};

enum class Selection { kGold, kPredicted, kAll };

// Forward pass over a batch of scenes. Head rows follow `rows`, one
// (scene, entity) pair per selected entity in scene order.
struct SceneBatchOutput {
  Tensor relevance;  // [sum O, 2]
  std::vector<std::pair<std::size_t, std::size_t>> rows;
  PairDescriptor descriptor;
  Tensor prior;
  HeadLogits heads;
};
SceneBatchOutput forward_scenes(const SceneModel& model, std::span<const PreparedScene* const> scenes,
                                const KgeContext& kge, Selection selection);

struct SceneTrainConfig {
  std::size_t epochs = 30;
  double lr = 3e-3;
  double weight_decay = 0.0;
  std::size_t batch_scenes = 8;
  double warmup_fraction = 0.2;
  double eres_weight = 0.1;
  double focal_gamma = 2.0;
  std::uint64_t seed = 1;
  void validate() const;
};
nlohmann::ordered_json to_json(const SceneTrainConfig& c);
SceneTrainConfig scene_train_config_from_json(const nlohmann::json& j, SceneTrainConfig base = {});

struct ClassWeights {
  std::vector<double> eres, mechanism, side, severity;
};
// Inverse frequency normalized to mean 1 over present classes. Absent classes
// take the largest present weight and add a warning.
ClassWeights class_weights(std::span<const PreparedScene> train, std::vector<std::string>* warnings);

struct SceneLosses {
  Tensor eres, mechanism, side, severity, total;
};
// Warm-up multiplies the head losses by zero.
SceneLosses scene_loss(const SceneModel& model, std::span<const PreparedScene* const> scenes,
                       const KgeContext& kge, const ClassWeights& weights, const SceneTrainConfig& config,
                       bool warmup);

struct SceneEpochLog {
  std::size_t epoch = 0;
  bool warmup = false;
  double eres = 0, mechanism = 0, side = 0, severity = 0, total = 0;
  double valid_mechanism_accuracy = 0;
};
struct SceneTrainResult {
  std::vector<SceneEpochLog> epochs;
  std::size_t best_epoch = 0;
  double best_valid_mechanism_accuracy = -1.0;
  std::vector<std::string> warnings;
};
// Keeps the parameters of the epoch with the best validation mechanism
// accuracy (training split when `valid` is empty). DivergenceError on a
// non-finite loss.
SceneTrainResult train_scene(SceneModel& model, std::span<const PreparedScene> train,
                             std::span<const PreparedScene> valid, const KgeContext& kge,
                             const SceneTrainConfig& config,
                             const std::function<void(const SceneEpochLog&)>& on_epoch = {});

struct EntityPrediction {
  std::size_t entity = 0;
  double relevance = 0.0;  // softmax probability of the relevant class
  bool selected = false;
  std::array<double, 8> mechanism{};  // probabilities
  std::array<double, 3> side{};
  std::array<double, 4> severity{};
  std::size_t argmax_mechanism() const;
  std::size_t argmax_side() const;
  std::size_t argmax_severity() const;
};
struct ScenePrediction {
  std::string id;
  std::vector<EntityPrediction> entities;  // one per scene entity; head fields set for selected ones
};
std::vector<ScenePrediction> predict_scenes(const SceneModel& model, std::span<const PreparedScene> scenes,
                                            const KgeContext& kge);
// Head probabilities for every gold-relevant entity, scored as if selected.
std::vector<ScenePrediction> predict_gold(const SceneModel& model, std::span<const PreparedScene> scenes,
                                          const KgeContext& kge);

using RetrievalReport = std::map<std::size_t, RecallAtK>;  // keyed by per-entity K
using RankingReport = std::map<std::size_t, RankingAtK>;

struct SceneEvaluation {
  ClassificationReport relevance;
  double mechanism_accuracy = 0, side_accuracy = 0, severity_accuracy = 0;  // gold-relevant entities
  double end_to_end_mechanism_accuracy = 0;  // over gold-relevant and selected entities
  std::map<std::string, RetrievalReport> retrieval;  // mechanism / side / severity
  RankingReport hazard;
};
nlohmann::ordered_json to_json(const SceneEvaluation& e);

struct SceneMetricConfig {
  std::vector<std::size_t> retrieval_k = {1, 2, 3};  // predicates kept per selected entity
  std::vector<std::size_t> ranking_k = {3, 5, 10};   // hazard ranking cutoffs
  void validate() const;                             // ConfigError
};
nlohmann::ordered_json to_json(const SceneMetricConfig& c);
SceneMetricConfig scene_metric_config_from_json(const nlohmann::json& j, SceneMetricConfig base = {});

SceneEvaluation evaluate_scenes(const SceneModel& model, std::span<const PreparedScene> scenes,
                                const KgeContext& kge, const SceneMetricConfig& metrics = {});

struct SceneSynthConfig {
  std::size_t height = 16, width = 16;
  std::size_t rgb_channels = 16, disp_channels = 8, embed_dim = 16;
  std::size_t min_entities = 3, max_entities = 8;
  double relevant_fraction = 0.5;
  double noise = 1.5;  // entity-level feature noise scale
  std::size_t train = 200, valid = 50, test = 50;
  std::uint64_t seed = 1;
};
nlohmann::ordered_json to_json(const SceneSynthConfig& c);
SceneSynthConfig scene_synth_config_from_json(const nlohmann::json& j, SceneSynthConfig base = {});

struct SceneSplits {
  std::vector<SceneSample> train, valid, test;
};
// Features drawn around class-conditional means for mechanism, side and
// severity; each semantic class supports two mechanisms.
SceneSplits generate_scenes(const SceneSynthConfig& config);
std::vector<std::size_t> class_mechanisms(std::size_t semantic_class);

// `path` holds the tensors, `path` + ".json" the entity classes and labels.
void save_scene(const std::filesystem::path& path, const SceneSample& sample);
SceneSample load_scene(const std::filesystem::path& path);

}  // namespace hats
