#pragma once

// Knowledge-graph embedding: literal-aware node initialization, qualifier
// vectors, FiLM-modulated relation-aware message passing, a two-token
// transformer scorer and 1-to-N training with filtered link-prediction
// evaluation.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hats/graph.hpp"
#include "hats/metrics.hpp"
#include "hats/nn.hpp"
#include "hats/triplets.hpp"
#include "json.hpp"

namespace hats {

inline constexpr std::size_t kNumericWidth = 5;

// Categorical and numeric node literals as vocabulary indices.
struct KgeNodeFeatures {
  std::size_t node_count = 0;
  std::vector<std::string> property_names;
  std::vector<std::vector<std::string>> property_vocab;                   // per property
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> values;  // per property: (node, value)
  std::vector<std::size_t> numeric_nodes;
  std::vector<double> numeric;  // numeric_nodes.size() x kNumericWidth, standardized
  std::array<double, kNumericWidth> numeric_mean{};
  std::array<double, kNumericWidth> numeric_std{};
};

struct FeatureVocab {
  std::vector<std::string> property_names;
  std::vector<std::vector<std::string>> values;
};

// Builds the vocabulary from the graph itself (sorted distinct values per
// property, in the schema's categorical property order).
FeatureVocab feature_vocab_from_graph(const PropertyGraph& g);
// Node order matches the graph. Throws VocabularyError for a categorical value
// missing from `vocab`.
KgeNodeFeatures node_features_from_graph(const PropertyGraph& g, const FeatureVocab& vocab);

struct KgeConfig {
  std::size_t dim = 64;
  std::size_t layers = 1;
  std::size_t heads = 2;
  std::size_t encoder_layers = 1;
  double smoothing = 0.1;
  double lr = 5e-3;
  double weight_decay = 0.0;
  std::size_t batch_size = 128;  // query groups per direction per step
  std::size_t epochs = 50;
  std::uint64_t seed = 1;
  bool degree_norm = false;  // 1/indegree scaling of aggregated messages
  bool scaled_score = true;  // z^T h / sqrt(d); false keeps the bare dot product
  bool logit_offset = true;  // learned scalar added to training logits; rankings unaffected
  bool literal_node_ids = true;  // false holds h0 at zero for nodes that carry any literal

  void validate() const;  // ConfigError
};

nlohmann::ordered_json to_json(const KgeConfig& c);
KgeConfig kge_config_from_json(const nlohmann::json& j, KgeConfig base = {});

struct KgeShape {
  std::size_t nodes = 0;
  std::size_t relations = 0;  // including reciprocals
  std::size_t qualifier_relations = 0;
  std::size_t qualifier_values = 0;
  std::vector<std::size_t> property_sizes;
};

// Message-passing view of a record list: one edge per record.
struct MessageGraph {
  std::size_t node_count = 0;
  std::vector<std::size_t> heads, relations, tails;
  std::vector<QualifierIndex> qualifiers;
};

MessageGraph message_graph(const std::vector<TripletRecord>& records, std::size_t node_count);

struct KgeData {
  TripletVocab vocab;
  KgeNodeFeatures features;
  Splits splits;  // reciprocals included
  FilterIndex filter;
  MessageGraph graph;  // train split with reciprocals

  KgeShape shape() const;
};

KgeData make_kge_data(TripletSet set, KgeNodeFeatures features, std::uint64_t split_seed);

struct PlantedKgConfig {
  std::size_t members = 430;
  std::size_t relations = 7;
  std::size_t values_per_relation = 10;
  double keep = 1.0;
};

// Entity-attribute graph: member nodes carry one categorical literal per
// relation, and relation r links a member to the literal-free attribute node of
// its r-th value.
KgeData planted_kge_data(std::uint64_t seed, const PlantedKgConfig& config = {});

class KgeModel {
 public:
  static KgeModel create(const KgeShape& shape, const KgeConfig& config);

  KgeModel(const KgeModel&) = delete;
  KgeModel& operator=(const KgeModel&) = delete;
  KgeModel(KgeModel&&) = default;
  KgeModel& operator=(KgeModel&&) = default;

  const KgeShape& shape() const { return shape_; }
  const KgeConfig& config() const { return config_; }
  ParamGroup& params() { return params_; }
  const ParamGroup& params() const { return params_; }

  // h = h0 + W_lit h_lit + b_lit for every node; [N, d].
  Tensor encode_literals(const KgeNodeFeatures& features) const;
  // Sum of E_qr[r] + E_qv[v] per qualifier list; [lists, d], zero rows for empty lists.
  Tensor encode_qualifiers(const std::vector<QualifierIndex>& lists) const;
  // L rounds of FiLM-modulated relation messages with a residual layer norm.
  Tensor propagate(const Tensor& states, const MessageGraph& graph) const;
  // Encoder output at the relation-token position for each query; [B, d].
  Tensor query_vectors(const Tensor& states, std::span<const std::size_t> heads,
                       std::span<const std::size_t> relations,
                       const std::vector<QualifierIndex>& qualifiers) const;
  // z^T h_i for every candidate i, divided by sqrt(d) when scaled_score; [B, N].
  Tensor score_queries(const Tensor& states, std::span<const std::size_t> heads,
                       std::span<const std::size_t> relations,
                       const std::vector<QualifierIndex>& qualifiers) const;
  Tensor node_states(const KgeData& data) const;
  // Scores shifted by the learned offset (when enabled), as fed to the loss.
  Tensor training_logits(const Tensor& scores) const;

  void save(const std::filesystem::path& path, const nlohmann::ordered_json& extra = {}) const;
  static KgeModel load(const std::filesystem::path& path);

 private:
  KgeModel() = default;

  KgeShape shape_;
  KgeConfig config_;
  ParamGroup params_;
  Tensor node_emb_, qual_rel_, qual_val_, w_rel_, b_rel_, rel_emb_, offset_;
  std::vector<Tensor> categorical_;
  nn::Linear num1_, num2_, lit_, gamma_, beta_, seq_;
  std::vector<nn::LayerNorm> norms_;
  nn::TransformerEncoder encoder_;
};

// Binary cross-entropy against the smoothed multi-hot targets of each group.
Tensor one_to_n_loss(const Tensor& logits, const std::vector<const QueryGroup*>& groups, double smoothing);
// 1/2 (tail-direction loss + head-direction loss); either side may be empty.
Tensor kge_loss(const KgeModel& model, const KgeData& data, const std::vector<const QueryGroup*>& tail,
                const std::vector<const QueryGroup*>& head, double smoothing);

struct KgeTrainResult {
  std::vector<double> epoch_loss;
};

// Throws DivergenceError on a non-finite loss. `stop` is asked after every
// epoch and ends training early when it returns true.
KgeTrainResult train_kge(KgeModel& model, const KgeData& data,
                         const std::function<void(std::size_t, double)>& on_epoch = {},
                         const std::function<bool(std::size_t)>& stop = {});

struct KgeEvaluation {
  LinkMetrics object;   // tail ranking on base relations
  LinkMetrics subject;  // tail ranking on reciprocal relations
  LinkMetrics triplet;  // micro-average over both query sets
};

nlohmann::ordered_json to_json(const KgeEvaluation& e);

// Scores for (head, relation, qualifiers) over all nodes.
using ScoreFn = std::function<std::vector<std::vector<double>>(
    std::span<const std::size_t>, std::span<const std::size_t>, const std::vector<QualifierIndex>&)>;

// Ranks every base record of `records` in both directions. A null filter gives raw ranks.
KgeEvaluation evaluate_link_prediction(const ScoreFn& score, const std::vector<TripletRecord>& records,
                                       std::size_t base_relation_count, const FilterIndex* filter);
KgeEvaluation evaluate_kge(const KgeModel& model, const KgeData& data, Split split, bool filtered = true);

// One NDJSON line per node: {"id": ..., "embedding": [...]}.
std::string export_embeddings(const KgeModel& model, const KgeData& data);
std::map<std::string, std::vector<double>> import_embeddings(const std::string& ndjson);

}  // namespace hats
