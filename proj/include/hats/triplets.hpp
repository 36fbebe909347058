#pragma once

// Triplet view of the property graph for link prediction: index vocabularies,
// reciprocal relations, 8:1:1 splits, 1-to-N query groups and the filter index
// used for filtered ranking.

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hats/graph.hpp"
#include "json.hpp"

namespace hats {

using QualifierIndex = std::vector<std::pair<std::size_t, std::size_t>>;  // (qual-relation, qual-value)

struct TripletRecord {
  std::size_t head = 0;
  std::size_t relation = 0;
  std::size_t tail = 0;
  QualifierIndex qualifiers;
  bool reciprocal = false;
  bool operator==(const TripletRecord&) const = default;
  auto operator<=>(const TripletRecord&) const = default;
};

struct TripletVocab {
  std::vector<std::string> nodes;
  std::vector<std::string> relations;  // base relations; reciprocal of i is i + relations.size()
  std::vector<std::string> qualifier_relations;
  std::vector<std::string> qualifier_values;

  std::size_t base_relation_count() const { return relations.size(); }
  std::size_t relation_count() const { return 2 * relations.size(); }
  std::string relation_name(std::size_t index) const;  // reciprocals get an "_inv" suffix
};

struct TripletSet {
  TripletVocab vocab;
  std::vector<TripletRecord> records;
};

// One base record per edge, in graph edge order. Relations follow the schema
// order so indices are stable across graphs built from the same schema.
TripletSet export_triplets(const PropertyGraph& g);

TripletRecord reciprocal_of(const TripletRecord& r, std::size_t base_relation_count);
// Appends the reciprocal of every record. Throws ValidationError if any input
// record is already a reciprocal.
std::vector<TripletRecord> add_reciprocals(const std::vector<TripletRecord>& base,
                                           std::size_t base_relation_count);

enum class Split { kTrain, kValid, kTest };
const char* split_name(Split s);

struct Splits {
  std::uint64_t seed = 0;
  std::vector<TripletRecord> train, valid, test;
  const std::vector<TripletRecord>& get(Split s) const;
};

// Shuffles base records and cuts floor(0.8N) / floor(0.1N) / rest. A relation
// with at least three base records always keeps one in train.
Splits split_811(const std::vector<TripletRecord>& base, std::uint64_t seed);
// Reciprocals inherit the split of their base record.
Splits with_reciprocals(const Splits& base, std::size_t base_relation_count);

struct QueryGroup {
  std::size_t head = 0;
  std::size_t relation = 0;
  QualifierIndex qualifiers;
  std::vector<std::size_t> positives;  // sorted, distinct
  Split split = Split::kTrain;
};

// Groups records sharing (head, relation, qualifiers); order follows the key.
std::vector<QueryGroup> group_queries(const std::vector<TripletRecord>& records, Split split);

class FilterIndex {
 public:
  void add(const std::vector<TripletRecord>& records);
  const std::set<std::size_t>& positives(std::size_t head, std::size_t relation) const;
  std::size_t key_count() const { return index_.size(); }

 private:
  std::map<std::pair<std::size_t, std::size_t>, std::set<std::size_t>> index_;
};

FilterIndex build_filter_index(const Splits& splits);

// Rank of `gold` among all candidates after removing filtered non-gold
// candidates. Ties count half, rounded up: 1 + greater + (equal + 1) / 2.
std::size_t filtered_rank(std::span<const double> scores, std::size_t gold,
                          const std::set<std::size_t>* filter);

// head, relation, tail, qualifiers as "key=value" joined with ';'.
std::string triplets_tsv(const TripletVocab& vocab, const std::vector<TripletRecord>& records);
nlohmann::ordered_json split_manifest(const Splits& splits);

}  // namespace hats
