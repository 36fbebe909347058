#include "hats/triplets.hpp"

#include <algorithm>
#include <random>
#include <unordered_map>

#include "hats/error.hpp"

namespace hats {

std::string TripletVocab::relation_name(std::size_t index) const {
  if (index < relations.size()) return relations[index];
  if (index < 2 * relations.size()) return relations[index - relations.size()] + "_inv";
  throw ValidationError("relation index " + std::to_string(index) + " out of range");
}

TripletSet export_triplets(const PropertyGraph& g) {
  TripletSet out;
  auto& v = out.vocab;
  const KgSchema& schema = g.schema();
  std::unordered_map<std::string, std::size_t> node_ix, rel_ix;
  std::map<std::pair<std::string, std::string>, std::size_t> qv_ix;
  std::unordered_map<std::string, std::size_t> qr_ix;

  for (const auto& n : g.nodes()) {
    node_ix.emplace(n.id, v.nodes.size());
    v.nodes.push_back(n.id);
  }
  for (const auto& e : schema.edge_types) {
    if (rel_ix.emplace(e.relation, v.relations.size()).second) v.relations.push_back(e.relation);
  }
  for (const auto& [key, values] : schema.qualifier_values) {
    qr_ix.emplace(key, v.qualifier_relations.size());
    v.qualifier_relations.push_back(key);
    for (const auto& val : values) {
      qv_ix.emplace(std::make_pair(key, val), v.qualifier_values.size());
      v.qualifier_values.push_back(val);
    }
  }

  auto lookup = [](const auto& map, const auto& key, const std::string& what) {
    auto it = map.find(key);
    if (it == map.end()) throw ValidationError("cannot export triplets: unknown " + what);
    return it->second;
  };
  out.records.reserve(g.edges().size());
  for (const auto& e : g.edges()) {
    TripletRecord r;
    r.head = lookup(node_ix, e.head, "node " + e.head);
    r.relation = lookup(rel_ix, e.relation, "relation " + e.relation);
    r.tail = lookup(node_ix, e.tail, "node " + e.tail);
    for (const auto& [key, val] : e.qualifiers) {
      r.qualifiers.emplace_back(lookup(qr_ix, key, "qualifier " + key),
                                lookup(qv_ix, std::make_pair(key, val), "qualifier value " + key + "=" + val));
    }
    out.records.push_back(std::move(r));
  }
  return out;
}

TripletRecord reciprocal_of(const TripletRecord& r, std::size_t base_relation_count) {
  TripletRecord out = r;
  std::swap(out.head, out.tail);
  out.relation = r.reciprocal ? r.relation - base_relation_count : r.relation + base_relation_count;
  out.reciprocal = !r.reciprocal;
  return out;
}

std::vector<TripletRecord> add_reciprocals(const std::vector<TripletRecord>& base,
                                           std::size_t base_relation_count) {
  std::vector<TripletRecord> out;
  out.reserve(2 * base.size());
  for (const auto& r : base) {
    if (r.reciprocal) throw ValidationError("reciprocal relations were already added");
    out.push_back(r);
  }
  for (const auto& r : base) out.push_back(reciprocal_of(r, base_relation_count));
  return out;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  return "?";
}

const std::vector<TripletRecord>& Splits::get(Split s) const {
  switch (s) {
    case Split::kTrain: return train;
    case Split::kValid: return valid;
    case Split::kTest: return test;
  }
  return train;
}

Splits split_811(const std::vector<TripletRecord>& base, std::uint64_t seed) {
  for (const auto& r : base) {
    if (r.reciprocal) throw ValidationError("split before adding reciprocal relations");
  }
  const std::size_t n = base.size();
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_valid = n / 10;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::map<std::size_t, std::size_t> total, in_train;
  for (const auto& r : base) ++total[r.relation];
  for (std::size_t i = 0; i < n_train; ++i) ++in_train[base[order[i]].relation];
  for (const auto& [rel, count] : total) {
    if (count < 3 || in_train[rel] > 0) continue;
    auto held = std::find_if(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end(),
                             [&](std::size_t i) { return base[i].relation == rel; });
    auto donor = std::find_if(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train),
                              [&](std::size_t i) { return in_train[base[i].relation] > 1; });
    if (held == order.end() || donor == order.begin() + static_cast<std::ptrdiff_t>(n_train)) continue;
    --in_train[base[*donor].relation];
    ++in_train[rel];
    std::iter_swap(held, donor);
  }

  Splits out;
  out.seed = seed;
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < n_train ? out.train : i < n_train + n_valid ? out.valid : out.test;
    dst.push_back(base[order[i]]);
  }
  return out;
}

Splits with_reciprocals(const Splits& base, std::size_t base_relation_count) {
  Splits out;
  out.seed = base.seed;
  out.train = add_reciprocals(base.train, base_relation_count);
  out.valid = add_reciprocals(base.valid, base_relation_count);
  out.test = add_reciprocals(base.test, base_relation_count);
  return out;
}

std::vector<QueryGroup> group_queries(const std::vector<TripletRecord>& records, Split split) {
  std::map<std::tuple<std::size_t, std::size_t, QualifierIndex>, std::set<std::size_t>> groups;
  for (const auto& r : records) groups[{r.head, r.relation, r.qualifiers}].insert(r.tail);
  std::vector<QueryGroup> out;
  out.reserve(groups.size());
  for (auto& [key, tails] : groups) {
    QueryGroup q;
    q.head = std::get<0>(key);
    q.relation = std::get<1>(key);
    q.qualifiers = std::get<2>(key);
    q.positives.assign(tails.begin(), tails.end());
    q.split = split;
    out.push_back(std::move(q));
  }
  return out;
}

void FilterIndex::add(const std::vector<TripletRecord>& records) {
  for (const auto& r : records) index_[{r.head, r.relation}].insert(r.tail);
}

const std::set<std::size_t>& FilterIndex::positives(std::size_t head, std::size_t relation) const {
  static const std::set<std::size_t> kEmpty;
  auto it = index_.find({head, relation});
  return it == index_.end() ? kEmpty : it->second;
}

FilterIndex build_filter_index(const Splits& splits) {
  FilterIndex f;
  f.add(splits.train);
  f.add(splits.valid);
  f.add(splits.test);
  return f;
}

std::size_t filtered_rank(std::span<const double> scores, std::size_t gold,
                          const std::set<std::size_t>* filter) {
  if (gold >= scores.size()) throw ValidationError("gold index out of range");
  const double s = scores[gold];
  std::size_t greater = 0, equal = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i == gold || (filter && filter->count(i))) continue;
    if (scores[i] > s) {
      ++greater;
    } else if (scores[i] == s) {
      ++equal;
    }
  }
  return 1 + greater + (equal + 1) / 2;
}

std::string triplets_tsv(const TripletVocab& vocab, const std::vector<TripletRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += vocab.nodes.at(r.head) + '\t' + vocab.relation_name(r.relation) + '\t' + vocab.nodes.at(r.tail) + '\t';
    for (std::size_t i = 0; i < r.qualifiers.size(); ++i) {
      if (i) out += ';';
      out += vocab.qualifier_relations.at(r.qualifiers[i].first) + '=' +
             vocab.qualifier_values.at(r.qualifiers[i].second);
    }
    out += '\n';
  }
  return out;
}

nlohmann::ordered_json split_manifest(const Splits& splits) {
  nlohmann::ordered_json j;
  j["seed"] = splits.seed;
  j["ratio"] = "8:1:1";
  j["unit"] = "base triplet";
  j["train"] = splits.train.size();
  j["valid"] = splits.valid.size();
  j["test"] = splits.test.size();
  return j;
}

}  // namespace hats
