#include "hats/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "hats/contract.hpp"
#include "hats/error.hpp"

namespace hats {

LinkMetrics summarize_ranks(std::span<const std::size_t> ranks) {
  LinkMetrics m;
  m.queries = ranks.size();
  if (ranks.empty()) return m;
  for (std::size_t r : ranks) {
    m.mrr += 1.0 / static_cast<double>(r);
    m.h1 += r <= 1 ? 1.0 : 0.0;
    m.h10 += r <= 10 ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(ranks.size());
  m.mrr /= n;
  m.h1 /= n;
  m.h10 /= n;
  return m;
}

nlohmann::ordered_json to_json(const LinkMetrics& m) {
  return {{"mrr", m.mrr}, {"h1", m.h1}, {"h10", m.h10}, {"queries", m.queries}};
}

double reciprocal_rank_at(const RankedList& list, std::size_t k) {
  const std::size_t n = std::min(k, list.relevance.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (list.relevance[i] > 0) return 1.0 / static_cast<double>(i + 1);
  }
  return 0.0;
}

double average_precision_at(const RankedList& list, std::size_t k) {
  const auto relevant = static_cast<std::size_t>(
      std::count_if(list.relevance.begin(), list.relevance.end(), [](int r) { return r > 0; }));
  if (relevant == 0 || k == 0) return 0.0;
  const std::size_t n = std::min(k, list.relevance.size());
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (list.relevance[i] <= 0) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  return sum / static_cast<double>(std::min(k, relevant));
}

namespace {

double dcg(const std::vector<int>& rel, std::size_t k) {
  double out = 0.0;
  const std::size_t n = std::min(k, rel.size());
  for (std::size_t i = 0; i < n; ++i) {
    out += (std::pow(2.0, rel[i]) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
  }
  return out;
}

}  // namespace

double ndcg_at(const RankedList& list, std::size_t k) {
  std::vector<int> ideal = list.relevance;
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  const double idcg = dcg(ideal, k);
  return idcg > 0.0 ? dcg(list.relevance, k) / idcg : 0.0;
}

std::map<std::size_t, RankingAtK> ranking_report(const std::vector<RankedList>& lists,
                                                 const std::vector<std::size_t>& ks) {
  if (lists.empty()) throw ValidationError("ranking report needs at least one list");
  for (const auto& l : lists) {
    for (int r : l.relevance) {
      if (r < 0) throw ValidationError("relevance grades must be non-negative");
    }
  }
  std::map<std::size_t, RankingAtK> out;
  const double n = static_cast<double>(lists.size());
  for (std::size_t k : ks) {
    RankingAtK m;
    for (const auto& l : lists) {
      m.map += average_precision_at(l, k);
      m.mrr += reciprocal_rank_at(l, k);
      m.ndcg += ndcg_at(l, k);
    }
    m.map /= n;
    m.mrr /= n;
    m.ndcg /= n;
    out[k] = m;
  }
  return out;
}

std::map<std::size_t, RecallAtK> retrieval_recall(const std::vector<SceneTriplets>& scenes,
                                                  const std::vector<std::size_t>& ks) {
  // Gold sets and confidence-ordered predictions per scene.
  std::vector<std::vector<std::size_t>> order(scenes.size());
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    std::set<GoldTriplet> seen(scenes[s].gold.begin(), scenes[s].gold.end());
    if (seen.size() != scenes[s].gold.size()) {
      throw ValidationError("duplicate gold triplet in scene " + std::to_string(s));
    }
    auto& o = order[s];
    o.resize(scenes[s].predicted.size());
    std::iota(o.begin(), o.end(), std::size_t{0});
    const auto& p = scenes[s].predicted;
    std::stable_sort(o.begin(), o.end(),
                     [&](std::size_t a, std::size_t b) { return p[a].confidence > p[b].confidence; });
  }

  std::map<std::size_t, RecallAtK> out;
  for (std::size_t k : ks) {
    double recall_sum = 0.0;
    std::size_t scenes_with_gold = 0;
    std::map<std::string, std::pair<double, std::size_t>> per_class;  // recall sum, scenes
    for (std::size_t s = 0; s < scenes.size(); ++s) {
      const auto& scene = scenes[s];
      if (scene.gold.empty()) continue;
      std::set<GoldTriplet> hit;
      for (std::size_t i = 0; i < std::min(k, order[s].size()); ++i) {
        const auto& p = scene.predicted[order[s][i]];
        GoldTriplet t{p.entity, p.predicate};
        if (std::find(scene.gold.begin(), scene.gold.end(), t) != scene.gold.end()) hit.insert(t);
      }
      ++scenes_with_gold;
      recall_sum += static_cast<double>(hit.size()) / static_cast<double>(scene.gold.size());
      std::map<std::string, std::pair<std::size_t, std::size_t>> cls;  // hits, gold
      for (const auto& g : scene.gold) {
        ++cls[g.predicate].second;
        if (hit.count(g)) ++cls[g.predicate].first;
      }
      for (const auto& [pred, hg] : cls) {
        auto& acc = per_class[pred];
        acc.first += static_cast<double>(hg.first) / static_cast<double>(hg.second);
        ++acc.second;
      }
    }
    RecallAtK r;
    if (scenes_with_gold > 0) r.recall = recall_sum / static_cast<double>(scenes_with_gold);
    for (const auto& [pred, acc] : per_class) r.mean_recall += acc.first / static_cast<double>(acc.second);
    if (!per_class.empty()) r.mean_recall /= static_cast<double>(per_class.size());
    out[k] = r;
  }
  return out;
}

std::optional<double> roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ValidationError("scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> o(n);
  std::iota(o.begin(), o.end(), std::size_t{0});
  std::sort(o.begin(), o.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mann-Whitney with mid-ranks for ties.
  double pos_rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[o[j]] == scores[o[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (labels[o[t]] != 0) {
        pos_rank_sum += mid;
        ++pos;
      }
    }
    i = j;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  const double p = static_cast<double>(pos);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

ClassificationReport classification_report(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ValidationError("scores and labels differ in length");
  if (scores.empty()) throw ValidationError("classification report needs at least one item");
  ClassificationReport r;
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= 0.5;
    const bool actual = labels[i] != 0;
    tp += predicted && actual;
    fp += predicted && !actual;
    fn += !predicted && actual;
    r.bmae += std::abs(scores[i] - (actual ? 1.0 : 0.0));
  }
  r.bmae /= static_cast<double>(scores.size());
  if (tp + fp > 0) r.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) r.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (r.precision + r.recall > 0) r.f1 = 2 * r.precision * r.recall / (r.precision + r.recall);
  r.auc = roc_auc(scores, labels);
  return r;
}

nlohmann::ordered_json to_json(const ClassificationReport& r) {
  nlohmann::ordered_json j;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["auc"] = r.auc ? nlohmann::ordered_json(*r.auc) : nlohmann::ordered_json("undefined");
  j["bmae"] = r.bmae;
  return j;
}

std::string metrics_csv(const std::vector<std::tuple<std::string, std::size_t, double>>& rows) {
  std::string out = "metric,K,value\n";
  for (const auto& [name, k, value] : rows) {
    out += csv_field(name) + ',' + std::to_string(k) + ',' + format_number(value) + '\n';
  }
  return out;
}

}  // namespace hats
