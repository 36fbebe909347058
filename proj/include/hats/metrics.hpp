#pragma once

// Evaluation measures: link-prediction ranks, hazard ranking (MRR@K, mAP@K,
// NDCG@K), triplet retrieval (R@K, mR@K) and binary classification reports.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace hats {

struct LinkMetrics {
  double mrr = 0.0;
  double h1 = 0.0;
  double h10 = 0.0;
  std::size_t queries = 0;
  bool operator==(const LinkMetrics&) const = default;
};

// Ranks are 1-based. An empty rank list gives all zeros.
LinkMetrics summarize_ranks(std::span<const std::size_t> ranks);
nlohmann::ordered_json to_json(const LinkMetrics& m);

// One list per query, items already ordered by descending score.
struct RankedList {
  std::vector<int> relevance;  // graded, >= 0; binary lists use 0/1
};

struct RankingAtK {
  double map = 0.0;
  double mrr = 0.0;
  double ndcg = 0.0;
};

// Keyed by K. Throws ValidationError on an empty collection or negative relevance.
std::map<std::size_t, RankingAtK> ranking_report(const std::vector<RankedList>& lists,
                                                 const std::vector<std::size_t>& ks = {3, 5, 10});

double reciprocal_rank_at(const RankedList& list, std::size_t k);
double average_precision_at(const RankedList& list, std::size_t k);
double ndcg_at(const RankedList& list, std::size_t k);

struct GoldTriplet {
  std::string entity;
  std::string predicate;
  bool operator==(const GoldTriplet&) const = default;
  auto operator<=>(const GoldTriplet&) const = default;
};

struct PredictedTriplet {
  std::string entity;
  std::string predicate;
  double confidence = 0.0;
};

struct SceneTriplets {
  std::vector<GoldTriplet> gold;
  std::vector<PredictedTriplet> predicted;
};

struct RecallAtK {
  double recall = 0.0;
  double mean_recall = 0.0;
};

// Predictions are ranked by confidence, ties broken by input order. Throws
// ValidationError for duplicate gold triplets within a scene.
std::map<std::size_t, RecallAtK> retrieval_recall(const std::vector<SceneTriplets>& scenes,
                                                  const std::vector<std::size_t>& ks = {20, 50, 100});

struct ClassificationReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> auc;  // empty when labels hold a single class
  double bmae = 0.0;
};

// Scores are probabilities; P/R/F1 use the 0.5 threshold (score >= 0.5 is positive).
ClassificationReport classification_report(std::span<const double> scores, std::span<const int> labels);
nlohmann::ordered_json to_json(const ClassificationReport& r);

// Tie-counted-half rank statistic.
std::optional<double> roc_auc(std::span<const double> scores, std::span<const int> labels);

// Long-format CSV rows "metric,K,value".
std::string metrics_csv(const std::vector<std::tuple<std::string, std::size_t, double>>& rows);

}  // namespace hats
