#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "hats/error.hpp"
#include "hats/metrics.hpp"

namespace hats {
namespace {

TEST(LinkRanks, Summary) {
  const std::vector<std::size_t> ranks = {1, 2, 10, 11};
  auto m = summarize_ranks(ranks);
  EXPECT_DOUBLE_EQ(m.mrr, (1.0 + 0.5 + 0.1 + 1.0 / 11) / 4);
  EXPECT_DOUBLE_EQ(m.h1, 0.25);
  EXPECT_DOUBLE_EQ(m.h10, 0.75);
  EXPECT_EQ(m.queries, 4u);
  EXPECT_EQ(summarize_ranks({}), LinkMetrics{});
}

TEST(Ranking, PerfectListsScoreOne) {
  std::vector<RankedList> lists = {{{1, 1, 0, 0}}, {{3, 2, 1, 0}}, {{1, 0, 0, 0, 0, 0}}};
  for (const auto& [k, m] : ranking_report(lists)) {
    EXPECT_DOUBLE_EQ(m.mrr, 1.0) << k;
    EXPECT_DOUBLE_EQ(m.map, 1.0) << k;
    EXPECT_DOUBLE_EQ(m.ndcg, 1.0) << k;
  }
}

TEST(Ranking, FirstRelevantAtTwo) {
  auto r = ranking_report({{{0, 1, 0}}}, {3});
  EXPECT_DOUBLE_EQ(r.at(3).mrr, 0.5);
  EXPECT_DOUBLE_EQ(r.at(3).map, 0.5);
}

TEST(Ranking, GradedNdcgOracle) {
  const double dcg = 7.0 / std::log2(3.0) + 3.0 / 2.0;
  const double idcg = 7.0 + 3.0 / std::log2(3.0);
  EXPECT_NEAR(ndcg_at({{0, 3, 2}}, 3), dcg / idcg, 1e-12);
  EXPECT_DOUBLE_EQ(ndcg_at({{0, 0, 0}}, 3), 0.0);
}

TEST(Ranking, AveragePrecisionHandExample) {
  // hits at 1 and 3 of two relevant: (1/1 + 2/3) / 2
  EXPECT_NEAR(average_precision_at({{1, 0, 1, 0}}, 5), (1.0 + 2.0 / 3.0) / 2.0, 1e-12);
  // only one of three relevant items fits in K=2
  EXPECT_NEAR(average_precision_at({{0, 1, 1, 1}}, 2), 0.5 / 2.0, 1e-12);
}

TEST(Ranking, RejectsBadInput) {
  EXPECT_THROW(ranking_report({}), ValidationError);
  EXPECT_THROW(ranking_report({{{0, -1}}}), ValidationError);
}

TEST(Ranking, BoundedAndMonotoneInK) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<RankedList> lists(1 + rng() % 4);
    for (auto& l : lists) {
      l.relevance.resize(1 + rng() % 12);
      for (auto& r : l.relevance) r = static_cast<int>(rng() % 4);
    }
    auto rep = ranking_report(lists, {1, 3, 5, 10});
    double prev_mrr = 0.0;
    for (const auto& [k, m] : rep) {
      for (double v : {m.map, m.mrr, m.ndcg}) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0 + 1e-12);
      }
      EXPECT_GE(m.mrr + 1e-12, prev_mrr);
      prev_mrr = m.mrr;
    }
    for (const auto& l : lists) {
      RankedList ideal = l;
      std::sort(ideal.relevance.begin(), ideal.relevance.end(), std::greater<>());
      if (std::any_of(l.relevance.begin(), l.relevance.end(), [](int r) { return r > 0; })) {
        EXPECT_NEAR(ndcg_at(ideal, 5), 1.0, 1e-12);
      }
    }
  }
}

// Brute-force recall: for each scene, the K most confident predictions
// (stable on ties) and a plain count of gold members among them.
std::pair<double, double> brute_recall(const std::vector<SceneTriplets>& scenes, std::size_t k) {
  double recall = 0.0;
  int counted = 0;
  std::map<std::string, std::vector<double>> cls;
  for (const auto& s : scenes) {
    if (s.gold.empty()) continue;
    auto p = s.predicted;
    std::stable_sort(p.begin(), p.end(), [](const auto& a, const auto& b) { return a.confidence > b.confidence; });
    if (p.size() > k) p.resize(k);
    auto found = [&](const GoldTriplet& g) {
      return std::any_of(p.begin(), p.end(), [&](const auto& x) { return x.entity == g.entity && x.predicate == g.predicate; });
    };
    int hits = 0;
    std::map<std::string, std::pair<int, int>> per;
    for (const auto& g : s.gold) {
      hits += found(g);
      per[g.predicate].first += found(g);
      per[g.predicate].second += 1;
    }
    recall += static_cast<double>(hits) / s.gold.size();
    ++counted;
    for (const auto& [c, hg] : per) cls[c].push_back(static_cast<double>(hg.first) / hg.second);
  }
  double mr = 0.0;
  for (const auto& [c, v] : cls) {
    double m = 0.0;
    for (double x : v) m += x;
    mr += m / v.size();
  }
  return {counted ? recall / counted : 0.0, cls.empty() ? 0.0 : mr / cls.size()};
}

std::vector<SceneTriplets> three_scenes() {
  return {
      {{{"car", "Hit"}, {"ped", "Near"}, {"bike", "Hit"}},
       {{"car", "Hit", 0.9}, {"ped", "Hit", 0.8}, {"bike", "Hit", 0.7}, {"ped", "Near", 0.2}}},
      {{{"truck", "Near"}}, {{"truck", "Hit", 0.6}, {"truck", "Near", 0.5}}},
      {{{"sign", "Block"}, {"car", "Hit"}}, {{"sign", "Block", 0.4}, {"car", "Near", 0.4}, {"car", "Hit", 0.1}}},
  };
}

TEST(Retrieval, MatchesBruteForceOnThreeScenes) {
  auto scenes = three_scenes();
  auto r = retrieval_recall(scenes, {1, 2, 3, 20});
  for (const auto& [k, m] : r) {
    auto [recall, mr] = brute_recall(scenes, k);
    EXPECT_NEAR(m.recall, recall, 1e-12) << k;
    EXPECT_NEAR(m.mean_recall, mr, 1e-12) << k;
  }
  EXPECT_NEAR(r.at(1).recall, (1.0 / 3 + 0.0 + 0.5) / 3, 1e-12);
  EXPECT_DOUBLE_EQ(r.at(20).recall, 1.0);
}

TEST(Retrieval, RandomScenesMatchBruteForce) {
  std::mt19937_64 rng(11);
  const std::vector<std::string> ents = {"a", "b", "c", "d"}, preds = {"P", "Q", "R"};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<SceneTriplets> scenes(1 + rng() % 4);
    for (auto& s : scenes) {
      std::set<GoldTriplet> gold;
      for (int i = 0; i < 3; ++i) gold.insert({ents[rng() % 4], preds[rng() % 3]});
      s.gold.assign(gold.begin(), gold.end());
      for (int i = 0; i < 6; ++i) s.predicted.push_back({ents[rng() % 4], preds[rng() % 3], (rng() % 5) / 4.0});
    }
    for (const auto& [k, m] : retrieval_recall(scenes, {1, 3, 6})) {
      auto [recall, mr] = brute_recall(scenes, k);
      EXPECT_NEAR(m.recall, recall, 1e-12);
      EXPECT_NEAR(m.mean_recall, mr, 1e-12);
    }
  }
}

TEST(Retrieval, IdenticalPredictionsAndSingleClass) {
  std::vector<SceneTriplets> scenes = {{{{"x", "P"}, {"y", "P"}}, {{"x", "P", 0.3}, {"y", "P", 0.2}, {"z", "P", 0.9}}}};
  auto r = retrieval_recall(scenes, {1, 2, 3});
  for (const auto& [k, m] : r) EXPECT_DOUBLE_EQ(m.recall, m.mean_recall);
  scenes[0].predicted = {{"x", "P", 1.0}, {"y", "P", 1.0}};
  EXPECT_DOUBLE_EQ(retrieval_recall(scenes, {20}).at(20).recall, 1.0);
}

TEST(Retrieval, NeverPredictedClassDragsMeanRecall) {
  std::vector<SceneTriplets> scenes = {{{{"x", "P"}, {"y", "Rare"}}, {{"x", "P", 1.0}}}};
  auto m = retrieval_recall(scenes, {20}).at(20);
  EXPECT_DOUBLE_EQ(m.recall, 0.5);
  EXPECT_DOUBLE_EQ(m.mean_recall, 0.5);
  scenes.push_back({{{"z", "P"}}, {{"z", "P", 1.0}}});
  m = retrieval_recall(scenes, {20}).at(20);
  EXPECT_DOUBLE_EQ(m.recall, 0.75);
  EXPECT_DOUBLE_EQ(m.mean_recall, 0.5);
}

TEST(Retrieval, EntityRelabelingInvariance) {
  auto scenes = three_scenes();
  auto renamed = scenes;
  for (auto& s : renamed) {
    for (auto& g : s.gold) g.entity = "obj_" + g.entity;
    for (auto& p : s.predicted) p.entity = "obj_" + p.entity;
  }
  auto a = retrieval_recall(scenes), b = retrieval_recall(renamed);
  for (const auto& [k, m] : a) {
    EXPECT_DOUBLE_EQ(m.recall, b.at(k).recall);
    EXPECT_DOUBLE_EQ(m.mean_recall, b.at(k).mean_recall);
  }
}

TEST(Retrieval, DuplicateGoldRejected) {
  std::vector<SceneTriplets> scenes = {{{{"x", "P"}, {"x", "P"}}, {}}};
  EXPECT_THROW(retrieval_recall(scenes), ValidationError);
}

double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!y[i] || y[j]) continue;
      ++pairs;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

TEST(Classification, AucMatchesPairwiseOracle) {
  const std::vector<double> s = {0.9, 0.4, 0.4, 0.7, 0.1, 0.4};
  const std::vector<int> y = {1, 0, 1, 0, 0, 1};
  EXPECT_NEAR(*roc_auc(s, y), pairwise_auc(s, y), 1e-12);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> sc(2 + rng() % 15);
    std::vector<int> lab(sc.size());
    for (std::size_t i = 0; i < sc.size(); ++i) {
      sc[i] = (rng() % 6) / 5.0;
      lab[i] = static_cast<int>(rng() % 2);
    }
    lab[0] = 1;
    lab[1] = 0;
    const double auc = *roc_auc(sc, lab);
    EXPECT_NEAR(auc, pairwise_auc(sc, lab), 1e-12);
    std::vector<double> mono(sc.size());
    std::transform(sc.begin(), sc.end(), mono.begin(), [](double v) { return std::exp(3.0 * v) + 1.0; });
    EXPECT_NEAR(*roc_auc(mono, lab), auc, 1e-12);
  }
}

TEST(Classification, PerfectSeparationAndHalfScores) {
  const std::vector<double> s = {0.9, 0.8, 0.2, 0.1};
  const std::vector<int> y = {1, 1, 0, 0};
  auto r = classification_report(s, y);
  EXPECT_DOUBLE_EQ(r.precision, 1.0);
  EXPECT_DOUBLE_EQ(r.recall, 1.0);
  EXPECT_DOUBLE_EQ(r.f1, 1.0);
  EXPECT_DOUBLE_EQ(*r.auc, 1.0);
  EXPECT_NEAR(r.bmae, 0.15, 1e-12);

  const std::vector<double> half(4, 0.5);
  EXPECT_DOUBLE_EQ(classification_report(half, y).bmae, 0.5);
}

TEST(Classification, ThresholdCounts) {
  const std::vector<double> s = {0.5, 0.49, 0.7, 0.2, 0.6};
  const std::vector<int> y = {1, 1, 0, 0, 1};
  auto r = classification_report(s, y);
  EXPECT_DOUBLE_EQ(r.precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.recall, 2.0 / 3.0);
  EXPECT_NEAR(r.f1, 2.0 / 3.0, 1e-12);
}

TEST(Classification, SingleClassAucUndefined) {
  const std::vector<double> s = {0.2, 0.9};
  const std::vector<int> y = {1, 1};
  auto r = classification_report(s, y);
  EXPECT_FALSE(r.auc.has_value());
  EXPECT_EQ(to_json(r)["auc"], "undefined");
  EXPECT_THROW(classification_report(std::vector<double>{}, std::vector<int>{}), ValidationError);
  EXPECT_THROW(classification_report(s, std::vector<int>{1}), ValidationError);
}

TEST(MetricsCsv, LongFormat) {
  EXPECT_EQ(metrics_csv({{"R", 20, 0.5}, {"mR", 50, 0.25}}), "metric,K,value\nR,20,0.5\nmR,50,0.25\n");
}

}  // namespace
}  // namespace hats
