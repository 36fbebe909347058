#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <map>
#include <random>
#include <set>

#include "gradcheck.hpp"
#include "hats/error.hpp"
#include "hats/kg_build.hpp"
#include "hats/kge.hpp"
#include "hats/ops.hpp"
#include "hats/synth_tables.hpp"

namespace hats {
namespace {

using Vec = std::vector<double>;

// Four nodes, one base relation, one qualifier key with two values, one
// categorical property and one numeric-bearing node.
KgeData toy_data(std::size_t records = 10) {
  TripletSet set;
  set.vocab.nodes = {"n0", "n1", "n2", "n3"};
  set.vocab.relations = {"r"};
  set.vocab.qualifier_relations = {"q"};
  set.vocab.qualifier_values = {"a", "b"};
  for (std::size_t i = 0; i < records; ++i) {
    QualifierIndex q;
    if (i % 3 == 1) q = {{0, i % 2}};
    set.records.push_back({i % 4, 0, (i * 3 + 1) % 4, q, false});
  }
  KgeNodeFeatures f;
  f.node_count = 4;
  f.property_names = {"color"};
  f.property_vocab = {{"red", "blue"}};
  f.values = {{{0, 0}, {1, 1}, {2, 0}, {3, 1}}};
  f.numeric_nodes = {0};
  f.numeric = {0.5, -1.0, 2.0, 0.0, 1.5};
  return make_kge_data(std::move(set), std::move(f), 3);
}

KgeConfig small_config(std::size_t d = 4, std::size_t layers = 1) {
  KgeConfig c;
  c.dim = d;
  c.layers = layers;
  c.heads = 2;
  c.seed = 5;
  return c;
}

void randomize(KgeModel& m, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& s : m.params().slots()) {
    for (double& x : s.value.mutable_data()) x = u(rng);
  }
}

Vec row(const Tensor& t, std::size_t i) {
  const std::size_t d = t.dim(1);
  return Vec(t.data().begin() + static_cast<std::ptrdiff_t>(i * d), t.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
}

Vec param_row(const KgeModel& m, const std::string& name, std::size_t i) { return row(m.params().get(name), i); }

// y = W x + b with W stored [out, in].
Vec affine(const KgeModel& m, const std::string& name, const Vec& x) {
  const Tensor& w = m.params().get(name + ".weight");
  const Tensor& b = m.params().get(name + ".bias");
  Vec y(w.dim(0));
  for (std::size_t o = 0; o < y.size(); ++o) {
    y[o] = b.data()[o];
    for (std::size_t i = 0; i < x.size(); ++i) y[o] += w.data()[o * x.size() + i] * x[i];
  }
  return y;
}

Vec plus(Vec a, const Vec& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

Vec layer_norm(const Vec& x, const Vec& gain, const Vec& bias) {
  const double n = static_cast<double>(x.size());
  const double mu = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double var = 0.0;
  for (double v : x) var += (v - mu) * (v - mu);
  var /= n;
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mu) / std::sqrt(var + 1e-5) * gain[i] + bias[i];
  return y;
}

void expect_near(const Vec& a, const Vec& b, double tol = 1e-12) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "coordinate " << i;
}

TEST(KgeLiterals, ZeroTablesGiveIdEmbedding) {
  auto data = toy_data();
  data.features.numeric_nodes.clear();
  data.features.numeric.clear();
  auto m = KgeModel::create(data.shape(), small_config());
  randomize(m, 1);
  for (const char* name : {"cat.0", "lit.bias"}) {
    auto v = m.params().get(name).mutable_data();
    std::fill(v.begin(), v.end(), 0.0);
  }
  Tensor h = m.encode_literals(data.features);
  EXPECT_EQ(Vec(h.data().begin(), h.data().end()), Vec(m.params().get("node_emb").data().begin(), m.params().get("node_emb").data().end()));
}

TEST(KgeLiterals, CrashNodeMatchesHandChain) {
  auto data = toy_data();
  auto m = KgeModel::create(data.shape(), small_config(4));
  randomize(m, 2);
  Tensor h = m.encode_literals(data.features);

  Vec hidden = affine(m, "num1", data.features.numeric);
  for (double& v : hidden) v = std::max(v, 0.0);
  const Vec h_num = affine(m, "num2", hidden);
  const Vec h_lit0 = plus(param_row(m, "cat.0", 0), h_num);
  expect_near(row(h, 0), plus(param_row(m, "node_emb", 0), affine(m, "lit", h_lit0)));
  // a node without numerics uses its categorical row alone
  expect_near(row(h, 1), plus(param_row(m, "node_emb", 1), affine(m, "lit", param_row(m, "cat.0", 1))));
}

TEST(KgeLiterals, PinnedIdsDropOutForLiteralNodes) {
  auto data = toy_data();
  data.features.values[0].erase(data.features.values[0].begin() + 3);  // node 3 has no literal now
  auto cfg = small_config(4);
  cfg.literal_node_ids = false;
  auto m = KgeModel::create(data.shape(), cfg);
  randomize(m, 4);
  Tensor h = m.encode_literals(data.features);
  expect_near(row(h, 1), affine(m, "lit", param_row(m, "cat.0", 1)));
  expect_near(row(h, 3), plus(param_row(m, "node_emb", 3), affine(m, "lit", Vec(4, 0.0))));

  testing::project(h).backward();
  const auto g = m.params().get("node_emb").grad();
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(g[i], 0.0) << i;
  double free_norm = 0.0;
  for (std::size_t i = 12; i < 16; ++i) free_norm += g[i] * g[i];
  EXPECT_GT(free_norm, 0.0);
}

TEST(KgeLiterals, CategoricalDifferenceIsLinear) {
  auto data = toy_data();
  auto m = KgeModel::create(data.shape(), small_config(4));
  randomize(m, 3);
  auto emb = m.params().get("node_emb").mutable_data();
  std::copy(emb.begin() + 4, emb.begin() + 8, emb.begin() + 8);  // node 2 gets node 1's id row
  Tensor h = m.encode_literals(data.features);
  const Vec diff = [&] {
    Vec a = param_row(m, "cat.0", 0), b = param_row(m, "cat.0", 1);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
    return a;
  }();
  const Tensor& w = m.params().get("lit.weight");
  Vec expected(4, 0.0);
  for (std::size_t o = 0; o < 4; ++o) {
    for (std::size_t i = 0; i < 4; ++i) expected[o] += w.data()[o * 4 + i] * diff[i];
  }
  Vec got = row(h, 2);
  for (std::size_t i = 0; i < 4; ++i) got[i] -= row(h, 1)[i];
  expect_near(got, expected);
}

TEST(KgeLiterals, UnknownValueRejected) {
  auto data = generate_synthetic_dataset(4, {10, 2, 2});
  auto built = ingest_dataset(data.tables, default_contracts());
  auto vocab = feature_vocab_from_graph(built.graph);
  auto f = node_features_from_graph(built.graph, vocab);
  EXPECT_EQ(f.node_count, built.graph.nodes().size());
  EXPECT_EQ(f.numeric_nodes.size(), 10u);
  for (std::size_t c = 0; c < kNumericWidth; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < 10; ++r) mean += f.numeric[r * kNumericWidth + c];
    EXPECT_NEAR(mean, 0.0, 1e-9);
  }
  ASSERT_FALSE(vocab.values[0].empty());
  vocab.values[0].erase(vocab.values[0].begin());
  EXPECT_THROW(node_features_from_graph(built.graph, vocab), VocabularyError);
}

TEST(KgeQualifiers, EmptySingleAndPermuted) {
  auto data = toy_data();
  auto shape = data.shape();
  shape.qualifier_relations = 3;
  shape.qualifier_values = 4;
  auto m = KgeModel::create(shape, small_config());
  randomize(m, 4);
  Tensor q = m.encode_qualifiers({{}, {{1, 2}}, {{0, 1}, {2, 3}, {1, 0}}, {{1, 0}, {0, 1}, {2, 3}}});
  expect_near(row(q, 0), Vec(4, 0.0), 0.0);
  expect_near(row(q, 1), plus(param_row(m, "qual_rel", 1), param_row(m, "qual_val", 2)));
  expect_near(row(q, 2), row(q, 3), 1e-15);
  EXPECT_THROW(m.encode_qualifiers({{{3, 0}}}), DimensionError);
  Tensor none = m.encode_qualifiers({{}, {}});
  EXPECT_EQ(none.shape(), (Shape{2, 4}));
}

MessageGraph one_edge(const QualifierIndex& q) {
  MessageGraph g;
  g.node_count = 2;
  g.heads = {0};
  g.relations = {1};
  g.tails = {1};
  g.qualifiers = {q};
  return g;
}

TEST(KgeMessagePassing, TwoNodeHandOracle) {
  auto data = toy_data();
  auto shape = data.shape();
  shape.nodes = 2;
  auto cfg = small_config(3);
  cfg.heads = 1;
  auto m = KgeModel::create(shape, cfg);
  randomize(m, 5);
  std::mt19937_64 rng(6);
  Tensor h = testing::random_tensor({2, 3}, rng, -1.0, 1.0, false);
  const QualifierIndex q = {{0, 1}};
  Tensor out = m.propagate(h, one_edge(q));

  const Tensor& w = m.params().get("w_rel");
  const Vec b = param_row(m, "b_rel", 1);
  const Vec h0 = row(h, 0);
  Vec msg(3);
  for (std::size_t o = 0; o < 3; ++o) {
    msg[o] = b[o];
    for (std::size_t i = 0; i < 3; ++i) msg[o] += w.data()[9 + o * 3 + i] * h0[i];
  }
  const Vec hq = plus(param_row(m, "qual_rel", 0), param_row(m, "qual_val", 1));
  const Vec gamma = affine(m, "film_gamma", hq), beta = affine(m, "film_beta", hq);
  for (std::size_t i = 0; i < 3; ++i) msg[i] = (1.0 + gamma[i]) * msg[i] + beta[i];
  const Vec gain = Vec(m.params().get("norm.0.gain").data().begin(), m.params().get("norm.0.gain").data().end());
  const Vec bias = Vec(m.params().get("norm.0.bias").data().begin(), m.params().get("norm.0.bias").data().end());
  expect_near(row(out, 1), layer_norm(plus(row(h, 1), msg), gain, bias), 1e-10);
  expect_near(row(out, 0), layer_norm(h0, gain, bias), 1e-10);  // no incoming edges
}

TEST(KgeMessagePassing, ZeroFilmLeavesMessagesUnmodulated) {
  auto data = toy_data();
  auto shape = data.shape();
  shape.nodes = 2;
  auto m = KgeModel::create(shape, small_config(4));
  std::mt19937_64 rng(7);
  Tensor h = testing::random_tensor({2, 4}, rng, -1.0, 1.0, false);
  Tensor with_q = m.propagate(h, one_edge({{0, 1}}));
  Tensor without = m.propagate(h, one_edge({}));
  expect_near(Vec(with_q.data().begin(), with_q.data().end()), Vec(without.data().begin(), without.data().end()), 0.0);
}

TEST(KgeMessagePassing, NoEdgesGivesLayerNorm) {
  auto data = toy_data();
  auto m = KgeModel::create(data.shape(), small_config(4, 2));
  randomize(m, 8);
  std::mt19937_64 rng(9);
  Tensor h = testing::random_tensor({4, 4}, rng, -1.0, 1.0, false);
  MessageGraph empty;
  empty.node_count = 4;
  Tensor out = m.propagate(h, empty);
  auto gain = [&](int l) { return Vec(m.params().get("norm." + std::to_string(l) + ".gain").data().begin(), m.params().get("norm." + std::to_string(l) + ".gain").data().end()); };
  auto bias = [&](int l) { return Vec(m.params().get("norm." + std::to_string(l) + ".bias").data().begin(), m.params().get("norm." + std::to_string(l) + ".bias").data().end()); };
  for (std::size_t i = 0; i < 4; ++i) {
    expect_near(row(out, i), layer_norm(layer_norm(row(h, i), gain(0), bias(0)), gain(1), bias(1)), 1e-10);
  }
}

TEST(KgeScoring, MatchesPerTailDotProducts) {
  auto data = toy_data();
  for (bool scaled : {true, false}) {
    auto cfg = small_config(4);
    cfg.scaled_score = scaled;
    auto m = KgeModel::create(data.shape(), cfg);
    randomize(m, 10);
    Tensor states = m.node_states(data);
    const std::vector<std::size_t> heads = {0, 2, 3}, rels = {0, 1, 0};
    const std::vector<QualifierIndex> quals = {{}, {{0, 1}}, {{0, 0}}};
    Tensor z = m.query_vectors(states, heads, rels, quals);
    Tensor s = m.score_queries(states, heads, rels, quals);
    ASSERT_EQ(s.shape(), (Shape{3, 4}));
    for (std::size_t q = 0; q < 3; ++q) {
      for (std::size_t t = 0; t < 4; ++t) {
        double dot = 0.0;
        for (std::size_t k = 0; k < 4; ++k) dot += z.data()[q * 4 + k] * states.data()[t * 4 + k];
        EXPECT_NEAR(s.data()[q * 4 + t], scaled ? dot / 2.0 : dot, 1e-12);
      }
    }
  }
}

TEST(KgeScoring, DuplicateAndOrthogonalTails) {
  auto data = toy_data();
  auto m = KgeModel::create(data.shape(), small_config(4));
  randomize(m, 11);
  std::mt19937_64 rng(12);
  Tensor states = testing::random_tensor({4, 4}, rng, -1.0, 1.0, false);
  auto sv = states.mutable_data();
  std::copy(sv.begin() + 4, sv.begin() + 8, sv.begin() + 12);  // node 3 duplicates node 1
  const std::vector<std::size_t> heads = {0}, rels = {0};
  Tensor s = m.score_queries(states, heads, rels, {{}});
  EXPECT_EQ(s.data()[1], s.data()[3]);

  // Project every non-head row onto z's orthogonal complement; z depends only on the head row.
  Tensor z = m.query_vectors(states, heads, rels, {{}});
  const Vec zv(z.data().begin(), z.data().end());
  const double zz = std::inner_product(zv.begin(), zv.end(), zv.begin(), 0.0);
  for (std::size_t i = 1; i < 4; ++i) {
    const double c = std::inner_product(zv.begin(), zv.end(), sv.begin() + static_cast<std::ptrdiff_t>(i * 4), 0.0) / zz;
    for (std::size_t k = 0; k < 4; ++k) sv[i * 4 + k] -= c * zv[k];
  }
  s = m.score_queries(states, heads, rels, {{}});
  for (std::size_t i = 1; i < 4; ++i) EXPECT_NEAR(s.data()[i], 0.0, 1e-12);
}

TEST(KgeTraining, SmoothedTargets) {
  std::mt19937_64 rng(13);
  Tensor logits = testing::random_tensor({2, 4}, rng, -2.0, 2.0, false);
  QueryGroup a{0, 0, {}, {1, 3}, Split::kTrain}, b{1, 0, {}, {0}, Split::kTrain};
  const double loss = one_to_n_loss(logits, {&a, &b}, 0.1).item();
  const std::vector<double> y = {0.1, 0.9, 0.1, 0.9, 0.9, 0.1, 0.1, 0.1};
  double expected = 0.0;
  for (std::size_t i = 0; i < 8; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-logits.data()[i]));
    expected -= y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p);
  }
  EXPECT_NEAR(loss, expected / 8.0, 1e-12);
}

TEST(KgeTraining, SymmetricGraphHasEqualDirections) {
  // Relation r links 0<->1 and 2<->3 both ways, so tail and head query groups coincide.
  TripletSet set;
  set.vocab.nodes = {"a", "b", "c", "d"};
  set.vocab.relations = {"r"};
  set.records = {{0, 0, 1, {}, false}, {1, 0, 0, {}, false}, {2, 0, 3, {}, false}, {3, 0, 2, {}, false}};
  KgeNodeFeatures f;
  f.node_count = 4;
  KgeData data;
  data.vocab = set.vocab;
  data.features = f;
  data.splits.train = add_reciprocals(set.records, 1);
  data.graph = message_graph(data.splits.train, 4);
  auto m = KgeModel::create(data.shape(), small_config(4));
  randomize(m, 14);
  for (const char* name : {"w_rel", "b_rel", "rel_emb"}) {
    auto v = m.params().get(name).mutable_data();
    std::copy(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2));
  }
  auto groups = group_queries(data.splits.train, Split::kTrain);
  std::vector<const QueryGroup*> tail, head;
  for (const auto& g : groups) (g.relation == 0 ? tail : head).push_back(&g);
  ASSERT_EQ(tail.size(), 4u);
  const double lt = kge_loss(m, data, tail, {}, 0.1).item();
  const double lh = kge_loss(m, data, {}, head, 0.1).item();
  EXPECT_NEAR(lt, lh, 1e-12);
  EXPECT_NEAR(kge_loss(m, data, tail, head, 0.1).item(), lt, 1e-12);
}

TEST(KgeTraining, EndToEndGradientMatchesFiniteDifferences) {
  auto data = toy_data(16);
  auto cfg = small_config(8, 2);
  auto m = KgeModel::create(data.shape(), cfg);
  randomize(m, 15, 0.4);
  auto groups = group_queries(data.splits.train, Split::kTrain);
  std::vector<const QueryGroup*> tail, head;
  for (const auto& g : groups) (g.relation < 1 ? tail : head).push_back(&g);
  std::vector<Tensor> inputs;
  std::size_t total = 0;
  for (auto& s : m.params().slots()) {
    inputs.push_back(s.value);
    total += s.value.numel();
  }
  std::size_t checked = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::size_t coords = std::max<std::size_t>(1, inputs[i].numel() / 100);
    auto r = testing::grad_check([&] { return kge_loss(m, data, tail, head, 0.1); }, {inputs[i]}, 1e-5, coords, 20 + i);
    worst = std::max(worst, r.max_rel_error);
    checked += r.checked;
  }
  EXPECT_GE(checked * 100, total);
  EXPECT_LT(worst, 1e-3);
}

TEST(KgeTraining, DeterministicAndDivergenceAborts) {
  auto data = toy_data(40);
  auto cfg = small_config(4);
  cfg.epochs = 2;
  cfg.batch_size = 4;
  auto a = KgeModel::create(data.shape(), cfg);
  auto b = KgeModel::create(data.shape(), cfg);
  EXPECT_EQ(train_kge(a, data).epoch_loss, train_kge(b, data).epoch_loss);

  auto c = KgeModel::create(data.shape(), cfg);
  c.params().get("node_emb").mutable_data()[0] = std::nan("");
  EXPECT_THROW(train_kge(c, data), DivergenceError);

  cfg.layers = 0;
  auto bad = KgeModel::create(data.shape(), cfg);
  EXPECT_THROW(train_kge(bad, data), ConfigError);
}

TEST(KgeTraining, LossDecreasesOnPlantedGraph) {
  auto data = planted_kge_data(7);
  ASSERT_EQ(data.features.node_count, 500u);
  KgeConfig cfg;
  cfg.lr = 3e-3;
  cfg.batch_size = 32;
  cfg.epochs = 3;
  cfg.literal_node_ids = false;
  auto m = KgeModel::create(data.shape(), cfg);
  auto losses = train_kge(m, data).epoch_loss;
  ASSERT_EQ(losses.size(), 3u);
  for (std::size_t e = 1; e < losses.size(); ++e) EXPECT_LT(losses[e], losses[e - 1]) << "epoch " << e + 1;
}

TEST(KgeTraining, StopHookEndsEarly) {
  auto data = toy_data();
  auto cfg = small_config();
  cfg.epochs = 5;
  auto m = KgeModel::create(data.shape(), cfg);
  std::vector<std::size_t> seen;
  const auto r = train_kge(m, data, [&](std::size_t e, double) { seen.push_back(e); },
                           [](std::size_t e) { return e == 2; });
  EXPECT_EQ(r.epoch_loss.size(), 2u);
  EXPECT_EQ(seen, (std::vector<std::size_t>{1, 2}));
}

TEST(KgeConfig, ValidationAndJson) {
  KgeConfig c;
  EXPECT_NO_THROW(c.validate());
  c.smoothing = 0.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.layers = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.dim = 32;
  c.layers = 3;
  c.literal_node_ids = false;
  auto back = kge_config_from_json(nlohmann::json::parse(to_json(c).dump()));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_THROW(kge_config_from_json({{"dimension", 3}}), ConfigError);
  EXPECT_THROW(kge_config_from_json({{"dim", "wide"}}), ConfigError);
}

// Independent ranker over explicit candidate lists: competitors are all
// non-gold candidates outside the filter; ties count half, rounded up.
std::size_t oracle_rank(const Vec& s, std::size_t gold, const std::set<std::size_t>* filter) {
  double rank = 1.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i == gold || (filter && filter->count(i))) continue;
    if (s[i] > s[gold]) rank += 1.0;
    if (s[i] == s[gold]) rank += 0.5;
  }
  return static_cast<std::size_t>(std::ceil(rank - 1e-9));
}

LinkMetrics oracle_metrics(const std::vector<std::size_t>& ranks) {
  LinkMetrics m;
  for (std::size_t r : ranks) {
    m.mrr += 1.0 / r;
    m.h1 += r == 1;
    m.h10 += r <= 10;
  }
  m.mrr /= ranks.size();
  m.h1 /= ranks.size();
  m.h10 /= ranks.size();
  m.queries = ranks.size();
  return m;
}

void expect_metrics(const LinkMetrics& a, const LinkMetrics& b) {
  EXPECT_NEAR(a.mrr, b.mrr, 1e-12);
  EXPECT_NEAR(a.h1, b.h1, 1e-12);
  EXPECT_NEAR(a.h10, b.h10, 1e-12);
  EXPECT_EQ(a.queries, b.queries);
}

struct ToyScores {
  std::size_t nodes;
  std::map<std::pair<std::size_t, std::size_t>, Vec> table;  // (head, relation) -> scores
  ScoreFn fn() const {
    return [this](std::span<const std::size_t> h, std::span<const std::size_t> r, const std::vector<QualifierIndex>&) {
      std::vector<Vec> out;
      for (std::size_t i = 0; i < h.size(); ++i) out.push_back(table.at({h[i], r[i]}));
      return out;
    };
  }
};

TEST(KgeEvaluation, SixTripletToyMatchesExhaustiveOracle) {
  const std::vector<TripletRecord> base = {{0, 0, 1, {}, false}, {0, 0, 2, {}, false}, {1, 1, 3, {}, false},
                                           {2, 0, 4, {}, false}, {3, 1, 0, {}, false}, {4, 0, 0, {}, false}};
  ToyScores ts{5, {}};
  std::mt19937_64 rng(16);
  for (const auto& r : add_reciprocals(base, 2)) {
    Vec s(5);
    for (double& x : s) x = static_cast<double>(rng() % 4);  // coarse grid forces ties
    ts.table[{r.head, r.relation}] = s;
  }
  Splits splits;
  splits.train = add_reciprocals(base, 2);
  auto filter = build_filter_index(splits);
  for (const FilterIndex* f : {static_cast<const FilterIndex*>(nullptr), static_cast<const FilterIndex*>(&filter)}) {
    auto e = evaluate_link_prediction(ts.fn(), splits.train, 2, f);
    std::vector<std::size_t> obj, sub;
    for (const auto& r : base) {
      obj.push_back(oracle_rank(ts.table.at({r.head, r.relation}), r.tail, f ? &f->positives(r.head, r.relation) : nullptr));
      sub.push_back(oracle_rank(ts.table.at({r.tail, r.relation + 2}), r.head, f ? &f->positives(r.tail, r.relation + 2) : nullptr));
    }
    std::vector<std::size_t> both = obj;
    both.insert(both.end(), sub.begin(), sub.end());
    expect_metrics(e.object, oracle_metrics(obj));
    expect_metrics(e.subject, oracle_metrics(sub));
    expect_metrics(e.triplet, oracle_metrics(both));
  }
}

TEST(KgeEvaluation, PerfectScorerAndFilteringOnlyHelps) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 6 + rng() % 10;
    std::vector<TripletRecord> base;
    for (int i = 0; i < 12; ++i) base.push_back({rng() % n, rng() % 2, rng() % n, {}, false});
    std::sort(base.begin(), base.end());
    base.erase(std::unique(base.begin(), base.end()), base.end());
    Splits splits;
    splits.train = add_reciprocals(base, 2);
    auto filter = build_filter_index(splits);

    ToyScores random{n, {}};
    for (const auto& r : splits.train) {
      Vec s(n);
      for (double& x : s) x = static_cast<double>(rng() % 5);
      random.table[{r.head, r.relation}] = s;
    }
    auto raw = evaluate_link_prediction(random.fn(), splits.train, 2, nullptr);
    auto filtered = evaluate_link_prediction(random.fn(), splits.train, 2, &filter);
    EXPECT_GE(filtered.triplet.mrr + 1e-12, raw.triplet.mrr);
    EXPECT_GE(filtered.triplet.h1 + 1e-12, raw.triplet.h1);
    for (const auto& [key, s] : random.table) {
      for (std::size_t t : filter.positives(key.first, key.second)) {
        EXPECT_LE(filtered_rank(s, t, &filter.positives(key.first, key.second)), filtered_rank(s, t, nullptr));
      }
    }

    // Gold strictly highest: every true tail outscores every other candidate.
    ToyScores perfect{n, {}};
    for (const auto& r : splits.train) {
      Vec s(n, 0.0);
      for (std::size_t t : filter.positives(r.head, r.relation)) s[t] = 1.0;
      perfect.table[{r.head, r.relation}] = s;
    }
    auto p = evaluate_link_prediction(perfect.fn(), splits.train, 2, &filter);
    EXPECT_DOUBLE_EQ(p.triplet.mrr, 1.0);
    EXPECT_DOUBLE_EQ(p.triplet.h1, 1.0);
    EXPECT_DOUBLE_EQ(p.triplet.h10, 1.0);
  }
}

TEST(KgeEvaluation, CandidatePermutationInvariance) {
  std::mt19937_64 rng(18);
  const std::size_t n = 12;
  std::vector<TripletRecord> base;
  for (int i = 0; i < 15; ++i) base.push_back({rng() % n, rng() % 2, rng() % n, {}, false});
  std::sort(base.begin(), base.end());
  base.erase(std::unique(base.begin(), base.end()), base.end());
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);

  Splits a, b;
  a.train = add_reciprocals(base, 2);
  std::vector<TripletRecord> moved;
  for (auto r : base) moved.push_back({perm[r.head], r.relation, perm[r.tail], {}, false});
  b.train = add_reciprocals(moved, 2);
  ToyScores sa{n, {}}, sb{n, {}};
  for (const auto& r : a.train) {
    Vec s(n), t(n);
    for (double& x : s) x = static_cast<double>(rng() % 6);
    for (std::size_t i = 0; i < n; ++i) t[perm[i]] = s[i];
    sa.table[{r.head, r.relation}] = s;
    sb.table[{perm[r.head], r.relation}] = t;
  }
  auto fa = build_filter_index(a), fb = build_filter_index(b);
  auto ea = evaluate_link_prediction(sa.fn(), a.train, 2, &fa);
  auto eb = evaluate_link_prediction(sb.fn(), b.train, 2, &fb);
  expect_metrics(ea.triplet, eb.triplet);
  expect_metrics(ea.object, eb.object);
}

TEST(KgeEvaluation, RandomToyGraphsMatchExhaustiveOracle) {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t n = 5 + rng() % 46, rels = 1 + rng() % 3;
    std::vector<TripletRecord> base;
    const std::size_t m = 4 + rng() % 60;
    for (std::size_t i = 0; i < m; ++i) base.push_back({rng() % n, rng() % rels, rng() % n, {}, false});
    std::sort(base.begin(), base.end());
    base.erase(std::unique(base.begin(), base.end()), base.end());
    std::shuffle(base.begin(), base.end(), rng);
    std::vector<TripletRecord> train_base, test_base;
    for (std::size_t i = 0; i < base.size(); ++i) (i % 4 == 3 ? test_base : train_base).push_back(base[i]);
    if (test_base.empty()) test_base.push_back(train_base.back());
    Splits splits;
    splits.train = add_reciprocals(train_base, rels);
    splits.test = add_reciprocals(test_base, rels);

    // Known positives gathered directly from the records, reciprocals included.
    std::map<std::pair<std::size_t, std::size_t>, std::set<std::size_t>> known;
    for (const auto* part : {&train_base, &test_base}) {
      for (const auto& r : *part) {
        known[{r.head, r.relation}].insert(r.tail);
        known[{r.tail, r.relation + rels}].insert(r.head);
      }
    }
    ToyScores ts{n, {}};
    for (const auto& [key, unused] : known) {
      Vec s(n);
      for (double& x : s) x = static_cast<double>(rng() % 4);
      ts.table[key] = s;
    }
    const auto filter = build_filter_index(splits);
    for (bool filtered : {false, true}) {
      auto e = evaluate_link_prediction(ts.fn(), splits.test, rels, filtered ? &filter : nullptr);
      std::vector<std::size_t> obj, sub;
      for (const auto& r : splits.test) {
        if (r.relation >= rels) continue;
        const std::pair<std::size_t, std::size_t> fwd{r.head, r.relation}, bwd{r.tail, r.relation + rels};
        obj.push_back(oracle_rank(ts.table.at(fwd), r.tail, filtered ? &known.at(fwd) : nullptr));
        sub.push_back(oracle_rank(ts.table.at(bwd), r.head, filtered ? &known.at(bwd) : nullptr));
      }
      std::vector<std::size_t> both = obj;
      both.insert(both.end(), sub.begin(), sub.end());
      expect_metrics(e.object, oracle_metrics(obj));
      expect_metrics(e.subject, oracle_metrics(sub));
      expect_metrics(e.triplet, oracle_metrics(both));
    }
  }
}

TEST(KgeEvaluation, ModelWithoutMessagePassingStillScores) {
  auto data = toy_data(20);
  auto cfg = small_config(4, 0);
  auto m = KgeModel::create(data.shape(), cfg);
  Tensor lit = m.encode_literals(data.features);
  Tensor states = m.node_states(data);
  EXPECT_EQ(Vec(lit.data().begin(), lit.data().end()), Vec(states.data().begin(), states.data().end()));
  auto e = evaluate_kge(m, data, Split::kTrain);
  EXPECT_EQ(e.object.queries, data.splits.train.size() / 2);
  EXPECT_GT(e.triplet.mrr, 0.0);
}

TEST(KgeCheckpoint, RoundTripIsExact) {
  auto data = toy_data(20);
  auto cfg = small_config(4, 2);
  auto m = KgeModel::create(data.shape(), cfg);
  randomize(m, 19);
  const auto path = std::filesystem::temp_directory_path() / "hats_kge_roundtrip.ckpt";
  m.save(path, {{"note", "x"}});
  auto back = KgeModel::load(path);
  ASSERT_EQ(back.params().size(), m.params().size());
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    const auto& s = m.params().slots()[i];
    const auto& t = back.params().get(s.name);
    EXPECT_EQ(Vec(s.value.data().begin(), s.value.data().end()), Vec(t.data().begin(), t.data().end())) << s.name;
  }
  EXPECT_EQ(to_json(back.config()), to_json(m.config()));
  EXPECT_EQ(to_json(evaluate_kge(back, data, Split::kTrain)), to_json(evaluate_kge(m, data, Split::kTrain)));
  std::filesystem::remove(path);
}

TEST(KgeEmbeddings, ExportImportRoundTrip) {
  auto data = toy_data();
  auto m = KgeModel::create(data.shape(), small_config(4));
  const auto text = export_embeddings(m, data);
  auto back = import_embeddings(text);
  ASSERT_EQ(back.size(), 4u);
  NoGradGuard guard;
  Tensor states = m.node_states(data);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(back.at(data.vocab.nodes[i]), row(states, i));
  EXPECT_THROW(import_embeddings("{\"id\": 1}\n"), ParseError);
  EXPECT_THROW(import_embeddings("{\"id\":\"a\",\"embedding\":[1]}\n{\"id\":\"b\",\"embedding\":[1,2]}\n"), ParseError);
}

TEST(KgeData, PlantedGraphShape) {
  auto data = planted_kge_data(7);
  EXPECT_EQ(data.features.node_count, 500u);
  const std::size_t base = data.splits.train.size() / 2 + data.splits.valid.size() / 2 + data.splits.test.size() / 2;
  EXPECT_GT(base, 2800u);
  EXPECT_LT(base, 3200u);
  auto again = planted_kge_data(7);
  EXPECT_EQ(again.splits.test, data.splits.test);
}

}  // namespace
}  // namespace hats
