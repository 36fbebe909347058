#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "hats/contract.hpp"
#include "hats/error.hpp"
#include "hats/ops.hpp"
#include "hats/scene.hpp"

namespace hats {

namespace {

std::vector<const PreparedScene*> pointers(std::span<const PreparedScene> scenes) {
  std::vector<const PreparedScene*> out;
  for (const auto& s : scenes) out.push_back(&s);
  return out;
}

std::vector<double> inverse_frequency(const std::vector<std::size_t>& counts, const std::string& head,
                                      std::vector<std::string>* warnings) {
  std::vector<double> w(counts.size(), 0.0);
  double largest = 0.0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c]) {
      w[c] = 1.0 / static_cast<double>(counts[c]);
      largest = std::max(largest, w[c]);
    }
  }
  if (largest == 0.0) largest = 1.0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (!counts[c]) {
      w[c] = largest;
      if (warnings) warnings->push_back(head + " class " + std::to_string(c) + " is absent from training; weight clamped");
    }
  }
  const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
  for (auto& x : w) x /= mean;
  return w;
}

std::vector<double> softmax_row(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) z += p[i] = std::exp(logits[i] - top);
  for (auto& x : p) x /= z;
  return p;
}

template <std::size_t N>
std::size_t argmax(const std::array<double, N>& p) {
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

template <std::size_t N>
void fill_probs(std::array<double, N>& dst, const Tensor& logits, std::size_t row) {
  const auto p = softmax_row(logits.data().subspan(row * N, N));
  std::copy(p.begin(), p.end(), dst.begin());
}

std::vector<ScenePrediction> run_predictions(const SceneModel& model, std::span<const PreparedScene> scenes,
                                             const KgeContext& kge, Selection selection) {
  NoGradGuard no_grad;
  std::vector<ScenePrediction> out;
  const auto ptrs = pointers(scenes);
  constexpr std::size_t kChunk = 16;
  for (std::size_t from = 0; from < ptrs.size(); from += kChunk) {
    const std::span<const PreparedScene* const> chunk(ptrs.data() + from, std::min(kChunk, ptrs.size() - from));
    const SceneBatchOutput b = forward_scenes(model, chunk, kge, selection);
    const std::size_t first = out.size();
    std::size_t offset = 0;
    for (const PreparedScene* s : chunk) {
      ScenePrediction p;
      p.id = s->id;
      for (std::size_t o = 0; o < s->size(); ++o) {
        EntityPrediction e;
        e.entity = o;
        e.relevance = model.config().use_eres ? softmax_row(b.relevance.data().subspan(2 * (offset + o), 2))[1] : 1.0;
        p.entities.push_back(e);
      }
      offset += s->size();
      out.push_back(std::move(p));
    }
    for (std::size_t r = 0; r < b.rows.size(); ++r) {
      auto& e = out[first + b.rows[r].first].entities[b.rows[r].second];
      e.selected = true;
      fill_probs(e.mechanism, b.heads.mechanism, r);
      fill_probs(e.side, b.heads.side, r);
      fill_probs(e.severity, b.heads.severity, r);
    }
  }
  return out;
}

const EntityLabels& gold(const PreparedScene& s, std::size_t o) {
  if (!s.labels[o]) throw ValidationError("scene " + s.id + " has no labels");
  return *s.labels[o];
}

double mechanism_accuracy(const std::vector<ScenePrediction>& preds, std::span<const PreparedScene> scenes) {
  std::size_t n = 0, hit = 0;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    for (const auto& e : preds[s].entities) {
      if (!e.selected) continue;
      ++n;
      hit += e.argmax_mechanism() == gold(scenes[s], e.entity).mechanism;
    }
  }
  return n ? static_cast<double>(hit) / static_cast<double>(n) : 0.0;
}

// Ordinal hazard grade of a gold label: irrelevant 0, info and
// relevant_but_not_critical 1, caution 2, imminent 3.
constexpr std::array<int, 4> kSeverityGrade = {1, 2, 3, 1};

}  // namespace

std::size_t EntityPrediction::argmax_mechanism() const { return argmax(mechanism); }
std::size_t EntityPrediction::argmax_side() const { return argmax(side); }
std::size_t EntityPrediction::argmax_severity() const { return argmax(severity); }

void SceneTrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("scene lr must be positive");
  if (batch_scenes == 0) throw ConfigError("batch_scenes must be positive");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) throw ConfigError("warmup_fraction must lie in [0, 1]");
  if (!(eres_weight >= 0.0)) throw ConfigError("eres_weight must be non-negative");
  if (!(focal_gamma >= 0.0)) throw ConfigError("focal_gamma must be non-negative");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
}

nlohmann::ordered_json to_json(const SceneTrainConfig& c) {
  return {{"epochs", c.epochs},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"batch_scenes", c.batch_scenes},
          {"warmup_fraction", c.warmup_fraction},
          {"eres_weight", c.eres_weight},
          {"focal_gamma", c.focal_gamma},
          {"seed", c.seed}};
}

SceneTrainConfig scene_train_config_from_json(const nlohmann::json& j, SceneTrainConfig c) {
  if (j.is_null()) return c;
  if (!j.is_object()) throw ConfigError("scene training config must be an object");
  const auto defaults = to_json(c);
  for (const auto& [key, _] : j.items()) {
    if (!defaults.contains(key)) throw ConfigError("unknown scene training config key '" + key + "'");
  }
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.batch_scenes = j.value("batch_scenes", c.batch_scenes);
    c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
    c.eres_weight = j.value("eres_weight", c.eres_weight);
    c.focal_gamma = j.value("focal_gamma", c.focal_gamma);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad scene training config value: ") + e.what());
  }
  return c;
}

ClassWeights class_weights(std::span<const PreparedScene> train, std::vector<std::string>* warnings) {
  std::vector<std::size_t> rel(2, 0), mech(kMechanisms.size(), 0), side(kSides.size(), 0),
      sev(kSeverities.size(), 0);
  for (const auto& s : train) {
    for (std::size_t o = 0; o < s.size(); ++o) {
      const auto& l = gold(s, o);
      ++rel[l.relevant];
      if (!l.relevant) continue;
      ++mech[l.mechanism];
      ++side[l.side];
      ++sev[l.severity];
    }
  }
  ClassWeights w;
  w.eres = inverse_frequency(rel, "relevance", warnings);
  w.mechanism = inverse_frequency(mech, "mechanism", warnings);
  w.side = inverse_frequency(side, "side", warnings);
  w.severity = inverse_frequency(sev, "severity", warnings);
  return w;
}

SceneLosses scene_loss(const SceneModel& model, std::span<const PreparedScene* const> scenes,
                       const KgeContext& kge, const ClassWeights& weights, const SceneTrainConfig& config,
                       bool warmup) {
  const SceneBatchOutput b = forward_scenes(model, scenes, kge, Selection::kGold);
  if (!b.relevance.defined()) throw ValidationError("training batch has no entities");
  std::vector<std::size_t> rel, mech, side, sev;
  for (const PreparedScene* s : scenes) {
    for (std::size_t o = 0; o < s->size(); ++o) rel.push_back(gold(*s, o).relevant);
  }
  for (const auto& [s, o] : b.rows) {
    const auto& l = gold(*scenes[s], o);
    mech.push_back(l.mechanism);
    side.push_back(l.side);
    sev.push_back(l.severity);
  }
  SceneLosses l;
  l.eres = ops::softmax_focal_loss(b.relevance, rel, weights.eres, config.focal_gamma);
  if (b.rows.empty()) {
    l.mechanism = l.side = l.severity = Tensor::scalar(0.0);
  } else {
    l.mechanism = ops::softmax_focal_loss(b.heads.mechanism, mech, weights.mechanism, config.focal_gamma);
    l.side = ops::softmax_focal_loss(b.heads.side, side, weights.side, config.focal_gamma);
    l.severity = ops::softmax_focal_loss(b.heads.severity, sev, weights.severity, config.focal_gamma);
  }
  const Tensor heads = ops::add(ops::add(l.mechanism, l.side), l.severity);
  l.total = warmup ? ops::add(l.eres, ops::scale(heads, 0.0))
                   : ops::add(ops::scale(l.eres, config.eres_weight), heads);
  return l;
}

SceneTrainResult train_scene(SceneModel& model, std::span<const PreparedScene> train,
                             std::span<const PreparedScene> valid, const KgeContext& kge,
                             const SceneTrainConfig& config,
                             const std::function<void(const SceneEpochLog&)>& on_epoch) {
  config.validate();
  if (train.empty()) throw ValidationError("no training scenes");
  SceneTrainResult result;
  const ClassWeights weights = class_weights(train, &result.warnings);
  const std::span<const PreparedScene> selection_set = valid.empty() ? train : valid;
  const std::size_t warmup_epochs =
      static_cast<std::size_t>(std::llround(config.warmup_fraction * static_cast<double>(config.epochs)));

  std::mt19937_64 rng(config.seed ^ 0x5ce9e5ULL);
  AdamWConfig opt;
  opt.lr = config.lr;
  opt.weight_decay = config.weight_decay;
  opt.skip_missing_grads = true;
  auto order = pointers(train);
  std::vector<std::vector<double>> best;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    SceneEpochLog log;
    log.epoch = epoch + 1;
    log.warmup = epoch < warmup_epochs;
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t batches = 0;
    for (std::size_t from = 0; from < order.size(); from += config.batch_scenes) {
      const std::span<const PreparedScene* const> batch(order.data() + from,
                                                        std::min(config.batch_scenes, order.size() - from));
      const SceneLosses l = scene_loss(model, batch, kge, weights, config, log.warmup);
      const double total = l.total.item();
      if (!std::isfinite(total)) {
        throw DivergenceError("non-finite scene loss at epoch " + std::to_string(epoch + 1) + " (lr " +
                              format_number(config.lr) + ")");
      }
      model.params().clear_grads();
      l.total.backward();
      adamw_step(model.params(), opt);
      log.eres += l.eres.item();
      log.mechanism += l.mechanism.item();
      log.side += l.side.item();
      log.severity += l.severity.item();
      log.total += total;
      ++batches;
    }
    for (double* x : {&log.eres, &log.mechanism, &log.side, &log.severity, &log.total}) *x /= static_cast<double>(batches);
    log.valid_mechanism_accuracy =
        mechanism_accuracy(run_predictions(model, selection_set, kge, Selection::kGold), selection_set);
    const bool eligible = !log.warmup || warmup_epochs == config.epochs;
    if (eligible && log.valid_mechanism_accuracy > result.best_valid_mechanism_accuracy) {
      result.best_valid_mechanism_accuracy = log.valid_mechanism_accuracy;
      result.best_epoch = log.epoch;
      best.clear();
      for (const auto& slot : model.params().slots()) {
        best.emplace_back(slot.value.data().begin(), slot.value.data().end());
      }
    }
    result.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  auto& slots = model.params().slots();
  for (std::size_t i = 0; i < best.size(); ++i) {
    std::copy(best[i].begin(), best[i].end(), slots[i].value.mutable_data().begin());
  }
  return result;
}

std::vector<ScenePrediction> predict_scenes(const SceneModel& model, std::span<const PreparedScene> scenes,
                                            const KgeContext& kge) {
  return run_predictions(model, scenes, kge, Selection::kPredicted);
}

std::vector<ScenePrediction> predict_gold(const SceneModel& model, std::span<const PreparedScene> scenes,
                                          const KgeContext& kge) {
  return run_predictions(model, scenes, kge, Selection::kGold);
}

nlohmann::ordered_json to_json(const SceneEvaluation& e) {
  nlohmann::ordered_json j;
  j["relevance"] = to_json(e.relevance);
  j["mechanism_accuracy"] = e.mechanism_accuracy;
  j["side_accuracy"] = e.side_accuracy;
  j["severity_accuracy"] = e.severity_accuracy;
  j["end_to_end_mechanism_accuracy"] = e.end_to_end_mechanism_accuracy;
  for (const auto& [predicate, by_k] : e.retrieval) {
    for (const auto& [k, r] : by_k) {
      j["retrieval"][predicate][std::to_string(k)] = {{"R", r.recall}, {"mR", r.mean_recall}};
    }
  }
  for (const auto& [k, r] : e.hazard) {
    j["hazard"][std::to_string(k)] = {{"mAP", r.map}, {"MRR", r.mrr}, {"NDCG", r.ndcg}};
  }
  return j;
}

void SceneMetricConfig::validate() const {
  for (const auto* ks : {&retrieval_k, &ranking_k}) {
    if (ks->empty()) throw ConfigError("metric K sets must not be empty");
    for (std::size_t k : *ks) {
      if (k == 0) throw ConfigError("metric K values must be positive");
    }
  }
}

nlohmann::ordered_json to_json(const SceneMetricConfig& c) {
  return {{"retrieval_k", c.retrieval_k}, {"ranking_k", c.ranking_k}};
}

SceneMetricConfig scene_metric_config_from_json(const nlohmann::json& j, SceneMetricConfig c) {
  if (!j.is_object()) throw ConfigError("metric config must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key != "retrieval_k" && key != "ranking_k") throw ConfigError("unknown metric config key '" + key + "'");
    try {
      (key == "retrieval_k" ? c.retrieval_k : c.ranking_k) = value.get<std::vector<std::size_t>>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("metric config '" + key + "' must be a list of positive integers");
    }
  }
  c.validate();
  return c;
}

SceneEvaluation evaluate_scenes(const SceneModel& model, std::span<const PreparedScene> scenes,
                                const KgeContext& kge, const SceneMetricConfig& metrics) {
  metrics.validate();
  if (scenes.empty()) throw ValidationError("no scenes to evaluate");
  SceneEvaluation ev;
  const auto predicted = predict_scenes(model, scenes, kge);
  const auto teacher = predict_gold(model, scenes, kge);
  const auto everything = run_predictions(model, scenes, kge, Selection::kAll);

  std::vector<double> scores;
  std::vector<int> labels;
  std::size_t relevant = 0, mech_hit = 0, side_hit = 0, sev_hit = 0, union_size = 0, e2e_hit = 0;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    for (std::size_t o = 0; o < scenes[s].size(); ++o) {
      const auto& l = gold(scenes[s], o);
      const auto& p = predicted[s].entities[o];
      scores.push_back(p.relevance);
      labels.push_back(l.relevant);
      if (l.relevant) {
        const auto& t = teacher[s].entities[o];
        ++relevant;
        mech_hit += t.argmax_mechanism() == l.mechanism;
        side_hit += t.argmax_side() == l.side;
        sev_hit += t.argmax_severity() == l.severity;
      }
      if (l.relevant || p.selected) {
        ++union_size;
        e2e_hit += l.relevant && p.selected && p.argmax_mechanism() == l.mechanism;
      }
    }
  }
  ev.relevance = classification_report(scores, labels);
  auto ratio = [](std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; };
  ev.mechanism_accuracy = ratio(mech_hit, relevant);
  ev.side_accuracy = ratio(side_hit, relevant);
  ev.severity_accuracy = ratio(sev_hit, relevant);
  ev.end_to_end_mechanism_accuracy = ratio(e2e_hit, union_size);

  // Per-entity top-K predicates of the selected entities, ranked within a
  // scene by relevance times class probability.
  auto retrieval = [&](const char* name, auto probs_of, auto gold_of, auto names) {
    RetrievalReport report;
    for (std::size_t k : metrics.retrieval_k) {
      std::vector<SceneTriplets> all;
      std::size_t predictions = 0;
      for (std::size_t s = 0; s < scenes.size(); ++s) {
        SceneTriplets st;
        for (std::size_t o = 0; o < scenes[s].size(); ++o) {
          const auto& l = gold(scenes[s], o);
          const std::string id = std::to_string(o);
          if (l.relevant) st.gold.push_back({id, names[gold_of(l)]});
          const auto& p = predicted[s].entities[o];
          if (!p.selected) continue;
          const auto probs = probs_of(p);
          std::vector<std::size_t> idx(probs.size());
          std::iota(idx.begin(), idx.end(), 0);
          std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
          for (std::size_t i = 0; i < std::min(k, idx.size()); ++i) {
            st.predicted.push_back({id, names[idx[i]], p.relevance * probs[idx[i]]});
          }
        }
        predictions = std::max(predictions, st.predicted.size());
        if (!st.gold.empty()) all.push_back(std::move(st));
      }
      if (all.empty()) continue;
      report[k] = retrieval_recall(all, {std::max<std::size_t>(predictions, 1)}).begin()->second;
    }
    ev.retrieval[name] = report;
  };
  retrieval("mechanism", [](const EntityPrediction& p) { return p.mechanism; },
            [](const EntityLabels& l) { return l.mechanism; }, kMechanisms);
  retrieval("side", [](const EntityPrediction& p) { return p.side; }, [](const EntityLabels& l) { return l.side; },
            kSides);
  retrieval("severity", [](const EntityPrediction& p) { return p.severity; },
            [](const EntityLabels& l) { return l.severity; }, kSeverities);

  std::vector<RankedList> lists;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    std::vector<std::pair<double, int>> items;
    bool any = false;
    for (std::size_t o = 0; o < scenes[s].size(); ++o) {
      const auto& e = everything[s].entities[o];
      double expected = 0.0;
      for (std::size_t c = 0; c < kSeverities.size(); ++c) expected += e.severity[c] * kSeverityGrade[c];
      const auto& l = gold(scenes[s], o);
      const int grade = l.relevant ? kSeverityGrade[l.severity] : 0;
      any = any || grade > 0;
      items.emplace_back(predicted[s].entities[o].relevance * expected, grade);
    }
    if (!any) continue;
    std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    RankedList list;
    for (const auto& it : items) list.relevance.push_back(it.second);
    lists.push_back(std::move(list));
  }
  if (!lists.empty()) ev.hazard = ranking_report(lists, metrics.ranking_k);
  return ev;
}

}  // namespace hats
