// Command-line front end: synthetic tables -> KG -> KGE -> scene heads ->
// metrics -> traffic scene graphs. Every subcommand reads and writes artifacts
// under --out and records a manifest.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hats/archive.hpp"
#include "hats/error.hpp"
#include "hats/graph.hpp"
#include "hats/kg_build.hpp"
#include "hats/kge.hpp"
#include "hats/scene.hpp"
#include "hats/synth_tables.hpp"
#include "hats/triplets.hpp"
#include "hats/tsg.hpp"
#include "json.hpp"

extern char** environ;

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace hats::cli {
namespace {

constexpr const char* kVersion = "1.0.0";

struct RunConfig {
  std::uint64_t seed = 1;
  std::string data_dir = HATS_DATA_DIR;
  std::string out_dir = "runs/default";
  std::size_t threads = 1;
  SynthScale synth{100, 3, 2};
  KgeConfig kge;
  SceneSynthConfig scenes;
  SceneModelConfig scene_model;
  SceneTrainConfig scene_train;
  SceneMetricConfig metrics;
};

KgeConfig default_kge() {
  KgeConfig c;
  c.epochs = 5;
  return c;
}

ordered_json to_json(const SynthScale& s) {
  return {{"crashes", s.crashes}, {"vehicles_per_crash", s.vehicles_per_crash},
          {"occupants_per_vehicle", s.occupants_per_vehicle}};
}

SynthScale synth_from_json(const json& j, SynthScale s) {
  if (!j.is_object()) throw ConfigError("synth config must be an object");
  for (const auto& [key, value] : j.items()) {
    std::size_t* field = key == "crashes"                 ? &s.crashes
                         : key == "vehicles_per_crash"    ? &s.vehicles_per_crash
                         : key == "occupants_per_vehicle" ? &s.occupants_per_vehicle
                                                          : nullptr;
    if (!field) throw ConfigError("unknown synth config key '" + key + "'");
    if (!value.is_number_unsigned()) throw ConfigError("synth config '" + key + "' must be a non-negative integer");
    *field = value.get<std::size_t>();
  }
  return s;
}

ordered_json to_json(const RunConfig& c) {
  return {{"seed", c.seed},
          {"data_dir", c.data_dir},
          {"out_dir", c.out_dir},
          {"threads", c.threads},
          {"synth", to_json(c.synth)},
          {"kge", hats::to_json(c.kge)},
          {"scenes", hats::to_json(c.scenes)},
          {"scene_model", hats::to_json(c.scene_model)},
          {"scene_train", hats::to_json(c.scene_train)},
          {"metrics", hats::to_json(c.metrics)}};
}

const std::vector<std::string>& sections() {
  static const std::vector<std::string> s = {"scene_model", "scene_train", "metrics", "scenes", "synth", "kge"};
  return s;
}

json parse_override(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return text;
  }
}

// HATS_SEED=7, HATS_KGE_EPOCHS=3, HATS_SCENE_TRAIN_LR=0.001, ...
void apply_environment(json& j) {
  for (char** env = environ; *env; ++env) {
    const std::string entry = *env;
    if (entry.rfind("HATS_", 0) != 0) continue;
    const auto eq = entry.find('=');
    std::string key = entry.substr(5, eq - 5);
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char ch) { return std::tolower(ch); });
    const json value = parse_override(entry.substr(eq + 1));
    if (key == "seed" || key == "data_dir" || key == "out_dir" || key == "threads") {
      j[key] = value;
      continue;
    }
    bool matched = false;
    for (const auto& section : sections()) {
      if (key.rfind(section + "_", 0) == 0 && key.size() > section.size() + 1) {
        j[section][key.substr(section.size() + 1)] = value;
        matched = true;
        break;
      }
    }
    if (!matched) throw ConfigError("unrecognized environment override " + entry.substr(0, eq));
  }
}

template <typename T>
T number(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config '") + key + "' has the wrong type");
  }
}

RunConfig load_config(const std::string& path) {
  RunConfig base;
  base.kge = default_kge();
  json j = json::parse(to_json(base).dump());
  if (!path.empty()) {
    json file;
    try {
      file = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
      throw ParseError("config " + path + ": " + e.what());
    }
    if (!file.is_object()) throw ConfigError("config " + path + " must be a JSON object");
    static const std::set<std::string> top = {"seed", "data_dir", "out_dir", "threads", "synth", "kge",
                                              "scenes", "scene_model", "scene_train", "metrics"};
    for (const auto& [key, value] : file.items()) {
      if (!top.count(key)) throw ConfigError("unknown config key '" + key + "'");
    }
    j.merge_patch(file);
  }
  apply_environment(j);

  RunConfig c;
  c.seed = number<std::uint64_t>(j, "seed");
  c.threads = number<std::size_t>(j, "threads");
  c.data_dir = number<std::string>(j, "data_dir");
  c.out_dir = number<std::string>(j, "out_dir");
  c.synth = synth_from_json(j["synth"], base.synth);
  c.kge = kge_config_from_json(j["kge"], base.kge);
  c.scenes = scene_synth_config_from_json(j["scenes"], base.scenes);
  c.scene_model = scene_model_config_from_json(j["scene_model"], base.scene_model);
  c.scene_train = scene_train_config_from_json(j["scene_train"], base.scene_train);
  c.metrics = scene_metric_config_from_json(j["metrics"], base.metrics);
  return c;
}

// The run seed drives every component; scene dimensions follow the generator
// and the KGE width.
void finalize(RunConfig& c) {
  if (c.threads == 0) throw ConfigError("threads must be at least 1");
  c.kge.seed = c.scene_train.seed = c.scene_model.seed = c.scenes.seed = c.seed;
  c.scene_model.rgb_channels = c.scenes.rgb_channels;
  c.scene_model.disp_channels = c.scenes.disp_channels;
  c.scene_model.embed_dim = c.scenes.embed_dim;
  c.scene_model.kge_dim = c.kge.dim;
  c.kge.validate();
  c.scene_model.validate();
  c.scene_train.validate();
  c.metrics.validate();
}

std::string fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

class Run {
 public:
  Run(std::string command, RunConfig config) : command_(std::move(command)), config_(std::move(config)) {}

  const RunConfig& config() const { return config_; }
  RunConfig& mutable_config() { return config_; }
  fs::path out(const std::string& rel) const { return fs::path(config_.out_dir) / rel; }

  fs::path input(const std::string& rel, const char* producer) {
    const fs::path p = out(rel);
    if (!fs::exists(p)) throw IoError("missing input " + p.string() + " (run '" + producer + "' first)");
    inputs_.push_back(rel);
    return p;
  }
  void write(const std::string& rel, const std::string& text) {
    write_text_file(out(rel), text);
    outputs_.push_back(rel);
  }
  void produced(const std::string& rel) { outputs_.push_back(rel); }
  void note(const std::string& key, ordered_json value) { notes_[key] = std::move(value); }

  void finish(const std::string& name) {
    const ordered_json cfg = to_json(config_);
    ordered_json m;
    m["command"] = command_;
    m["config_hash"] = fnv1a(cfg.dump());
    m["seed"] = config_.seed;
    m["threads"] = config_.threads;
    m["versions"] = {{"hats", kVersion},
                     {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                     {"cli11", CLI11_VERSION},
                     {"spdlog", std::to_string(SPDLOG_VER_MAJOR) + "." + std::to_string(SPDLOG_VER_MINOR) + "." +
                                    std::to_string(SPDLOG_VER_PATCH)}};
    m["config"] = cfg;
    m["inputs"] = inputs_;
    m["outputs"] = outputs_;
    if (!notes_.empty()) m["notes"] = notes_;
    write_text_file(out("manifests/" + name + ".json"), dump(m));
  }

 private:
  std::string command_;
  RunConfig config_;
  std::vector<std::string> inputs_, outputs_;
  ordered_json notes_ = ordered_json::object();
};

ContractSet load_contracts(const RunConfig& c) {
  const fs::path p = fs::path(c.data_dir) / "contracts.json";
  if (!fs::exists(p)) return default_contracts();
  auto contracts = contracts_from_json(ordered_json::parse(read_text_file(p)));
  validate_contracts(contracts);
  return contracts;
}

BridgeMapping load_mapping(const RunConfig& c) {
  const fs::path p = fs::path(c.data_dir) / "bridge_mapping.json";
  if (!fs::exists(p)) return default_bridge_mapping();
  return bridge_mapping_from_json(read_json(p));
}

// ---- KG branch --------------------------------------------------------------

void gen_synth(Run& run) {
  const auto& c = run.config();
  const auto contracts = load_contracts(c);
  const auto ds = generate_synthetic_dataset(c.seed, c.synth, contracts, default_schema(), load_mapping(c));
  for (const auto& [table, bytes] : ds.tables.csv) run.write("tables/" + table + ".csv", bytes);
  run.write("tables/bridge_mapping.json", ds.tables.mapping.dump(2) + "\n");
  const ordered_json truth = {{"nodes", ds.truth.nodes}, {"edges", ds.truth.edges}, {"rows", ds.truth.rows},
                              {"total_nodes", ds.truth.total_nodes()}, {"total_edges", ds.truth.total_edges()}};
  run.write("tables/truth.json", dump(truth));
  spdlog::info("generated {} crashes into {}", c.synth.crashes, run.out("tables").string());
}

PropertyGraph load_graph(Run& run) {
  return import_ndjson(read_text_file(run.input("kg/graph.ndjson", "build-kg")));
}

void build_kg(Run& run) {
  const auto contracts = load_contracts(run.config());
  TableSet tables;
  for (const auto& t : contracts.tables) tables.csv[t.table] = read_text_file(run.input("tables/" + t.table + ".csv", "gen-synth"));
  tables.mapping = read_json(run.input("tables/bridge_mapping.json", "gen-synth"));
  const auto result = ingest_dataset(tables, contracts);
  run.write("kg/graph.ndjson", export_ndjson(result.graph));
  run.write("kg/stats.json", dump(stats_to_json(result.stages, result.graph.schema())));
  std::size_t rejected = 0;
  for (const auto& [table, decoded] : result.decoded) {
    if (decoded.rejects.empty()) continue;
    rejected += decoded.rejects.size();
    run.write("kg/rejects/" + table + ".csv", rejects_csv(table, decoded.rejects));
  }
  const std::string hash = graph_hash(result.graph);
  run.note("graph_hash", hash);
  run.note("rejected_rows", rejected);
  spdlog::info("graph {}: {} nodes, {} edges, {} rejected rows", hash, result.graph.nodes().size(),
               result.graph.edges().size(), rejected);
}

void validate_kg(Run& run) {
  const auto g = load_graph(run);
  const auto report = validate_coherence(g);
  run.write("kg/coherence.json", dump(report.to_json()));
  run.note("all_passed", report.all_passed());
  if (report.all_passed()) {
    spdlog::info("all {} coherence rules pass", report.results.size());
    return;
  }
  std::string failed;
  for (const auto& c : report.failed_categories()) failed += (failed.empty() ? "" : ",") + c;
  throw ValidationError("coherence rules failed: " + failed);
}

void export_triplets_cmd(Run& run) {
  const auto g = load_graph(run);
  const auto set = export_triplets(g);
  const auto splits = split_811(set.records, run.config().seed);
  for (Split s : {Split::kTrain, Split::kValid, Split::kTest}) {
    run.write(std::string("triplets/") + split_name(s) + ".tsv", triplets_tsv(set.vocab, splits.get(s)));
  }
  run.write("triplets/splits.json", dump(split_manifest(splits)));
  spdlog::info("{} triplets split {} / {} / {}", set.records.size(), splits.train.size(), splits.valid.size(),
               splits.test.size());
}

KgeData kge_data(const PropertyGraph& g, std::uint64_t seed) {
  return make_kge_data(export_triplets(g), node_features_from_graph(g, feature_vocab_from_graph(g)), seed);
}

void train_kge_cmd(Run& run) {
  const auto& c = run.config();
  const auto g = load_graph(run);
  const auto data = kge_data(g, c.seed);
  auto model = KgeModel::create(data.shape(), c.kge);
  const auto result = train_kge(model, data, [&](std::size_t epoch, double loss) {
    spdlog::info("kge epoch {}/{} loss {:.6f}", epoch, c.kge.epochs, loss);
  });
  const std::string hash = graph_hash(g);
  model.save(run.out("kge/model.bin"), {{"graph_hash", hash}, {"split_seed", c.seed}});
  run.produced("kge/model.bin");
  run.produced("kge/model.bin.json");
  run.write("kge/train_log.json", dump({{"epoch_loss", result.epoch_loss}}));
  run.write("kge/embeddings.ndjson", export_embeddings(model, data));
}

void eval_kge(Run& run) {
  const auto g = load_graph(run);
  const fs::path ckpt = run.input("kge/model.bin", "train-kge");
  const auto manifest = read_manifest(ckpt);
  const auto extra = manifest.value("extra", ordered_json::object());
  if (extra.value("graph_hash", "") != graph_hash(g)) {
    throw ValidationError("KGE checkpoint was trained on a different graph");
  }
  const auto model = KgeModel::load(ckpt);
  const auto data = kge_data(g, extra.value("split_seed", run.config().seed));
  const ordered_json metrics = {{"valid", hats::to_json(evaluate_kge(model, data, Split::kValid))},
                                {"test", hats::to_json(evaluate_kge(model, data, Split::kTest))}};
  run.write("metrics/kge.json", dump(metrics));
  spdlog::info("kge test filtered MRR {:.4f} H@10 {:.4f}", metrics["test"]["triplet"]["mrr"].get<double>(),
               metrics["test"]["triplet"]["h10"].get<double>());
}

// ---- scene branch -----------------------------------------------------------

constexpr std::array<const char*, 3> kSceneSplits = {"train", "valid", "test"};

void gen_scenes(Run& run) {
  const auto splits = generate_scenes(run.config().scenes);
  ordered_json index;
  for (const char* name : kSceneSplits) {
    const auto& scenes = std::string(name) == "train" ? splits.train
                         : std::string(name) == "valid" ? splits.valid
                                                        : splits.test;
    index[name] = ordered_json::array();
    for (const auto& s : scenes) {
      const std::string rel = std::string("scenes/") + name + "/" + s.id + ".bin";
      save_scene(run.out(rel), s);
      run.produced(rel);
      index[name].push_back(s.id);
    }
  }
  run.write("scenes/index.json", dump(index));
  spdlog::info("scenes {} / {} / {}", splits.train.size(), splits.valid.size(), splits.test.size());
}

std::vector<SceneSample> load_split(Run& run, const std::string& split) {
  const auto index = read_json(run.input("scenes/index.json", "gen-scenes"));
  if (!index.contains(split)) throw ValidationError("scene index has no '" + split + "' split");
  std::vector<SceneSample> out;
  for (const auto& id : index[split]) {
    out.push_back(load_scene(run.out("scenes/" + split + "/" + id.get<std::string>() + ".bin")));
  }
  return out;
}

std::vector<PreparedScene> prepare(const std::vector<SceneSample>& samples) {
  std::vector<PreparedScene> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(prepare_scene(s));
  return out;
}

KgeContext load_kge_context(Run& run) {
  return KgeContext::from_embeddings(import_embeddings(read_text_file(run.input("kge/embeddings.ndjson", "train-kge"))));
}

SceneModelConfig variant_config(SceneModelConfig c, const std::string& variant) {
  if (variant == "no_kge") c.use_kge = false;
  if (variant == "no_eres") c.use_eres = false;
  return c;
}

void train_heads(Run& run, const std::string& variant) {
  const auto& c = run.config();
  const auto kge = load_kge_context(run);
  auto mc = variant_config(c.scene_model, variant);
  if (kge.dim != mc.kge_dim) {
    throw ConfigError("KGE embeddings are " + std::to_string(kge.dim) + "-dimensional, config expects " +
                      std::to_string(mc.kge_dim));
  }
  const auto train = prepare(load_split(run, "train"));
  const auto valid = prepare(load_split(run, "valid"));
  auto model = SceneModel::create(mc);
  const auto result = train_scene(model, train, valid, kge, c.scene_train, [&](const SceneEpochLog& e) {
    spdlog::info("heads[{}] epoch {}{} loss {:.5f} valid mechanism {:.3f}", variant, e.epoch, e.warmup ? " (warm-up)" : "",
                 e.total, e.valid_mechanism_accuracy);
  });
  for (const auto& w : result.warnings) spdlog::warn("{}", w);
  const std::string dir = "heads/" + variant + "/";
  model.save(run.out(dir + "model.bin"), {{"variant", variant}, {"best_epoch", result.best_epoch}});
  run.produced(dir + "model.bin");
  run.produced(dir + "model.bin.json");
  ordered_json log = ordered_json::array();
  for (const auto& e : result.epochs) {
    log.push_back({{"epoch", e.epoch}, {"warmup", e.warmup}, {"eres", e.eres}, {"mechanism", e.mechanism},
                   {"side", e.side}, {"severity", e.severity}, {"total", e.total},
                   {"valid_mechanism_accuracy", e.valid_mechanism_accuracy}});
  }
  run.write(dir + "train_log.json", dump({{"best_epoch", result.best_epoch},
                                          {"best_valid_mechanism_accuracy", result.best_valid_mechanism_accuracy},
                                          {"warnings", result.warnings},
                                          {"epochs", log}}));
}

SceneModel load_heads(Run& run, const std::string& variant) {
  return SceneModel::load(run.input("heads/" + variant + "/model.bin", "train-heads"));
}

void eval_heads(Run& run, const std::string& variant) {
  const auto kge = load_kge_context(run);
  const auto model = load_heads(run, variant);
  const auto test = prepare(load_split(run, "test"));
  const auto ev = evaluate_scenes(model, test, kge, run.config().metrics);
  ordered_json j = hats::to_json(ev);
  j["variant"] = variant;
  run.write("metrics/heads_" + variant + ".json", dump(j));
  spdlog::info("heads[{}] relevance F1 {:.3f} mechanism {:.3f} side {:.3f} severity {:.3f} end-to-end {:.3f}", variant,
               ev.relevance.f1, ev.mechanism_accuracy, ev.side_accuracy, ev.severity_accuracy,
               ev.end_to_end_mechanism_accuracy);
}

void emit_tsg(Run& run, const std::string& variant) {
  const auto kge = load_kge_context(run);
  const auto model = load_heads(run, variant);
  const auto samples = load_split(run, "test");
  const auto prepared = prepare(samples);
  const auto predictions = predict_scenes(model, prepared, kge);
  std::size_t edges = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto g = assemble_tsg(predictions[i], samples[i]);
    const auto j = hats::to_json(g);
    validate_tsg_json(j);
    run.write("tsg/" + g.scene_id + ".json", dump(j));
    run.write("tsg/" + g.scene_id + ".dot", render_dot(g));
    edges += g.selected_count();
  }
  spdlog::info("emitted {} scene graphs with {} hazard edges", samples.size(), edges);
}

void report(Run& run) {
  const fs::path dir = run.out("metrics");
  if (!fs::is_directory(dir)) throw IoError("missing " + dir.string() + " (run eval-kge or eval-heads first)");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no metric files in " + dir.string());
  ordered_json all = ordered_json::object();
  for (const auto& f : files) {
    all[f.stem().string()] = ordered_json::parse(read_text_file(f));
    run.input("metrics/" + f.filename().string(), "eval-kge");
  }
  run.write("report.json", dump(all));
  for (const auto& [name, m] : all.items()) {
    if (name == "kge") {
      std::cout << fmt::format("kge        test MRR {:.4f}  H@1 {:.4f}  H@10 {:.4f}\n", m["test"]["triplet"]["mrr"].get<double>(),
                               m["test"]["triplet"]["h1"].get<double>(), m["test"]["triplet"]["h10"].get<double>());
    } else if (m.contains("mechanism_accuracy")) {
      std::cout << fmt::format("{:<10} mechanism {:.3f}  side {:.3f}  severity {:.3f}  end-to-end {:.3f}  relevance F1 {:.3f}\n",
                               name, m["mechanism_accuracy"].get<double>(), m["side_accuracy"].get<double>(),
                               m["severity_accuracy"].get<double>(), m["end_to_end_mechanism_accuracy"].get<double>(),
                               m["relevance"]["f1"].get<double>());
    }
  }
}

}  // namespace
}  // namespace hats::cli

int main(int argc, char** argv) {
  using namespace hats::cli;
  CLI::App app{"Hazard-aware traffic scene graphs: KG construction, KGE training and scene relation heads"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::size_t threads = 0;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Seed for every component");
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--threads", threads, "Worker threads (recorded; computation is single-threaded)");

  std::size_t epochs = 0;
  std::string variant = "full";
  auto add = [&](const char* name, const char* help) { return app.add_subcommand(name, help); };
  add("gen-synth", "Generate synthetic crash tables");
  add("build-kg", "Ingest tables into the knowledge graph");
  add("validate-kg", "Run coherence rules over the graph");
  add("export-triplets", "Export base triplets with an 8:1:1 split");
  auto* train_kge = add("train-kge", "Train the knowledge-graph embedding");
  train_kge->add_option("--epochs", epochs, "Override the configured epoch count (0 keeps the initialization)");
  add("eval-kge", "Filtered link prediction on the valid and test splits");
  add("gen-scenes", "Generate synthetic scenes");
  for (const char* name : {"train-heads", "eval-heads", "emit-tsg"}) {
    add(name, name == std::string("train-heads")   ? "Train ERES and the relation heads"
              : name == std::string("eval-heads") ? "Evaluate the relation heads on the test scenes"
                                                  : "Write traffic scene graphs for the test scenes")
        ->add_option("--variant", variant, "full, no_kge or no_eres")
        ->check(CLI::IsMember({"full", "no_kge", "no_eres"}));
  }
  app.get_subcommand("train-heads")->add_option("--epochs", epochs, "Override the configured epoch count");
  add("report", "Aggregate metric files into report.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    if (rc == 0) return 0;
    std::cerr << app.help();
    return 2;
  }

  auto logger = spdlog::stderr_color_mt("hats");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");

  const std::string command = app.get_subcommands().front()->get_name();
  std::optional<Run> run;
  std::string manifest = command;
  auto fail = [&](const std::string& code, const std::string& message) {
    std::cerr << "error: " << code << ": " << message << "\n";
    if (!run) return 1;
    run->note("error", {{"code", code}, {"message", message}});
    try {
      run->finish(manifest);
    } catch (const std::exception&) {
    }
    return 1;
  };
  try {
    RunConfig config = load_config(config_path);
    if (app.count("--seed")) config.seed = seed;
    if (app.count("--out")) config.out_dir = out_dir;
    if (app.count("--threads")) config.threads = threads;
    const auto* epochs_opt = app.get_subcommands().front()->get_option_no_throw("--epochs");
    const bool epochs_set = epochs_opt && epochs_opt->count() > 0;
    if (epochs_set && command == "train-kge") config.kge.epochs = epochs;
    if (epochs_set && command == "train-heads") config.scene_train.epochs = epochs;
    finalize(config);

    if (command == "train-heads" || command == "eval-heads" || command == "emit-tsg") manifest += "_" + variant;
    run.emplace(command, config);
    if (command == "gen-synth") gen_synth(*run);
    else if (command == "build-kg") build_kg(*run);
    else if (command == "validate-kg") validate_kg(*run);
    else if (command == "export-triplets") export_triplets_cmd(*run);
    else if (command == "train-kge") train_kge_cmd(*run);
    else if (command == "eval-kge") eval_kge(*run);
    else if (command == "gen-scenes") gen_scenes(*run);
    else if (command == "train-heads") train_heads(*run, variant);
    else if (command == "eval-heads") eval_heads(*run, variant);
    else if (command == "emit-tsg") emit_tsg(*run, variant);
    else report(*run);
    run->finish(manifest);
    return 0;
  } catch (const hats::Error& e) {
    return fail(e.code(), e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail("parse", e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
}
