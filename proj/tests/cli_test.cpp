#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hats/archive.hpp"
#include "hats/graph.hpp"
#include "hats/kge.hpp"
#include "hats/triplets.hpp"
#include "json.hpp"

namespace hats {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code = -1;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "hats_cli_test";
    fs::remove_all(root_);
    fs::create_directories(root_);
    std::ofstream(root_ / "tiny.json") << R"({"synth": {"crashes": 12}, "kge": {"dim": 16, "epochs": 1},
      "scenes": {"train": 16, "valid": 4, "test": 6}, "scene_train": {"epochs": 2}})";
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static Result run(const std::string& args, const std::string& env = "") {
    const fs::path err = root_ / "stderr.txt";
    const std::string cmd = env + (env.empty() ? "" : " ") + HATS_CLI + " --config " + (root_ / "tiny.json").string() +
                            " " + args + " > /dev/null 2> " + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
  }
  static std::string out(const std::string& name) { return "--out " + (root_ / name).string(); }

  static inline fs::path root_;
};

TEST_F(CliTest, UnknownOrMissingSubcommandIsUsageError) {
  auto r = run("frobnicate");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("Subcommands"), std::string::npos);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("train-heads --variant half").code, 2);
}

TEST_F(CliTest, KgStagesAndZeroEpochCheckpoint) {
  const std::string o = out("kg");
  ASSERT_EQ(run("gen-synth " + o).code, 0);
  ASSERT_EQ(run("build-kg " + o).code, 0);
  auto r = run("validate-kg " + o);
  EXPECT_EQ(r.code, 0) << r.err;
  const auto coherence = nlohmann::json::parse(slurp(root_ / "kg/kg/coherence.json"));
  EXPECT_TRUE(coherence["all_passed"].get<bool>());
  EXPECT_FALSE(coherence["rules"].empty());
  ASSERT_EQ(run("export-triplets " + o).code, 0);
  EXPECT_TRUE(fs::exists(root_ / "kg/triplets/test.tsv"));

  r = run("train-kge --epochs 0 " + o);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto log = nlohmann::json::parse(slurp(root_ / "kg/kge/train_log.json"));
  EXPECT_TRUE(log["epoch_loss"].empty());
  const auto trained = KgeModel::load(root_ / "kg/kge/model.bin");
  const auto g = import_ndjson(slurp(root_ / "kg/kg/graph.ndjson"));
  const auto data = make_kge_data(export_triplets(g), node_features_from_graph(g, feature_vocab_from_graph(g)), 1);
  const auto fresh = KgeModel::create(data.shape(), trained.config());
  ASSERT_EQ(fresh.params().size(), trained.params().size());
  for (std::size_t i = 0; i < fresh.params().size(); ++i) {
    const auto a = fresh.params().slots()[i].value.data(), b = trained.params().slots()[i].value.data();
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin(), b.end())) << fresh.params().slots()[i].name;
  }
  EXPECT_EQ(run("eval-kge " + o).code, 0);

  const auto manifest = nlohmann::json::parse(slurp(root_ / "kg/manifests/train-kge.json"));
  EXPECT_EQ(manifest["seed"], 1);
  EXPECT_EQ(manifest["config"]["kge"]["epochs"], 0);
  EXPECT_EQ(manifest["config_hash"].get<std::string>().size(), 16u);
  EXPECT_TRUE(manifest["versions"].contains("hats"));
}

TEST_F(CliTest, FailuresPrintOneMachineReadableLine) {
  const std::string o = out("broken");
  ASSERT_EQ(run("gen-synth " + o).code, 0);
  ASSERT_EQ(run("build-kg " + o).code, 0);
  // Drop the first node so its edges dangle.
  const fs::path graph = root_ / "broken/kg/graph.ndjson";
  std::string text = slurp(graph);
  std::ofstream(graph, std::ios::trunc) << text.substr(text.find('\n') + 1);
  auto r = run("validate-kg " + o);
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: validation: ", 0), 0u) << r.err;
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
  const auto manifest = nlohmann::json::parse(slurp(root_ / "broken/manifests/validate-kg.json"));
  EXPECT_EQ(manifest["notes"]["error"]["code"], "validation");

  r = run("eval-kge " + o);
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: io: ", 0), 0u) << r.err;
  r = run("gen-synth " + o, "HATS_BOGUS=1");
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: config: ", 0), 0u) << r.err;
  r = run("gen-synth " + o, "HATS_KGE_LR=-1");
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: config: ", 0), 0u) << r.err;
}

TEST_F(CliTest, EnvironmentOverridesReachTheManifest) {
  const std::string o = out("env");
  ASSERT_EQ(run("gen-synth " + o, "HATS_SEED=9 HATS_SYNTH_CRASHES=7 HATS_SCENE_TRAIN_LR=0.002").code, 0);
  const auto m = nlohmann::json::parse(slurp(root_ / "env/manifests/gen-synth.json"));
  EXPECT_EQ(m["seed"], 9);
  EXPECT_EQ(m["config"]["synth"]["crashes"], 7);
  EXPECT_EQ(m["config"]["scene_train"]["lr"], 0.002);
  EXPECT_EQ(m["config"]["kge"]["seed"], 9);
  ASSERT_EQ(run("gen-synth " + o + " --seed 4").code, 0);
  EXPECT_EQ(nlohmann::json::parse(slurp(root_ / "env/manifests/gen-synth.json"))["seed"], 4);
}

TEST_F(CliTest, SceneBranchIsDeterministic) {
  for (const char* dir : {"a", "b"}) {
    const std::string o = out(dir);
    for (const char* cmd : {"gen-synth", "build-kg", "train-kge", "eval-kge", "gen-scenes", "train-heads", "eval-heads",
                            "emit-tsg", "report"}) {
      const auto r = run(std::string(cmd) + " " + o);
      ASSERT_EQ(r.code, 0) << cmd << ": " << r.err;
    }
  }
  for (const char* f : {"metrics/kge.json", "metrics/heads_full.json", "report.json", "kge/embeddings.ndjson"}) {
    const std::string a = slurp(root_ / "a" / f);
    EXPECT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, slurp(root_ / "b" / f)) << f;
  }
  std::size_t graphs = 0;
  for (const auto& e : fs::directory_iterator(root_ / "a/tsg")) graphs += e.path().extension() == ".dot";
  EXPECT_EQ(graphs, 6u);
}

}  // namespace
}  // namespace hats
