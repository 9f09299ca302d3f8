#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "cli.hpp"
#include "stealthlink/checkpoint.hpp"
#include "stealthlink/config.hpp"
#include "stealthlink/csv.hpp"
#include "stealthlink/error.hpp"
#include "stealthlink/rng.hpp"
#include "test_util.hpp"

namespace stealthlink {
namespace {

namespace fs = std::filesystem;

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "stealthlink");
  std::ostringstream out, err;
  CliResult r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// Every regular file under `dir`, by relative path.
std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = csv::read_file(e.path());
  }
  return files;
}

TEST(Config, RoundTripsThroughJson) {
  RunConfig c = testing::tiny_run_config();
  c.classifier.arch = ClassifierArch::logistic;
  c.transfer.strategy = TransferStrategy::none;
  c.protocol.etas = {0.05, 0.5};
  RunConfig back = config_from_json(to_json(c));
  EXPECT_TRUE(back == c);
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(config_digest(back), config_digest(c));
  c.seed += 1;
  EXPECT_NE(config_digest(back), config_digest(c));

  auto dir = testing::scratch_dir();
  save_config(dir / "c.json", c);
  EXPECT_TRUE(load_config(dir / "c.json") == c);
}

TEST(Config, BundledConfigsLoadAndValidate) {
  const fs::path dir = STEALTHLINK_SOURCE_DIR "/configs";
  EXPECT_TRUE(load_config(dir / "toy.json") == testing::tiny_run_config());
  RunConfig desk = load_config(dir / "desk.json");
  desk.validate();
  EXPECT_EQ(desk.data.synth.n_users, 50u);
  EXPECT_EQ(desk.data.synth.n_decoys, 200u);
}

TEST(Config, RejectsUnknownKeysAndBadWidths) {
  EXPECT_THROW(config_from_json(R"({"seed": 1, "sed": 2})"), SchemaError);
  EXPECT_THROW(config_from_json(R"({"model": {"d_p": "wide"}})"), SchemaError);
  EXPECT_THROW(config_from_json("{not json"), SchemaError);
  RunConfig c = testing::tiny_run_config();
  c.model.d_p = 6;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = testing::tiny_run_config();
  c.finetune.sgd.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), ArgumentError);
}

TEST(Checkpoint, ReloadReproducesPredictions) {
  testing::TinyPipeline tp(true);
  auto dir = testing::scratch_dir() / "ckpt";
  save_checkpoint(dir, tp.model, {{"config_digest", "abc"}});
  LoadedCheckpoint back = load_checkpoint(dir);
  EXPECT_EQ(back.manifest.at("config_digest"), "abc");
  EXPECT_EQ(back.model.frozen_digest(), tp.model.frozen_digest());
  Matrix joint = tp.data.target_pool;
  EXPECT_EQ(back.model.target_features(joint), tp.model.target_features(joint));
  Matrix src = tp.data.corpus->source.feature_matrix();
  EXPECT_EQ(back.model.source_features(src), tp.model.source_features(src));
  Matrix f = tp.model.target_features(joint);
  EXPECT_EQ(back.model.c1.infer(f), tp.model.c1.infer(f));
  EXPECT_EQ(back.model.c2.infer(f), tp.model.c2.infer(f));
}

TEST(Checkpoint, DetectsDamage) {
  testing::TinyPipeline tp;
  auto root = testing::scratch_dir();
  EXPECT_THROW(load_checkpoint(root / "missing"), IoError);
  save_checkpoint(root / "c", tp.model);
  std::string blob = csv::read_file(root / "c" / "tensors.bin");
  blob[blob.size() / 2] ^= 0x40;
  csv::write_file(root / "c" / "tensors.bin", blob);
  EXPECT_THROW(load_checkpoint(root / "c"), SchemaError);
  csv::write_file(root / "c" / "tensors.bin", blob.substr(0, 16));
  EXPECT_THROW(load_checkpoint(root / "c"), SchemaError);
}

class CliRun : public ::testing::Test {
 protected:
  void SetUp() override {
    root = testing::scratch_dir();
    config = (root / "tiny.json").string();
    save_config(config, testing::tiny_run_config());
  }
  std::string dir(const std::string& name) const { return (root / name).string(); }

  fs::path root;
  std::string config;
};

TEST_F(CliRun, HelpAndUsageErrors) {
  EXPECT_EQ(run_cli({"--help"}).code, 0);
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"train"}).code, 2);
  EXPECT_EQ(run_cli({"synth"}).code, 2);  // --run-dir is required
  CliResult r = run_cli({"finetune-eval", "--config", config, "--run-dir", dir("a"), "--protocol", "tsne"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("protocol"), std::string::npos);
  EXPECT_EQ(run_cli({"synth", "--config", (root / "absent.json").string(), "--run-dir", dir("a")}).code, 2);
}

TEST_F(CliRun, DataErrorsExitWithThree) {
  csv::write_file(root / "bad.json", R"({"sed": 1})");
  EXPECT_EQ(run_cli({"synth", "--config", (root / "bad.json").string(), "--run-dir", dir("a")}).code, 3);
  CliResult r = run_cli({"finetune-eval", "--config", config, "--run-dir", dir("b"), "--protocol", "few_shot"});
  EXPECT_EQ(r.code, 3);  // no checkpoint yet
  EXPECT_NE(r.err.find("pretrain"), std::string::npos);
  EXPECT_EQ(static_cast<int>(DivergenceError("x", 0).exit_code()), 4);
}

TEST_F(CliRun, SynthIsByteIdenticalAndReloads) {
  ASSERT_EQ(run_cli({"synth", "--config", config, "--run-dir", dir("a")}).code, 0);
  ASSERT_EQ(run_cli({"synth", "--config", config, "--run-dir", dir("b")}).code, 0);
  EXPECT_EQ(tree(root / "a"), tree(root / "b"));
  ASSERT_EQ(run_cli({"synth", "--config", config, "--seed", "6", "--run-dir", dir("c")}).code, 0);
  EXPECT_NE(tree(root / "a").at("corpus/pairs.csv"), tree(root / "c").at("corpus/pairs.csv"));

  RunConfig cfg = testing::tiny_run_config();
  std::string manifest = csv::read_file(root / "a" / "synth.manifest.txt");
  EXPECT_NE(manifest.find("config_digest=" + config_digest(cfg)), std::string::npos);
  EXPECT_NE(manifest.find("seed=5"), std::string::npos);
  SyntheticCorpus loaded = load_corpus(root / "a" / "corpus", cfg.model.d_s);
  EXPECT_TRUE(loaded == generate_synthetic_corpus(cfg.data.synth, derive_seed(cfg.seed, "corpus")));
}

TEST_F(CliRun, PipelineCommandsAreByteIdenticalUnderTheSameSeed) {
  for (const char* name : {"a", "b"}) {
    const std::string d = dir(name);
    ASSERT_EQ(run_cli({"pretrain", "--config", config, "--run-dir", d}).code, 0) << name;
    CliResult fs = run_cli({"finetune-eval", "--config", config, "--run-dir", d, "--protocol", "few_shot", "--n", "1",
                            "3", "--jobs", "2"});
    ASSERT_EQ(fs.code, 0) << fs.err;
    EXPECT_NE(fs.out.find("N=3"), std::string::npos);
    ASSERT_EQ(run_cli({"finetune-eval", "--config", config, "--run-dir", d, "--protocol", "noise", "--eta", "0.5"})
                  .code,
              0);
    ASSERT_EQ(run_cli({"finetune-eval", "--config", config, "--run-dir", d, "--protocol", "imbalance", "--ratio",
                       "1:2", "--strategy", "none"})
                  .code,
              0);
    ASSERT_EQ(run_cli({"baseline-gf", "--config", config, "--run-dir", d, "--with-denomination"}).code, 0);
    ASSERT_EQ(run_cli({"export-embeddings", "--config", config, "--run-dir", d, "--max-source", "5"}).code, 0);
  }
  auto a = tree(root / "a");
  auto b = tree(root / "b");
  EXPECT_EQ(a, b);
  for (const char* f : {"checkpoint/manifest.txt", "train_log.csv", "reports/few_shot/mcd_N3.json",
                        "reports/noise/mcd_summary.json", "reports/imbalance/none_ratio1-2.csv",
                        "baselines/gf_matches.csv", "embeddings.csv"}) {
    EXPECT_TRUE(a.count(f)) << f;
  }
  // Every artifact carries the config digest.
  const std::string digest = config_digest(testing::tiny_run_config());
  for (const auto& [name, body] : a) {
    if (name.ends_with(".bin") || name == "config.json") continue;
    EXPECT_NE(body.find(digest), std::string::npos) << name;
  }
}

TEST_F(CliRun, MmdCommand) {
  csv::write_file(root / "x.csv", "a,b\n0,0\n1,0\n0,1\n2,2\n");
  csv::write_file(root / "y.csv", "a,b,c\n0,0,1\n1,0,0\n0,1,3\n5,1,1\n4,4,4\n");
  CliResult same = run_cli({"mmd", (root / "x.csv").string(), (root / "x.csv").string()});
  ASSERT_EQ(same.code, 0) << same.err;
  EXPECT_EQ(same.out, "0.00000e+00\n");
  EXPECT_EQ(run_cli({"mmd", (root / "x.csv").string(), (root / "y.csv").string()}).code, 3);
  CliResult aligned = run_cli({"mmd", "--pca-align", (root / "x.csv").string(), (root / "y.csv").string()});
  ASSERT_EQ(aligned.code, 0) << aligned.err;
  EXPECT_EQ(aligned.out, run_cli({"mmd", "--pca-align", (root / "y.csv").string(), (root / "x.csv").string()}).out);

  csv::write_file(root / "p.csv", "v\n0\n0\n");
  csv::write_file(root / "q.csv", "v\n10\n10\n");
  CliResult pm = run_cli({"mmd", "--bandwidth", "1", (root / "p.csv").string(), (root / "q.csv").string()});
  ASSERT_EQ(pm.code, 0);
  EXPECT_NEAR(std::stod(pm.out), std::sqrt(2.0 - 2.0 * std::exp(-50.0)), 1e-5);
}

}  // namespace
}  // namespace stealthlink
