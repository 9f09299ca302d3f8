#pragma once

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>

#include "stealthlink/config.hpp"
#include "stealthlink/data.hpp"
#include "stealthlink/nn.hpp"
#include "stealthlink/pipeline.hpp"
#include "fd.hpp"

namespace stealthlink::testing {

namespace fs = std::filesystem;

using fd::kFdRelTol;
using fd::kFdStep;
using fd::numeric_grad;

// Fresh scratch directory named after the running test.
inline fs::path scratch_dir() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  fs::path dir = fs::temp_directory_path() / "stealthlink_tests" /
                 (std::string(info->test_suite_name()) + "." + info->name());
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

inline ::testing::AssertionResult grad_close(const nn::Matrix& analytic, const nn::Matrix& numeric) {
  std::string why;
  if (fd::close(analytic, numeric, &why)) return ::testing::AssertionSuccess();
  return ::testing::AssertionFailure() << why;
}

inline Account account(const std::string& id, AccountRole role, std::vector<double> f) {
  Account a;
  a.id = id;
  a.role = role;
  a.features = Eigen::Map<Vector>(f.data(), static_cast<Eigen::Index>(f.size()));
  return a;
}

inline TxEdge edge(const std::string& from, const std::string& to, double amount = 1.0, std::int64_t ts = 0,
                   std::uint64_t gas = 0) {
  return TxEdge{from, to, amount, ts, gas};
}

// Small synthetic corpus that keeps protocol tests fast.
inline SynthConfig tiny_synth(std::size_t users = 12, std::size_t decoys = 10) {
  SynthConfig c;
  c.n_users = users;
  c.n_decoys = decoys;
  c.profile_dim = 4;
  c.source_context_dim = 4;
  c.source_samples = 200;
  return c;
}

// End-to-end config small enough for unit tests: 12 users, a 2-epoch MCD run.
inline RunConfig tiny_run_config() {
  RunConfig c;
  c.data.synth = tiny_synth();
  c.mixfusion.d_c = 4;
  c.model.d_s = c.data.synth.source_dim();
  c.model.d_p = 8;
  c.model.encoder = EncoderArch::mlp;
  c.model.encoder_hidden = 8;
  c.model.generator_hidden = 8;
  c.model.classifier_hidden = 0;
  c.transfer.warmup_epochs = 1;
  c.transfer.epochs = 1;
  c.transfer.sgd.learning_rate = 1e-3;
  c.classifier.hidden = {16};
  c.finetune.epochs = 20;
  c.finetune.sgd.learning_rate = 0.01;
  c.protocol.few_shot = {1, 3};
  c.protocol.etas = {0.5};
  c.protocol.ratios = {2, 3};
  c.protocol.trials = 3;
  c.protocol.folds = 3;
  c.seed = 5;
  return c;
}

// Prepared corpus plus an untrained (or transferred) model for tiny_run_config().
struct TinyPipeline {
  RunConfig cfg;
  PreparedData data;
  TransferModel model;

  explicit TinyPipeline(bool transfer = false, RunConfig c = tiny_run_config()) : cfg(std::move(c)) {
    data = prepare_data(cfg);
    model = prepare_model(cfg, data.corpus->source, data.target_pool);
    if (transfer) run_transfer(cfg, model, data.corpus->source, data.target_pool);
  }
  const std::vector<PairSample>& pairs() const { return data.corpus->pairs; }
  ProtocolSetup setup(std::size_t jobs = 1) const { return make_protocol_setup(cfg, model, *data.featurizer, jobs); }
};

}  // namespace stealthlink::testing
