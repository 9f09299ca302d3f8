#include <benchmark/benchmark.h>

#include "stealthlink/association.hpp"
#include "stealthlink/baselines.hpp"
#include "stealthlink/evaluation.hpp"
#include "stealthlink/mixfusion.hpp"
#include "stealthlink/nn.hpp"
#include "stealthlink/rng.hpp"
#include "stealthlink/transfer.hpp"

namespace {

using namespace stealthlink;

Matrix gaussian(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = standard_normal(rng);
  return m;
}

const SyntheticCorpus& corpus() {
  static const SyntheticCorpus c = generate_synthetic_corpus(SynthConfig{}, 1);
  return c;
}

void BM_KHopAndEncode(benchmark::State& state) {
  const auto& c = corpus();
  MixFusionConfig cfg;
  GnnParams p = GnnParams::make(c.graph.feature_dim(), cfg.d_c, cfg.layers, GnnInit::glorot, 3);
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& pair = c.pairs[i++ % c.pairs.size()];
    Subgraph s = sample_k_hop(c.graph, pair.deposit_id, cfg.k, cfg.cap);
    benchmark::DoNotOptimize(gnn_encode(s, p));
  }
}
BENCHMARK(BM_KHopAndEncode);

void BM_Mmd(benchmark::State& state) {
  const auto n = state.range(0);
  Matrix x = gaussian(n, 16, 1), y = gaussian(n, 16, 2);
  for (auto _ : state) benchmark::DoNotOptimize(mmd(x, y));
  state.SetComplexityN(n);
}
BENCHMARK(BM_Mmd)->RangeMultiplier(4)->Range(64, 1024)->Complexity(benchmark::oNSquared);

void BM_TransformerLayer(benchmark::State& state) {
  Rng rng(4);
  nn::TransformerEncoderLayer t(92, 4, 256, 1, rng);
  Matrix x = gaussian(64, 92, 5);
  Matrix g = gaussian(64, 92, 6);
  for (auto _ : state) {
    benchmark::DoNotOptimize(t.forward(x));
    benchmark::DoNotOptimize(t.backward(g));
  }
}
BENCHMARK(BM_TransformerLayer);

void BM_ClassifierStep(benchmark::State& state) {
  ClassifierConfig cc;
  cc.hidden.assign(4, static_cast<std::size_t>(state.range(0)));
  AssociationClassifier clf(16, cc, 7);
  Matrix x = gaussian(64, 16, 8);
  std::vector<int> y(64);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 2);
  auto params = clf.network().parameters();
  for (auto _ : state) {
    clf.network().zero_grad();
    auto bce = nn::binary_cross_entropy(clf.network().forward(x), y);
    clf.network().backward(bce.grad);
    nn::sgd_step(params, nn::SgdOptions{});
  }
}
BENCHMARK(BM_ClassifierStep)->Arg(128)->Arg(1024);

void BM_TransferEpoch(benchmark::State& state) {
  ModelConfig mc;
  TransferModel base = make_model(mc, 9);
  Matrix xs = gaussian(1000, static_cast<Eigen::Index>(mc.d_s), 10);
  std::vector<int> ys(1000);
  for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = static_cast<int>(i % 4 == 0);
  Matrix xt = gaussian(200, static_cast<Eigen::Index>(mc.d_p), 11);
  fit_adapter(base, xs);
  base.normalizer.fit(xt, TargetNorm::center);
  TransferOptions opt;
  opt.epochs = 1;
  for (auto _ : state) {
    TransferModel m = base;
    benchmark::DoNotOptimize(train_transfer(m, xs, ys, xt, opt));
  }
}
BENCHMARK(BM_TransferEpoch)->Unit(benchmark::kMillisecond);

void BM_GasFingerprint(benchmark::State& state) {
  const auto& c = corpus();
  for (auto _ : state) benchmark::DoNotOptimize(gas_fingerprint_match(c.graph));
}
BENCHMARK(BM_GasFingerprint);

void BM_FrozenDigest(benchmark::State& state) {
  TransferModel m = make_model(ModelConfig{}, 12);
  for (auto _ : state) benchmark::DoNotOptimize(m.frozen_digest());
}
BENCHMARK(BM_FrozenDigest);

}  // namespace

BENCHMARK_MAIN();
