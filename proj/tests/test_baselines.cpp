#include <gtest/gtest.h>

#include <set>

#include "stealthlink/baselines.hpp"
#include "stealthlink/error.hpp"
#include "test_util.hpp"

namespace stealthlink {
namespace {

using testing::account;
using testing::edge;

// deposit d sends to pool p; pool p pays withdrawal w.
TransactionGraph gf_graph(std::uint64_t deposit_gas, std::uint64_t withdrawal_gas) {
  TransactionGraph g(1);
  g.add_account(account("d", AccountRole::deposit, {0.0}));
  g.add_account(account("p", AccountRole::normal, {0.0}));
  g.add_account(account("w", AccountRole::withdrawal, {0.0}));
  g.add_edge(edge("d", "p", 1.0, 100, deposit_gas));
  g.add_edge(edge("p", "w", 1.0, 200, withdrawal_gas));
  return g;
}

TEST(GasFingerprint, LastNineDigitsMatch) {
  auto m = gas_fingerprint_match(gf_graph(21000000123456789ULL, 99000000123456789ULL));
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].deposit_id, "d");
  EXPECT_EQ(m[0].withdrawal_id, "w");
  EXPECT_EQ(m[0].rule, HeuristicRule::gas_fingerprint);
  EXPECT_EQ(m[0].evidence, "123456789");
  EXPECT_EQ(matches_csv(m), "deposit,withdrawal,rule,evidence\nd,w,gas_fingerprint,123456789\n");
}

TEST(GasFingerprint, ZeroFingerprintsAreSkipped) {
  EXPECT_TRUE(gas_fingerprint_match(gf_graph(1000000000ULL, 2000000000ULL)).empty());
  EXPECT_TRUE(gas_fingerprint_match(gf_graph(21000000123456789ULL, 21000000123456788ULL)).empty());
}

// Quadratic scan over every (deposit tx, withdrawal tx) pair.
std::set<PairKey> brute_force_gf(const TransactionGraph& g) {
  std::set<PairKey> out;
  for (const auto& a : g.edges()) {
    if (g.account(g.index_of(a.from)).role != AccountRole::deposit) continue;
    for (const auto& b : g.edges()) {
      if (g.account(g.index_of(b.to)).role != AccountRole::withdrawal) continue;
      if (a.from == b.to) continue;
      const auto fa = a.gas_price % 1000000000ULL;
      if (fa != 0 && fa == b.gas_price % 1000000000ULL) out.insert({a.from, b.to});
    }
  }
  return out;
}

TEST(GasFingerprint, AgreesWithQuadraticScanOnSyntheticCorpus) {
  auto c = generate_synthetic_corpus(testing::tiny_synth(30, 40), 3);
  auto matches = gas_fingerprint_match(c.graph);
  auto oracle = brute_force_gf(c.graph);
  std::set<PairKey> got;
  for (const auto& m : matches) {
    got.insert({m.deposit_id, m.withdrawal_id});
    // Evidence recomputes from the cited transactions.
    EXPECT_EQ(m.evidence.find_first_not_of("0123456789"), std::string::npos);
  }
  EXPECT_EQ(got, oracle);
  EXPECT_EQ(got.size(), matches.size());
  EXPECT_TRUE(std::is_sorted(matches.begin(), matches.end()));
  EXPECT_EQ(matches, gas_fingerprint_match(c.graph));

  std::size_t hits = 0, positives = 0;
  for (const auto& p : c.pairs) {
    if (p.label != 1) continue;
    ++positives;
    hits += oracle.count(key_of(p));
  }
  ASSERT_GT(hits, 0u);
  EXPECT_DOUBLE_EQ(score_matches(matches, c.pairs).recall,
                   static_cast<double>(hits) / static_cast<double>(positives));
}

TEST(Denomination, EqualAmountsInsideTheWindow) {
  TransactionGraph g = gf_graph(1, 2);
  EXPECT_EQ(denomination_match(g, 100).size(), 1u);
  EXPECT_EQ(denomination_match(g, 100)[0].evidence, "1");
  EXPECT_TRUE(denomination_match(g, 99).empty());
  EXPECT_THROW(denomination_match(g, -1), ArgumentError);
}

TEST(NoTransfer, CompletesAtNOneAndLeavesTheModelAlone) {
  testing::TinyPipeline tp;
  const std::string before = tp.model.frozen_digest();
  Split s = subsample_few_shot(tp.pairs(), 1, 4);
  ClassifierConfig cc;
  cc.hidden = {8};
  FinetuneOptions fo;
  fo.epochs = 5;
  AssociationClassifier a = no_transfer_train(tp.model, *tp.data.featurizer, s, cc, fo, 9);
  AssociationClassifier b = no_transfer_train(tp.model, *tp.data.featurizer, s, cc, fo, 9);
  EXPECT_EQ(tp.model.frozen_digest(), before);
  Matrix f = tp.model.target_features(tp.data.featurizer->joint_matrix(s.test));
  EXPECT_EQ(a.probabilities(f), b.probabilities(f));
}

}  // namespace
}  // namespace stealthlink
