#include <gtest/gtest.h>

#include <fstream>
#include <numeric>
#include <set>

#include "stealthlink/csv.hpp"
#include "stealthlink/error.hpp"
#include "stealthlink/rng.hpp"
#include "test_util.hpp"

namespace stealthlink {
namespace {

using testing::scratch_dir;

void write_text(const std::filesystem::path& p, const std::string& s) { csv::write_file(p, s); }

std::string source_csv(std::size_t dim, std::size_t rows) {
  std::string s;
  for (std::size_t j = 0; j < dim; ++j) s += "f_" + std::to_string(j) + ",";
  s += "label\n";
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < dim; ++j) s += std::to_string(0.5 * static_cast<double>(r + j)) + ",";
    s += std::to_string(r % 2) + "\n";
  }
  return s;
}

std::vector<PairSample> positives(std::size_t n) {
  std::vector<PairSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({"d" + std::to_string(i), "w" + std::to_string(i), 1, Provenance::ground_truth});
  }
  return out;
}

TEST(SourceLoader, ReadsRowsOfTheDeclaredWidth) {
  auto dir = scratch_dir();
  write_text(dir / "s.csv", source_csv(148, 3));
  SourceDataset d = load_source_dataset(dir / "s.csv", 148);
  ASSERT_EQ(d.samples.size(), 3u);
  EXPECT_EQ(d.samples[0].features.size(), 148);
  EXPECT_DOUBLE_EQ(d.samples[2].features[1], 1.5);
  EXPECT_EQ(d.samples[1].label, 1);
  EXPECT_EQ(d.count_label(0), 2u);
}

TEST(SourceLoader, NonNumericFeatureNamesTheLine) {
  auto dir = scratch_dir();
  write_text(dir / "s.csv", "f_0,f_1,label\n1,2,0\n3,oops,1\n");
  try {
    load_source_dataset(dir / "s.csv", 2);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos);
  }
}

TEST(SourceLoader, WidthMismatchIsSchemaError) {
  auto dir = scratch_dir();
  write_text(dir / "s.csv", source_csv(4, 2));
  EXPECT_THROW(load_source_dataset(dir / "s.csv", 5), SchemaError);
}

TEST(SourceLoader, ClassNamesMapToMaliciousLabel) {
  auto dir = scratch_dir();
  write_text(dir / "s.csv", "f_0,class\n1,Phishing\n2,exchange\n3,money_laundering\n4,Ponzi-Scheme\n");
  SourceDataset d = load_source_dataset(dir / "s.csv", 1);
  EXPECT_EQ(d.labels(), (std::vector<int>{1, 0, 1, 1}));
}

TEST(TargetLoader, FourAccountGraphWithOnePair) {
  auto dir = scratch_dir();
  write_text(dir / "accounts.csv", "id,role,f_0\na,deposit,1\nb,normal,2\nc,normal,3\nd,withdrawal,4\n");
  write_text(dir / "edges.csv", "from,to,amount,timestamp,gas_price\na,b,1,10,5\nb,c,1,20,5\nc,d,1,30,5\n");
  write_text(dir / "pairs.csv", "deposit,withdrawal,label\na,d,1\n");
  TargetCorpus t = load_target_graph_and_pairs(dir / "accounts.csv", dir / "edges.csv", dir / "pairs.csv");
  EXPECT_EQ(t.graph.num_accounts(), 4u);
  EXPECT_EQ(t.graph.edges().size(), 3u);
  EXPECT_EQ(t.graph.neighbors(t.graph.index_of("b")), (std::vector<std::size_t>{0, 2}));
  ASSERT_EQ(t.pairs.size(), 1u);
  EXPECT_EQ(t.pairs[0].deposit_id, "a");
}

TEST(TargetLoader, DanglingPairEndpoint) {
  auto dir = scratch_dir();
  write_text(dir / "accounts.csv", "id,role,f_0\na,deposit,1\nd,withdrawal,4\n");
  write_text(dir / "edges.csv", "from,to,amount,timestamp,gas_price\n");
  write_text(dir / "pairs.csv", "deposit,withdrawal,label\na,0xdead,1\n");
  EXPECT_THROW(load_target_graph_and_pairs(dir / "accounts.csv", dir / "edges.csv", dir / "pairs.csv"),
               ReferentialIntegrityError);
}

TEST(Graph, RejectsDuplicatesAndSelfLoops) {
  TransactionGraph g(1);
  g.add_account(testing::account("a", AccountRole::normal, {1}));
  EXPECT_THROW(g.add_account(testing::account("a", AccountRole::normal, {2})), SchemaError);
  EXPECT_THROW(g.add_account(testing::account("b", AccountRole::normal, {1, 2})), SchemaError);
  EXPECT_THROW(g.add_edge(testing::edge("a", "a")), SchemaError);
  EXPECT_THROW(g.add_edge(testing::edge("a", "zz")), ReferentialIntegrityError);
  EXPECT_THROW(g.index_of("zz"), LookupError);
}

TEST(Corpus, WriteThenLoadRoundTrips) {
  auto dir = scratch_dir();
  SyntheticCorpus c = generate_synthetic_corpus(testing::tiny_synth(), 3);
  write_corpus(dir, c);
  SyntheticCorpus back = load_corpus(dir, c.source.dim);
  EXPECT_EQ(back, c);
}

TEST(Synthetic, DeterministicUnderSeed) {
  SynthConfig cfg;  // 50 users, 200 decoys
  auto a = generate_synthetic_corpus(cfg, 7);
  auto b = generate_synthetic_corpus(cfg, 7);
  EXPECT_EQ(a, b);
  auto dir = scratch_dir();
  write_corpus(dir / "a", a);
  write_corpus(dir / "b", b);
  for (const char* f : {"source.csv", "accounts.csv", "edges.csv", "pairs.csv"}) {
    EXPECT_EQ(csv::read_file(dir / "a" / f), csv::read_file(dir / "b" / f)) << f;
  }
  EXPECT_NE(generate_synthetic_corpus(cfg, 8).pairs, a.pairs);
}

TEST(Synthetic, SingleUserGivesOnePositive) {
  SynthConfig cfg = testing::tiny_synth(1, 0);
  auto c = generate_synthetic_corpus(cfg, 1);
  EXPECT_EQ(count_label(c.pairs, 1), 1u);
}

TEST(Synthetic, PlantedPairsAreMoreSimilarThanNegatives) {
  auto c = generate_synthetic_corpus(SynthConfig{}, 7);
  double pos = 0, neg = 0;
  std::size_t np = 0, nn = 0;
  for (const auto& p : c.pairs) {
    const Vector& a = c.graph.account(c.graph.index_of(p.deposit_id)).features;
    const Vector& b = c.graph.account(c.graph.index_of(p.withdrawal_id)).features;
    const double cos = a.dot(b) / (a.norm() * b.norm());
    (p.label == 1 ? pos : neg) += cos;
    ++(p.label == 1 ? np : nn);
  }
  ASSERT_GT(np, 0u);
  ASSERT_GT(nn, 0u);
  EXPECT_GT(pos / static_cast<double>(np), neg / static_cast<double>(nn));
}

TEST(Synthetic, EveryEndpointResolvesAndGroundTruthIsPlanted) {
  auto c = generate_synthetic_corpus(SynthConfig{}, 11);
  for (const auto& p : c.pairs) {
    ASSERT_TRUE(c.graph.find(p.deposit_id));
    ASSERT_TRUE(c.graph.find(p.withdrawal_id));
    EXPECT_EQ(p.provenance == Provenance::ground_truth, p.label == 1);
    if (p.label == 1) {
      EXPECT_EQ(p.deposit_id.substr(0, p.deposit_id.find('_')), p.withdrawal_id.substr(0, p.withdrawal_id.find('_')));
    }
  }
  EXPECT_EQ(count_label(c.pairs, 0), count_label(c.pairs, 1));
}

TEST(Negatives, RatioOneDoublesTheCorpus) {
  auto pos = positives(103);
  auto neg = make_unassociated_negatives(pos, 1, 5);
  EXPECT_EQ(neg.size() + pos.size(), 206u);
}

TEST(Negatives, TwoPositivesEnumerate) {
  std::vector<PairSample> pos{{"a", "b", 1, Provenance::ground_truth}, {"c", "d", 1, Provenance::ground_truth}};
  auto neg = make_unassociated_negatives(pos, 1, 9);
  ASSERT_EQ(neg.size(), 2u);
  std::set<PairKey> allowed{{"a", "d"}, {"c", "b"}};
  for (const auto& n : neg) {
    EXPECT_TRUE(allowed.count(key_of(n)));
    EXPECT_EQ(n.label, 0);
    EXPECT_EQ(n.provenance, Provenance::shuffled_negative);
  }
  EXPECT_THROW(make_unassociated_negatives(pos, 2, 9), CapacityError);
}

TEST(Negatives, NeverReproduceAPositive) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto pos = positives(15);
    PairSet truth = positive_set(pos);
    auto neg = make_unassociated_negatives(pos, 5, seed);
    PairSet seen;
    for (const auto& n : neg) {
      EXPECT_FALSE(truth.count(key_of(n)));
      EXPECT_TRUE(seen.insert(key_of(n)).second) << "duplicate negative";
    }
  }
}

TEST(Negatives, DeterministicUnderSeed) {
  auto pos = positives(30);
  EXPECT_EQ(make_unassociated_negatives(pos, 3, 4), make_unassociated_negatives(pos, 3, 4));
}

TEST(LabelNoise, ZeroEtaIsIdentity) {
  auto pos = positives(10);
  EXPECT_EQ(inject_label_noise(pos, 0.0, 1), pos);
}

TEST(LabelNoise, CountsFollowCeiling) {
  auto pos = positives(100);
  auto out = inject_label_noise(pos, 0.2, 1);
  EXPECT_EQ(out.size(), 120u);
  EXPECT_EQ(noise_count(0.05, 10), 1u);
  EXPECT_EQ(noise_count(0.3, 10), 3u);
}

TEST(LabelNoise, HalfRateInjectsUnassociatedPseudoPositives) {
  auto pos = positives(10);
  PairSet truth = positive_set(pos);
  auto out = inject_label_noise(pos, 0.5, 3);
  ASSERT_EQ(out.size(), 15u);
  for (std::size_t i = 0; i < pos.size(); ++i) EXPECT_EQ(out[i], pos[i]);
  for (std::size_t i = pos.size(); i < out.size(); ++i) {
    EXPECT_EQ(out[i].label, 1);
    EXPECT_EQ(out[i].provenance, Provenance::injected_noise);
    EXPECT_FALSE(truth.count(key_of(out[i])));
  }
}

TEST(LabelNoise, RangeIsChecked) {
  auto pos = positives(10);
  EXPECT_THROW(inject_label_noise(pos, 0.6, 1), RangeError);
  EXPECT_THROW(inject_label_noise(pos, -0.1, 1), RangeError);
}

TEST(LabelNoise, NeverRelabelsOrDeletes) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto pos = positives(8 + static_cast<std::size_t>(trial));
    auto data = pos;
    auto neg = make_unassociated_negatives(pos, 1, static_cast<std::uint64_t>(trial));
    data.insert(data.end(), neg.begin(), neg.end());
    const double eta = 0.5 * uniform01(rng);
    auto out = inject_label_noise(data, eta, static_cast<std::uint64_t>(trial));
    ASSERT_EQ(out.size(), data.size() + noise_count(eta, pos.size()));
    for (std::size_t i = 0; i < data.size(); ++i) EXPECT_EQ(out[i], data[i]);
  }
}

std::vector<PairSample> balanced(std::size_t n, std::uint64_t seed) {
  auto pos = positives(n);
  auto neg = make_unassociated_negatives(pos, 1, seed);
  pos.insert(pos.end(), neg.begin(), neg.end());
  return pos;
}

TEST(FewShot, OneShotTrainsOnOnePairPerClass) {
  auto data = balanced(20, 1);
  Split s = subsample_few_shot(data, 1, 42);
  ASSERT_EQ(s.train.size(), 2u);
  EXPECT_EQ(count_label(s.train, 1), 1u);
  EXPECT_EQ(s.test.size(), data.size() - 2);
}

TEST(FewShot, DeterministicAndDisjoint) {
  auto data = balanced(103, 1);
  Split a = subsample_few_shot(data, 3, 77);
  Split b = subsample_few_shot(data, 3, 77);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  PairSet train;
  for (const auto& p : a.train) train.insert(key_of(p));
  for (const auto& p : a.test) EXPECT_FALSE(train.count(key_of(p)));
}

TEST(FewShot, DistinctSeedsGiveDistinctPositiveSubsets) {
  auto data = balanced(103, 1);
  std::set<PairSet> subsets;
  for (std::uint64_t t = 0; t < 10; ++t) {
    Split s = subsample_few_shot(data, 3, derive_seed(99, "trial", t));
    PairSet p;
    for (const auto& x : s.train) {
      if (x.label == 1) p.insert(key_of(x));
    }
    subsets.insert(p);
  }
  EXPECT_EQ(subsets.size(), 10u);
}

TEST(FewShot, InsufficientPairs) {
  auto data = balanced(3, 1);
  EXPECT_THROW(subsample_few_shot(data, 4, 1), CapacityError);
  EXPECT_THROW(subsample_few_shot(data, 0, 1), ArgumentError);
}

TEST(Imbalance, TopsUpToKNegativesPerPositive) {
  auto data = balanced(10, 2);
  auto out = make_imbalanced(data, 5, 3);
  EXPECT_EQ(out.size(), 60u);
  EXPECT_EQ(count_label(out, 1), 10u);
  EXPECT_EQ(make_imbalanced(data, 1, 3).size(), data.size());
}

TEST(Imbalance, LargeRatioHasNoCollisions) {
  auto data = balanced(103, 2);
  auto out = make_imbalanced(data, 25, 3);
  EXPECT_EQ(count_label(out, 0), 2575u);
  PairSet truth = positive_set(data);
  PairSet seen;
  for (const auto& p : out) {
    EXPECT_TRUE(seen.insert(key_of(p)).second);
    if (p.label == 0) {
      EXPECT_FALSE(truth.count(key_of(p)));
    }
  }
}

TEST(Imbalance, ParseRatio) {
  EXPECT_EQ(parse_ratio("1:15"), 15u);
  EXPECT_EQ(parse_ratio("25"), 25u);
  EXPECT_THROW(parse_ratio("2:5"), UsageError);
  EXPECT_THROW(parse_ratio("1:x"), UsageError);
  EXPECT_THROW(parse_ratio("1:0"), UsageError);
}

}  // namespace
}  // namespace stealthlink
