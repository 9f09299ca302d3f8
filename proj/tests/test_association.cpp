#include <gtest/gtest.h>

#include <algorithm>

#include "stealthlink/association.hpp"
#include "stealthlink/error.hpp"
#include "stealthlink/rng.hpp"
#include "test_util.hpp"

namespace stealthlink {
namespace {

using nn::Matrix;
using nn::Vector;

ClassifierConfig small_mlp(std::vector<std::size_t> hidden = {16}) {
  ClassifierConfig c;
  c.hidden = std::move(hidden);
  return c;
}

FinetuneOptions fast_finetune(std::size_t epochs) {
  FinetuneOptions o;
  o.epochs = epochs;
  o.sgd = nn::SgdOptions{0.05, 0.9, 0.0};
  o.seed = 1;
  return o;
}

TEST(AssociationClassifier, DefaultIsFourByThousandTwentyFour) {
  ClassifierConfig c;
  AssociationClassifier clf(8, c, 1);
  auto params = clf.network().parameters();
  ASSERT_EQ(params.size(), 10u);
  for (std::size_t i = 0; i < 8; i += 2) EXPECT_EQ(params[i].param->value.rows(), 1024) << i;
  EXPECT_EQ(params[8].param->value.rows(), 1);
  EXPECT_THROW(AssociationClassifier(0, c, 1), ArgumentError);
  c.threshold = 1.0;
  EXPECT_THROW(AssociationClassifier(8, c, 1), ArgumentError);
  EXPECT_THROW(parse_classifier_arch("svm"), UsageError);
}

TEST(AssociationClassifier, BceGradientOnLogisticToy) {
  // 3 weights + 1 bias.
  ClassifierConfig c;
  c.arch = ClassifierArch::logistic;
  AssociationClassifier clf(3, c, 2);
  Rng rng(3);
  Matrix x(5, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = standard_normal(rng);
  std::vector<int> y{1, 0, 0, 1, 1};
  auto params = clf.network().parameters();
  ASSERT_EQ(params.size(), 2u);
  clf.network().zero_grad();
  auto bce = nn::binary_cross_entropy(clf.network().forward(x), y);
  clf.network().backward(bce.grad);
  auto loss = [&] { return nn::binary_cross_entropy(clf.network().infer(x), y).loss; };
  for (auto& p : params) {
    Matrix analytic = p.param->grad;
    EXPECT_TRUE(testing::grad_close(analytic, testing::numeric_grad(p.param->value, loss))) << p.name;
  }
}

TEST(Finetune, SeparableTwoSampleToyFits) {
  Matrix f(2, 4);
  f << 1.0, -1.0, 0.5, 0.0,
      -1.0, 1.0, -0.5, 0.0;
  AssociationClassifier clf(4, small_mlp({256, 256}), 4);
  auto losses = finetune_features(clf, f, {1, 0}, fast_finetune(500));
  ASSERT_EQ(losses.size(), 500u);
  EXPECT_LT(losses.back(), 1e-2);
  Vector p = clf.probabilities(f);
  EXPECT_GT(p[0], 0.5);
  EXPECT_LT(p[1], 0.5);
}

TEST(Finetune, RejectsSingleClassAndBadLabels) {
  Matrix f = Matrix::Ones(3, 4);
  AssociationClassifier clf(4, small_mlp(), 4);
  EXPECT_THROW(finetune_features(clf, f, {1, 1, 1}, fast_finetune(1)), ClassCoverageError);
  EXPECT_THROW(finetune_features(clf, f, {1, 0, 2}, fast_finetune(1)), SchemaError);
  EXPECT_THROW(finetune_features(clf, f, {1, 0}, fast_finetune(1)), ShapeError);
  EXPECT_THROW(finetune_features(clf, Matrix::Ones(2, 3), {1, 0}, fast_finetune(1)), ShapeError);
}

TEST(Finetune, NonFiniteFeaturesDiverge) {
  Matrix f = Matrix::Ones(2, 4);
  f(0, 0) = std::numeric_limits<double>::infinity();
  AssociationClassifier clf(4, small_mlp(), 4);
  EXPECT_THROW(finetune_features(clf, f, {1, 0}, fast_finetune(3)), DivergenceError);
}

TEST(Finetune, FrozenModelDigestIsUnchanged) {
  testing::TinyPipeline tp(true);
  const std::string before = tp.model.frozen_digest();
  Split s = subsample_few_shot(tp.pairs(), 1, 3);  // N = 1: two samples
  ASSERT_EQ(s.train.size(), 2u);
  std::vector<int> y;
  for (const auto& p : s.train) y.push_back(p.label);
  AssociationClassifier clf(tp.cfg.model.d_p, small_mlp(), 5);
  FinetuneResult r = finetune(clf, tp.model, tp.data.featurizer->joint_matrix(s.train), y, fast_finetune(10));
  EXPECT_EQ(r.digest_before, r.digest_after);
  EXPECT_EQ(r.digest_before, before);
  EXPECT_EQ(tp.model.frozen_digest(), before);
  EXPECT_EQ(r.losses.size(), 10u);
  auto preds = predict_pairs(clf, tp.model, *tp.data.featurizer, s.test);
  EXPECT_EQ(preds.size(), s.test.size());
}

TEST(PredictPair, ZeroedOutputLayerGivesOneHalf) {
  testing::TinyPipeline tp;
  AssociationClassifier clf(tp.cfg.model.d_p, small_mlp(), 6);
  auto params = clf.network().parameters();
  params[params.size() - 2].param->value.setZero();
  params.back().param->value.setZero();
  for (const auto& p : tp.pairs()) {
    Prediction pr = predict_pair(clf, tp.model, *tp.data.featurizer, p.deposit_id, p.withdrawal_id);
    EXPECT_EQ(pr.probability, 0.5);
    EXPECT_EQ(pr.label, 1);
  }
}

TEST(PredictPair, DeterministicDepositFirstAndChecksIds) {
  testing::TinyPipeline tp;
  AssociationClassifier clf(tp.cfg.model.d_p, small_mlp(), 7);
  const auto& p = tp.pairs().front();
  const auto& f = *tp.data.featurizer;
  Prediction a = predict_pair(clf, tp.model, f, p.deposit_id, p.withdrawal_id);
  EXPECT_EQ(a, predict_pair(clf, tp.model, f, p.deposit_id, p.withdrawal_id));
  EXPECT_EQ(a.deposit_id, p.deposit_id);
  Matrix joint = f.joint(p.deposit_id, p.withdrawal_id).transpose();
  EXPECT_EQ(a.probability, clf.probabilities(tp.model.target_features(joint))[0]);
  Matrix swapped = f.joint(p.withdrawal_id, p.deposit_id).transpose();
  EXPECT_NE(a.probability, clf.probabilities(tp.model.target_features(swapped))[0]);
  EXPECT_THROW(predict_pair(clf, tp.model, f, "nobody", p.withdrawal_id), LookupError);
}

TEST(Threshold, RaisingItNeverTurnsZeroIntoOne) {
  Rng rng(8);
  for (int t = 0; t < 200; ++t) {
    const double p = uniform01(rng);
    const double lo = uniform01(rng);
    const double hi = lo + (1.0 - lo) * uniform01(rng);
    EXPECT_LE(threshold_label(p, hi), threshold_label(p, lo));
  }
  EXPECT_EQ(threshold_label(0.5, 0.5), 1);
  EXPECT_EQ(threshold_label(std::nextafter(0.5, 0.0), 0.5), 0);
}

TEST(Predictions, CsvLayout) {
  std::vector<Prediction> p{{"d1", "w1", 0.75, 1, 0.5}, {"d2", "w2", 0.25, 0, 0.5}};
  EXPECT_EQ(predictions_csv(p), "deposit,withdrawal,probability,label\nd1,w1,0.75,1\nd2,w2,0.25,0\n");
}

}  // namespace
}  // namespace stealthlink
