#include <gtest/gtest.h>

#include "stealthlink/nn.hpp"
#include "test_util.hpp"

namespace stealthlink::nn {
namespace {

using testing::grad_close;
using testing::numeric_grad;

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = standard_normal(rng);
  return m;
}

// L = sum(G .* layer(X)); checks dL/dX and every parameter gradient.
void check_layer(Layer& layer, Matrix x, Rng& rng) {
  Matrix probe = layer.forward(x);
  Matrix g = random_matrix(probe.rows(), probe.cols(), rng);
  std::vector<ParamRef> params;
  layer.collect("", params);
  for (auto& p : params) p.param->zero_grad();
  layer.forward(x);
  Matrix dx = layer.backward(g);

  auto loss = [&] { return layer.forward(x).cwiseProduct(g).sum(); };
  EXPECT_TRUE(grad_close(dx, numeric_grad(x, loss))) << "input gradient";
  for (auto& p : params) {
    if (!p.param->trainable) continue;
    Matrix analytic = p.param->grad;
    EXPECT_TRUE(grad_close(analytic, numeric_grad(p.param->value, loss))) << p.name;
  }
}

TEST(Gradients, Linear) {
  Rng rng(1);
  Linear l(4, 3, rng);
  check_layer(l, random_matrix(5, 4, rng), rng);
}

TEST(Gradients, ReLUAwayFromKink) {
  Rng rng(2);
  ReLU r;
  Matrix x = random_matrix(4, 3, rng);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (std::abs(x.data()[i]) < 0.1) x.data()[i] = 0.5;
  }
  check_layer(r, x, rng);
}

TEST(Gradients, BatchNormTrainingMode) {
  Rng rng(3);
  BatchNorm1d bn(3);
  check_layer(bn, random_matrix(6, 3, rng), rng);
}

TEST(Gradients, LayerNorm) {
  Rng rng(4);
  LayerNorm ln(5);
  check_layer(ln, random_matrix(3, 5, rng), rng);
}

TEST(Gradients, MultiHeadSelfAttention) {
  Rng rng(5);
  MultiHeadSelfAttention mha(4, 2, 3, rng);
  check_layer(mha, random_matrix(6, 4, rng), rng);
}

TEST(Gradients, TransformerEncoderLayer) {
  Rng rng(6);
  TransformerEncoderLayer t(4, 2, 8, 2, rng);
  check_layer(t, random_matrix(4, 4, rng), rng);
}

TEST(Gradients, CrossEntropy) {
  Rng rng(7);
  Matrix z = random_matrix(4, 3, rng);
  std::vector<int> y{0, 2, 1, 2};
  auto r = cross_entropy(z, y);
  EXPECT_TRUE(grad_close(r.grad, numeric_grad(z, [&] { return cross_entropy(z, y).loss; })));
}

TEST(Gradients, BinaryCrossEntropy) {
  Rng rng(8);
  Matrix z = 3.0 * random_matrix(6, 1, rng);
  std::vector<int> y{0, 1, 1, 0, 1, 0};
  auto r = binary_cross_entropy(z, y);
  EXPECT_TRUE(grad_close(r.grad, numeric_grad(z, [&] { return binary_cross_entropy(z, y).loss; })));
}

TEST(Gradients, L1Discrepancy) {
  Rng rng(9);
  Matrix a = random_matrix(3, 2, rng);
  Matrix b = random_matrix(3, 2, rng);
  auto r = l1_discrepancy(a, b);
  EXPECT_TRUE(grad_close(r.grad1, numeric_grad(a, [&] { return l1_discrepancy(a, b).loss; })));
  EXPECT_TRUE(grad_close(r.grad2, numeric_grad(b, [&] { return l1_discrepancy(a, b).loss; })));
}

TEST(Losses, ClosedFormValues) {
  Matrix z(1, 2);
  z << 0.0, 0.0;
  EXPECT_NEAR(cross_entropy(z, {1}).loss, std::log(2.0), 1e-12);
  Matrix s(2, 1);
  s << 0.0, 800.0;
  auto b = binary_cross_entropy(s, {1, 1});
  EXPECT_NEAR(b.loss, 0.5 * std::log(2.0), 1e-12);
  EXPECT_TRUE(std::isfinite(binary_cross_entropy(-s, {1, 1}).loss));
  Matrix p(1, 2), q(1, 2);
  p << 10.0, -10.0;
  q << -10.0, 10.0;
  EXPECT_NEAR(l1_discrepancy(p, q).loss, 2.0, 1e-6);
  EXPECT_DOUBLE_EQ(l1_discrepancy(p, p).loss, 0.0);
}

TEST(Sgd, MomentumAndWeightDecayFollowTorchSemantics) {
  Parameter p(Matrix::Constant(1, 1, 2.0));
  SgdOptions opt{0.1, 0.9, 0.5};
  p.grad(0, 0) = 1.0;
  sgd_step(p, opt);  // v = 1 + 0.5*2 = 2; p = 2 - 0.2
  EXPECT_NEAR(p.value(0, 0), 1.8, 1e-12);
  p.grad(0, 0) = 1.0;
  sgd_step(p, opt);  // v = 0.9*2 + 1 + 0.9 = 3.7; p = 1.8 - 0.37
  EXPECT_NEAR(p.value(0, 0), 1.43, 1e-12);
}

TEST(Sequential, CopiesAreDeep) {
  Rng rng(10);
  Sequential s;
  s.add<Linear>(2, 2, rng);
  Sequential t = s;
  Matrix x = Matrix::Ones(1, 2);
  auto& lin = static_cast<Linear&>(t.at(0));
  lin.weight().value.setZero();
  EXPECT_NE(s.infer(x), t.infer(x));
}

TEST(BatchNorm, InferUsesRunningStatistics) {
  BatchNorm1d bn(1, 1.0);  // momentum 1: running stats = last batch
  Matrix x(4, 1);
  x << 1, 2, 3, 4;
  Matrix y = bn.forward(x);
  EXPECT_NEAR(y.mean(), 0.0, 1e-12);
  // Unbiased running variance (5/3) versus the biased batch variance (5/4).
  Matrix one = Matrix::Constant(1, 1, 4.0);
  EXPECT_NEAR(bn.infer(one)(0, 0), 1.5 / std::sqrt(5.0 / 3.0 + 1e-5), 1e-9);
}

}  // namespace
}  // namespace stealthlink::nn
