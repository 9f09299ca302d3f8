#pragma once

// Minimal reverse-mode layer stack on Eigen. Rows of every activation matrix
// are samples (or tokens); layers cache what backward() needs during
// forward(), while infer() is const, cache-free and safe to call concurrently.

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "stealthlink/rng.hpp"

namespace stealthlink::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

struct Parameter {
  Matrix value;
  Matrix grad;
  Matrix velocity;
  bool trainable = true;  // false for running statistics

  Parameter() = default;
  explicit Parameter(Matrix v, bool is_trainable = true);
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

struct ParamRef {
  std::string name;
  Parameter* param;
};

class Layer {
 public:
  virtual ~Layer() = default;

  // Training-mode forward pass.
  virtual Matrix forward(const Matrix& x) = 0;
  // Returns dL/dx for the most recent forward() and accumulates parameter grads.
  virtual Matrix backward(const Matrix& grad_out) = 0;
  // Evaluation-mode pass (batch-norm uses running statistics).
  virtual Matrix infer(const Matrix& x) const = 0;

  virtual void collect(const std::string& prefix, std::vector<ParamRef>& out) {
    (void)prefix;
    (void)out;
  }
  virtual std::unique_ptr<Layer> clone() const = 0;
};

class Linear final : public Layer {
 public:
  // PyTorch-style init: weight and bias ~ U(-1/sqrt(in), 1/sqrt(in)).
  Linear(std::size_t in, std::size_t out, Rng& rng, bool bias = true);

  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& grad_out) override;
  Matrix infer(const Matrix& x) const override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Linear>(*this); }

  Parameter& weight() { return weight_; }  // out x in
  Parameter& bias() { return bias_; }      // 1 x out
  const Parameter& weight() const { return weight_; }
  bool has_bias() const { return has_bias_; }

 private:
  Parameter weight_;
  Parameter bias_;
  bool has_bias_;
  Matrix input_;
};

class ReLU final : public Layer {
 public:
  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& grad_out) override;
  Matrix infer(const Matrix& x) const override { return x.cwiseMax(0.0); }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ReLU>(*this); }

 private:
  Matrix mask_;
};

class BatchNorm1d final : public Layer {
 public:
  explicit BatchNorm1d(std::size_t dim, double momentum = 0.1, double eps = 1e-5);

  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& grad_out) override;
  Matrix infer(const Matrix& x) const override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm1d>(*this); }

 private:
  Parameter gamma_, beta_, running_mean_, running_var_;
  double momentum_, eps_;
  Matrix x_hat_;
  RowVector inv_std_;
  bool batch_stats_ = true;
};

class LayerNorm final : public Layer {
 public:
  explicit LayerNorm(std::size_t dim, double eps = 1e-5);

  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& grad_out) override;
  Matrix infer(const Matrix& x) const override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<LayerNorm>(*this); }

 private:
  Parameter gamma_, beta_;
  double eps_;
  Matrix x_hat_;
  Vector inv_std_;
};

// Multi-head self-attention over sequences of `seq_len` tokens. Input rows are
// tokens, grouped batch-major: rows [b*seq_len, (b+1)*seq_len) form sequence b.
class MultiHeadSelfAttention final : public Layer {
 public:
  MultiHeadSelfAttention(std::size_t d_model, std::size_t heads, std::size_t seq_len, Rng& rng);

  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& grad_out) override;
  Matrix infer(const Matrix& x) const override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<MultiHeadSelfAttention>(*this); }

 private:
  Matrix attend(const Matrix& q, const Matrix& k, const Matrix& v, std::vector<Matrix>* probs) const;

  std::size_t d_model_, heads_, seq_len_;
  Linear q_, k_, v_, o_;
  Matrix q_out_, k_out_, v_out_;
  std::vector<Matrix> probs_;  // per (sequence, head): seq_len x seq_len
};

// Owns a list of layers applied in order.
class Sequential final : public Layer {
 public:
  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }
  void push(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& grad_out) override;
  Matrix infer(const Matrix& x) const override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Sequential>(*this); }

  std::size_t size() const { return layers_.size(); }
  Layer& at(std::size_t i) { return *layers_.at(i); }
  const Layer& at(std::size_t i) const { return *layers_.at(i); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// y = x + inner(x)
class Residual final : public Layer {
 public:
  explicit Residual(Sequential inner) : inner_(std::move(inner)) {}

  Matrix forward(const Matrix& x) override { return x + inner_.forward(x); }
  Matrix backward(const Matrix& grad_out) override { return grad_out + inner_.backward(grad_out); }
  Matrix infer(const Matrix& x) const override { return x + inner_.infer(x); }
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override { inner_.collect(prefix, out); }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Residual>(*this); }

  Sequential& inner() { return inner_; }

 private:
  Sequential inner_;
};

// Post-norm encoder layer: h = LN(x + MHA(x)); y = LN(h + FFN(h)).
class TransformerEncoderLayer final : public Layer {
 public:
  TransformerEncoderLayer(std::size_t d_model, std::size_t heads, std::size_t ff_dim, std::size_t seq_len, Rng& rng);

  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& grad_out) override;
  Matrix infer(const Matrix& x) const override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<TransformerEncoderLayer>(*this); }

 private:
  MultiHeadSelfAttention attn_;
  LayerNorm norm1_, norm2_;
  Sequential ffn_;
};

// A named stack of layers with convenience accessors.
class Network {
 public:
  Network() = default;
  explicit Network(Sequential body) : body_(std::move(body)) {}

  Matrix forward(const Matrix& x) { return body_.forward(x); }
  Matrix backward(const Matrix& g) { return body_.backward(g); }
  Matrix infer(const Matrix& x) const { return body_.infer(x); }

  std::vector<ParamRef> parameters(const std::string& prefix = "");
  void zero_grad();
  std::size_t num_parameters();
  // L2 norm over all trainable parameters.
  double parameter_norm();
  Sequential& body() { return body_; }
  const Sequential& body() const { return body_; }

 private:
  Sequential body_;
};

struct SgdOptions {
  double learning_rate = 1e-4;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

// SGD with heavy-ball momentum and L2 weight decay (PyTorch semantics:
// v = mu*v + (g + wd*p); p -= lr*v).
void sgd_step(const std::vector<ParamRef>& params, const SgdOptions& opt);
void sgd_step(Parameter& param, const SgdOptions& opt);

// ---- losses (all return mean over rows) ---------------------------------------

struct LossResult {
  double loss = 0.0;
  Matrix grad;  // dL/dlogits
};

Matrix softmax_rows(const Matrix& logits);
Vector sigmoid(const Vector& logits);

// Multiclass cross-entropy on logits with integer labels.
LossResult cross_entropy(const Matrix& logits, const std::vector<int>& labels);

// Binary cross-entropy on a single logit column (numerically stable form of
// -[y log s(z) + (1-y) log(1 - s(z))]).
LossResult binary_cross_entropy(const Matrix& logits, const std::vector<int>& labels);

struct DiscrepancyResult {
  double loss = 0.0;
  Matrix grad1;  // dL/dlogits1
  Matrix grad2;  // dL/dlogits2
};

// mean over rows of || softmax(l1) - softmax(l2) ||_1
DiscrepancyResult l1_discrepancy(const Matrix& logits1, const Matrix& logits2);

// Serialized view of every parameter (including running statistics).
std::vector<std::pair<std::string, const Matrix*>> tensors(const std::vector<ParamRef>& params);

}  // namespace stealthlink::nn
