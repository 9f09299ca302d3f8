#include "stealthlink/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace stealthlink::nn {

Parameter::Parameter(Matrix v, bool is_trainable)
    : value(std::move(v)), trainable(is_trainable) {
  grad = Matrix::Zero(value.rows(), value.cols());
  velocity = Matrix::Zero(value.rows(), value.cols());
}

// ---- Linear -------------------------------------------------------------------

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, bool bias) : has_bias_(bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Matrix w(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = (2.0 * uniform01(rng) - 1.0) * bound;
  weight_ = Parameter(std::move(w));
  Matrix b = Matrix::Zero(1, static_cast<Eigen::Index>(out));
  if (bias) {
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = (2.0 * uniform01(rng) - 1.0) * bound;
  }
  bias_ = Parameter(std::move(b), bias);
}

Matrix Linear::infer(const Matrix& x) const {
  if (x.cols() != weight_.value.cols()) {
    throw std::invalid_argument("Linear: input width " + std::to_string(x.cols()) + " != " +
                                std::to_string(weight_.value.cols()));
  }
  Matrix y = x * weight_.value.transpose();
  if (has_bias_) y.rowwise() += bias_.value.row(0);
  return y;
}

Matrix Linear::forward(const Matrix& x) {
  input_ = x;
  return infer(x);
}

Matrix Linear::backward(const Matrix& grad_out) {
  weight_.grad.noalias() += grad_out.transpose() * input_;
  if (has_bias_) bias_.grad.row(0) += grad_out.colwise().sum();
  return grad_out * weight_.value;
}

void Linear::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + "weight", &weight_});
  if (has_bias_) out.push_back({prefix + "bias", &bias_});
}

// ---- ReLU ---------------------------------------------------------------------

Matrix ReLU::forward(const Matrix& x) {
  mask_ = (x.array() > 0.0).cast<double>().matrix();
  return x.cwiseMax(0.0);
}

Matrix ReLU::backward(const Matrix& grad_out) { return grad_out.cwiseProduct(mask_); }

// ---- BatchNorm1d -------------------------------------------------------------

BatchNorm1d::BatchNorm1d(std::size_t dim, double momentum, double eps)
    : gamma_(Matrix::Ones(1, static_cast<Eigen::Index>(dim))),
      beta_(Matrix::Zero(1, static_cast<Eigen::Index>(dim))),
      running_mean_(Matrix::Zero(1, static_cast<Eigen::Index>(dim)), false),
      running_var_(Matrix::Ones(1, static_cast<Eigen::Index>(dim)), false),
      momentum_(momentum),
      eps_(eps) {}

Matrix BatchNorm1d::infer(const Matrix& x) const {
  RowVector inv = (running_var_.value.row(0).array() + eps_).rsqrt().matrix();
  Matrix y = (x.rowwise() - running_mean_.value.row(0)).array().rowwise() * (inv.array() * gamma_.value.row(0).array());
  y.rowwise() += beta_.value.row(0);
  return y;
}

Matrix BatchNorm1d::forward(const Matrix& x) {
  const auto n = x.rows();
  if (n < 2) {
    // A single row has no batch variance; fall back to running statistics.
    batch_stats_ = false;
    inv_std_ = (running_var_.value.row(0).array() + eps_).rsqrt().matrix();
    x_hat_ = (x.rowwise() - running_mean_.value.row(0)).array().rowwise() * inv_std_.array();
  } else {
    batch_stats_ = true;
    RowVector mean = x.colwise().mean();
    Matrix centered = x.rowwise() - mean;
    RowVector var = centered.array().square().colwise().mean().matrix();
    inv_std_ = (var.array() + eps_).rsqrt().matrix();
    x_hat_ = centered.array().rowwise() * inv_std_.array();
    RowVector unbiased = var * (static_cast<double>(n) / static_cast<double>(n - 1));
    running_mean_.value.row(0) = (1.0 - momentum_) * running_mean_.value.row(0) + momentum_ * mean;
    running_var_.value.row(0) = (1.0 - momentum_) * running_var_.value.row(0) + momentum_ * unbiased;
  }
  Matrix y = x_hat_.array().rowwise() * gamma_.value.row(0).array();
  y.rowwise() += beta_.value.row(0);
  return y;
}

Matrix BatchNorm1d::backward(const Matrix& grad_out) {
  gamma_.grad.row(0) += grad_out.cwiseProduct(x_hat_).colwise().sum();
  beta_.grad.row(0) += grad_out.colwise().sum();
  Matrix dxhat = grad_out.array().rowwise() * gamma_.value.row(0).array();
  if (!batch_stats_) return dxhat.array().rowwise() * inv_std_.array();
  const double n = static_cast<double>(grad_out.rows());
  RowVector sum_d = dxhat.colwise().sum();
  RowVector sum_dx = dxhat.cwiseProduct(x_hat_).colwise().sum();
  Matrix dx = (n * dxhat).rowwise() - sum_d;
  dx -= (x_hat_.array().rowwise() * sum_dx.array()).matrix();
  return (dx.array().rowwise() * (inv_std_.array() / n)).matrix();
}

void BatchNorm1d::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + "gamma", &gamma_});
  out.push_back({prefix + "beta", &beta_});
  out.push_back({prefix + "running_mean", &running_mean_});
  out.push_back({prefix + "running_var", &running_var_});
}

// ---- LayerNorm ------------------------------------------------------------------

LayerNorm::LayerNorm(std::size_t dim, double eps)
    : gamma_(Matrix::Ones(1, static_cast<Eigen::Index>(dim))),
      beta_(Matrix::Zero(1, static_cast<Eigen::Index>(dim))),
      eps_(eps) {}

Matrix LayerNorm::infer(const Matrix& x) const {
  Vector mean = x.rowwise().mean();
  Matrix centered = x.colwise() - mean;
  Vector inv = (centered.array().square().rowwise().mean() + eps_).rsqrt().matrix();
  Matrix y = centered.array().colwise() * inv.array();
  y = y.array().rowwise() * gamma_.value.row(0).array();
  y.rowwise() += beta_.value.row(0);
  return y;
}

Matrix LayerNorm::forward(const Matrix& x) {
  Vector mean = x.rowwise().mean();
  Matrix centered = x.colwise() - mean;
  inv_std_ = (centered.array().square().rowwise().mean() + eps_).rsqrt().matrix();
  x_hat_ = centered.array().colwise() * inv_std_.array();
  Matrix y = x_hat_.array().rowwise() * gamma_.value.row(0).array();
  y.rowwise() += beta_.value.row(0);
  return y;
}

Matrix LayerNorm::backward(const Matrix& grad_out) {
  gamma_.grad.row(0) += grad_out.cwiseProduct(x_hat_).colwise().sum();
  beta_.grad.row(0) += grad_out.colwise().sum();
  Matrix dxhat = grad_out.array().rowwise() * gamma_.value.row(0).array();
  const double d = static_cast<double>(grad_out.cols());
  Vector sum_d = dxhat.rowwise().sum();
  Vector sum_dx = dxhat.cwiseProduct(x_hat_).rowwise().sum();
  Matrix dx = (d * dxhat).colwise() - sum_d;
  dx -= (x_hat_.array().colwise() * sum_dx.array()).matrix();
  return (dx.array().colwise() * (inv_std_.array() / d)).matrix();
}

void LayerNorm::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + "gamma", &gamma_});
  out.push_back({prefix + "beta", &beta_});
}

// ---- MultiHeadSelfAttention ----------------------------------------------------

MultiHeadSelfAttention::MultiHeadSelfAttention(std::size_t d_model, std::size_t heads, std::size_t seq_len, Rng& rng)
    : d_model_(d_model),
      heads_(heads),
      seq_len_(seq_len),
      q_(d_model, d_model, rng),
      k_(d_model, d_model, rng),
      v_(d_model, d_model, rng),
      o_(d_model, d_model, rng) {
  if (heads == 0 || d_model % heads != 0) {
    throw std::invalid_argument("attention: d_model must be divisible by the head count");
  }
  if (seq_len == 0) throw std::invalid_argument("attention: seq_len must be positive");
}

Matrix MultiHeadSelfAttention::attend(const Matrix& q, const Matrix& k, const Matrix& v,
                                      std::vector<Matrix>* probs) const {
  const auto t = static_cast<Eigen::Index>(seq_len_);
  const auto dh = static_cast<Eigen::Index>(d_model_ / heads_);
  if (q.rows() % t != 0) throw std::invalid_argument("attention: row count is not a multiple of seq_len");
  const Eigen::Index batches = q.rows() / t;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix out(q.rows(), q.cols());
  if (probs) probs->clear();
  for (Eigen::Index b = 0; b < batches; ++b) {
    for (Eigen::Index h = 0; h < static_cast<Eigen::Index>(heads_); ++h) {
      auto qb = q.block(b * t, h * dh, t, dh);
      auto kb = k.block(b * t, h * dh, t, dh);
      auto vb = v.block(b * t, h * dh, t, dh);
      Matrix a = softmax_rows((qb * kb.transpose()) * scale);
      out.block(b * t, h * dh, t, dh).noalias() = a * vb;
      if (probs) probs->push_back(std::move(a));
    }
  }
  return out;
}

Matrix MultiHeadSelfAttention::infer(const Matrix& x) const {
  return o_.infer(attend(q_.infer(x), k_.infer(x), v_.infer(x), nullptr));
}

Matrix MultiHeadSelfAttention::forward(const Matrix& x) {
  q_out_ = q_.forward(x);
  k_out_ = k_.forward(x);
  v_out_ = v_.forward(x);
  return o_.forward(attend(q_out_, k_out_, v_out_, &probs_));
}

Matrix MultiHeadSelfAttention::backward(const Matrix& grad_out) {
  Matrix d_att = o_.backward(grad_out);
  const auto t = static_cast<Eigen::Index>(seq_len_);
  const auto dh = static_cast<Eigen::Index>(d_model_ / heads_);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix dq = Matrix::Zero(q_out_.rows(), q_out_.cols());
  Matrix dk = Matrix::Zero(k_out_.rows(), k_out_.cols());
  Matrix dv = Matrix::Zero(v_out_.rows(), v_out_.cols());
  const Eigen::Index batches = q_out_.rows() / t;
  std::size_t idx = 0;
  for (Eigen::Index b = 0; b < batches; ++b) {
    for (Eigen::Index h = 0; h < static_cast<Eigen::Index>(heads_); ++h, ++idx) {
      const Matrix& a = probs_[idx];
      auto qb = q_out_.block(b * t, h * dh, t, dh);
      auto kb = k_out_.block(b * t, h * dh, t, dh);
      auto vb = v_out_.block(b * t, h * dh, t, dh);
      auto dob = d_att.block(b * t, h * dh, t, dh);
      Matrix da = dob * vb.transpose();
      dv.block(b * t, h * dh, t, dh).noalias() = a.transpose() * dob;
      Vector row_dot = (da.array() * a.array()).rowwise().sum();
      Matrix ds = (a.array() * (da.colwise() - row_dot).array()).matrix() * scale;
      dq.block(b * t, h * dh, t, dh).noalias() = ds * kb;
      dk.block(b * t, h * dh, t, dh).noalias() = ds.transpose() * qb;
    }
  }
  return q_.backward(dq) + k_.backward(dk) + v_.backward(dv);
}

void MultiHeadSelfAttention::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  q_.collect(prefix + "q.", out);
  k_.collect(prefix + "k.", out);
  v_.collect(prefix + "v.", out);
  o_.collect(prefix + "o.", out);
}

// ---- Sequential ---------------------------------------------------------------------

Sequential::Sequential(const Sequential& other) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Sequential& Sequential::operator=(const Sequential& other) {
  if (this != &other) {
    Sequential copy(other);
    layers_ = std::move(copy.layers_);
  }
  return *this;
}

Matrix Sequential::forward(const Matrix& x) {
  Matrix h = x;
  for (auto& l : layers_) h = l->forward(h);
  return h;
}

Matrix Sequential::backward(const Matrix& grad_out) {
  Matrix g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

Matrix Sequential::infer(const Matrix& x) const {
  Matrix h = x;
  for (const auto& l : layers_) h = l->infer(h);
  return h;
}

void Sequential::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->collect(prefix + std::to_string(i) + ".", out);
}

// ---- TransformerEncoderLayer ---------------------------------------------------------

TransformerEncoderLayer::TransformerEncoderLayer(std::size_t d_model, std::size_t heads, std::size_t ff_dim,
                                                 std::size_t seq_len, Rng& rng)
    : attn_(d_model, heads, seq_len, rng), norm1_(d_model), norm2_(d_model) {
  ffn_.add<Linear>(d_model, ff_dim, rng);
  ffn_.add<ReLU>();
  ffn_.add<Linear>(ff_dim, d_model, rng);
}

Matrix TransformerEncoderLayer::forward(const Matrix& x) {
  Matrix h = norm1_.forward(x + attn_.forward(x));
  return norm2_.forward(h + ffn_.forward(h));
}

Matrix TransformerEncoderLayer::backward(const Matrix& grad_out) {
  Matrix g2 = norm2_.backward(grad_out);
  Matrix gh = g2 + ffn_.backward(g2);
  Matrix g1 = norm1_.backward(gh);
  return g1 + attn_.backward(g1);
}

Matrix TransformerEncoderLayer::infer(const Matrix& x) const {
  Matrix h = norm1_.infer(x + attn_.infer(x));
  return norm2_.infer(h + ffn_.infer(h));
}

void TransformerEncoderLayer::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  attn_.collect(prefix + "attn.", out);
  norm1_.collect(prefix + "norm1.", out);
  ffn_.collect(prefix + "ffn.", out);
  norm2_.collect(prefix + "norm2.", out);
}

// ---- Network -------------------------------------------------------------------------

std::vector<ParamRef> Network::parameters(const std::string& prefix) {
  std::vector<ParamRef> out;
  body_.collect(prefix, out);
  return out;
}

void Network::zero_grad() {
  for (auto& p : parameters()) p.param->zero_grad();
}

std::size_t Network::num_parameters() {
  std::size_t n = 0;
  for (auto& p : parameters()) {
    if (p.param->trainable) n += static_cast<std::size_t>(p.param->value.size());
  }
  return n;
}

double Network::parameter_norm() {
  double sq = 0.0;
  for (auto& p : parameters()) {
    if (p.param->trainable) sq += p.param->value.squaredNorm();
  }
  return std::sqrt(sq);
}

// ---- optimizer ---------------------------------------------------------------------------

void sgd_step(Parameter& p, const SgdOptions& opt) {
  if (!p.trainable) return;
  Matrix g = p.grad;
  if (opt.weight_decay != 0.0) g += opt.weight_decay * p.value;
  if (opt.momentum != 0.0) {
    p.velocity = opt.momentum * p.velocity + g;
    p.value -= opt.learning_rate * p.velocity;
  } else {
    p.value -= opt.learning_rate * g;
  }
}

void sgd_step(const std::vector<ParamRef>& params, const SgdOptions& opt) {
  for (const auto& p : params) sgd_step(*p.param, opt);
}

// ---- losses ---------------------------------------------------------------------------------

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    double m = logits.row(r).maxCoeff();
    RowVector e = (logits.row(r).array() - m).exp().matrix();
    out.row(r) = e / e.sum();
  }
  return out;
}

Vector sigmoid(const Vector& logits) {
  Vector out(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    double z = logits[i];
    out[i] = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  }
  return out;
}

LossResult cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size()) {
    throw std::invalid_argument("cross_entropy: label count mismatch");
  }
  const double n = static_cast<double>(logits.rows());
  LossResult r;
  r.grad = softmax_rows(logits);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const auto y = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)]);
    double m = logits.row(i).maxCoeff();
    double lse = m + std::log((logits.row(i).array() - m).exp().sum());
    r.loss += lse - logits(i, y);
    r.grad(i, y) -= 1.0;
  }
  r.loss /= n;
  r.grad /= n;
  return r;
}

LossResult binary_cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
  if (logits.cols() != 1 || static_cast<std::size_t>(logits.rows()) != labels.size()) {
    throw std::invalid_argument("binary_cross_entropy: expects one logit column per label");
  }
  const double n = static_cast<double>(logits.rows());
  LossResult r;
  r.grad.resize(logits.rows(), 1);
  Vector p = sigmoid(logits.col(0));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double z = logits(i, 0);
    double y = labels[static_cast<std::size_t>(i)];
    // max(z,0) - z*y + log(1 + exp(-|z|))
    r.loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    r.grad(i, 0) = (p[i] - y) / n;
  }
  r.loss /= n;
  return r;
}

DiscrepancyResult l1_discrepancy(const Matrix& logits1, const Matrix& logits2) {
  if (logits1.rows() != logits2.rows() || logits1.cols() != logits2.cols()) {
    throw std::invalid_argument("l1_discrepancy: shape mismatch");
  }
  const double n = static_cast<double>(logits1.rows());
  Matrix p1 = softmax_rows(logits1);
  Matrix p2 = softmax_rows(logits2);
  Matrix diff = p1 - p2;
  DiscrepancyResult r;
  r.loss = diff.cwiseAbs().sum() / n;
  Matrix dp = diff.unaryExpr([n](double v) { return (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0)) / n; });
  auto softmax_back = [](const Matrix& p, const Matrix& g) {
    Vector dot = (p.array() * g.array()).rowwise().sum();
    return Matrix((p.array() * (g.colwise() - dot).array()).matrix());
  };
  r.grad1 = softmax_back(p1, dp);
  r.grad2 = softmax_back(p2, -dp);
  return r;
}

std::vector<std::pair<std::string, const Matrix*>> tensors(const std::vector<ParamRef>& params) {
  std::vector<std::pair<std::string, const Matrix*>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.name, &p.param->value);
  return out;
}

}  // namespace stealthlink::nn
