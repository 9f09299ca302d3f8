#include "stealthlink/transfer.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "stealthlink/csv.hpp"
#include "stealthlink/digest.hpp"
#include "stealthlink/error.hpp"
#include "stealthlink/rng.hpp"

namespace stealthlink {

using nn::Matrix;
using nn::RowVector;
using nn::Vector;

// ---- enum names -------------------------------------------------------------------

std::string to_string(EncoderArch v) { return v == EncoderArch::transformer ? "transformer" : "mlp"; }
std::string to_string(GeneratorArch v) { return v == GeneratorArch::transformer ? "transformer" : "mlp"; }
std::string to_string(AdapterKind v) { return v == AdapterKind::pca ? "pca" : "expansion"; }
std::string to_string(TransferStrategy v) { return v == TransferStrategy::mcd ? "mcd" : "none"; }
std::string to_string(ClassifierStep v) { return v == ClassifierStep::with_source ? "with_source" : "pure"; }
std::string to_string(TargetNorm v) {
  switch (v) {
    case TargetNorm::center: return "center";
    case TargetNorm::standardize: return "standardize";
    case TargetNorm::none: return "none";
  }
  return "center";
}

namespace {

template <typename E>
E parse_enum(const std::string& s, std::initializer_list<E> values, const char* what) {
  for (E v : values) {
    if (to_string(v) == s) return v;
  }
  throw UsageError(std::string("unknown ") + what + " '" + s + "'");
}

}  // namespace

EncoderArch parse_encoder_arch(const std::string& s) {
  return parse_enum(s, {EncoderArch::transformer, EncoderArch::mlp}, "encoder architecture");
}
GeneratorArch parse_generator_arch(const std::string& s) {
  return parse_enum(s, {GeneratorArch::mlp, GeneratorArch::transformer}, "generator architecture");
}
AdapterKind parse_adapter_kind(const std::string& s) {
  return parse_enum(s, {AdapterKind::pca, AdapterKind::expansion}, "adapter");
}
TransferStrategy parse_transfer_strategy(const std::string& s) {
  return parse_enum(s, {TransferStrategy::mcd, TransferStrategy::none}, "transfer strategy");
}
ClassifierStep parse_classifier_step(const std::string& s) {
  return parse_enum(s, {ClassifierStep::with_source, ClassifierStep::pure}, "classifier step");
}
TargetNorm parse_target_norm(const std::string& s) {
  return parse_enum(s, {TargetNorm::center, TargetNorm::standardize, TargetNorm::none}, "target normalization");
}

void ModelConfig::validate() const {
  if (d_s == 0 || d_p == 0) throw ArgumentError("model: d_S and d_P must be positive");
  if (d_p % 2 != 0) throw ArgumentError("model: d_P must equal 2 * d_C (even)");
  if (adapter == AdapterKind::pca && d_p > d_s) {
    throw ArgumentError("model: the PCA adapter needs d_P <= d_S; use the expansion adapter");
  }
  if (d_model == 0 || heads == 0 || d_model % heads != 0) {
    throw ArgumentError("model: d_model must be a positive multiple of the head count");
  }
  if (encoder_hidden == 0 || ff_dim == 0 || generator_hidden == 0) {
    throw ArgumentError("model: layer widths must be positive");
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ArgumentError("model: lambda must be finite and >= 0");
}

// ---- components -------------------------------------------------------------------

Encoder::Encoder(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "encoder"));
  nn::Sequential body;
  body.add<nn::Linear>(cfg.d_s, cfg.d_model, rng);
  if (cfg.encoder == EncoderArch::transformer) {
    for (std::size_t l = 0; l < cfg.encoder_layers; ++l) {
      body.add<nn::TransformerEncoderLayer>(cfg.d_model, cfg.heads, cfg.ff_dim, 1, rng);
    }
  } else {
    for (std::size_t l = 0; l < cfg.encoder_layers; ++l) {
      body.add<nn::ReLU>();
      body.add<nn::Linear>(cfg.d_model, cfg.d_model, rng);
    }
  }
  body.add<nn::Linear>(cfg.d_model, cfg.encoder_hidden, rng);
  body.add<nn::BatchNorm1d>(cfg.encoder_hidden);
  body.add<nn::ReLU>();
  auto& last = body.add<nn::Linear>(cfg.encoder_hidden, cfg.d_s, rng);
  last.weight().value.setZero();
  last.bias().value.setZero();
  net_ = nn::Network(std::move(body));
}

Matrix Adapter::project(const Matrix& encoded) const {
  if (static_cast<std::size_t>(encoded.cols()) != d_s()) {
    throw ShapeError("adapter: input width " + std::to_string(encoded.cols()) + ", expected " +
                     std::to_string(d_s()));
  }
  return (encoded.rowwise() - mu.transpose()) * u.value;
}

void TargetNormalizer::fit(const Matrix& target, TargetNorm m, const Matrix* reference) {
  mode = m;
  const auto d = target.cols();
  mean = RowVector::Zero(d);
  scale = RowVector::Ones(d);
  if (m == TargetNorm::none || target.rows() == 0) return;
  mean = target.colwise().mean();
  if (m == TargetNorm::standardize && target.rows() > 1) {
    auto column_std = [](const Matrix& x) {
      RowVector mu = x.colwise().mean();
      return RowVector(((x.rowwise() - mu).array().square().colwise().sum() / static_cast<double>(x.rows() - 1))
                           .sqrt()
                           .matrix());
    };
    RowVector sd = column_std(target);
    RowVector ref = RowVector::Ones(d);
    if (reference != nullptr && reference->cols() == d && reference->rows() > 1) ref = column_std(*reference);
    for (Eigen::Index j = 0; j < d; ++j) {
      if (sd[j] > 1e-12 && ref[j] > 1e-12) scale[j] = sd[j] / ref[j];
    }
  }
}

Matrix TargetNormalizer::apply(const Matrix& target) const {
  if (mean.size() == 0) return target;
  if (target.cols() != mean.size()) {
    throw ShapeError("target normalizer: width " + std::to_string(target.cols()) + ", expected " +
                     std::to_string(mean.size()));
  }
  return ((target.rowwise() - mean).array().rowwise() / scale.array()).matrix();
}

namespace {

nn::Network make_generator(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "generator"));
  nn::Sequential s;
  if (cfg.generator == GeneratorArch::mlp) {
    s.add<nn::Linear>(cfg.d_p, cfg.generator_hidden, rng);
    s.add<nn::ReLU>();
    s.add<nn::Linear>(cfg.generator_hidden, cfg.d_p, rng);
    s.add<nn::ReLU>();
  } else {
    s.add<nn::Linear>(cfg.d_p, cfg.d_model, rng);
    for (std::size_t l = 0; l < cfg.generator_layers; ++l) {
      s.add<nn::TransformerEncoderLayer>(cfg.d_model, cfg.heads, cfg.generator_hidden, 1, rng);
    }
    s.add<nn::Linear>(cfg.d_model, cfg.d_p, rng);
    s.add<nn::ReLU>();
  }
  return nn::Network(std::move(s));
}

nn::Network make_classifier(const ModelConfig& cfg, std::uint64_t seed, std::string_view tag) {
  Rng rng(derive_seed(seed, tag));
  nn::Sequential s;
  if (cfg.classifier_hidden > 0) {
    s.add<nn::Linear>(cfg.d_p, cfg.classifier_hidden, rng);
    s.add<nn::ReLU>();
    s.add<nn::Linear>(cfg.classifier_hidden, 2, rng);
  } else {
    s.add<nn::Linear>(cfg.d_p, 2, rng);
  }
  return nn::Network(std::move(s));
}

bool finite(const Matrix& m) { return m.allFinite(); }

}  // namespace

TransferModel make_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  TransferModel m;
  m.config = cfg;
  m.seed = seed;
  m.encoder = Encoder(cfg, seed);
  m.adapter.kind = cfg.adapter;
  m.adapter.mu = Vector::Zero(static_cast<Eigen::Index>(cfg.d_s));
  m.adapter.u = nn::Parameter(Matrix::Identity(static_cast<Eigen::Index>(cfg.d_s), static_cast<Eigen::Index>(cfg.d_p)));
  m.normalizer.mode = cfg.target_norm;
  m.generator = make_generator(cfg, seed);
  m.c1 = make_classifier(cfg, seed, "classifier-1");
  m.c2 = make_classifier(cfg, seed, "classifier-2");
  return m;
}

std::vector<nn::ParamRef> TransferModel::parameters() {
  std::vector<nn::ParamRef> out = encoder.network().parameters("encoder.");
  out.push_back({"adapter.u", &adapter.u});
  for (auto& p : generator.parameters("generator.")) out.push_back(p);
  for (auto& p : c1.parameters("c1.")) out.push_back(p);
  for (auto& p : c2.parameters("c2.")) out.push_back(p);
  return out;
}

std::string TransferModel::frozen_digest() const {
  auto& self = const_cast<TransferModel&>(*this);
  Sha256 h;
  auto feed = [&h](const std::string& name, const Matrix& m) {
    h.update(name);
    h.update(std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    h.update(std::span<const double>(m.data(), static_cast<std::size_t>(m.size())));
  };
  for (auto& p : self.encoder.network().parameters("encoder.")) feed(p.name, p.param->value);
  feed("adapter.mu", Matrix(adapter.mu));
  feed("adapter.u", adapter.u.value);
  feed("normalizer.mean", Matrix(normalizer.mean));
  feed("normalizer.scale", Matrix(normalizer.scale));
  for (auto& p : self.generator.parameters("generator.")) feed(p.name, p.param->value);
  return h.hex_digest();
}

// ---- adapter fitting ------------------------------------------------------------------

Vector compute_source_mean(const Encoder& encoder, const Matrix& source) {
  if (source.rows() == 0) throw ArgumentError("compute_source_mean: empty source set");
  return encoder.infer(source).colwise().mean().transpose();
}

Pca fit_pca(const Matrix& x, std::size_t d_p) {
  const auto d = static_cast<std::size_t>(x.cols());
  if (d_p == 0 || d_p > d) {
    throw ArgumentError("pca: requested " + std::to_string(d_p) + " components from width " + std::to_string(d));
  }
  if (x.rows() < 2) throw NumericalRankError(0, d_p);
  Pca out;
  out.mean = x.colwise().mean().transpose();
  Matrix centered = x.rowwise() - out.mean.transpose();
  Matrix cov = (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericalRankError(0, d_p);
  const Vector& ev = solver.eigenvalues();  // ascending
  const double top = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  const double tol = top * 1e-10 * static_cast<double>(d);
  std::size_t rank = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] > tol) ++rank;
  }
  if (rank < d_p) throw NumericalRankError(rank, d_p);
  out.components.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d_p));
  out.eigenvalues.resize(static_cast<Eigen::Index>(d_p));
  for (std::size_t j = 0; j < d_p; ++j) {
    const auto src = static_cast<Eigen::Index>(d - 1 - j);
    Vector col = solver.eigenvectors().col(src);
    Eigen::Index arg = 0;
    col.cwiseAbs().maxCoeff(&arg);
    if (col[arg] < 0) col = -col;
    out.components.col(static_cast<Eigen::Index>(j)) = col;
    out.eigenvalues[static_cast<Eigen::Index>(j)] = ev[src];
  }
  return out;
}

Adapter fit_adapter_pca(const Encoder& encoder, const Matrix& source, std::size_t d_p) {
  if (source.rows() < static_cast<Eigen::Index>(d_p)) {
    throw NumericalRankError(static_cast<std::size_t>(source.rows()), d_p);
  }
  Matrix enc = encoder.infer(source);
  Pca pca = fit_pca(enc, d_p);
  Adapter a;
  a.kind = AdapterKind::pca;
  a.mu = pca.mean;
  a.u = nn::Parameter(pca.components);
  return a;
}

Adapter fit_adapter_expansion(const Encoder& encoder, const Matrix& source, std::size_t d_p, std::uint64_t seed) {
  Adapter a;
  a.kind = AdapterKind::expansion;
  a.mu = compute_source_mean(encoder, source);
  const auto d_s = a.mu.size();
  Rng rng(derive_seed(seed, "adapter-expansion"));
  Matrix u(d_s, static_cast<Eigen::Index>(d_p));
  const double sd = 1.0 / std::sqrt(static_cast<double>(d_s));
  for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = sd * standard_normal(rng);
  a.u = nn::Parameter(std::move(u));
  return a;
}

void fit_adapter(TransferModel& model, const Matrix& source) {
  if (model.config.adapter == AdapterKind::pca) {
    model.adapter = fit_adapter_pca(model.encoder, source, model.config.d_p);
  } else {
    model.adapter = fit_adapter_expansion(model.encoder, source, model.config.d_p, model.seed);
  }
}

Vector adapt(const Adapter& adapter, const Encoder& encoder, const Vector& u) {
  if (u.size() != static_cast<Eigen::Index>(adapter.d_s())) {
    throw ShapeError("adapt: input width " + std::to_string(u.size()) + ", expected " +
                     std::to_string(adapter.d_s()));
  }
  Matrix row = u.transpose();
  return adapter.project(encoder.infer(row)).row(0).transpose();
}

double discrepancy(const Vector& p1, const Vector& p2) {
  if (p1.size() != p2.size()) throw ShapeError("discrepancy: length mismatch");
  return (p1 - p2).cwiseAbs().sum();
}

double discrepancy(const Matrix& p1, const Matrix& p2) {
  if (p1.rows() != p2.rows() || p1.cols() != p2.cols()) throw ShapeError("discrepancy: shape mismatch");
  if (p1.rows() == 0) return 0.0;
  return (p1 - p2).cwiseAbs().sum() / static_cast<double>(p1.rows());
}

// ---- training ----------------------------------------------------------------------------

namespace {

Matrix gather(const Matrix& x, const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end) {
  Matrix out(static_cast<Eigen::Index>(end - begin), x.cols());
  for (std::size_t i = begin; i < end; ++i) out.row(static_cast<Eigen::Index>(i - begin)) = x.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

std::vector<int> gather(const std::vector<int>& y, const std::vector<std::size_t>& idx, std::size_t begin,
                        std::size_t end) {
  std::vector<int> out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) out.push_back(y[idx[i]]);
  return out;
}

void check_labels(const Matrix& source, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(source.rows()) != labels.size()) {
    throw ShapeError("source rows and labels differ in count");
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw SchemaError("source labels must be 0 or 1");
  }
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace

std::vector<double> pretrain_encoder(Encoder& encoder, const Matrix& source, const std::vector<int>& labels,
                                     const PretrainOptions& opt) {
  check_labels(source, labels);
  if (source.rows() == 0) throw ArgumentError("pretrain: empty source set");
  Rng rng(derive_seed(opt.seed, "pretrain"));
  nn::Linear head(static_cast<std::size_t>(source.cols()), 2, rng);
  std::vector<nn::ParamRef> params = encoder.network().parameters();
  head.collect("head.", params);
  const std::size_t n = labels.size();
  const std::size_t bs = std::max<std::size_t>(1, opt.batch_size);
  std::vector<std::size_t> order = iota(n);
  std::vector<double> losses;
  for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    shuffle_in_place(order, rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < n; b += bs) {
      const std::size_t e = std::min(n, b + bs);
      Matrix x = gather(source, order, b, e);
      std::vector<int> y = gather(labels, order, b, e);
      for (auto& p : params) p.param->zero_grad();
      Matrix z = encoder.forward(x);
      auto ce = nn::cross_entropy(head.forward(z), y);
      if (!std::isfinite(ce.loss)) throw DivergenceError("pretrain", epoch - 1);
      encoder.backward(head.backward(ce.grad));
      nn::sgd_step(params, opt.sgd);
      total += ce.loss;
      ++batches;
    }
    losses.push_back(total / static_cast<double>(std::max<std::size_t>(1, batches)));
  }
  return losses;
}

double source_cross_entropy(const TransferModel& model, const Matrix& source, const std::vector<int>& labels) {
  return nn::cross_entropy(model.c1.infer(model.source_features(source)), labels).loss;
}

namespace {

double target_discrepancy(const TransferModel& model, const Matrix& target_norm) {
  Matrix g = model.generator.infer(target_norm);
  return discrepancy(nn::softmax_rows(model.c1.infer(g)), nn::softmax_rows(model.c2.infer(g)));
}

std::vector<Matrix> snapshot(const std::vector<nn::ParamRef>& params) {
  std::vector<Matrix> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.param->value);
  return out;
}

double delta_norm(const std::vector<nn::ParamRef>& params, const std::vector<Matrix>& before) {
  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) sq += (params[i].param->value - before[i]).squaredNorm();
  return std::sqrt(sq);
}

}  // namespace

TrainLog train_transfer(TransferModel& model, const Matrix& source, const std::vector<int>& labels,
                        const Matrix& target, const TransferOptions& opt) {
  check_labels(source, labels);
  if (source.rows() == 0) throw ArgumentError("train_transfer: empty source set");
  if (static_cast<std::size_t>(target.cols()) != model.config.d_p) {
    throw ShapeError("train_transfer: target width " + std::to_string(target.cols()) + ", expected d_P = " +
                     std::to_string(model.config.d_p));
  }
  if (static_cast<std::size_t>(source.cols()) != model.adapter.d_s()) {
    throw ShapeError("train_transfer: source width " + std::to_string(source.cols()) + ", expected d_S = " +
                     std::to_string(model.adapter.d_s()));
  }

  // The encoder is frozen here, so its centered output is computed once.
  const Matrix centered = model.encoder.infer(source).rowwise() - model.adapter.mu.transpose();
  Matrix adapted_ref = centered * model.adapter.u.value;
  model.normalizer.fit(target, model.config.target_norm, &adapted_ref);
  const Matrix tnorm = model.normalizer.apply(target);

  TrainLog log;
  log.initial_discrepancy = target_discrepancy(model, tnorm);
  log.initial_source_ce = source_cross_entropy(model, source, labels);
  if (opt.strategy == TransferStrategy::none || opt.warmup_epochs + opt.epochs == 0) return log;
  if (target.rows() == 0) throw ArgumentError("train_transfer: empty target pool");

  std::vector<nn::ParamRef> cls = model.c1.parameters("c1.");
  for (auto& p : model.c2.parameters("c2.")) cls.push_back(p);
  std::vector<nn::ParamRef> gen = model.generator.parameters("generator.");
  if (opt.train_adapter) gen.push_back({"adapter.u", &model.adapter.u});
  std::vector<nn::ParamRef> all = cls;
  all.insert(all.end(), gen.begin(), gen.end());

  Rng rng(derive_seed(opt.seed, "transfer"));
  const std::size_t n = labels.size();
  const std::size_t nt = static_cast<std::size_t>(target.rows());
  const std::size_t bs = std::max<std::size_t>(1, opt.batch_size);
  std::vector<std::size_t> order = iota(n);
  std::vector<std::size_t> torder = iota(nt);
  shuffle_in_place(torder, rng);
  std::size_t tpos = 0;
  auto next_target = [&](std::size_t count) {
    Matrix out(static_cast<Eigen::Index>(count), tnorm.cols());
    for (std::size_t i = 0; i < count; ++i) {
      if (tpos == nt) {
        shuffle_in_place(torder, rng);
        tpos = 0;
      }
      out.row(static_cast<Eigen::Index>(i)) = tnorm.row(static_cast<Eigen::Index>(torder[tpos++]));
    }
    return out;
  };

  const std::size_t total_epochs = opt.warmup_epochs + opt.epochs;
  for (std::size_t epoch = 1; epoch <= total_epochs; ++epoch) {
    std::vector<Matrix> before = snapshot(all);
    shuffle_in_place(order, rng);
    for (std::size_t b = 0; b < n; b += bs) {
      const std::size_t e = std::min(n, b + bs);
      const Matrix xs = gather(centered, order, b, e);
      const std::vector<int> ys = gather(labels, order, b, e);
      if (epoch <= opt.warmup_epochs) {
        // Warm-up: F, C1 and C2 on source labels only.
        for (auto& p : all) p.param->zero_grad();
        Matrix gs = model.generator.forward(xs * model.adapter.u.value);
        auto ce1 = nn::cross_entropy(model.c1.forward(gs), ys);
        auto ce2 = nn::cross_entropy(model.c2.forward(gs), ys);
        Matrix dz = model.generator.backward(model.c1.backward(ce1.grad) + model.c2.backward(ce2.grad));
        if (opt.train_adapter) model.adapter.u.grad += xs.transpose() * dz;
        if (!std::isfinite(ce1.loss + ce2.loss)) throw DivergenceError("transfer (warm-up)", epoch - 1);
        nn::sgd_step(all, opt.sgd);
        continue;
      }
      const Matrix xt = next_target(e - b);

      // Step A: classifiers.
      for (auto& p : cls) p.param->zero_grad();
      {
        Matrix gs = model.generator.infer(xs * model.adapter.u.value);
        Matrix gt = model.generator.infer(xt);
        double loss = 0.0;
        if (opt.classifier_step == ClassifierStep::with_source) {
          auto ce1 = nn::cross_entropy(model.c1.forward(gs), ys);
          model.c1.backward(ce1.grad);
          auto ce2 = nn::cross_entropy(model.c2.forward(gs), ys);
          model.c2.backward(ce2.grad);
          loss += ce1.loss + ce2.loss;
        }
        auto dis = nn::l1_discrepancy(model.c1.forward(gt), model.c2.forward(gt));
        model.c1.backward(-dis.grad1);
        model.c2.backward(-dis.grad2);
        loss -= dis.loss;
        if (!std::isfinite(loss)) throw DivergenceError("transfer (classifier step)", epoch - 1);
        nn::sgd_step(cls, opt.sgd);
      }

      // Step B: generator (and adapter projection).
      for (std::size_t rep = 0; rep < std::max<std::size_t>(1, opt.generator_steps); ++rep) {
        double loss = generator_gradients(model, xs, ys, xt, opt.train_adapter);
        if (!std::isfinite(loss)) throw DivergenceError("transfer (generator step)", epoch - 1);
        nn::sgd_step(gen, opt.sgd);
      }
      for (auto& p : all) {
        if (!finite(p.param->value)) throw DivergenceError("transfer", epoch - 1);
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.target_discrepancy = target_discrepancy(model, tnorm);
    rec.source_ce = source_cross_entropy(model, source, labels);
    rec.parameter_delta = delta_norm(all, before);
    if (!std::isfinite(rec.target_discrepancy) || !std::isfinite(rec.source_ce)) {
      throw DivergenceError("transfer", epoch - 1);
    }
    log.epochs.push_back(rec);
  }
  return log;
}

double generator_gradients(TransferModel& model, const Matrix& centered_source, const std::vector<int>& labels,
                           const Matrix& target_norm, bool adapter_grad) {
  for (auto& p : model.generator.parameters()) p.param->zero_grad();
  model.adapter.u.zero_grad();
  double loss = 0.0;
  if (model.config.lambda > 0.0 && centered_source.rows() > 0) {
    Matrix g = model.generator.forward(centered_source * model.adapter.u.value);
    auto ce = nn::cross_entropy(model.c1.forward(g), labels);
    Matrix dz = model.generator.backward(model.c1.backward(model.config.lambda * ce.grad));
    if (adapter_grad) model.adapter.u.grad += centered_source.transpose() * dz;
    loss += model.config.lambda * ce.loss;
  }
  if (target_norm.rows() > 0) {
    Matrix gt = model.generator.forward(target_norm);
    auto dis = nn::l1_discrepancy(model.c1.forward(gt), model.c2.forward(gt));
    Matrix dg = model.c1.backward(dis.grad1) + model.c2.backward(dis.grad2);
    model.generator.backward(dg);
    loss += dis.loss;
  }
  return loss;
}

std::string TrainLog::to_csv() const {
  std::ostringstream os;
  os << "epoch,target_discrepancy,source_ce,parameter_delta\n";
  for (const auto& r : epochs) {
    os << r.epoch << ',' << csv::format_double(r.target_discrepancy) << ',' << csv::format_double(r.source_ce) << ','
       << csv::format_double(r.parameter_delta) << '\n';
  }
  return os.str();
}

}  // namespace stealthlink
