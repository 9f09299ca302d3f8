#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stealthlink/data.hpp"
#include "stealthlink/nn.hpp"

namespace stealthlink {

enum class EncoderArch { transformer, mlp };
enum class GeneratorArch { mlp, transformer };
enum class AdapterKind { pca, expansion };
enum class TransferStrategy { mcd, none };
// with_source: C1/C2 minimize (source CE - discrepancy); pure: maximize discrepancy only.
enum class ClassifierStep { with_source, pure };
enum class TargetNorm { center, standardize, none };

std::string to_string(EncoderArch v);
std::string to_string(GeneratorArch v);
std::string to_string(AdapterKind v);
std::string to_string(TransferStrategy v);
std::string to_string(ClassifierStep v);
std::string to_string(TargetNorm v);
// Throw UsageError on unknown names.
EncoderArch parse_encoder_arch(const std::string& s);
GeneratorArch parse_generator_arch(const std::string& s);
AdapterKind parse_adapter_kind(const std::string& s);
TransferStrategy parse_transfer_strategy(const std::string& s);
ClassifierStep parse_classifier_step(const std::string& s);
TargetNorm parse_target_norm(const std::string& s);

struct ModelConfig {
  std::size_t d_s = 24;
  std::size_t d_p = 16;  // 2 * d_C

  EncoderArch encoder = EncoderArch::transformer;
  std::size_t encoder_layers = 3;
  std::size_t d_model = 92;
  std::size_t heads = 4;
  std::size_t ff_dim = 2048;
  std::size_t encoder_hidden = 92;  // width of the linear + batch-norm + relu head

  AdapterKind adapter = AdapterKind::pca;

  GeneratorArch generator = GeneratorArch::mlp;
  std::size_t generator_hidden = 64;
  std::size_t generator_layers = 1;  // transformer generator only

  std::size_t classifier_hidden = 32;  // 0 = linear C1/C2
  double lambda = 1.0;
  TargetNorm target_norm = TargetNorm::center;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// E : R^{d_S} -> R^{d_S}. E(u) = u + head(body(u)); the last projection of the
// head starts at zero, so an untrained encoder is the identity map.
class Encoder {
 public:
  Encoder() = default;
  Encoder(const ModelConfig& cfg, std::uint64_t seed);

  nn::Matrix forward(const nn::Matrix& x) { return x + net_.forward(x); }
  nn::Matrix backward(const nn::Matrix& g) { return g + net_.backward(g); }
  nn::Matrix infer(const nn::Matrix& x) const { return x + net_.infer(x); }
  nn::Network& network() { return net_; }
  const nn::Network& network() const { return net_; }

 private:
  nn::Network net_;
};

// T(u) = U^T (E(u) - mu_S); rows in, rows out.
struct Adapter {
  nn::Vector mu;       // d_S
  nn::Parameter u;     // d_S x d_P
  AdapterKind kind = AdapterKind::pca;

  std::size_t d_s() const { return static_cast<std::size_t>(u.value.rows()); }
  std::size_t d_p() const { return static_cast<std::size_t>(u.value.cols()); }
  // Applies the projection to already-encoded rows.
  nn::Matrix project(const nn::Matrix& encoded) const;
};

// Per-column statistics of the unlabeled target pool, applied before F.
struct TargetNormalizer {
  TargetNorm mode = TargetNorm::center;
  nn::RowVector mean;
  nn::RowVector scale;  // divides after centering; ones unless standardize

  void fit(const nn::Matrix& target, TargetNorm m, const nn::Matrix* reference = nullptr);
  nn::Matrix apply(const nn::Matrix& target) const;
};

struct TransferModel {
  ModelConfig config;
  std::uint64_t seed = 0;
  Encoder encoder;
  Adapter adapter;
  TargetNormalizer normalizer;
  nn::Network generator;
  nn::Network c1;
  nn::Network c2;

  // Every tensor, in a fixed order, with stable names.
  std::vector<nn::ParamRef> parameters();
  // SHA-256 over encoder, adapter, normalizer and generator tensors.
  std::string frozen_digest() const;

  nn::Matrix encode(const nn::Matrix& source) const { return encoder.infer(source); }
  nn::Matrix adapt(const nn::Matrix& source) const { return adapter.project(encoder.infer(source)); }
  nn::Matrix source_features(const nn::Matrix& source) const { return generator.infer(adapt(source)); }
  nn::Matrix target_features(const nn::Matrix& joint) const { return generator.infer(normalizer.apply(joint)); }
};

// Builds every component with fresh weights. C1 and C2 get distinct seeds.
// The adapter is sized but unfitted (mu = 0, U = leading identity columns).
TransferModel make_model(const ModelConfig& cfg, std::uint64_t seed);

nn::Vector compute_source_mean(const Encoder& encoder, const nn::Matrix& source);

// Top-d_P principal directions of the rows of `x`, descending eigenvalue order,
// each column signed so that its largest-magnitude entry is positive.
// Throws NumericalRankError when the centered data has rank below d_P.
struct Pca {
  nn::Vector mean;
  nn::Matrix components;  // d x d_P
  nn::Vector eigenvalues;  // d_P, descending
};
Pca fit_pca(const nn::Matrix& x, std::size_t d_p);

Adapter fit_adapter_pca(const Encoder& encoder, const nn::Matrix& source, std::size_t d_p);
// Dimension-expansion variant: mu from the encoder, U random ~ N(0, 1/d_S).
Adapter fit_adapter_expansion(const Encoder& encoder, const nn::Matrix& source, std::size_t d_p, std::uint64_t seed);
void fit_adapter(TransferModel& model, const nn::Matrix& source);

nn::Vector adapt(const Adapter& adapter, const Encoder& encoder, const nn::Vector& u);

// L1 distance between two probability vectors. Throws ShapeError.
double discrepancy(const nn::Vector& p1, const nn::Vector& p2);
// Mean over rows.
double discrepancy(const nn::Matrix& p1, const nn::Matrix& p2);

struct PretrainOptions {
  std::size_t epochs = 5;
  std::size_t batch_size = 64;
  nn::SgdOptions sgd;
  std::uint64_t seed = 0;
};

// Trains E with a temporary linear head on source cross-entropy. Returns the
// mean loss per epoch.
std::vector<double> pretrain_encoder(Encoder& encoder, const nn::Matrix& source, const std::vector<int>& labels,
                                     const PretrainOptions& opt);

struct TransferOptions {
  std::size_t epochs = 30;
  std::size_t warmup_epochs = 0;  // source-only epochs before the alternating steps
  std::size_t batch_size = 64;
  std::size_t generator_steps = 1;  // step-B repeats per batch
  TransferStrategy strategy = TransferStrategy::mcd;
  ClassifierStep classifier_step = ClassifierStep::with_source;
  bool train_adapter = true;
  nn::SgdOptions sgd;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;           // 1-based
  double target_discrepancy = 0.0;  // mean over the target pool after the epoch
  double source_ce = 0.0;           // C1 on the full source set after the epoch
  double parameter_delta = 0.0;     // L2 norm of the change of all trained tensors

  bool operator==(const EpochRecord&) const = default;
};

struct TrainLog {
  double initial_discrepancy = 0.0;
  double initial_source_ce = 0.0;
  std::vector<EpochRecord> epochs;

  std::string to_csv() const;
  bool operator==(const TrainLog&) const = default;
};

// Alternating two-step optimization. Step A updates C1/C2, step B updates F
// (and U when train_adapter). `target` holds raw joint representations; the
// model's normalizer is fitted on it first. Throws DivergenceError.
TrainLog train_transfer(TransferModel& model, const nn::Matrix& source, const std::vector<int>& labels,
                        const nn::Matrix& target, const TransferOptions& opt);

// Zeroes and fills generator (and, with adapter_grad, U) gradients of
//   L_gen = mean ||C1(F(t)) - C2(F(t))||_1 + lambda * CE(C1(F(U^T c)), y)
// where `centered_source` rows are E(u) - mu_S and `target_norm` rows are
// normalized joint representations. Returns L_gen. C1/C2 grads are clobbered.
double generator_gradients(TransferModel& model, const nn::Matrix& centered_source, const std::vector<int>& labels,
                           const nn::Matrix& target_norm, bool adapter_grad);

// Mean source cross-entropy of C1(F(T(u))).
double source_cross_entropy(const TransferModel& model, const nn::Matrix& source, const std::vector<int>& labels);

}  // namespace stealthlink
