#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stealthlink/data.hpp"
#include "stealthlink/mixfusion.hpp"
#include "stealthlink/nn.hpp"
#include "stealthlink/transfer.hpp"

namespace stealthlink {

enum class ClassifierArch { mlp, logistic };

std::string to_string(ClassifierArch v);
ClassifierArch parse_classifier_arch(const std::string& s);

struct ClassifierConfig {
  ClassifierArch arch = ClassifierArch::mlp;
  std::vector<std::size_t> hidden{1024, 1024, 1024, 1024};
  double threshold = 0.5;

  bool operator==(const ClassifierConfig&) const = default;
};

// Binary head C : R^{d_P} -> [0, 1] with a single sigmoid output.
class AssociationClassifier {
 public:
  AssociationClassifier() = default;
  AssociationClassifier(std::size_t input_dim, const ClassifierConfig& cfg, std::uint64_t seed);

  std::size_t input_dim() const { return input_dim_; }
  const ClassifierConfig& config() const { return cfg_; }
  nn::Network& network() { return net_; }
  const nn::Network& network() const { return net_; }

  nn::Vector logits(const nn::Matrix& features) const;
  nn::Vector probabilities(const nn::Matrix& features) const;

 private:
  std::size_t input_dim_ = 0;
  ClassifierConfig cfg_;
  nn::Network net_;
};

struct FinetuneOptions {
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  nn::SgdOptions sgd;
  std::uint64_t seed = 0;
};

struct FinetuneResult {
  std::vector<double> losses;  // mean BCE per epoch
  std::string digest_before;
  std::string digest_after;
};

// Minimizes BCE of C(F(h)) over the classifier's parameters only. `joint` rows
// are raw joint representations; the frozen model maps them through its
// normalizer and generator. Throws ClassCoverageError, DivergenceError,
// FreezeViolation.
FinetuneResult finetune(AssociationClassifier& clf, const TransferModel& frozen, const nn::Matrix& joint,
                        const std::vector<int>& labels, const FinetuneOptions& opt);

// Same, on already-generated features.
std::vector<double> finetune_features(AssociationClassifier& clf, const nn::Matrix& features,
                                      const std::vector<int>& labels, const FinetuneOptions& opt);

struct Prediction {
  std::string deposit_id;
  std::string withdrawal_id;
  double probability = 0.0;
  int label = 0;
  double threshold = 0.5;

  bool operator==(const Prediction&) const = default;
};

int threshold_label(double probability, double threshold);

// Deposit-first fusion, then F, then C. Throws LookupError for unknown ids.
Prediction predict_pair(const AssociationClassifier& clf, const TransferModel& frozen, const PairFeaturizer& featurizer,
                        const std::string& deposit_id, const std::string& withdrawal_id);

std::vector<Prediction> predict_pairs(const AssociationClassifier& clf, const TransferModel& frozen,
                                      const PairFeaturizer& featurizer, const std::vector<PairSample>& pairs);

// deposit,withdrawal,probability,label
std::string predictions_csv(const std::vector<Prediction>& predictions);

}  // namespace stealthlink
