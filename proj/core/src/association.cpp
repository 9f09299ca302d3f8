#include "stealthlink/association.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "stealthlink/csv.hpp"
#include "stealthlink/error.hpp"
#include "stealthlink/rng.hpp"

namespace stealthlink {

using nn::Matrix;
using nn::Vector;

std::string to_string(ClassifierArch v) { return v == ClassifierArch::mlp ? "mlp" : "logistic"; }

ClassifierArch parse_classifier_arch(const std::string& s) {
  if (s == "mlp") return ClassifierArch::mlp;
  if (s == "logistic") return ClassifierArch::logistic;
  throw UsageError("unknown classifier architecture '" + s + "'");
}

AssociationClassifier::AssociationClassifier(std::size_t input_dim, const ClassifierConfig& cfg, std::uint64_t seed)
    : input_dim_(input_dim), cfg_(cfg) {
  if (input_dim == 0) throw ArgumentError("classifier: input width must be positive");
  if (!(cfg.threshold > 0.0 && cfg.threshold < 1.0)) throw ArgumentError("classifier: threshold must lie in (0, 1)");
  Rng rng(derive_seed(seed, "association-classifier"));
  nn::Sequential s;
  std::size_t width = input_dim;
  if (cfg.arch == ClassifierArch::mlp) {
    for (std::size_t h : cfg.hidden) {
      if (h == 0) throw ArgumentError("classifier: hidden widths must be positive");
      s.add<nn::Linear>(width, h, rng);
      s.add<nn::ReLU>();
      width = h;
    }
  }
  s.add<nn::Linear>(width, 1, rng);
  net_ = nn::Network(std::move(s));
}

Vector AssociationClassifier::logits(const Matrix& features) const {
  if (static_cast<std::size_t>(features.cols()) != input_dim_) {
    throw ShapeError("classifier: input width " + std::to_string(features.cols()) + ", expected " +
                     std::to_string(input_dim_));
  }
  return net_.infer(features).col(0);
}

Vector AssociationClassifier::probabilities(const Matrix& features) const { return nn::sigmoid(logits(features)); }

int threshold_label(double probability, double threshold) { return probability >= threshold ? 1 : 0; }

std::vector<double> finetune_features(AssociationClassifier& clf, const Matrix& features,
                                      const std::vector<int>& labels, const FinetuneOptions& opt) {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw ShapeError("finetune: feature rows and labels differ in count");
  }
  std::size_t pos = 0, neg = 0;
  for (int y : labels) {
    if (y == 1) {
      ++pos;
    } else if (y == 0) {
      ++neg;
    } else {
      throw SchemaError("finetune: labels must be 0 or 1");
    }
  }
  if (pos == 0 || neg == 0) {
    throw ClassCoverageError("finetune needs at least one positive and one negative pair (have " +
                             std::to_string(pos) + " positive, " + std::to_string(neg) + " negative)");
  }
  if (static_cast<std::size_t>(features.cols()) != clf.input_dim()) {
    throw ShapeError("finetune: feature width " + std::to_string(features.cols()) + ", expected " +
                     std::to_string(clf.input_dim()));
  }
  auto params = clf.network().parameters();
  Rng rng(derive_seed(opt.seed, "finetune"));
  const std::size_t n = labels.size();
  const std::size_t bs = std::max<std::size_t>(1, opt.batch_size);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> losses;
  losses.reserve(opt.epochs);
  for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    if (n > bs) shuffle_in_place(order, rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < n; b += bs) {
      const std::size_t e = std::min(n, b + bs);
      Matrix x(static_cast<Eigen::Index>(e - b), features.cols());
      std::vector<int> y;
      y.reserve(e - b);
      for (std::size_t i = b; i < e; ++i) {
        x.row(static_cast<Eigen::Index>(i - b)) = features.row(static_cast<Eigen::Index>(order[i]));
        y.push_back(labels[order[i]]);
      }
      clf.network().zero_grad();
      auto bce = nn::binary_cross_entropy(clf.network().forward(x), y);
      if (!std::isfinite(bce.loss)) throw DivergenceError("finetune", epoch - 1);
      clf.network().backward(bce.grad);
      nn::sgd_step(params, opt.sgd);
      total += bce.loss;
      ++batches;
    }
    losses.push_back(total / static_cast<double>(batches));
  }
  return losses;
}

FinetuneResult finetune(AssociationClassifier& clf, const TransferModel& frozen, const Matrix& joint,
                        const std::vector<int>& labels, const FinetuneOptions& opt) {
  FinetuneResult r;
  r.digest_before = frozen.frozen_digest();
  Matrix features = frozen.target_features(joint);
  r.losses = finetune_features(clf, features, labels, opt);
  r.digest_after = frozen.frozen_digest();
  if (r.digest_before != r.digest_after) {
    throw FreezeViolation("generator tensors changed during finetune (" + r.digest_before + " -> " +
                          r.digest_after + ")");
  }
  return r;
}

Prediction predict_pair(const AssociationClassifier& clf, const TransferModel& frozen, const PairFeaturizer& featurizer,
                        const std::string& deposit_id, const std::string& withdrawal_id) {
  Matrix joint = featurizer.joint(deposit_id, withdrawal_id).transpose();
  Prediction p;
  p.deposit_id = deposit_id;
  p.withdrawal_id = withdrawal_id;
  p.threshold = clf.config().threshold;
  p.probability = clf.probabilities(frozen.target_features(joint))[0];
  p.label = threshold_label(p.probability, p.threshold);
  return p;
}

std::vector<Prediction> predict_pairs(const AssociationClassifier& clf, const TransferModel& frozen,
                                      const PairFeaturizer& featurizer, const std::vector<PairSample>& pairs) {
  std::vector<Prediction> out;
  if (pairs.empty()) return out;
  Vector prob = clf.probabilities(frozen.target_features(featurizer.joint_matrix(pairs)));
  out.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    Prediction p;
    p.deposit_id = pairs[i].deposit_id;
    p.withdrawal_id = pairs[i].withdrawal_id;
    p.threshold = clf.config().threshold;
    p.probability = prob[static_cast<Eigen::Index>(i)];
    p.label = threshold_label(p.probability, p.threshold);
    out.push_back(std::move(p));
  }
  return out;
}

std::string predictions_csv(const std::vector<Prediction>& predictions) {
  std::ostringstream os;
  os << "deposit,withdrawal,probability,label\n";
  for (const auto& p : predictions) {
    os << p.deposit_id << ',' << p.withdrawal_id << ',' << csv::format_double(p.probability) << ',' << p.label << '\n';
  }
  return os.str();
}

}  // namespace stealthlink
