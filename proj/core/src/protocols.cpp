#include "stealthlink/protocols.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "stealthlink/csv.hpp"
#include "stealthlink/error.hpp"
#include "stealthlink/rng.hpp"

namespace stealthlink {

void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  workers.reserve(jobs);
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (error) std::rethrow_exception(error);
}

std::string format_setting(const std::string& key, double value) { return key + "=" + csv::format_double(value); }

namespace {

std::vector<int> labels_of(const std::vector<PairSample>& pairs) {
  std::vector<int> y;
  y.reserve(pairs.size());
  for (const auto& p : pairs) y.push_back(p.label);
  return y;
}

void check_setup(const ProtocolSetup& setup) {
  if (setup.model == nullptr || setup.featurizer == nullptr) {
    throw ArgumentError("protocol setup needs a model and a featurizer");
  }
  if (setup.trials == 0) throw ArgumentError("protocol setup: trials must be positive");
}

EvalReport make_report(const ProtocolSetup& setup, std::string protocol, std::string setting) {
  EvalReport r;
  r.protocol = std::move(protocol);
  r.setting = std::move(setting);
  r.strategy = setup.strategy;
  r.config_digest = setup.config_digest;
  return r;
}

std::vector<PairSample> select(const std::vector<PairSample>& pairs, const std::vector<std::size_t>& idx) {
  std::vector<PairSample> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(pairs[i]);
  return out;
}

EvalReport run_splits(const ProtocolSetup& setup, const std::vector<Split>& splits, EvalReport report,
                      const char* seed_tag) {
  report.trials.resize(splits.size());
  parallel_for(splits.size(), setup.jobs, [&](std::size_t t) {
    report.trials[t] = run_trial(setup, splits[t].train, splits[t].test, derive_seed(setup.seed, seed_tag, t));
  });
  return report;
}

std::vector<Split> cv_splits(const std::vector<PairSample>& pairs, const ProtocolSetup& setup) {
  auto folds = stratified_folds(pairs, setup.folds, derive_seed(setup.seed, "cv-folds"));
  std::vector<Split> splits(folds.size());
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::vector<std::size_t> train;
    for (std::size_t g = 0; g < folds.size(); ++g) {
      if (g != f) train.insert(train.end(), folds[g].begin(), folds[g].end());
    }
    std::sort(train.begin(), train.end());
    splits[f].train = select(pairs, train);
    splits[f].test = select(pairs, folds[f]);
  }
  return splits;
}

}  // namespace

Metrics run_trial(const ProtocolSetup& setup, const std::vector<PairSample>& train,
                  const std::vector<PairSample>& test, std::uint64_t trial_seed) {
  check_setup(setup);
  if (test.empty()) throw CapacityError("protocol trial has an empty test set");
  const TransferModel& model = *setup.model;
  AssociationClassifier clf(model.config.d_p, setup.classifier, derive_seed(trial_seed, "classifier"));
  FinetuneOptions ft = setup.finetune;
  ft.seed = derive_seed(trial_seed, "finetune");
  finetune(clf, model, setup.featurizer->joint_matrix(train), labels_of(train), ft);
  nn::Vector prob = clf.probabilities(model.target_features(setup.featurizer->joint_matrix(test)));
  std::vector<int> pred(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    pred[i] = threshold_label(prob[static_cast<Eigen::Index>(i)], setup.classifier.threshold);
  }
  return compute_metrics(pred, labels_of(test));
}

EvalReport run_few_shot(const std::vector<PairSample>& pairs, const ProtocolSetup& setup, std::size_t n) {
  check_setup(setup);
  std::vector<Split> splits;
  if (n > 0) {
    for (std::size_t t = 0; t < setup.trials; ++t) {
      splits.push_back(subsample_few_shot(pairs, n, derive_seed(setup.seed, "few-shot-trial", t)));
    }
    return run_splits(setup, splits, make_report(setup, "few_shot", "N=" + std::to_string(n)), "few-shot");
  }
  // ALL: one stratified holdout, trials differ only in training seeds.
  if (!(setup.holdout_fraction > 0.0 && setup.holdout_fraction < 1.0)) {
    throw ArgumentError("holdout fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < pairs.size(); ++i) (pairs[i].label == 1 ? pos : neg).push_back(i);
  Rng rng(derive_seed(setup.seed, "few-shot-all"));
  shuffle_in_place(pos, rng);
  shuffle_in_place(neg, rng);
  std::vector<bool> is_test(pairs.size(), false);
  for (auto* group : {&pos, &neg}) {
    const auto k = static_cast<std::size_t>(std::ceil(setup.holdout_fraction * static_cast<double>(group->size())));
    if (k == 0 || k >= group->size()) throw CapacityError("N=ALL needs at least 2 pairs of each class");
    for (std::size_t i = 0; i < k; ++i) is_test[(*group)[i]] = true;
  }
  Split split;
  for (std::size_t i = 0; i < pairs.size(); ++i) (is_test[i] ? split.test : split.train).push_back(pairs[i]);
  splits.assign(setup.trials, split);
  return run_splits(setup, splits, make_report(setup, "few_shot", "N=ALL"), "few-shot-all");
}

std::vector<std::vector<std::size_t>> stratified_folds(const std::vector<PairSample>& pairs, std::size_t folds,
                                                       std::uint64_t seed) {
  if (folds < 2) throw ArgumentError("cross-validation needs at least 2 folds");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < pairs.size(); ++i) (pairs[i].label == 1 ? pos : neg).push_back(i);
  if (pos.size() < folds || neg.size() < folds) {
    throw CapacityError(std::to_string(folds) + "-fold CV needs at least " + std::to_string(folds) +
                        " pairs of each class (have " + std::to_string(pos.size()) + " positive, " +
                        std::to_string(neg.size()) + " negative)");
  }
  Rng rng(seed);
  shuffle_in_place(pos, rng);
  shuffle_in_place(neg, rng);
  std::vector<std::vector<std::size_t>> out(folds);
  std::size_t slot = 0;
  for (auto* group : {&pos, &neg}) {
    for (std::size_t i : *group) out[slot++ % folds].push_back(i);
  }
  for (auto& f : out) std::sort(f.begin(), f.end());
  return out;
}

std::vector<Split> noise_splits(const std::vector<PairSample>& pairs, const ProtocolSetup& setup, double eta) {
  std::vector<Split> splits = cv_splits(pairs, setup);
  const PairSet truth = positive_set(pairs);
  for (std::size_t f = 0; f < splits.size(); ++f) {
    splits[f].train = inject_label_noise(splits[f].train, eta, derive_seed(setup.seed, "noise-fold", f), truth);
  }
  return splits;
}

EvalReport run_noise(const std::vector<PairSample>& pairs, const ProtocolSetup& setup, double eta) {
  check_setup(setup);
  return run_splits(setup, noise_splits(pairs, setup, eta), make_report(setup, "noise", format_setting("eta", eta)),
                    "cv-fold");
}

EvalReport run_imbalance(const std::vector<PairSample>& pairs, const ProtocolSetup& setup, std::size_t k) {
  check_setup(setup);
  std::vector<PairSample> data = k == 1 ? pairs : make_imbalanced(pairs, k, derive_seed(setup.seed, "imbalance"));
  return run_splits(setup, cv_splits(data, setup), make_report(setup, "imbalance", "ratio=1:" + std::to_string(k)),
                    "cv-fold");
}

}  // namespace stealthlink
