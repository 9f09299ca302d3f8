#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stealthlink/association.hpp"
#include "stealthlink/data.hpp"
#include "stealthlink/evaluation.hpp"
#include "stealthlink/mixfusion.hpp"
#include "stealthlink/transfer.hpp"

namespace stealthlink {

// Everything a protocol trial needs. The model and featurizer are read-only
// and shared by all trials; each trial owns its classifier.
struct ProtocolSetup {
  const TransferModel* model = nullptr;
  const PairFeaturizer* featurizer = nullptr;
  ClassifierConfig classifier;
  FinetuneOptions finetune;
  std::size_t trials = 10;
  std::size_t folds = 10;
  double holdout_fraction = 0.2;  // test share of the single split used for N = ALL
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string config_digest;
  std::string strategy = "mcd";  // label copied into reports
};

// Trains one classifier on `train` and scores it on `test`.
Metrics run_trial(const ProtocolSetup& setup, const std::vector<PairSample>& train,
                  const std::vector<PairSample>& test, std::uint64_t trial_seed);

// N >= 1: `trials` resamples of N positives + N negatives, tested on the rest.
// N == 0 (ALL): one stratified holdout split, `trials` training seeds.
EvalReport run_few_shot(const std::vector<PairSample>& pairs, const ProtocolSetup& setup, std::size_t n);

// Stratified k-fold split; fold[i] lists indices into `pairs`.
std::vector<std::vector<std::size_t>> stratified_folds(const std::vector<PairSample>& pairs, std::size_t folds,
                                                       std::uint64_t seed);

// k-fold CV with ceil(eta * P_fold) pseudo-positives added to each training
// fold. Test folds stay clean. One trial per fold.
std::vector<Split> noise_splits(const std::vector<PairSample>& pairs, const ProtocolSetup& setup, double eta);
EvalReport run_noise(const std::vector<PairSample>& pairs, const ProtocolSetup& setup, double eta);

// make_imbalanced(pairs, 1:k) followed by the clean k-fold protocol.
EvalReport run_imbalance(const std::vector<PairSample>& pairs, const ProtocolSetup& setup, std::size_t k);

// Runs fn(i) for i in [0, count) on up to `jobs` threads.
void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn);

std::string format_setting(const std::string& key, double value);

}  // namespace stealthlink
