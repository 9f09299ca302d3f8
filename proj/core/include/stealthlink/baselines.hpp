#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stealthlink/association.hpp"
#include "stealthlink/data.hpp"
#include "stealthlink/evaluation.hpp"
#include "stealthlink/protocols.hpp"

namespace stealthlink {

enum class HeuristicRule { gas_fingerprint, denomination };

std::string to_string(HeuristicRule r);

struct HeuristicMatch {
  std::string deposit_id;
  std::string withdrawal_id;
  HeuristicRule rule = HeuristicRule::gas_fingerprint;
  std::string evidence;  // fingerprint value, or denomination for the CC stub

  bool operator==(const HeuristicMatch&) const = default;
  bool operator<(const HeuristicMatch& o) const;
};

constexpr std::uint64_t kGasFingerprintModulus = 1'000'000'000ULL;

// Last nine decimal digits of a gas price; 0 means "no fingerprint".
inline std::uint64_t gas_fingerprint(std::uint64_t gas_price) { return gas_price % kGasFingerprintModulus; }

// Deposit transactions are edges sent by deposit-role accounts, withdrawal
// transactions are edges received by withdrawal-role accounts. A pair matches
// when any of its transactions share a nonzero fingerprint. Output is sorted
// and free of duplicates.
std::vector<HeuristicMatch> gas_fingerprint_match(const TransactionGraph& graph);

// Simplified cross-contract rule: equal amounts where the withdrawal follows
// the deposit within `window_seconds`.
std::vector<HeuristicMatch> denomination_match(const TransactionGraph& graph, std::int64_t window_seconds);

// deposit,withdrawal,rule,evidence
std::string matches_csv(const std::vector<HeuristicMatch>& matches);

// Scores heuristic matches as predictions over a labeled pair set.
Metrics score_matches(const std::vector<HeuristicMatch>& matches, const std::vector<PairSample>& pairs);

// Classifier trained on the outputs of a never-transfer-trained generator.
// `untrained` must be a model built with the same seeds as the transferred one.
AssociationClassifier no_transfer_train(const TransferModel& untrained, const PairFeaturizer& featurizer,
                                        const Split& split, const ClassifierConfig& classifier,
                                        const FinetuneOptions& options, std::uint64_t seed);

}  // namespace stealthlink
