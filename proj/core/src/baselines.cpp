#include "stealthlink/baselines.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "stealthlink/csv.hpp"
#include "stealthlink/error.hpp"
#include "stealthlink/rng.hpp"

namespace stealthlink {

std::string to_string(HeuristicRule r) { return r == HeuristicRule::gas_fingerprint ? "gas_fingerprint" : "denomination"; }

bool HeuristicMatch::operator<(const HeuristicMatch& o) const {
  return std::tie(deposit_id, withdrawal_id, rule, evidence) < std::tie(o.deposit_id, o.withdrawal_id, o.rule, o.evidence);
}

namespace {

struct Tx {
  std::size_t account;
  const TxEdge* edge;
};

void collect_sides(const TransactionGraph& graph, std::vector<Tx>& deposits, std::vector<Tx>& withdrawals) {
  for (const auto& e : graph.edges()) {
    const std::size_t from = graph.index_of(e.from);
    const std::size_t to = graph.index_of(e.to);
    if (graph.account(from).role == AccountRole::deposit) deposits.push_back({from, &e});
    if (graph.account(to).role == AccountRole::withdrawal) withdrawals.push_back({to, &e});
  }
}

std::vector<HeuristicMatch> finish(std::set<HeuristicMatch> found) { return {found.begin(), found.end()}; }

}  // namespace

std::vector<HeuristicMatch> gas_fingerprint_match(const TransactionGraph& graph) {
  std::vector<Tx> deposits, withdrawals;
  collect_sides(graph, deposits, withdrawals);
  std::map<std::uint64_t, std::set<std::size_t>> by_fp;
  for (const auto& w : withdrawals) {
    const std::uint64_t fp = gas_fingerprint(w.edge->gas_price);
    if (fp != 0) by_fp[fp].insert(w.account);
  }
  std::set<HeuristicMatch> found;
  for (const auto& d : deposits) {
    const std::uint64_t fp = gas_fingerprint(d.edge->gas_price);
    if (fp == 0) continue;
    auto it = by_fp.find(fp);
    if (it == by_fp.end()) continue;
    for (std::size_t w : it->second) {
      if (w == d.account) continue;
      found.insert({graph.account(d.account).id, graph.account(w).id, HeuristicRule::gas_fingerprint,
                    std::to_string(fp)});
    }
  }
  // Any matching transaction links the pair; keep one match per pair.
  std::vector<HeuristicMatch> out;
  for (const auto& m : found) {
    if (!out.empty() && out.back().deposit_id == m.deposit_id && out.back().withdrawal_id == m.withdrawal_id) continue;
    out.push_back(m);
  }
  return out;
}

std::vector<HeuristicMatch> denomination_match(const TransactionGraph& graph, std::int64_t window_seconds) {
  if (window_seconds < 0) throw ArgumentError("denomination_match: window must be >= 0");
  std::vector<Tx> deposits, withdrawals;
  collect_sides(graph, deposits, withdrawals);
  std::set<HeuristicMatch> found;
  for (const auto& d : deposits) {
    for (const auto& w : withdrawals) {
      if (w.account == d.account || d.edge->amount != w.edge->amount) continue;
      const std::int64_t dt = w.edge->timestamp - d.edge->timestamp;
      if (dt < 0 || dt > window_seconds) continue;
      found.insert({graph.account(d.account).id, graph.account(w.account).id, HeuristicRule::denomination,
                    csv::format_double(d.edge->amount)});
    }
  }
  return finish(std::move(found));
}

std::string matches_csv(const std::vector<HeuristicMatch>& matches) {
  std::ostringstream os;
  os << "deposit,withdrawal,rule,evidence\n";
  for (const auto& m : matches) os << m.deposit_id << ',' << m.withdrawal_id << ',' << to_string(m.rule) << ',' << m.evidence << '\n';
  return os.str();
}

Metrics score_matches(const std::vector<HeuristicMatch>& matches, const std::vector<PairSample>& pairs) {
  std::set<PairKey> hit;
  for (const auto& m : matches) hit.insert({m.deposit_id, m.withdrawal_id});
  std::vector<int> pred, labels;
  for (const auto& p : pairs) {
    pred.push_back(hit.count(key_of(p)) ? 1 : 0);
    labels.push_back(p.label);
  }
  return compute_metrics(pred, labels);
}

AssociationClassifier no_transfer_train(const TransferModel& untrained, const PairFeaturizer& featurizer,
                                        const Split& split, const ClassifierConfig& classifier,
                                        const FinetuneOptions& options, std::uint64_t seed) {
  AssociationClassifier clf(untrained.config.d_p, classifier, derive_seed(seed, "classifier"));
  std::vector<int> y;
  for (const auto& p : split.train) y.push_back(p.label);
  FinetuneOptions ft = options;
  ft.seed = derive_seed(seed, "finetune");
  finetune(clf, untrained, featurizer.joint_matrix(split.train), y, ft);
  return clf;
}

}  // namespace stealthlink
