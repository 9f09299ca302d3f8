#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace stealthlink {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class AccountRole { deposit, withdrawal, normal };

std::string_view to_string(AccountRole role);
std::optional<AccountRole> parse_role(std::string_view text);

struct Account {
  std::string id;
  AccountRole role = AccountRole::normal;
  Vector features;

  bool operator==(const Account& other) const {
    return id == other.id && role == other.role && features == other.features;
  }
};

struct TxEdge {
  std::string from;
  std::string to;
  double amount = 0.0;        // native-token units
  std::int64_t timestamp = 0;  // seconds
  std::uint64_t gas_price = 0;  // smallest denomination (wei)

  bool operator==(const TxEdge&) const = default;
};

// Accounts plus directed value-transfer edges. The neighbor index is
// undirected (transfers in either direction count) and kept sorted.
class TransactionGraph {
 public:
  explicit TransactionGraph(std::size_t feature_dim = 0) : feature_dim_(feature_dim) {}

  // Throws SchemaError on a duplicate id or a feature-width mismatch.
  std::size_t add_account(Account account);
  // Throws ReferentialIntegrityError for unknown endpoints, SchemaError for
  // self-loops or negative amounts.
  void add_edge(TxEdge edge);

  std::size_t feature_dim() const noexcept { return feature_dim_; }
  std::size_t num_accounts() const noexcept { return accounts_.size(); }
  const std::vector<Account>& accounts() const noexcept { return accounts_; }
  const Account& account(std::size_t index) const { return accounts_.at(index); }
  const std::vector<TxEdge>& edges() const noexcept { return edges_; }

  std::optional<std::size_t> find(std::string_view id) const;
  // Throws LookupError.
  std::size_t index_of(std::string_view id) const;

  const std::vector<std::size_t>& neighbors(std::size_t index) const { return adjacency_.at(index); }
  // Indices into edges() of every edge touching the account.
  const std::vector<std::size_t>& incident_edges(std::size_t index) const { return incident_.at(index); }

  bool operator==(const TransactionGraph& other) const {
    return feature_dim_ == other.feature_dim_ && accounts_ == other.accounts_ && edges_ == other.edges_;
  }

 private:
  std::size_t feature_dim_;
  std::vector<Account> accounts_;
  std::vector<TxEdge> edges_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<std::size_t>> adjacency_;
  std::vector<std::vector<std::size_t>> incident_;
};

struct SourceSample {
  Vector features;
  int label = 0;  // 1 = malicious

  bool operator==(const SourceSample& other) const {
    return label == other.label && features == other.features;
  }
};

struct SourceDataset {
  std::size_t dim = 0;
  std::vector<SourceSample> samples;

  Matrix feature_matrix() const;  // samples x dim
  std::vector<int> labels() const;
  std::size_t count_label(int label) const;
  bool operator==(const SourceDataset&) const = default;
};

enum class Provenance { ground_truth, shuffled_negative, injected_noise };

std::string_view to_string(Provenance p);
std::optional<Provenance> parse_provenance(std::string_view text);

struct PairSample {
  std::string deposit_id;
  std::string withdrawal_id;
  int label = 0;  // 1 = associated
  Provenance provenance = Provenance::ground_truth;

  bool operator==(const PairSample&) const = default;
};

using PairKey = std::pair<std::string, std::string>;
using PairSet = std::set<PairKey>;

PairKey key_of(const PairSample& p);
PairSet positive_set(const std::vector<PairSample>& pairs);
std::size_t count_label(const std::vector<PairSample>& pairs, int label);

struct TargetCorpus {
  TransactionGraph graph;
  std::vector<PairSample> pairs;
};

struct SyntheticCorpus {
  SourceDataset source;
  TransactionGraph graph;
  std::vector<PairSample> pairs;

  bool operator==(const SyntheticCorpus&) const = default;
};

// ---- file formats -----------------------------------------------------------

// source.csv: f_0..f_{d-1},label   (or ...,class with BABD-13 class names)
SourceDataset load_source_dataset(const std::filesystem::path& path, std::size_t dim);
void write_source_dataset(const std::filesystem::path& path, const SourceDataset& data);

// True for the six malicious BABD-13 categories (phishing, gambling, darknet
// market, blacklist, money laundering, ponzi), after case/separator folding.
bool is_malicious_class(std::string_view class_name);

TransactionGraph load_target_graph(const std::filesystem::path& accounts_path,
                                   const std::filesystem::path& edges_path);
std::vector<PairSample> load_pairs(const std::filesystem::path& pairs_path);
// Parses the graph and the pairs and checks every pair endpoint resolves.
TargetCorpus load_target_graph_and_pairs(const std::filesystem::path& accounts_path,
                                         const std::filesystem::path& edges_path,
                                         const std::filesystem::path& pairs_path);

void write_accounts(const std::filesystem::path& path, const TransactionGraph& graph);
void write_edges(const std::filesystem::path& path, const TransactionGraph& graph);
void write_pairs(const std::filesystem::path& path, const std::vector<PairSample>& pairs);

// Directory layout: source.csv accounts.csv edges.csv pairs.csv
void write_corpus(const std::filesystem::path& dir, const SyntheticCorpus& corpus);
SyntheticCorpus load_corpus(const std::filesystem::path& dir, std::size_t source_dim);

// ---- synthetic corpus -------------------------------------------------------

struct SynthConfig {
  std::size_t n_users = 50;
  std::size_t n_decoys = 200;
  std::vector<double> pools{0.1, 1.0, 10.0, 100.0};
  std::size_t hops = 1;                  // length of background chains behind funders/spenders
  std::size_t deposits_per_user_max = 1;  // each user draws 1..max deposit/withdrawal notes
  std::size_t profile_dim = 8;           // d_T
  std::size_t source_context_dim = 8;    // d_S = 2*d_T + context
  std::size_t source_samples = 4000;
  std::size_t helpers_per_account = 2;   // funders of a deposit, spenders of a withdrawal
  double malicious_fraction = 0.25;      // must be <= 0.5
  double echo_noise = 0.3;
  double helper_noise = 0.5;
  double fingerprint_fraction = 0.3;

  std::size_t source_dim() const { return 2 * profile_dim + source_context_dim; }
  // Throws ArgumentError.
  void validate() const;
  bool operator==(const SynthConfig&) const = default;
};

SyntheticCorpus generate_synthetic_corpus(const SynthConfig& cfg, std::uint64_t seed);

// ---- corpus transforms --------------------------------------------------------

// ratio x |positives| unassociated pairs, each combining the deposit of one
// positive with the withdrawal of another. Never emits a positive or a pair in
// `exclude`.
std::vector<PairSample> make_unassociated_negatives(const std::vector<PairSample>& positives,
                                                    std::size_t ratio, std::uint64_t seed,
                                                    const PairSet& exclude = {});

// Appends ceil(eta * P) pseudo-positive pairs built from unassociated endpoints
// of `train` (P = positives in `train`). `ground_truth` defaults to the
// positives of `train`.
std::vector<PairSample> inject_label_noise(const std::vector<PairSample>& train, double eta,
                                           std::uint64_t seed,
                                           const std::optional<PairSet>& ground_truth = std::nullopt);

std::size_t noise_count(double eta, std::size_t positives);

struct Split {
  std::vector<PairSample> train;
  std::vector<PairSample> test;
};

// N positives + N negatives for training, everything else for testing.
Split subsample_few_shot(const std::vector<PairSample>& pairs, std::size_t n, std::uint64_t trial_seed);

// Keeps all positives and exactly k negatives per positive.
std::vector<PairSample> make_imbalanced(const std::vector<PairSample>& pairs, std::size_t k,
                                        std::uint64_t seed);

// Parses "1:k" or "k".
std::size_t parse_ratio(std::string_view text);

}  // namespace stealthlink
