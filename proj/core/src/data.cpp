#include "stealthlink/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "stealthlink/csv.hpp"
#include "stealthlink/error.hpp"
#include "stealthlink/rng.hpp"

namespace stealthlink {

std::string_view to_string(AccountRole role) {
  switch (role) {
    case AccountRole::deposit: return "deposit";
    case AccountRole::withdrawal: return "withdrawal";
    case AccountRole::normal: return "normal";
  }
  return "normal";
}

std::optional<AccountRole> parse_role(std::string_view text) {
  if (text == "deposit") return AccountRole::deposit;
  if (text == "withdrawal") return AccountRole::withdrawal;
  if (text == "normal") return AccountRole::normal;
  return std::nullopt;
}

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::ground_truth: return "ground_truth";
    case Provenance::shuffled_negative: return "shuffled_negative";
    case Provenance::injected_noise: return "injected_noise";
  }
  return "ground_truth";
}

std::optional<Provenance> parse_provenance(std::string_view text) {
  if (text == "ground_truth") return Provenance::ground_truth;
  if (text == "shuffled_negative") return Provenance::shuffled_negative;
  if (text == "injected_noise") return Provenance::injected_noise;
  return std::nullopt;
}

// ---- TransactionGraph -------------------------------------------------------

std::size_t TransactionGraph::add_account(Account account) {
  if (static_cast<std::size_t>(account.features.size()) != feature_dim_) {
    throw SchemaError("account " + account.id + " has " + std::to_string(account.features.size()) +
                      " features, expected " + std::to_string(feature_dim_));
  }
  if (index_.count(account.id) != 0) throw SchemaError("duplicate account id " + account.id);
  std::size_t idx = accounts_.size();
  index_.emplace(account.id, idx);
  accounts_.push_back(std::move(account));
  adjacency_.emplace_back();
  incident_.emplace_back();
  return idx;
}

void TransactionGraph::add_edge(TxEdge edge) {
  auto from = find(edge.from);
  auto to = find(edge.to);
  if (!from) throw ReferentialIntegrityError("edge endpoint " + edge.from + " is not a known account");
  if (!to) throw ReferentialIntegrityError("edge endpoint " + edge.to + " is not a known account");
  if (*from == *to) throw SchemaError("self-loop edge on " + edge.from);
  if (!(edge.amount >= 0.0)) throw SchemaError("negative amount on edge " + edge.from + "->" + edge.to);

  auto link = [](std::vector<std::size_t>& list, std::size_t v) {
    auto it = std::lower_bound(list.begin(), list.end(), v);
    if (it == list.end() || *it != v) list.insert(it, v);
  };
  link(adjacency_[*from], *to);
  link(adjacency_[*to], *from);
  incident_[*from].push_back(edges_.size());
  incident_[*to].push_back(edges_.size());
  edges_.push_back(std::move(edge));
}

std::optional<std::size_t> TransactionGraph::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t TransactionGraph::index_of(std::string_view id) const {
  auto idx = find(id);
  if (!idx) throw LookupError("unknown account id " + std::string(id));
  return *idx;
}

// ---- SourceDataset ------------------------------------------------------------

Matrix SourceDataset::feature_matrix() const {
  Matrix m(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < samples.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = samples[i].features.transpose();
  return m;
}

std::vector<int> SourceDataset::labels() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

std::size_t SourceDataset::count_label(int label) const {
  return static_cast<std::size_t>(
      std::count_if(samples.begin(), samples.end(), [&](const SourceSample& s) { return s.label == label; }));
}

// ---- pairs helpers ----------------------------------------------------------------

PairKey key_of(const PairSample& p) { return {p.deposit_id, p.withdrawal_id}; }

PairSet positive_set(const std::vector<PairSample>& pairs) {
  PairSet out;
  for (const auto& p : pairs) {
    if (p.label == 1 && p.provenance == Provenance::ground_truth) out.insert(key_of(p));
  }
  return out;
}

std::size_t count_label(const std::vector<PairSample>& pairs, int label) {
  return static_cast<std::size_t>(
      std::count_if(pairs.begin(), pairs.end(), [&](const PairSample& p) { return p.label == label; }));
}

// ---- loaders ----------------------------------------------------------------------

bool is_malicious_class(std::string_view class_name) {
  std::string folded;
  for (char c : class_name) {
    if (std::isalnum(static_cast<unsigned char>(c))) folded.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  static const char* const kMalicious[] = {"phishing",       "gambling",       "darknet",
                                           "blacklist",      "moneylaundering", "ponzi"};
  for (const char* prefix : kMalicious) {
    if (folded.rfind(prefix, 0) == 0) return true;
  }
  return false;
}

SourceDataset load_source_dataset(const std::filesystem::path& path, std::size_t dim) {
  csv::Table table = csv::read(path);
  int label_col = table.column("label");
  int class_col = table.column("class");
  if (label_col < 0 && class_col < 0) {
    throw SchemaError(path.string() + ": header needs a 'label' or 'class' column");
  }
  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (static_cast<int>(c) != label_col && static_cast<int>(c) != class_col) feature_cols.push_back(c);
  }
  if (feature_cols.size() != dim) {
    throw SchemaError(path.string() + ": found " + std::to_string(feature_cols.size()) +
                      " feature columns, expected d_S=" + std::to_string(dim));
  }
  SourceDataset out;
  out.dim = dim;
  out.samples.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    SourceSample s;
    s.features.resize(static_cast<Eigen::Index>(dim));
    for (std::size_t j = 0; j < dim; ++j) {
      s.features[static_cast<Eigen::Index>(j)] = csv::parse_double(row.fields[feature_cols[j]], table.source, row.line);
    }
    if (class_col >= 0) {
      s.label = is_malicious_class(row.fields[static_cast<std::size_t>(class_col)]) ? 1 : 0;
    } else {
      auto v = csv::parse_int(row.fields[static_cast<std::size_t>(label_col)], table.source, row.line);
      if (v != 0 && v != 1) throw ParseError(table.source, row.line, "label must be 0 or 1");
      s.label = static_cast<int>(v);
    }
    out.samples.push_back(std::move(s));
  }
  return out;
}

void write_source_dataset(const std::filesystem::path& path, const SourceDataset& data) {
  std::ostringstream out;
  for (std::size_t j = 0; j < data.dim; ++j) out << "f_" << j << ',';
  out << "label\n";
  for (const auto& s : data.samples) {
    for (Eigen::Index j = 0; j < s.features.size(); ++j) out << csv::format_double(s.features[j]) << ',';
    out << s.label << '\n';
  }
  csv::write_file(path, out.str());
}

TransactionGraph load_target_graph(const std::filesystem::path& accounts_path,
                                   const std::filesystem::path& edges_path) {
  csv::Table acc = csv::read(accounts_path);
  if (acc.header.size() < 2 || acc.header[0] != "id" || acc.header[1] != "role") {
    throw SchemaError(accounts_path.string() + ": header must start with id,role");
  }
  std::size_t dim = acc.header.size() - 2;
  TransactionGraph graph(dim);
  for (const auto& row : acc.rows) {
    Account a;
    a.id = row.fields[0];
    if (a.id.empty()) throw ParseError(acc.source, row.line, "empty account id");
    auto role = parse_role(row.fields[1]);
    if (!role) throw ParseError(acc.source, row.line, "unknown role '" + row.fields[1] + "'");
    a.role = *role;
    a.features.resize(static_cast<Eigen::Index>(dim));
    for (std::size_t j = 0; j < dim; ++j) {
      a.features[static_cast<Eigen::Index>(j)] = csv::parse_double(row.fields[j + 2], acc.source, row.line);
    }
    try {
      graph.add_account(std::move(a));
    } catch (const SchemaError& e) {
      throw ParseError(acc.source, row.line, e.what());
    }
  }

  csv::Table edges = csv::read(edges_path);
  const std::vector<std::string> expected{"from", "to", "amount", "timestamp", "gas_price"};
  if (edges.header != expected) {
    throw SchemaError(edges_path.string() + ": header must be from,to,amount,timestamp,gas_price");
  }
  for (const auto& row : edges.rows) {
    TxEdge e;
    e.from = row.fields[0];
    e.to = row.fields[1];
    e.amount = csv::parse_double(row.fields[2], edges.source, row.line);
    e.timestamp = csv::parse_int(row.fields[3], edges.source, row.line);
    e.gas_price = csv::parse_uint(row.fields[4], edges.source, row.line);
    try {
      graph.add_edge(std::move(e));
    } catch (const ReferentialIntegrityError& ex) {
      throw ReferentialIntegrityError(edges.source + ":" + std::to_string(row.line) + ": " + ex.what());
    } catch (const SchemaError& ex) {
      throw ParseError(edges.source, row.line, ex.what());
    }
  }
  return graph;
}

std::vector<PairSample> load_pairs(const std::filesystem::path& pairs_path) {
  csv::Table table = csv::read(pairs_path);
  if (table.header.size() < 3 || table.header[0] != "deposit" || table.header[1] != "withdrawal" ||
      table.header[2] != "label") {
    throw SchemaError(pairs_path.string() + ": header must be deposit,withdrawal,label[,provenance]");
  }
  bool has_provenance = table.header.size() >= 4 && table.header[3] == "provenance";
  std::vector<PairSample> out;
  out.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    PairSample p;
    p.deposit_id = row.fields[0];
    p.withdrawal_id = row.fields[1];
    auto label = csv::parse_int(row.fields[2], table.source, row.line);
    if (label != 0 && label != 1) throw ParseError(table.source, row.line, "label must be 0 or 1");
    if (p.deposit_id == p.withdrawal_id) throw ParseError(table.source, row.line, "deposit equals withdrawal");
    p.label = static_cast<int>(label);
    if (has_provenance) {
      auto prov = parse_provenance(row.fields[3]);
      if (!prov) throw ParseError(table.source, row.line, "unknown provenance '" + row.fields[3] + "'");
      p.provenance = *prov;
    } else {
      p.provenance = p.label == 1 ? Provenance::ground_truth : Provenance::shuffled_negative;
    }
    out.push_back(std::move(p));
  }
  return out;
}

TargetCorpus load_target_graph_and_pairs(const std::filesystem::path& accounts_path,
                                         const std::filesystem::path& edges_path,
                                         const std::filesystem::path& pairs_path) {
  TargetCorpus corpus{load_target_graph(accounts_path, edges_path), load_pairs(pairs_path)};
  for (const auto& p : corpus.pairs) {
    for (const auto& id : {p.deposit_id, p.withdrawal_id}) {
      if (!corpus.graph.find(id)) {
        throw ReferentialIntegrityError(pairs_path.string() + ": pair endpoint " + id +
                                        " is not an account of the graph");
      }
    }
  }
  return corpus;
}

void write_accounts(const std::filesystem::path& path, const TransactionGraph& graph) {
  std::ostringstream out;
  out << "id,role";
  for (std::size_t j = 0; j < graph.feature_dim(); ++j) out << ",f_" << j;
  out << '\n';
  for (const auto& a : graph.accounts()) {
    out << a.id << ',' << to_string(a.role);
    for (Eigen::Index j = 0; j < a.features.size(); ++j) out << ',' << csv::format_double(a.features[j]);
    out << '\n';
  }
  csv::write_file(path, out.str());
}

void write_edges(const std::filesystem::path& path, const TransactionGraph& graph) {
  std::ostringstream out;
  out << "from,to,amount,timestamp,gas_price\n";
  for (const auto& e : graph.edges()) {
    out << e.from << ',' << e.to << ',' << csv::format_double(e.amount) << ',' << e.timestamp << ','
        << e.gas_price << '\n';
  }
  csv::write_file(path, out.str());
}

void write_pairs(const std::filesystem::path& path, const std::vector<PairSample>& pairs) {
  std::ostringstream out;
  out << "deposit,withdrawal,label,provenance\n";
  for (const auto& p : pairs) {
    out << p.deposit_id << ',' << p.withdrawal_id << ',' << p.label << ',' << to_string(p.provenance) << '\n';
  }
  csv::write_file(path, out.str());
}

void write_corpus(const std::filesystem::path& dir, const SyntheticCorpus& corpus) {
  write_source_dataset(dir / "source.csv", corpus.source);
  write_accounts(dir / "accounts.csv", corpus.graph);
  write_edges(dir / "edges.csv", corpus.graph);
  write_pairs(dir / "pairs.csv", corpus.pairs);
}

SyntheticCorpus load_corpus(const std::filesystem::path& dir, std::size_t source_dim) {
  SyntheticCorpus out;
  out.source = load_source_dataset(dir / "source.csv", source_dim);
  auto target = load_target_graph_and_pairs(dir / "accounts.csv", dir / "edges.csv", dir / "pairs.csv");
  out.graph = std::move(target.graph);
  out.pairs = std::move(target.pairs);
  return out;
}

// ---- transforms ---------------------------------------------------------------------

namespace {

std::vector<std::string> unique_in_order(const std::vector<PairSample>& pairs, bool deposit_side) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& p : pairs) {
    const std::string& id = deposit_side ? p.deposit_id : p.withdrawal_id;
    if (seen.insert(id).second) out.push_back(id);
  }
  return out;
}

// Draws `count` distinct (deposit, withdrawal) combinations not in `blocked`.
// Enumerates when the candidate space is small, otherwise rejection-samples.
std::vector<PairKey> draw_unblocked(const std::vector<std::string>& deposits,
                                    const std::vector<std::string>& withdrawals, const PairSet& blocked,
                                    std::size_t count, Rng& rng, const char* what) {
  const std::size_t space = deposits.size() * withdrawals.size();
  std::size_t blocked_in_space = 0;
  {
    std::set<std::string> dep(deposits.begin(), deposits.end());
    std::set<std::string> wd(withdrawals.begin(), withdrawals.end());
    for (const auto& k : blocked) {
      if (dep.count(k.first) && wd.count(k.second)) ++blocked_in_space;
    }
  }
  const std::size_t available = space - std::min(space, blocked_in_space);
  if (count > available) {
    throw CapacityError(std::string(what) + ": requested " + std::to_string(count) + " pairs but only " +
                        std::to_string(available) + " distinct unassociated combinations exist");
  }
  std::vector<PairKey> out;
  out.reserve(count);
  if (count == 0) return out;
  if (space <= 4'000'000 || count * 2 > available) {
    std::vector<PairKey> candidates;
    candidates.reserve(available);
    for (const auto& d : deposits) {
      for (const auto& w : withdrawals) {
        PairKey k{d, w};
        if (d != w && !blocked.count(k)) candidates.push_back(std::move(k));
      }
    }
    if (count > candidates.size()) {
      throw CapacityError(std::string(what) + ": only " + std::to_string(candidates.size()) +
                          " distinct unassociated combinations exist");
    }
    // Partial Fisher-Yates: the first `count` slots become a uniform sample.
    for (std::size_t i = 0; i < count; ++i) {
      std::size_t j = i + uniform_index(rng, candidates.size() - i);
      std::swap(candidates[i], candidates[j]);
      out.push_back(candidates[i]);
    }
    return out;
  }
  PairSet taken;
  while (out.size() < count) {
    PairKey k{deposits[uniform_index(rng, deposits.size())], withdrawals[uniform_index(rng, withdrawals.size())]};
    if (k.first == k.second || blocked.count(k) || taken.count(k)) continue;
    taken.insert(k);
    out.push_back(std::move(k));
  }
  return out;
}

}  // namespace

namespace {

std::vector<PairSample> draw_negatives(const std::vector<PairSample>& positives, std::size_t count,
                                       std::uint64_t seed, const PairSet& exclude) {
  std::vector<PairSample> pos;
  for (const auto& p : positives) {
    if (p.label == 1) pos.push_back(p);
  }
  if (pos.size() < 2) throw CapacityError("make_unassociated_negatives needs at least 2 positive pairs");
  PairSet blocked = exclude;
  for (const auto& p : pos) blocked.insert(key_of(p));
  Rng rng(derive_seed(seed, "negatives"));
  auto keys = draw_unblocked(unique_in_order(pos, true), unique_in_order(pos, false), blocked, count, rng,
                             "make_unassociated_negatives");
  std::vector<PairSample> out;
  out.reserve(keys.size());
  for (auto& k : keys) out.push_back(PairSample{std::move(k.first), std::move(k.second), 0, Provenance::shuffled_negative});
  return out;
}

}  // namespace

std::vector<PairSample> make_unassociated_negatives(const std::vector<PairSample>& positives,
                                                    std::size_t ratio, std::uint64_t seed,
                                                    const PairSet& exclude) {
  return draw_negatives(positives, ratio * count_label(positives, 1), seed, exclude);
}

std::size_t noise_count(double eta, std::size_t positives) {
  // Guard against 0.2 * 100 = 20.000000000000004 rounding up.
  return static_cast<std::size_t>(std::ceil(eta * static_cast<double>(positives) - 1e-9));
}

std::vector<PairSample> inject_label_noise(const std::vector<PairSample>& train, double eta, std::uint64_t seed,
                                           const std::optional<PairSet>& ground_truth) {
  if (!(eta >= 0.0 && eta <= 0.5)) throw RangeError("noise rate eta must lie in [0, 0.5]");
  std::size_t positives = count_label(train, 1);
  std::size_t count = noise_count(eta, positives);
  std::vector<PairSample> out = train;
  if (count == 0) return out;

  PairSet blocked = ground_truth ? *ground_truth : positive_set(train);
  for (const auto& p : train) blocked.insert(key_of(p));
  Rng rng(derive_seed(seed, "label-noise"));
  auto keys = draw_unblocked(unique_in_order(train, true), unique_in_order(train, false), blocked, count, rng,
                             "inject_label_noise");
  for (auto& k : keys) out.push_back(PairSample{std::move(k.first), std::move(k.second), 1, Provenance::injected_noise});
  return out;
}

Split subsample_few_shot(const std::vector<PairSample>& pairs, std::size_t n, std::uint64_t trial_seed) {
  if (n == 0) throw ArgumentError("few-shot size N must be at least 1");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < pairs.size(); ++i) (pairs[i].label == 1 ? pos : neg).push_back(i);
  if (pos.size() < n || neg.size() < n) {
    throw CapacityError("few-shot N=" + std::to_string(n) + " needs " + std::to_string(n) +
                        " positives and negatives; have " + std::to_string(pos.size()) + " and " +
                        std::to_string(neg.size()));
  }
  Rng rng(derive_seed(trial_seed, "few-shot"));
  std::vector<bool> chosen(pairs.size(), false);
  for (auto* group : {&pos, &neg}) {
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t j = i + uniform_index(rng, group->size() - i);
      std::swap((*group)[i], (*group)[j]);
      chosen[(*group)[i]] = true;
    }
  }
  Split split;
  // Training order: positives then negatives in draw order.
  for (std::size_t i = 0; i < n; ++i) split.train.push_back(pairs[pos[i]]);
  for (std::size_t i = 0; i < n; ++i) split.train.push_back(pairs[neg[i]]);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!chosen[i]) split.test.push_back(pairs[i]);
  }
  return split;
}

std::vector<PairSample> make_imbalanced(const std::vector<PairSample>& pairs, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw ArgumentError("imbalance ratio must be 1:k with k >= 1");
  std::vector<PairSample> positives, negatives;
  for (const auto& p : pairs) (p.label == 1 ? positives : negatives).push_back(p);
  const std::size_t target = k * positives.size();
  std::vector<PairSample> out = positives;
  if (negatives.size() >= target) {
    // Deterministic subsample, preserving original order.
    std::vector<std::size_t> idx(negatives.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(derive_seed(seed, "imbalance-trim"));
    shuffle_in_place(idx, rng);
    idx.resize(target);
    std::sort(idx.begin(), idx.end());
    for (auto i : idx) out.push_back(negatives[i]);
    return out;
  }
  PairSet exclude;
  for (const auto& p : negatives) exclude.insert(key_of(p));
  out.insert(out.end(), negatives.begin(), negatives.end());
  auto extra = draw_negatives(positives, target - negatives.size(), derive_seed(seed, "imbalance"), exclude);
  out.insert(out.end(), extra.begin(), extra.end());
  return out;
}

std::size_t parse_ratio(std::string_view text) {
  auto colon = text.find(':');
  std::string_view k = colon == std::string_view::npos ? text : text.substr(colon + 1);
  if (colon != std::string_view::npos && text.substr(0, colon) != "1") {
    throw UsageError("ratio must have the form 1:k, got '" + std::string(text) + "'");
  }
  std::size_t v = 0;
  for (char c : k) {
    if (c < '0' || c > '9') throw UsageError("ratio must have the form 1:k, got '" + std::string(text) + "'");
    v = v * 10 + static_cast<std::size_t>(c - '0');
  }
  if (k.empty() || v == 0) throw UsageError("ratio k must be >= 1, got '" + std::string(text) + "'");
  return v;
}

}  // namespace stealthlink
