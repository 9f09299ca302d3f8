// Desk-scale stand-in for a mixer corpus with planted ground truth.
//
// Every account carries a d_T behavior profile: offset + scale (.) (habit + noise).
// A user's habit vector is shared by all accounts the user controls, so the
// deposit and withdrawal of one user "echo" each other. Deposit-side accounts
// use the inflow scales, withdrawal-side accounts the outflow scales.
//
// Source samples are [inflow profile | outflow profile | context]. Malicious
// (pass-through) accounts echo inflow into outflow; benign accounts are a
// mixture of independent and anti-echo profiles, weighted so that the pooled
// inflow/outflow cross-covariance is zero. Per-coordinate variances decrease
// strictly along the vector, so the principal axes of the source are the
// coordinate axes in order.

#include <algorithm>
#include <cmath>
#include <string>

#include "stealthlink/data.hpp"
#include "stealthlink/error.hpp"
#include "stealthlink/rng.hpp"

namespace stealthlink {

namespace {

constexpr double kProfileOffset = 12.0;
constexpr double kContextStd = 0.4;
constexpr std::int64_t kEpoch = 1'600'000'000;
constexpr std::uint64_t kGwei = 1'000'000'000ULL;

struct Scales {
  Vector in;
  Vector out;
};

Scales profile_scales(std::size_t d) {
  Scales s{Vector(static_cast<Eigen::Index>(d)), Vector(static_cast<Eigen::Index>(d))};
  for (std::size_t i = 0; i < d; ++i) {
    double t = d == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(d - 1);
    s.in[static_cast<Eigen::Index>(i)] = std::sqrt(12.0 - 7.0 * t);
    s.out[static_cast<Eigen::Index>(i)] = std::sqrt(3.0 - 2.1 * t);
  }
  return s;
}

Vector gaussian(Rng& rng, std::size_t d) {
  Vector v(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = standard_normal(rng);
  return v;
}

Vector profile(const Vector& scale, const Vector& habit, double noise, Rng& rng) {
  Vector v = habit + noise * gaussian(rng, static_cast<std::size_t>(habit.size()));
  v = (kProfileOffset + scale.array() * v.array()).max(0.0).matrix();
  return v;
}

std::string format_denomination(double d) {
  std::string s = std::to_string(d);
  while (!s.empty() && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.pop_back();
  for (char& c : s) {
    if (c == '.') c = '_';
  }
  return s;
}

class GraphBuilder {
 public:
  GraphBuilder(const SynthConfig& cfg, Rng& rng) : cfg_(cfg), rng_(rng), scales_(profile_scales(cfg.profile_dim)) {
    graph_ = TransactionGraph(cfg.profile_dim);
    for (double denom : cfg.pools) {
      std::string id = "pool_" + format_denomination(denom);
      graph_.add_account(Account{id, AccountRole::normal, Vector::Constant(static_cast<Eigen::Index>(cfg.profile_dim), kProfileOffset)});
      pool_ids_.push_back(id);
    }
  }

  std::uint64_t gas_price(std::uint64_t fingerprint) {
    std::uint64_t gwei = 20 + rng_() % 101;
    return gwei * kGwei + fingerprint;
  }

  std::uint64_t draw_fingerprint(double probability) {
    if (uniform01(rng_) >= probability) return 0;
    return 1 + rng_() % (kGwei - 1);
  }

  void add(const std::string& id, AccountRole role, Vector features) {
    graph_.add_account(Account{id, role, std::move(features)});
  }

  void edge(const std::string& from, const std::string& to, double amount, std::int64_t ts, std::uint64_t gas) {
    graph_.add_edge(TxEdge{from, to, amount, ts, gas});
  }

  // Background chain of normal accounts behind `anchor`, oriented by `upstream`.
  void chain(const std::string& anchor, bool upstream, const Vector& scale, std::int64_t ts) {
    std::string prev = anchor;
    for (std::size_t h = 1; h < cfg_.hops; ++h) {
      std::string id = anchor + "_bg" + std::to_string(h);
      add(id, AccountRole::normal, profile(scale, gaussian(rng_, cfg_.profile_dim), cfg_.echo_noise, rng_));
      double amount = 0.05 + uniform01(rng_);
      if (upstream) {
        edge(id, prev, amount, ts - static_cast<std::int64_t>(3600 * h), gas_price(0));
      } else {
        edge(prev, id, amount, ts + static_cast<std::int64_t>(3600 * h), gas_price(0));
      }
      prev = id;
    }
  }

  void deposit_side(const std::string& id, AccountRole role, const Vector& habit, const std::string& pool,
                    double denom, std::int64_t ts, std::uint64_t fingerprint) {
    add(id, role, profile(scales_.in, habit, cfg_.echo_noise, rng_));
    for (std::size_t h = 0; h < cfg_.helpers_per_account; ++h) {
      std::string fid = id + "_fund" + std::to_string(h);
      add(fid, AccountRole::normal, profile(scales_.in, habit, cfg_.helper_noise, rng_));
      std::int64_t fts = ts - static_cast<std::int64_t>(600 * (h + 1));
      edge(fid, id, denom / static_cast<double>(cfg_.helpers_per_account) + 0.01, fts, gas_price(0));
      chain(fid, true, scales_.in, fts);
    }
    edge(id, pool, denom, ts, gas_price(fingerprint));
  }

  void withdrawal_side(const std::string& id, AccountRole role, const Vector& habit, const std::string& pool,
                       double denom, std::int64_t ts, std::uint64_t fingerprint) {
    add(id, role, profile(scales_.out, habit, cfg_.echo_noise, rng_));
    edge(pool, id, denom, ts, gas_price(fingerprint));
    for (std::size_t h = 0; h < cfg_.helpers_per_account; ++h) {
      std::string sid = id + "_spend" + std::to_string(h);
      add(sid, AccountRole::normal, profile(scales_.out, habit, cfg_.helper_noise, rng_));
      std::int64_t sts = ts + static_cast<std::int64_t>(900 * (h + 1));
      edge(id, sid, denom * 0.4, sts, gas_price(0));
      chain(sid, false, scales_.out, sts);
    }
  }

  const std::vector<std::string>& pools() const { return pool_ids_; }
  TransactionGraph take() { return std::move(graph_); }

 private:
  const SynthConfig& cfg_;
  Rng& rng_;
  Scales scales_;
  TransactionGraph graph_;
  std::vector<std::string> pool_ids_;
};

SourceDataset make_source(const SynthConfig& cfg, Rng& rng) {
  const std::size_t d = cfg.profile_dim;
  const Scales sc = profile_scales(d);
  const std::size_t m = cfg.source_samples;
  const std::size_t n_mal = static_cast<std::size_t>(std::llround(cfg.malicious_fraction * static_cast<double>(m)));
  const std::size_t n_anti = n_mal;  // cancels the echo cross-covariance of the malicious profile

  // 0 = malicious echo, 1 = benign anti-echo, 2 = benign independent
  std::vector<int> kind(m, 2);
  for (std::size_t i = 0; i < n_mal; ++i) kind[i] = 0;
  for (std::size_t i = n_mal; i < std::min(m, n_mal + n_anti); ++i) kind[i] = 1;
  shuffle_in_place(kind, rng);

  SourceDataset out;
  out.dim = cfg.source_dim();
  out.samples.reserve(m);
  for (int k : kind) {
    Vector habit = gaussian(rng, d);
    Vector in = habit + cfg.echo_noise * gaussian(rng, d);
    Vector out_habit = k == 0 ? habit : (k == 1 ? Vector(-habit) : gaussian(rng, d));
    Vector outflow = out_habit + cfg.echo_noise * gaussian(rng, d);
    SourceSample s;
    s.features.resize(static_cast<Eigen::Index>(out.dim));
    const auto di = static_cast<Eigen::Index>(d);
    s.features.segment(0, di) = (kProfileOffset + sc.in.array() * in.array()).matrix();
    s.features.segment(di, di) = (kProfileOffset + sc.out.array() * outflow.array()).matrix();
    for (std::size_t j = 0; j < cfg.source_context_dim; ++j) {
      s.features[2 * di + static_cast<Eigen::Index>(j)] = kProfileOffset + kContextStd * standard_normal(rng);
    }
    s.label = k == 0 ? 1 : 0;
    out.samples.push_back(std::move(s));
  }
  return out;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_users == 0) throw ArgumentError("synth: n_users must be positive");
  if (pools.empty()) throw ArgumentError("synth: at least one pool denomination is required");
  for (double p : pools) {
    if (!(p > 0.0)) throw ArgumentError("synth: pool denominations must be positive");
  }
  if (hops == 0) throw ArgumentError("synth: hops must be positive");
  if (deposits_per_user_max == 0) throw ArgumentError("synth: deposits_per_user_max must be positive");
  if (profile_dim == 0) throw ArgumentError("synth: profile_dim must be positive");
  if (source_samples < 2) throw ArgumentError("synth: source_samples must be at least 2");
  if (!(malicious_fraction > 0.0 && malicious_fraction <= 0.5)) {
    throw ArgumentError("synth: malicious_fraction must lie in (0, 0.5]");
  }
  if (!(echo_noise >= 0.0) || !(helper_noise >= 0.0)) throw ArgumentError("synth: noise scales must be >= 0");
  if (!(fingerprint_fraction >= 0.0 && fingerprint_fraction <= 1.0)) {
    throw ArgumentError("synth: fingerprint_fraction must lie in [0, 1]");
  }
}

SyntheticCorpus generate_synthetic_corpus(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SyntheticCorpus corpus;
  {
    Rng rng(derive_seed(seed, "synthetic-source"));
    corpus.source = make_source(cfg, rng);
  }

  Rng rng(derive_seed(seed, "synthetic-target"));
  GraphBuilder builder(cfg, rng);
  std::vector<PairSample> positives;
  const std::int64_t window = 30LL * 24 * 3600;

  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    const std::string user = "u" + std::to_string(u);
    Vector habit = gaussian(rng, cfg.profile_dim);
    std::size_t notes = 1 + static_cast<std::size_t>(rng() % cfg.deposits_per_user_max);
    std::size_t pool = uniform_index(rng, cfg.pools.size());
    double denom = cfg.pools[pool];
    std::uint64_t fingerprint = builder.draw_fingerprint(cfg.fingerprint_fraction);
    // Users keep a habitual delay between deposit and withdrawal.
    std::int64_t delay = 3600 + static_cast<std::int64_t>(3600.0 * 24.0 * std::abs(habit[0]));
    std::vector<std::string> deps, wds;
    for (std::size_t j = 0; j < notes; ++j) {
      std::int64_t ts = kEpoch + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(window));
      std::string dep = user + "_dep" + std::to_string(j);
      std::string wd = user + "_wd" + std::to_string(j);
      builder.deposit_side(dep, AccountRole::deposit, habit, builder.pools()[pool], denom, ts, fingerprint);
      builder.withdrawal_side(wd, AccountRole::withdrawal, habit, builder.pools()[pool], denom, ts + delay, fingerprint);
      deps.push_back(dep);
      wds.push_back(wd);
    }
    // Every deposit/withdrawal combination of one user is associated.
    for (const auto& d : deps) {
      for (const auto& w : wds) positives.push_back(PairSample{d, w, 1, Provenance::ground_truth});
    }
  }

  for (std::size_t i = 0; i < cfg.n_decoys; ++i) {
    const std::string id = "decoy" + std::to_string(i);
    Vector habit = gaussian(rng, cfg.profile_dim);
    std::size_t pool = uniform_index(rng, cfg.pools.size());
    double denom = cfg.pools[pool];
    std::int64_t ts = kEpoch + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(window));
    std::uint64_t fingerprint = builder.draw_fingerprint(cfg.fingerprint_fraction / 2.0);
    switch (i % 3) {
      case 0:
        builder.deposit_side(id + "_dep", AccountRole::deposit, habit, builder.pools()[pool], denom, ts, fingerprint);
        break;
      case 1:
        builder.withdrawal_side(id + "_wd", AccountRole::withdrawal, habit, builder.pools()[pool], denom, ts,
                                fingerprint);
        break;
      default: {
        // A plain account that occasionally touches the pool.
        const Scales sc = profile_scales(cfg.profile_dim);
        builder.add(id, AccountRole::normal, profile(sc.in, habit, cfg.echo_noise, rng));
        builder.edge(id, builder.pools()[pool], denom, ts, builder.gas_price(0));
        break;
      }
    }
  }

  corpus.graph = builder.take();
  corpus.pairs = positives;
  if (positives.size() >= 2) {
    auto negatives = make_unassociated_negatives(positives, 1, derive_seed(seed, "synthetic-negatives"));
    corpus.pairs.insert(corpus.pairs.end(), negatives.begin(), negatives.end());
  }
  return corpus;
}

}  // namespace stealthlink
