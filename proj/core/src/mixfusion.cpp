#include "stealthlink/mixfusion.hpp"

#include <algorithm>
#include <cmath>

#include "stealthlink/error.hpp"
#include "stealthlink/rng.hpp"

namespace stealthlink {

Subgraph sample_k_hop(const TransactionGraph& graph, std::string_view center, std::size_t k, std::size_t cap,
                      std::uint64_t seed) {
  if (cap == 0) throw ArgumentError("sample_k_hop: cap must be at least 1");
  const std::size_t c = graph.index_of(center);

  std::vector<std::size_t> chosen{c};
  std::unordered_map<std::size_t, std::size_t> local{{c, 0}};
  std::vector<std::size_t> frontier{c};
  for (std::size_t depth = 1; depth <= k && !frontier.empty() && chosen.size() < cap; ++depth) {
    std::vector<std::size_t> next;
    for (std::size_t v : frontier) {
      for (std::size_t w : graph.neighbors(v)) {
        if (local.count(w) == 0) next.push_back(w);
      }
    }
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    const std::size_t room = cap - chosen.size();
    if (next.size() > room) {
      Rng rng(derive_seed(seed, center, depth));
      shuffle_in_place(next, rng);
      next.resize(room);
      std::sort(next.begin(), next.end());
    }
    for (std::size_t w : next) {
      local.emplace(w, chosen.size());
      chosen.push_back(w);
    }
    frontier = std::move(next);
  }

  Subgraph sub;
  sub.center_id = std::string(center);
  sub.features.resize(static_cast<Eigen::Index>(chosen.size()), static_cast<Eigen::Index>(graph.feature_dim()));
  sub.adjacency.resize(chosen.size());
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    const Account& acc = graph.account(chosen[i]);
    sub.node_ids.push_back(acc.id);
    sub.features.row(static_cast<Eigen::Index>(i)) = acc.features.transpose();
    for (std::size_t w : graph.neighbors(chosen[i])) {
      auto it = local.find(w);
      if (it != local.end()) sub.adjacency[i].push_back(it->second);
    }
    std::sort(sub.adjacency[i].begin(), sub.adjacency[i].end());
  }
  return sub;
}

// ---- GnnParams ---------------------------------------------------------------

std::size_t GnnParams::input_dim() const {
  return weights.empty() ? 0 : static_cast<std::size_t>(weights.front().cols());
}

std::size_t GnnParams::output_dim() const {
  return weights.empty() ? 0 : static_cast<std::size_t>(weights.back().rows());
}

void GnnParams::validate() const {
  if (weights.empty()) throw ShapeError("gnn: at least one layer is required");
  for (std::size_t l = 1; l < weights.size(); ++l) {
    if (weights[l].cols() != weights[l - 1].rows()) {
      throw ShapeError("gnn: layer " + std::to_string(l) + " expects width " + std::to_string(weights[l].cols()) +
                       " but the previous layer emits " + std::to_string(weights[l - 1].rows()));
    }
  }
  if (use_bias) {
    if (biases.size() != weights.size()) throw ShapeError("gnn: one bias per layer is required");
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (biases[l].size() != weights[l].rows()) throw ShapeError("gnn: bias width mismatch");
    }
  }
}

GnnParams GnnParams::make(std::size_t d_in, std::size_t d_out, std::size_t layers, GnnInit init, std::uint64_t seed,
                          Aggregation aggregation, Readout readout, bool use_bias) {
  if (layers == 0) throw ArgumentError("gnn: layers must be at least 1");
  GnnParams p;
  p.aggregation = aggregation;
  p.readout = readout;
  p.use_bias = use_bias;
  Rng rng(derive_seed(seed, "gnn-init"));
  for (std::size_t l = 0; l < layers; ++l) {
    const auto in = static_cast<Eigen::Index>(l == 0 ? d_in : d_out);
    const auto out = static_cast<Eigen::Index>(d_out);
    Matrix w = Matrix::Zero(out, in);
    if (init == GnnInit::identity) {
      for (Eigen::Index i = 0; i < std::min(in, out); ++i) w(i, i) = 1.0;
    } else {
      const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = (2.0 * uniform01(rng) - 1.0) * bound;
    }
    p.weights.push_back(std::move(w));
    if (use_bias) p.biases.push_back(Vector::Zero(out));
  }
  return p;
}

namespace {

Matrix aggregation_operator(const Subgraph& sub, Aggregation agg) {
  const auto n = static_cast<Eigen::Index>(sub.size());
  Matrix m = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& nb = sub.adjacency[static_cast<std::size_t>(i)];
    const double w = agg == Aggregation::mean ? 1.0 / static_cast<double>(nb.size() + 1) : 1.0;
    m(i, i) = w;
    for (std::size_t j : nb) {
      if (j >= sub.size()) throw ShapeError("subgraph adjacency index out of range");
      m(i, static_cast<Eigen::Index>(j)) += w;
    }
  }
  return m;
}

struct Tape {
  Matrix op;
  std::vector<Matrix> aggregated;  // per layer input after AGG
  std::vector<Matrix> pre;         // per layer pre-activation
  Matrix out;
};

Tape run(const Subgraph& sub, const GnnParams& params) {
  params.validate();
  if (static_cast<std::size_t>(sub.features.cols()) != params.input_dim()) {
    throw ShapeError("gnn: features have width " + std::to_string(sub.features.cols()) + ", expected " +
                     std::to_string(params.input_dim()));
  }
  if (sub.size() == 0 || static_cast<std::size_t>(sub.features.rows()) != sub.size()) {
    throw ShapeError("gnn: subgraph feature rows do not match its node count");
  }
  Tape t;
  t.op = aggregation_operator(sub, params.aggregation);
  Matrix h = sub.features;
  for (std::size_t l = 0; l < params.layers(); ++l) {
    Matrix a = t.op * h;
    Matrix z = a * params.weights[l].transpose();
    if (params.use_bias) z.rowwise() += params.biases[l].transpose();
    h = z.cwiseMax(0.0);
    t.aggregated.push_back(std::move(a));
    t.pre.push_back(std::move(z));
  }
  t.out = std::move(h);
  return t;
}

}  // namespace

Vector gnn_encode(const Subgraph& sub, const GnnParams& params) {
  Tape t = run(sub, params);
  if (params.readout == Readout::mean) return t.out.colwise().mean().transpose();
  return t.out.row(0).transpose();
}

GnnGradient gnn_backward(const Subgraph& sub, const GnnParams& params, const Vector& grad_output) {
  Tape t = run(sub, params);
  if (static_cast<std::size_t>(grad_output.size()) != params.output_dim()) {
    throw ShapeError("gnn_backward: gradient width mismatch");
  }
  const auto n = static_cast<Eigen::Index>(sub.size());
  Matrix dh = Matrix::Zero(n, grad_output.size());
  if (params.readout == Readout::mean) {
    dh.rowwise() = grad_output.transpose() / static_cast<double>(n);
  } else {
    dh.row(0) = grad_output.transpose();
  }
  GnnGradient g;
  g.weights.resize(params.layers());
  if (params.use_bias) g.biases.resize(params.layers());
  for (std::size_t l = params.layers(); l-- > 0;) {
    Matrix dz = dh.cwiseProduct((t.pre[l].array() > 0.0).cast<double>().matrix());
    g.weights[l] = dz.transpose() * t.aggregated[l];
    if (params.use_bias) g.biases[l] = dz.colwise().sum().transpose();
    Matrix da = dz * params.weights[l];
    dh = t.op.transpose() * da;
  }
  g.features = std::move(dh);
  return g;
}

Vector fuse(const Vector& h_deposit, const Vector& h_withdrawal) {
  if (h_deposit.size() != h_withdrawal.size()) {
    throw ShapeError("fuse: widths " + std::to_string(h_deposit.size()) + " and " +
                     std::to_string(h_withdrawal.size()) + " differ");
  }
  Vector out(h_deposit.size() * 2);
  out << h_deposit, h_withdrawal;
  return out;
}

std::pair<Vector, Vector> split(const Vector& joint) {
  if (joint.size() % 2 != 0) throw ShapeError("split: joint width must be even");
  const auto d = joint.size() / 2;
  return {joint.head(d), joint.tail(d)};
}

// ---- PairFeaturizer -------------------------------------------------------------

PairFeaturizer::PairFeaturizer(const TransactionGraph& graph, MixFusionConfig cfg, std::uint64_t seed)
    : graph_(graph),
      cfg_(cfg),
      seed_(seed),
      params_(GnnParams::make(graph.feature_dim(), cfg.d_c, cfg.layers, cfg.init, seed, cfg.aggregation, cfg.readout,
                              cfg.use_bias)) {}

Vector PairFeaturizer::compute(const std::string& id) const {
  return gnn_encode(sample_k_hop(graph_, id, cfg_.k, cfg_.cap, derive_seed(seed_, "k-hop")), params_);
}

void PairFeaturizer::warm() {
  std::vector<std::string> ids;
  for (const auto& a : graph_.accounts()) {
    if (a.role != AccountRole::normal) ids.push_back(a.id);
  }
  warm(ids);
}

void PairFeaturizer::warm(const std::vector<std::string>& ids) {
  for (const auto& id : ids) {
    if (cache_.count(id) == 0) cache_.emplace(id, compute(id));
  }
}

Vector PairFeaturizer::embed(const std::string& id) const {
  auto it = cache_.find(id);
  if (it != cache_.end()) return it->second;
  return compute(id);
}

Vector PairFeaturizer::joint(const std::string& deposit_id, const std::string& withdrawal_id) const {
  return fuse(embed(deposit_id), embed(withdrawal_id));
}

Matrix PairFeaturizer::joint_matrix(const std::vector<PairSample>& pairs) const {
  Matrix out(static_cast<Eigen::Index>(pairs.size()), static_cast<Eigen::Index>(joint_dim()));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = joint(pairs[i].deposit_id, pairs[i].withdrawal_id).transpose();
  }
  return out;
}

}  // namespace stealthlink
