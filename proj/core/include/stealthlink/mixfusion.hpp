#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "stealthlink/data.hpp"

namespace stealthlink {

// Local view of the k-hop neighborhood of one account. Node 0 is the center.
struct Subgraph {
  std::string center_id;
  std::vector<std::string> node_ids;
  std::vector<std::vector<std::size_t>> adjacency;  // symmetric, local indices, sorted
  Matrix features;                                  // |V| x d_T

  std::size_t size() const { return node_ids.size(); }
};

// Breadth-first closure of depth k around `center`, as an induced subgraph with
// undirected adjacency. When the closure would exceed `cap` nodes, the newest
// frontier is truncated by a seeded draw. Throws LookupError.
Subgraph sample_k_hop(const TransactionGraph& graph, std::string_view center, std::size_t k, std::size_t cap,
                      std::uint64_t seed = 0);

enum class Aggregation { mean, sum };
enum class Readout { center, mean };
enum class GnnInit { identity, glorot };

// h_i' = relu(W * AGG({h_i} U {h_j : j in N(i)}) + b)
struct GnnParams {
  std::vector<Matrix> weights;  // layer l: out x in
  std::vector<Vector> biases;   // empty unless use_bias
  Aggregation aggregation = Aggregation::mean;
  Readout readout = Readout::center;
  bool use_bias = false;

  std::size_t layers() const { return weights.size(); }
  std::size_t input_dim() const;
  std::size_t output_dim() const;
  // Throws ShapeError when the layer chain is inconsistent.
  void validate() const;

  // Identity init puts I in the leading block of every W (zero elsewhere).
  static GnnParams make(std::size_t d_in, std::size_t d_out, std::size_t layers, GnnInit init, std::uint64_t seed,
                        Aggregation aggregation = Aggregation::mean, Readout readout = Readout::center,
                        bool use_bias = false);
};

Vector gnn_encode(const Subgraph& sub, const GnnParams& params);

// Gradient of a scalar loss through gnn_encode, given dL/d(output).
struct GnnGradient {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  Matrix features;  // dL/dX
};
GnnGradient gnn_backward(const Subgraph& sub, const GnnParams& params, const Vector& grad_output);

// [h_deposit | h_withdrawal]. Throws ShapeError on width mismatch.
Vector fuse(const Vector& h_deposit, const Vector& h_withdrawal);
std::pair<Vector, Vector> split(const Vector& joint);

struct MixFusionConfig {
  std::size_t k = 2;
  std::size_t layers = 2;
  std::size_t cap = 256;
  std::size_t d_c = 8;
  Aggregation aggregation = Aggregation::mean;
  Readout readout = Readout::center;
  GnnInit init = GnnInit::identity;
  bool use_bias = false;
};

// Per-account embeddings with a cache; joint representations of pairs.
// After warm() the object is read-only and may be shared between threads.
class PairFeaturizer {
 public:
  PairFeaturizer(const TransactionGraph& graph, MixFusionConfig cfg, std::uint64_t seed);

  const GnnParams& params() const { return params_; }
  std::size_t joint_dim() const { return 2 * params_.output_dim(); }

  // Embeds every deposit- and withdrawal-role account.
  void warm();
  void warm(const std::vector<std::string>& ids);

  // Uses the cache when present, computes otherwise (without caching).
  Vector embed(const std::string& id) const;
  Vector joint(const std::string& deposit_id, const std::string& withdrawal_id) const;
  Matrix joint_matrix(const std::vector<PairSample>& pairs) const;

 private:
  Vector compute(const std::string& id) const;

  const TransactionGraph& graph_;
  MixFusionConfig cfg_;
  std::uint64_t seed_;
  GnnParams params_;
  std::unordered_map<std::string, Vector> cache_;
};

}  // namespace stealthlink
