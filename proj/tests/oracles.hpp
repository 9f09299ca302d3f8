#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "stealthlink/evaluation.hpp"
#include "stealthlink/mixfusion.hpp"
#include "stealthlink/rng.hpp"

// Independent reference implementations shared by the unit and acceptance tests.
namespace stealthlink::oracle {

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = standard_normal(rng);
  return m;
}

inline Subgraph random_subgraph(Rng& rng, std::size_t d, std::size_t max_nodes = 6) {
  Subgraph s;
  const std::size_t n = 1 + uniform_index(rng, max_nodes);
  s.adjacency.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    s.node_ids.push_back("n" + std::to_string(i));
    for (std::size_t j = i + 1; j < n; ++j) {
      if (uniform01(rng) < 0.45) {
        s.adjacency[i].push_back(j);
        s.adjacency[j].push_back(i);
      }
    }
  }
  for (auto& a : s.adjacency) std::sort(a.begin(), a.end());
  s.center_id = s.node_ids[0];
  s.features = random_matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d), rng);
  return s;
}

inline GnnParams random_params(Rng& rng, std::size_t d_in, std::size_t max_layers = 3, std::size_t max_out = 4) {
  GnnParams p;
  const std::size_t layers = 1 + uniform_index(rng, max_layers);
  const std::size_t d_out = 1 + uniform_index(rng, max_out);
  p.aggregation = uniform01(rng) < 0.5 ? Aggregation::mean : Aggregation::sum;
  p.readout = uniform01(rng) < 0.5 ? Readout::center : Readout::mean;
  p.use_bias = uniform01(rng) < 0.5;
  for (std::size_t l = 0; l < layers; ++l) {
    const auto in = static_cast<Eigen::Index>(l == 0 ? d_in : d_out);
    p.weights.push_back(random_matrix(static_cast<Eigen::Index>(d_out), in, rng));
    if (p.use_bias) p.biases.push_back(random_matrix(static_cast<Eigen::Index>(d_out), 1, rng).col(0));
  }
  return p;
}

// Dense form: H' = relu(M H W^T + 1 b^T), M = (A + I) or D^-1 (A + I).
inline Vector dense_gnn(const Subgraph& s, const GnnParams& p) {
  const auto n = static_cast<Eigen::Index>(s.size());
  Matrix m = Matrix::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t j : s.adjacency[static_cast<std::size_t>(i)]) m(i, static_cast<Eigen::Index>(j)) = 1.0;
  }
  if (p.aggregation == Aggregation::mean) {
    for (Eigen::Index i = 0; i < n; ++i) m.row(i) /= m.row(i).sum();
  }
  Matrix h = s.features;
  for (std::size_t l = 0; l < p.layers(); ++l) {
    Matrix z = m * h * p.weights[l].transpose();
    if (p.use_bias) z.rowwise() += p.biases[l].transpose();
    h = z.cwiseMax(0.0);
  }
  if (p.readout == Readout::center) return h.row(0).transpose();
  return h.colwise().mean().transpose();
}

// Counts by enumeration, then the textbook definitions.
inline Metrics confusion_metrics(const std::vector<int>& pred, const std::vector<int>& y) {
  Metrics m;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (pred[i] == 1 && y[i] == 1) ++m.tp;
    if (pred[i] == 1 && y[i] == 0) ++m.fp;
    if (pred[i] == 0 && y[i] == 0) ++m.tn;
    if (pred[i] == 0 && y[i] == 1) ++m.fn;
  }
  const double tp = static_cast<double>(m.tp);
  m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(y.size());
  m.precision = m.tp + m.fp == 0 ? 0.0 : tp / static_cast<double>(m.tp + m.fp);
  m.recall = m.tp + m.fn == 0 ? 0.0 : tp / static_cast<double>(m.tp + m.fn);
  m.f1 = m.precision + m.recall == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

// A hand-built MMD case: inputs, bandwidth and the closed-form unbiased MMD^2.
struct MmdCase {
  const char* name;
  Matrix x, y;
  double bandwidth;
  double mmd2;
};

inline std::vector<MmdCase> mmd_cases() {
  std::vector<MmdCase> out;
  auto col = [](std::initializer_list<double> v) {
    Matrix m(static_cast<Eigen::Index>(v.size()), 1);
    Eigen::Index i = 0;
    for (double x : v) m(i++, 0) = x;
    return m;
  };
  // Within-sample pairs are all k = 1; every cross pair is exp(-100 / 2).
  out.push_back({"point masses 0 and 10", col({0, 0}), col({10, 10}), 1.0, 2.0 - 2.0 * std::exp(-50.0)});
  {
    const double kxx = std::exp(-0.5), kyy = std::exp(-2.0);
    const double kxy = (1.0 + std::exp(-2.0) + 2.0 * std::exp(-0.5)) / 4.0;
    out.push_back({"{0,1} vs {0,2}", col({0, 1}), col({0, 2}), 1.0, kxx + kyy - 2.0 * kxy});
  }
  {
    Matrix x(3, 2), y(2, 2);
    x << 0, 0, 1, 0, 0, 1;
    y << 1, 1, 2, 1;
    auto k = [](double d2) { return std::exp(-d2 / (2.0 * 1.5 * 1.5)); };
    // Squared distances: within x {1, 1, 2}, within y {1}, cross {2, 5, 1, 2, 1, 4}.
    const double kxx = 2.0 * (k(1) + k(1) + k(2)) / 6.0;
    const double kyy = 2.0 * k(1) / 2.0;
    const double kxy = (k(2) + k(5) + k(1) + k(2) + k(1) + k(4)) / 6.0;
    out.push_back({"three points vs two in the plane", x, y, 1.5, kxx + kyy - 2.0 * kxy});
  }
  return out;
}

}  // namespace stealthlink::oracle
