#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stealthlink/data.hpp"
#include "stealthlink/transfer.hpp"

namespace stealthlink {

// Positive class = 1 (associated).
struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t support() const { return tp + fp + tn + fn; }
  bool operator==(const Metrics&) const = default;
};

// Throws ShapeError on length mismatch or empty input.
Metrics compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample (n-1) standard deviation; 0 for a single trial
};
Summary summarize(const std::vector<double>& values);

struct EvalReport {
  std::string protocol;   // few_shot | noise | imbalance
  std::string setting;    // N=10, eta=0.5, ratio=1:5, ...
  std::string strategy;   // mcd | none
  std::string config_digest;
  std::vector<Metrics> trials;

  Summary accuracy() const;
  Summary recall() const;
  Summary f1() const;
  Summary precision() const;

  std::string to_json() const;
  // trial,accuracy,precision,recall,f1,tp,fp,tn,fn
  std::string trials_csv() const;
  bool operator==(const EvalReport&) const = default;
};

// (f1_clean - f1_eta) / f1_clean. Throws DivisionError when f1_clean <= 0.
double degradation_rate(double f1_clean, double f1_eta);

struct MmdOptions {
  std::optional<double> bandwidth;  // RBF sigma; median heuristic when empty
  std::size_t max_samples = 0;       // per side; 0 keeps everything
  std::size_t median_samples = 1000;  // points used for the median heuristic
  std::uint64_t seed = 0;
};

struct MmdResult {
  double value = 0.0;  // sqrt(max(0, unbiased MMD^2))
  double mmd2 = 0.0;   // unbiased estimate before clipping
  double bandwidth = 0.0;
};

// k(x, y) = exp(-||x - y||^2 / (2 sigma^2)).
// Throws ShapeError (width mismatch, fewer than 2 rows) and BandwidthError.
MmdResult mmd_detail(const Matrix& x, const Matrix& y, const MmdOptions& opt = {});
double mmd(const Matrix& x, const Matrix& y, const MmdOptions& opt = {});

// Median of pairwise Euclidean distances over the pooled rows (i < j).
double median_pairwise_distance(const Matrix& pooled);

// sample_id,domain,label,e_0..e_{d_P-1} of generator outputs; source rows
// first, then target pairs.
std::string embeddings_csv(const TransferModel& model, const Matrix& source, const std::vector<int>& source_labels,
                           const std::vector<PairSample>& pairs, const Matrix& joint);
void export_embeddings(const TransferModel& model, const Matrix& source, const std::vector<int>& source_labels,
                       const std::vector<PairSample>& pairs, const Matrix& joint, const std::filesystem::path& path);

}  // namespace stealthlink
