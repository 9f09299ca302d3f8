#include "stealthlink/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <sstream>

#include "stealthlink/csv.hpp"
#include "stealthlink/error.hpp"
#include "stealthlink/rng.hpp"

namespace stealthlink {

Metrics compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size()) {
    throw ShapeError("compute_metrics: " + std::to_string(predictions.size()) + " predictions vs " +
                     std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw ShapeError("compute_metrics: no samples");
  Metrics m;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predictions[i] == 1;
    const bool y = labels[i] == 1;
    if (p && y) ++m.tp;
    else if (p && !y) ++m.fp;
    else if (!p && y) ++m.fn;
    else ++m.tn;
  }
  const auto d = [](std::size_t a) { return static_cast<double>(a); };
  m.accuracy = d(m.tp + m.tn) / d(labels.size());
  m.precision = m.tp + m.fp == 0 ? 0.0 : d(m.tp) / d(m.tp + m.fp);
  m.recall = m.tp + m.fn == 0 ? 0.0 : d(m.tp) / d(m.tp + m.fn);
  m.f1 = m.precision + m.recall == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return s;
}

namespace {

template <typename F>
Summary summarize_field(const std::vector<Metrics>& trials, F field) {
  std::vector<double> v;
  v.reserve(trials.size());
  for (const auto& m : trials) v.push_back(field(m));
  return summarize(v);
}

}  // namespace

Summary EvalReport::accuracy() const { return summarize_field(trials, [](const Metrics& m) { return m.accuracy; }); }
Summary EvalReport::precision() const { return summarize_field(trials, [](const Metrics& m) { return m.precision; }); }
Summary EvalReport::recall() const { return summarize_field(trials, [](const Metrics& m) { return m.recall; }); }
Summary EvalReport::f1() const { return summarize_field(trials, [](const Metrics& m) { return m.f1; }); }

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["protocol"] = protocol;
  j["setting"] = setting;
  j["strategy"] = strategy;
  j["config_digest"] = config_digest;
  auto put = [&j](const char* name, Summary s) { j["summary"][name] = {{"mean", s.mean}, {"std", s.std}}; };
  put("accuracy", accuracy());
  put("precision", precision());
  put("recall", recall());
  put("f1", f1());
  j["trials"] = nlohmann::ordered_json::array();
  for (const auto& m : trials) {
    j["trials"].push_back({{"accuracy", m.accuracy},
                           {"precision", m.precision},
                           {"recall", m.recall},
                           {"f1", m.f1},
                           {"tp", m.tp},
                           {"fp", m.fp},
                           {"tn", m.tn},
                           {"fn", m.fn}});
  }
  return j.dump(2) + "\n";
}

std::string EvalReport::trials_csv() const {
  std::ostringstream os;
  os << "trial,accuracy,precision,recall,f1,tp,fp,tn,fn\n";
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto& m = trials[i];
    os << i << ',' << csv::format_double(m.accuracy) << ',' << csv::format_double(m.precision) << ','
       << csv::format_double(m.recall) << ',' << csv::format_double(m.f1) << ',' << m.tp << ',' << m.fp << ','
       << m.tn << ',' << m.fn << '\n';
  }
  return os.str();
}

double degradation_rate(double f1_clean, double f1_eta) {
  if (!(f1_clean > 0.0)) throw DivisionError("degradation_rate: clean F1 must be positive");
  return (f1_clean - f1_eta) / f1_clean;
}

// ---- MMD ------------------------------------------------------------------------------

double median_pairwise_distance(const Matrix& pooled) {
  const auto n = pooled.rows();
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) d.push_back((pooled.row(i) - pooled.row(j)).norm());
  }
  if (d.empty()) return 0.0;
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
  double hi = d[mid];
  if (d.size() % 2 == 1) return hi;
  double lo = *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

namespace {

Matrix subsample_rows(const Matrix& x, std::size_t limit, Rng& rng) {
  if (limit == 0 || static_cast<std::size_t>(x.rows()) <= limit) return x;
  std::vector<std::size_t> idx(static_cast<std::size_t>(x.rows()));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  shuffle_in_place(idx, rng);
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  Matrix out(static_cast<Eigen::Index>(limit), x.cols());
  for (std::size_t i = 0; i < limit; ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

// Sum of k(a_i, b_j) over all i, j (or i != j when `same`).
double kernel_sum(const Matrix& a, const Matrix& b, double gamma, bool same) {
  Eigen::VectorXd na = a.rowwise().squaredNorm();
  Eigen::VectorXd nb = b.rowwise().squaredNorm();
  double total = 0.0;
  const Eigen::Index block = 256;
  for (Eigen::Index i0 = 0; i0 < a.rows(); i0 += block) {
    const Eigen::Index bi = std::min(block, a.rows() - i0);
    Matrix g = a.middleRows(i0, bi) * b.transpose();
    for (Eigen::Index i = 0; i < bi; ++i) {
      for (Eigen::Index j = 0; j < b.rows(); ++j) {
        if (same && i0 + i == j) continue;
        double d2 = std::max(0.0, na[i0 + i] + nb[j] - 2.0 * g(i, j));
        total += std::exp(-gamma * d2);
      }
    }
  }
  return total;
}

}  // namespace

MmdResult mmd_detail(const Matrix& x_in, const Matrix& y_in, const MmdOptions& opt) {
  if (x_in.cols() != y_in.cols()) {
    throw ShapeError("mmd: sample widths differ (" + std::to_string(x_in.cols()) + " vs " +
                     std::to_string(y_in.cols()) + ")");
  }
  if (x_in.rows() < 2 || y_in.rows() < 2) throw ShapeError("mmd: each sample needs at least 2 rows");
  // Canonical argument order makes mmd(X, Y) and mmd(Y, X) bit-identical.
  const bool swap = y_in.rows() != x_in.rows()
                        ? y_in.rows() < x_in.rows()
                        : std::lexicographical_compare(y_in.data(), y_in.data() + y_in.size(), x_in.data(),
                                                       x_in.data() + x_in.size());
  const Matrix& first = swap ? y_in : x_in;
  const Matrix& second = swap ? x_in : y_in;
  Rng rng(derive_seed(opt.seed, "mmd"));
  Matrix x = subsample_rows(first, opt.max_samples, rng);
  Matrix y = subsample_rows(second, opt.max_samples, rng);

  MmdResult r;
  if (opt.bandwidth) {
    r.bandwidth = *opt.bandwidth;
  } else {
    Matrix pooled(x.rows() + y.rows(), x.cols());
    pooled << x, y;
    Rng mrng(derive_seed(opt.seed, "mmd-median"));
    r.bandwidth = median_pairwise_distance(subsample_rows(pooled, opt.median_samples, mrng));
  }
  if (!(r.bandwidth > 0.0) || !std::isfinite(r.bandwidth)) {
    throw BandwidthError("mmd: kernel bandwidth must be positive and finite (got " + csv::format_double(r.bandwidth) +
                         ")");
  }
  const double gamma = 1.0 / (2.0 * r.bandwidth * r.bandwidth);
  const double m = static_cast<double>(x.rows());
  const double n = static_cast<double>(y.rows());
  const double kxx = kernel_sum(x, x, gamma, true) / (m * (m - 1.0));
  const double kyy = kernel_sum(y, y, gamma, true) / (n * (n - 1.0));
  const double kxy = kernel_sum(x, y, gamma, false) / (m * n);
  r.mmd2 = kxx + kyy - 2.0 * kxy;
  r.value = std::sqrt(std::max(0.0, r.mmd2));
  return r;
}

double mmd(const Matrix& x, const Matrix& y, const MmdOptions& opt) { return mmd_detail(x, y, opt).value; }

// ---- embeddings ----------------------------------------------------------------------------

std::string embeddings_csv(const TransferModel& model, const Matrix& source, const std::vector<int>& source_labels,
                           const std::vector<PairSample>& pairs, const Matrix& joint) {
  if (static_cast<std::size_t>(source.rows()) != source_labels.size()) {
    throw ShapeError("export_embeddings: source rows and labels differ in count");
  }
  if (static_cast<std::size_t>(joint.rows()) != pairs.size()) {
    throw ShapeError("export_embeddings: joint rows and pairs differ in count");
  }
  const std::size_t d = model.config.d_p;
  std::ostringstream os;
  os << "sample_id,domain,label";
  for (std::size_t j = 0; j < d; ++j) os << ",e_" << j;
  os << '\n';
  auto emit = [&os](const std::string& id, const char* domain, int label, const Eigen::RowVectorXd& row) {
    os << id << ',' << domain << ',' << label;
    for (Eigen::Index j = 0; j < row.size(); ++j) os << ',' << csv::format_double(row[j]);
    os << '\n';
  };
  if (source.rows() > 0) {
    Matrix fs = model.source_features(source);
    for (Eigen::Index i = 0; i < fs.rows(); ++i) {
      emit("s" + std::to_string(i), "source", source_labels[static_cast<std::size_t>(i)], fs.row(i));
    }
  }
  if (joint.rows() > 0) {
    Matrix ft = model.target_features(joint);
    for (Eigen::Index i = 0; i < ft.rows(); ++i) {
      const auto& p = pairs[static_cast<std::size_t>(i)];
      emit(p.deposit_id + ":" + p.withdrawal_id, "target", p.label, ft.row(i));
    }
  }
  return os.str();
}

void export_embeddings(const TransferModel& model, const Matrix& source, const std::vector<int>& source_labels,
                       const std::vector<PairSample>& pairs, const Matrix& joint, const std::filesystem::path& path) {
  csv::write_file(path, embeddings_csv(model, source, source_labels, pairs, joint));
}

}  // namespace stealthlink
