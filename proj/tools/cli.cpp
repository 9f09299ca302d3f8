#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "stealthlink/baselines.hpp"
#include "stealthlink/checkpoint.hpp"
#include "stealthlink/csv.hpp"
#include "stealthlink/digest.hpp"
#include "stealthlink/error.hpp"
#include "stealthlink/evaluation.hpp"
#include "stealthlink/pipeline.hpp"
#include "stealthlink/rng.hpp"

namespace stealthlink::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
  std::size_t jobs = 1;
  std::string run_dir;
};

RunConfig effective_config(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_config(c.config_path);
  if (c.seed_opt != nullptr && c.seed_opt->count() > 0) cfg.seed = c.seed;
  cfg.validate();
  return cfg;
}

// Collects the files a command writes under the run directory and finishes
// with <command>.manifest.txt listing each artifact's digest.
class RunWriter {
 public:
  RunWriter(fs::path dir, std::string command, const RunConfig& cfg)
      : dir_(std::move(dir)), command_(std::move(command)), seed_(cfg.seed), digest_(config_digest(cfg)) {
    if (dir_.empty()) throw UsageError(command_ + ": --run-dir is required");
    csv::write_file(dir_ / "config.json", to_json(cfg));
    record("config.json");
  }

  const std::string& digest() const { return digest_; }
  const fs::path& dir() const { return dir_; }

  void text(const fs::path& rel, const std::string& body) {
    csv::write_file(dir_ / rel, body);
    record(rel);
  }

  // CSV readers here skip '#' lines, so the digest rides along as a comment.
  void csv(const fs::path& rel, const std::string& body) { text(rel, stamp() + body); }

  // A file some library call already wrote.
  void adopt(const fs::path& rel, bool stamp_csv) {
    if (stamp_csv) {
      std::string body = csv::read_file(dir_ / rel);
      csv::write_file(dir_ / rel, stamp() + body);
    }
    record(rel);
  }

  void finish() {
    std::ostringstream os;
    os << "command=" << command_ << "\n";
    os << "seed=" << seed_ << "\n";
    os << "config_digest=" << digest_ << "\n";
    for (const auto& [rel, sha] : artifacts_) os << "artifact=" << rel << ',' << sha << "\n";
    csv::write_file(dir_ / (command_ + ".manifest.txt"), os.str());
  }

 private:
  std::string stamp() const { return "# config_digest=" + digest_ + "\n"; }

  void record(const fs::path& rel) { artifacts_[rel.generic_string()] = sha256_hex(csv::read_file(dir_ / rel)); }

  fs::path dir_;
  std::string command_;
  std::uint64_t seed_;
  std::string digest_;
  std::map<std::string, std::string> artifacts_;
};

std::string fmt_summary(const Summary& s) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << s.mean << " +/- " << s.std;
  return os.str();
}

std::string report_row(const EvalReport& r) {
  std::ostringstream os;
  os << std::left << std::setw(12) << r.setting << " acc " << fmt_summary(r.accuracy()) << "  recall "
     << fmt_summary(r.recall()) << "  f1 " << fmt_summary(r.f1());
  return os.str();
}

// "ratio=1:5" -> "ratio1-5", usable as a file name on every platform.
std::string file_tag(const std::string& setting) {
  std::string out;
  for (char c : setting) {
    if (c == '=') continue;
    out.push_back(c == ':' ? '-' : c);
  }
  return out;
}

void write_report(RunWriter& w, const EvalReport& r) {
  const fs::path base = fs::path("reports") / r.protocol / (r.strategy + "_" + file_tag(r.setting));
  w.text(base.string() + ".json", r.to_json() + "\n");
  w.csv(base.string() + ".csv", r.trials_csv());
}

fs::path checkpoint_dir(const std::string& flag, const std::string& run_dir) {
  if (!flag.empty()) return flag;
  if (run_dir.empty()) throw UsageError("pass --checkpoint or --run-dir");
  return fs::path(run_dir) / "checkpoint";
}

TransferModel load_model(const fs::path& dir, const RunConfig& cfg, std::ostream& err) {
  if (!fs::exists(dir / "manifest.txt")) {
    throw IoError("no checkpoint at " + dir.string() + "; run `stealthlink pretrain` with the same --run-dir first");
  }
  LoadedCheckpoint ck = load_checkpoint(dir);
  if (ck.model.config.d_p != 2 * cfg.mixfusion.d_c) {
    throw SchemaError("checkpoint d_P = " + std::to_string(ck.model.config.d_p) + " does not match 2*d_C = " +
                      std::to_string(2 * cfg.mixfusion.d_c) + " of the config");
  }
  auto it = ck.manifest.find("config_digest");
  if (it != ck.manifest.end() && it->second != config_digest(cfg)) {
    err << "warning: checkpoint was trained under config " << it->second << "\n";
  }
  return std::move(ck.model);
}

// ---- commands ---------------------------------------------------------------------------

int cmd_synth(const Common& c, std::ostream& out) {
  RunConfig cfg = effective_config(c);
  if (!cfg.data.synthetic) throw UsageError("synth needs a config with data.synthetic = true");
  RunWriter w(c.run_dir, "synth", cfg);
  SyntheticCorpus corpus = load_run_corpus(cfg);
  write_corpus(w.dir() / "corpus", corpus);
  for (const char* f : {"source.csv", "accounts.csv", "edges.csv", "pairs.csv"}) w.adopt(fs::path("corpus") / f, true);
  w.finish();
  out << "source samples " << corpus.source.samples.size() << " (" << corpus.source.count_label(1)
      << " malicious)\naccounts " << corpus.graph.num_accounts() << ", edges " << corpus.graph.edges().size()
      << "\npairs " << corpus.pairs.size() << " (" << count_label(corpus.pairs, 1) << " associated)\n";
  return 0;
}

int cmd_pretrain(const Common& c, std::ostream& out) {
  RunConfig cfg = effective_config(c);
  RunWriter w(c.run_dir, "pretrain", cfg);
  PreparedData d = prepare_data(cfg);
  std::vector<double> pre;
  TransferModel model = prepare_model(cfg, d.corpus->source, d.target_pool, &pre);
  TrainLog log = run_transfer(cfg, model, d.corpus->source, d.target_pool);

  save_checkpoint(w.dir() / "checkpoint", model, {{"config_digest", w.digest()}});
  w.adopt("checkpoint/manifest.txt", false);
  w.adopt("checkpoint/tensors.bin", false);
  w.csv("train_log.csv", log.to_csv());
  if (!pre.empty()) {
    std::ostringstream os;
    os << "epoch,loss\n";
    for (std::size_t i = 0; i < pre.size(); ++i) os << i + 1 << ',' << csv::format_double(pre[i]) << '\n';
    w.csv("pretrain_log.csv", os.str());
  }
  w.finish();

  out << "initial discrepancy " << csv::format_double(log.initial_discrepancy) << ", source CE "
      << csv::format_double(log.initial_source_ce) << "\n";
  if (!log.epochs.empty()) {
    const EpochRecord& last = log.epochs.back();
    out << "epoch " << last.epoch << ": discrepancy " << csv::format_double(last.target_discrepancy)
        << ", source CE " << csv::format_double(last.source_ce) << "\n";
  }
  out << "checkpoint " << (w.dir() / "checkpoint").string() << "\n";
  return 0;
}

struct EvalFlags {
  std::string protocol;
  std::string strategy = "mcd";
  std::string checkpoint;
  std::vector<std::string> n;
  std::vector<double> eta;
  std::vector<std::string> ratio;
};

std::size_t parse_n(const std::string& s) {
  if (s == "ALL" || s == "all" || s == "0") return 0;
  std::size_t v = 0;
  for (char ch : s) {
    if (ch < '0' || ch > '9') throw UsageError("--n expects a positive integer or ALL, got '" + s + "'");
    v = v * 10 + static_cast<std::size_t>(ch - '0');
  }
  if (s.empty()) throw UsageError("--n expects a positive integer or ALL");
  return v;
}

int cmd_finetune_eval(const Common& c, const EvalFlags& f, std::ostream& out, std::ostream& err) {
  if (f.protocol != "few_shot" && f.protocol != "noise" && f.protocol != "imbalance") {
    throw UsageError("unknown protocol '" + f.protocol + "' (expected few_shot, noise or imbalance)");
  }
  const TransferStrategy strategy = parse_transfer_strategy(f.strategy);
  RunConfig cfg = effective_config(c);
  RunWriter w(c.run_dir, "finetune-eval", cfg);
  PreparedData d = prepare_data(cfg);
  TransferModel model = strategy == TransferStrategy::none
                            ? prepare_model(cfg, d.corpus->source, d.target_pool)
                            : load_model(checkpoint_dir(f.checkpoint, c.run_dir), cfg, err);
  ProtocolSetup setup = make_protocol_setup(cfg, model, *d.featurizer, c.jobs);
  setup.strategy = to_string(strategy);
  const auto& pairs = d.corpus->pairs;

  out << f.protocol << " (" << setup.strategy << ")\n";
  if (f.protocol == "few_shot") {
    std::vector<std::size_t> ns = cfg.protocol.few_shot;
    if (!f.n.empty()) {
      ns.clear();
      for (const auto& s : f.n) ns.push_back(parse_n(s));
    }
    for (std::size_t n : ns) {
      EvalReport r = run_few_shot(pairs, setup, n);
      write_report(w, r);
      out << report_row(r) << "\n";
    }
  } else if (f.protocol == "noise") {
    std::vector<double> etas = f.eta.empty() ? cfg.protocol.etas : f.eta;
    EvalReport clean = run_noise(pairs, setup, 0.0);
    write_report(w, clean);
    out << report_row(clean) << "\n";
    nlohmann::ordered_json summary;
    summary["strategy"] = setup.strategy;
    summary["config_digest"] = w.digest();
    summary["clean_f1"] = clean.f1().mean;
    summary["rows"] = nlohmann::ordered_json::array();
    for (double eta : etas) {
      EvalReport r = run_noise(pairs, setup, eta);
      write_report(w, r);
      const double deg = degradation_rate(clean.f1().mean, r.f1().mean);
      summary["rows"].push_back({{"eta", eta}, {"f1", r.f1().mean}, {"degradation_rate", deg}});
      out << report_row(r) << "  degradation " << std::fixed << std::setprecision(4) << deg << "\n";
    }
    w.text(fs::path("reports") / "noise" / (setup.strategy + "_summary.json"), summary.dump(2) + "\n");
  } else {
    std::vector<std::size_t> ks = cfg.protocol.ratios;
    if (!f.ratio.empty()) {
      ks.clear();
      for (const auto& s : f.ratio) ks.push_back(parse_ratio(s));
    }
    for (std::size_t k : ks) {
      EvalReport r = run_imbalance(pairs, setup, k);
      write_report(w, r);
      out << report_row(r) << "\n";
    }
  }
  w.finish();
  return 0;
}

// Numeric columns of a CSV; identifier and label columns are skipped by name.
Matrix load_numeric(const std::string& path) {
  static const std::set<std::string> skip{"id", "role", "label", "class", "sample_id", "domain", "deposit", "withdrawal"};
  csv::Table t = csv::read(path);
  std::vector<std::size_t> cols;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (!skip.count(t.header[i])) cols.push_back(i);
  }
  if (cols.empty()) throw SchemaError(path + ": no numeric columns");
  Matrix m(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (row.fields.size() != t.header.size()) {
      throw ParseError(path, row.line, "expected " + std::to_string(t.header.size()) + " fields");
    }
    for (std::size_t j = 0; j < cols.size(); ++j) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = csv::parse_double(row.fields[cols[j]], path, row.line);
    }
  }
  return m;
}

struct MmdFlags {
  std::string x, y;
  bool pca_align = false;
  double bandwidth = 0.0;
  CLI::Option* bandwidth_opt = nullptr;
  std::size_t max_samples = 0;
};

int cmd_mmd(const Common& c, const MmdFlags& f, std::ostream& out, std::ostream& err) {
  Matrix x = load_numeric(f.x);
  Matrix y = load_numeric(f.y);
  if (x.cols() != y.cols()) {
    if (!f.pca_align) {
      throw SchemaError("feature widths differ (" + std::to_string(x.cols()) + " vs " + std::to_string(y.cols()) +
                        "); pass --pca-align to reduce the wider set");
    }
    Matrix& wide = x.cols() > y.cols() ? x : y;
    const auto d = static_cast<std::size_t>(std::min(x.cols(), y.cols()));
    Pca p = fit_pca(wide, d);
    wide = (wide.rowwise() - p.mean.transpose()) * p.components;
    err << "pca-align: reduced " << (&wide == &x ? f.x : f.y) << " to " << d << " dimensions\n";
  }
  MmdOptions opt;
  if (f.bandwidth_opt->count() > 0) opt.bandwidth = f.bandwidth;
  opt.max_samples = f.max_samples;
  opt.seed = c.seed_opt->count() > 0 ? c.seed : RunConfig{}.seed;
  MmdResult r = mmd_detail(x, y, opt);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.5e", r.value);
  out << buf << "\n";
  err << "bandwidth " << csv::format_double(r.bandwidth) << ", unbiased mmd^2 " << csv::format_double(r.mmd2) << "\n";
  if (!c.run_dir.empty()) {
    nlohmann::ordered_json j;
    j["x"] = f.x;
    j["y"] = f.y;
    j["pca_align"] = f.pca_align;
    j["seed"] = opt.seed;
    j["max_samples"] = opt.max_samples;
    j["bandwidth"] = r.bandwidth;
    j["mmd2"] = r.mmd2;
    j["mmd"] = r.value;
    csv::write_file(fs::path(c.run_dir) / "mmd.json", j.dump(2) + "\n");
  }
  return 0;
}

std::string metrics_json(const Metrics& m, const std::string& digest, std::size_t matches) {
  nlohmann::ordered_json j;
  j["config_digest"] = digest;
  j["matches"] = matches;
  j["accuracy"] = m.accuracy;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  j["tp"] = m.tp;
  j["fp"] = m.fp;
  j["tn"] = m.tn;
  j["fn"] = m.fn;
  return j.dump(2) + "\n";
}

int cmd_baseline_gf(const Common& c, std::int64_t window, bool with_cc, std::ostream& out) {
  RunConfig cfg = effective_config(c);
  RunWriter w(c.run_dir, "baseline-gf", cfg);
  SyntheticCorpus corpus = load_run_corpus(cfg);
  auto gf = gas_fingerprint_match(corpus.graph);
  Metrics m = score_matches(gf, corpus.pairs);
  w.csv("baselines/gf_matches.csv", matches_csv(gf));
  w.text("baselines/gf_metrics.json", metrics_json(m, w.digest(), gf.size()));
  out << "gas fingerprint: " << gf.size() << " matches, precision " << csv::format_double(m.precision) << ", recall "
      << csv::format_double(m.recall) << ", f1 " << csv::format_double(m.f1) << "\n";
  if (with_cc) {
    auto cc = denomination_match(corpus.graph, window);
    Metrics mc = score_matches(cc, corpus.pairs);
    w.csv("baselines/cc_matches.csv", matches_csv(cc));
    w.text("baselines/cc_metrics.json", metrics_json(mc, w.digest(), cc.size()));
    out << "denomination: " << cc.size() << " matches, precision " << csv::format_double(mc.precision)
        << ", recall " << csv::format_double(mc.recall) << ", f1 " << csv::format_double(mc.f1) << "\n";
  }
  w.finish();
  return 0;
}

int cmd_export_embeddings(const Common& c, const std::string& checkpoint, std::size_t max_source, std::ostream& out,
                          std::ostream& err) {
  RunConfig cfg = effective_config(c);
  RunWriter w(c.run_dir, "export-embeddings", cfg);
  PreparedData d = prepare_data(cfg);
  TransferModel model = load_model(checkpoint_dir(checkpoint, c.run_dir), cfg, err);
  Matrix x = d.corpus->source.feature_matrix();
  std::vector<int> y = d.corpus->source.labels();
  if (max_source > 0 && max_source < y.size()) {
    x.conservativeResize(static_cast<Eigen::Index>(max_source), Eigen::NoChange);
    y.resize(max_source);
  }
  w.csv("embeddings.csv", embeddings_csv(model, x, y, d.corpus->pairs, d.target_pool));
  w.finish();
  out << "embeddings: " << y.size() << " source rows, " << d.corpus->pairs.size() << " target rows\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"stealthlink: cross-task transfer for mixer deposit/withdrawal linking", "stealthlink"};
  app.require_subcommand(1);
  Common common;

  auto add_common = [&](CLI::App* sub, bool run_dir_required) {
    sub->add_option("--config", common.config_path, "run configuration (JSON); defaults when omitted")
        ->check(CLI::ExistingFile);
    common.seed_opt = nullptr;
    auto* seed = sub->add_option("--seed", common.seed, "master seed (overrides the config)");
    auto* dir = sub->add_option("--run-dir", common.run_dir, "directory receiving every output of the command");
    if (run_dir_required) dir->required();
    return seed;
  };

  std::map<CLI::App*, CLI::Option*> seeds;
  auto* synth = app.add_subcommand("synth", "generate the synthetic corpus");
  seeds[synth] = add_common(synth, true);

  auto* pretrain = app.add_subcommand("pretrain", "fit the adapter and run transfer training; writes a checkpoint");
  seeds[pretrain] = add_common(pretrain, true);

  EvalFlags ev;
  auto* fe = app.add_subcommand("finetune-eval", "fine-tune association classifiers under an evaluation protocol");
  seeds[fe] = add_common(fe, true);
  fe->add_option("--protocol", ev.protocol, "few_shot | noise | imbalance")->required();
  fe->add_option("--strategy", ev.strategy, "mcd (use the checkpoint) | none (untrained generator)")
      ->capture_default_str();
  fe->add_option("--checkpoint", ev.checkpoint, "checkpoint directory (default <run-dir>/checkpoint)");
  fe->add_option("--n", ev.n, "few-shot sizes, e.g. --n 1 3 10 ALL (default from config)");
  fe->add_option("--eta", ev.eta, "noise rates (default from config)");
  fe->add_option("--ratio", ev.ratio, "imbalance ratios 1:k (default from config)");
  fe->add_option("--jobs", common.jobs, "parallel trials")->capture_default_str()->check(CLI::PositiveNumber);

  MmdFlags mf;
  auto* mm = app.add_subcommand("mmd", "maximum mean discrepancy between two CSV feature sets");
  seeds[mm] = add_common(mm, false);
  mm->add_option("x", mf.x, "first CSV")->required()->check(CLI::ExistingFile);
  mm->add_option("y", mf.y, "second CSV")->required()->check(CLI::ExistingFile);
  mm->add_flag("--pca-align", mf.pca_align, "PCA-reduce the wider set to the narrower width");
  mf.bandwidth_opt = mm->add_option("--bandwidth", mf.bandwidth, "RBF sigma (default: median heuristic)")
                         ->check(CLI::PositiveNumber);
  mm->add_option("--max-samples", mf.max_samples, "subsample each side to at most this many rows (0 = all)")
      ->capture_default_str();

  std::int64_t window = 86400;
  bool with_cc = false;
  auto* gf = app.add_subcommand("baseline-gf", "gas-fingerprint heuristic over the corpus pairs");
  seeds[gf] = add_common(gf, true);
  gf->add_flag("--with-denomination", with_cc, "also run the simplified denomination rule");
  gf->add_option("--window", window, "denomination rule time window in seconds")->capture_default_str();

  std::string emb_ckpt;
  std::size_t max_source = 0;
  auto* ex = app.add_subcommand("export-embeddings", "write generator outputs for source and target samples");
  seeds[ex] = add_common(ex, true);
  ex->add_option("--checkpoint", emb_ckpt, "checkpoint directory (default <run-dir>/checkpoint)");
  ex->add_option("--max-source", max_source, "cap on exported source rows (0 = all)")->capture_default_str();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();  // program name
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ExitCode::usage);
  }

  try {
    for (auto& [sub, opt] : seeds) {
      if (sub->parsed()) common.seed_opt = opt;
    }
    if (synth->parsed()) return cmd_synth(common, out);
    if (pretrain->parsed()) return cmd_pretrain(common, out);
    if (fe->parsed()) return cmd_finetune_eval(common, ev, out, err);
    if (mm->parsed()) return cmd_mmd(common, mf, out, err);
    if (gf->parsed()) return cmd_baseline_gf(common, window, with_cc, out);
    if (ex->parsed()) return cmd_export_embeddings(common, emb_ckpt, max_source, out, err);
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::divergence);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::data);
  }
  return static_cast<int>(ExitCode::usage);
}

}  // namespace stealthlink::cli
