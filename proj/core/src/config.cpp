#include "stealthlink/config.hpp"

#include <nlohmann/json.hpp>
#include <set>

#include "stealthlink/csv.hpp"
#include "stealthlink/digest.hpp"
#include "stealthlink/error.hpp"

namespace stealthlink {

using json = nlohmann::ordered_json;

namespace {

std::string agg_name(Aggregation a) { return a == Aggregation::mean ? "mean" : "sum"; }
std::string readout_name(Readout r) { return r == Readout::center ? "center" : "mean"; }
std::string init_name(GnnInit i) { return i == GnnInit::identity ? "identity" : "glorot"; }

json sgd_json(const nn::SgdOptions& s) {
  return {{"learning_rate", s.learning_rate}, {"momentum", s.momentum}, {"weight_decay", s.weight_decay}};
}

// Reads a JSON object while rejecting keys nobody asked for.
class Reader {
 public:
  Reader(const json& j, std::string path, const std::string& source) : j_(j), path_(std::move(path)), source_(source) {
    if (!j_.is_object()) fail("expected an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw SchemaError(source_ + ": unknown key '" + path_ + it.key() + "'");
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      fail(std::string("bad value for '") + key + "': " + e.what());
    }
  }

  template <typename Enum>
  void get_enum(const char* key, Enum& out, Enum (*parse)(const std::string&)) {
    std::string s;
    bool present = j_.contains(key);
    get(key, s);
    if (!present) return;
    try {
      out = parse(s);
    } catch (const Error& e) {
      fail(e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string sub(const char* key) const { return path_ + key + "."; }
  const std::string& source() const { return source_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw SchemaError(source_ + ": " + (path_.empty() ? std::string() : path_ + ": ") + what);
  }

 private:
  const json& j_;
  std::string path_;
  const std::string& source_;
  std::set<std::string> seen_;
};

void read_sgd(Reader& parent, const char* key, nn::SgdOptions& s) {
  const json* j = parent.child(key);
  if (!j) return;
  Reader r(*j, parent.sub(key), parent.source());
  r.get("learning_rate", s.learning_rate);
  r.get("momentum", s.momentum);
  r.get("weight_decay", s.weight_decay);
}

Aggregation parse_agg(const std::string& s) {
  if (s == "mean") return Aggregation::mean;
  if (s == "sum") return Aggregation::sum;
  throw UsageError("unknown aggregation '" + s + "'");
}
Readout parse_readout(const std::string& s) {
  if (s == "center") return Readout::center;
  if (s == "mean") return Readout::mean;
  throw UsageError("unknown readout '" + s + "'");
}
GnnInit parse_init(const std::string& s) {
  if (s == "identity") return GnnInit::identity;
  if (s == "glorot") return GnnInit::glorot;
  throw UsageError("unknown gnn init '" + s + "'");
}

void check_sgd(const nn::SgdOptions& s, const char* what) {
  if (!(s.learning_rate > 0.0) || !(s.momentum >= 0.0 && s.momentum < 1.0) || !(s.weight_decay >= 0.0)) {
    throw ArgumentError(std::string(what) + ": learning rate must be > 0, weight decay >= 0, momentum in [0, 1)");
  }
}

}  // namespace

void RunConfig::validate() const {
  if (data.synthetic) data.synth.validate();
  if (!data.synthetic && (data.source_path.empty() || data.accounts_path.empty() || data.edges_path.empty() ||
                          data.pairs_path.empty())) {
    throw ArgumentError("config: file-backed data needs source, accounts, edges and pairs paths");
  }
  model.validate();
  if (model.d_p != 2 * mixfusion.d_c) {
    throw ArgumentError("config: d_P (" + std::to_string(model.d_p) + ") must equal 2 * d_C (" +
                        std::to_string(2 * mixfusion.d_c) + ")");
  }
  if (data.synthetic && model.d_s != data.synth.source_dim()) {
    throw ArgumentError("config: model.d_s (" + std::to_string(model.d_s) + ") must match the synthetic source width (" +
                        std::to_string(data.synth.source_dim()) + ")");
  }
  if (mixfusion.layers == 0 || mixfusion.cap == 0 || mixfusion.d_c == 0) {
    throw ArgumentError("config: mixfusion layers, cap and d_c must be positive");
  }
  check_sgd(pretrain_sgd, "pretrain");
  check_sgd(transfer.sgd, "transfer");
  check_sgd(finetune.sgd, "finetune");
  if (transfer.batch_size == 0 || finetune.batch_size == 0) throw ArgumentError("config: batch sizes must be positive");
  if (protocol.trials == 0) throw ArgumentError("config: protocol trials must be positive");
  if (protocol.folds < 2) throw ArgumentError("config: protocol folds must be at least 2");
  for (double e : protocol.etas) {
    if (!(e >= 0.0 && e <= 0.5)) throw ArgumentError("config: noise rates must lie in [0, 0.5]");
  }
  for (std::size_t k : protocol.ratios) {
    if (k == 0) throw ArgumentError("config: imbalance ratios must be >= 1");
  }
  if (!(classifier.threshold > 0.0 && classifier.threshold < 1.0)) {
    throw ArgumentError("config: classifier threshold must lie in (0, 1)");
  }
}

bool RunConfig::operator==(const RunConfig& o) const { return to_json(*this) == to_json(o); }

std::string to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  const auto& s = c.data.synth;
  j["data"] = {{"synthetic", c.data.synthetic},
               {"synth",
                {{"n_users", s.n_users},
                 {"n_decoys", s.n_decoys},
                 {"pools", s.pools},
                 {"hops", s.hops},
                 {"deposits_per_user_max", s.deposits_per_user_max},
                 {"profile_dim", s.profile_dim},
                 {"source_context_dim", s.source_context_dim},
                 {"source_samples", s.source_samples},
                 {"helpers_per_account", s.helpers_per_account},
                 {"malicious_fraction", s.malicious_fraction},
                 {"echo_noise", s.echo_noise},
                 {"helper_noise", s.helper_noise},
                 {"fingerprint_fraction", s.fingerprint_fraction}}},
               {"source_path", c.data.source_path},
               {"accounts_path", c.data.accounts_path},
               {"edges_path", c.data.edges_path},
               {"pairs_path", c.data.pairs_path}};
  const auto& m = c.mixfusion;
  j["mixfusion"] = {{"k", m.k},
                    {"layers", m.layers},
                    {"cap", m.cap},
                    {"d_c", m.d_c},
                    {"aggregation", agg_name(m.aggregation)},
                    {"readout", readout_name(m.readout)},
                    {"init", init_name(m.init)},
                    {"use_bias", m.use_bias}};
  const auto& md = c.model;
  j["model"] = {{"d_s", md.d_s},
                {"d_p", md.d_p},
                {"encoder", to_string(md.encoder)},
                {"encoder_layers", md.encoder_layers},
                {"d_model", md.d_model},
                {"heads", md.heads},
                {"ff_dim", md.ff_dim},
                {"encoder_hidden", md.encoder_hidden},
                {"adapter", to_string(md.adapter)},
                {"generator", to_string(md.generator)},
                {"generator_hidden", md.generator_hidden},
                {"generator_layers", md.generator_layers},
                {"classifier_hidden", md.classifier_hidden},
                {"lambda", md.lambda},
                {"target_norm", to_string(md.target_norm)}};
  j["pretrain"] = {{"epochs", c.pretrain_epochs}, {"sgd", sgd_json(c.pretrain_sgd)}};
  const auto& t = c.transfer;
  j["transfer"] = {{"strategy", to_string(t.strategy)},
                   {"classifier_step", to_string(t.classifier_step)},
                   {"epochs", t.epochs},
                   {"warmup_epochs", t.warmup_epochs},
                   {"batch_size", t.batch_size},
                   {"generator_steps", t.generator_steps},
                   {"train_adapter", t.train_adapter},
                   {"sgd", sgd_json(t.sgd)}};
  j["classifier"] = {{"arch", to_string(c.classifier.arch)},
                     {"hidden", c.classifier.hidden},
                     {"threshold", c.classifier.threshold}};
  j["finetune"] = {{"epochs", c.finetune.epochs}, {"batch_size", c.finetune.batch_size}, {"sgd", sgd_json(c.finetune.sgd)}};
  const auto& p = c.protocol;
  j["protocol"] = {{"few_shot", p.few_shot},
                   {"etas", p.etas},
                   {"ratios", p.ratios},
                   {"trials", p.trials},
                   {"folds", p.folds},
                   {"holdout_fraction", p.holdout_fraction}};
  return j.dump(2) + "\n";
}

RunConfig config_from_json(const std::string& text, const std::string& source_name) {
  json j;
  try {
    j = json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(source_name + ": " + e.what());
  }
  RunConfig c;
  Reader r(j, "", source_name);
  r.get("seed", c.seed);
  if (const json* d = r.child("data")) {
    Reader rd(*d, "data.", source_name);
    rd.get("synthetic", c.data.synthetic);
    if (const json* s = rd.child("synth")) {
      Reader rs(*s, "data.synth.", source_name);
      auto& y = c.data.synth;
      rs.get("n_users", y.n_users);
      rs.get("n_decoys", y.n_decoys);
      rs.get("pools", y.pools);
      rs.get("hops", y.hops);
      rs.get("deposits_per_user_max", y.deposits_per_user_max);
      rs.get("profile_dim", y.profile_dim);
      rs.get("source_context_dim", y.source_context_dim);
      rs.get("source_samples", y.source_samples);
      rs.get("helpers_per_account", y.helpers_per_account);
      rs.get("malicious_fraction", y.malicious_fraction);
      rs.get("echo_noise", y.echo_noise);
      rs.get("helper_noise", y.helper_noise);
      rs.get("fingerprint_fraction", y.fingerprint_fraction);
    }
    rd.get("source_path", c.data.source_path);
    rd.get("accounts_path", c.data.accounts_path);
    rd.get("edges_path", c.data.edges_path);
    rd.get("pairs_path", c.data.pairs_path);
  }
  if (const json* m = r.child("mixfusion")) {
    Reader rm(*m, "mixfusion.", source_name);
    rm.get("k", c.mixfusion.k);
    rm.get("layers", c.mixfusion.layers);
    rm.get("cap", c.mixfusion.cap);
    rm.get("d_c", c.mixfusion.d_c);
    rm.get_enum("aggregation", c.mixfusion.aggregation, &parse_agg);
    rm.get_enum("readout", c.mixfusion.readout, &parse_readout);
    rm.get_enum("init", c.mixfusion.init, &parse_init);
    rm.get("use_bias", c.mixfusion.use_bias);
  }
  if (const json* m = r.child("model")) {
    Reader rm(*m, "model.", source_name);
    auto& md = c.model;
    rm.get("d_s", md.d_s);
    rm.get("d_p", md.d_p);
    rm.get_enum("encoder", md.encoder, &parse_encoder_arch);
    rm.get("encoder_layers", md.encoder_layers);
    rm.get("d_model", md.d_model);
    rm.get("heads", md.heads);
    rm.get("ff_dim", md.ff_dim);
    rm.get("encoder_hidden", md.encoder_hidden);
    rm.get_enum("adapter", md.adapter, &parse_adapter_kind);
    rm.get_enum("generator", md.generator, &parse_generator_arch);
    rm.get("generator_hidden", md.generator_hidden);
    rm.get("generator_layers", md.generator_layers);
    rm.get("classifier_hidden", md.classifier_hidden);
    rm.get("lambda", md.lambda);
    rm.get_enum("target_norm", md.target_norm, &parse_target_norm);
  }
  if (const json* p = r.child("pretrain")) {
    Reader rp(*p, "pretrain.", source_name);
    rp.get("epochs", c.pretrain_epochs);
    read_sgd(rp, "sgd", c.pretrain_sgd);
  }
  if (const json* t = r.child("transfer")) {
    Reader rt(*t, "transfer.", source_name);
    rt.get_enum("strategy", c.transfer.strategy, &parse_transfer_strategy);
    rt.get_enum("classifier_step", c.transfer.classifier_step, &parse_classifier_step);
    rt.get("epochs", c.transfer.epochs);
    rt.get("warmup_epochs", c.transfer.warmup_epochs);
    rt.get("batch_size", c.transfer.batch_size);
    rt.get("generator_steps", c.transfer.generator_steps);
    rt.get("train_adapter", c.transfer.train_adapter);
    read_sgd(rt, "sgd", c.transfer.sgd);
  }
  if (const json* k = r.child("classifier")) {
    Reader rk(*k, "classifier.", source_name);
    rk.get_enum("arch", c.classifier.arch, &parse_classifier_arch);
    rk.get("hidden", c.classifier.hidden);
    rk.get("threshold", c.classifier.threshold);
  }
  if (const json* f = r.child("finetune")) {
    Reader rf(*f, "finetune.", source_name);
    rf.get("epochs", c.finetune.epochs);
    rf.get("batch_size", c.finetune.batch_size);
    read_sgd(rf, "sgd", c.finetune.sgd);
  }
  if (const json* p = r.child("protocol")) {
    Reader rp(*p, "protocol.", source_name);
    rp.get("few_shot", c.protocol.few_shot);
    rp.get("etas", c.protocol.etas);
    rp.get("ratios", c.protocol.ratios);
    rp.get("trials", c.protocol.trials);
    rp.get("folds", c.protocol.folds);
    rp.get("holdout_fraction", c.protocol.holdout_fraction);
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  RunConfig c = config_from_json(csv::read_file(path), path.string());
  c.validate();
  return c;
}

void save_config(const std::filesystem::path& path, const RunConfig& cfg) { csv::write_file(path, to_json(cfg)); }

std::string config_digest(const RunConfig& cfg) { return sha256_hex(to_json(cfg)); }

}  // namespace stealthlink
