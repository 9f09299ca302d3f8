#include "stealthlink/pipeline.hpp"

#include "stealthlink/error.hpp"
#include "stealthlink/rng.hpp"

namespace stealthlink {

SyntheticCorpus load_run_corpus(const RunConfig& cfg) {
  if (cfg.data.synthetic) return generate_synthetic_corpus(cfg.data.synth, derive_seed(cfg.seed, "corpus"));
  SyntheticCorpus c;
  c.source = load_source_dataset(cfg.data.source_path, cfg.model.d_s);
  TargetCorpus t = load_target_graph_and_pairs(cfg.data.accounts_path, cfg.data.edges_path, cfg.data.pairs_path);
  c.graph = std::move(t.graph);
  c.pairs = std::move(t.pairs);
  if (count_label(c.pairs, 0) == 0 && count_label(c.pairs, 1) >= 2) {
    auto neg = make_unassociated_negatives(c.pairs, 1, derive_seed(cfg.seed, "negatives"));
    c.pairs.insert(c.pairs.end(), neg.begin(), neg.end());
  }
  return c;
}

PreparedData prepare_data(const RunConfig& cfg) {
  PreparedData d;
  d.corpus = std::make_unique<SyntheticCorpus>(load_run_corpus(cfg));
  d.featurizer = std::make_unique<PairFeaturizer>(d.corpus->graph, cfg.mixfusion, derive_seed(cfg.seed, "mixfusion"));
  d.featurizer->warm();
  d.target_pool = d.featurizer->joint_matrix(d.corpus->pairs);
  return d;
}

TransferModel prepare_model(const RunConfig& cfg, const SourceDataset& source, const Matrix& target_pool,
                            std::vector<double>* pretrain_losses) {
  TransferModel model = make_model(cfg.model, derive_seed(cfg.seed, "model"));
  const Matrix x = source.feature_matrix();
  const std::vector<int> y = source.labels();
  if (cfg.pretrain_epochs > 0) {
    PretrainOptions po;
    po.epochs = cfg.pretrain_epochs;
    po.batch_size = cfg.transfer.batch_size;
    po.sgd = cfg.pretrain_sgd;
    po.seed = derive_seed(cfg.seed, "pretrain");
    auto losses = pretrain_encoder(model.encoder, x, y, po);
    if (pretrain_losses) *pretrain_losses = std::move(losses);
  }
  fit_adapter(model, x);
  Matrix reference = model.adapt(x);
  model.normalizer.fit(target_pool, cfg.model.target_norm, &reference);
  return model;
}

TrainLog run_transfer(const RunConfig& cfg, TransferModel& model, const SourceDataset& source,
                      const Matrix& target_pool) {
  TransferOptions opt = cfg.transfer;
  opt.seed = derive_seed(cfg.seed, "transfer");
  return train_transfer(model, source.feature_matrix(), source.labels(), target_pool, opt);
}

ProtocolSetup make_protocol_setup(const RunConfig& cfg, const TransferModel& model, const PairFeaturizer& featurizer,
                                  std::size_t jobs) {
  ProtocolSetup s;
  s.model = &model;
  s.featurizer = &featurizer;
  s.classifier = cfg.classifier;
  s.finetune = cfg.finetune;
  s.trials = cfg.protocol.trials;
  s.folds = cfg.protocol.folds;
  s.holdout_fraction = cfg.protocol.holdout_fraction;
  s.seed = derive_seed(cfg.seed, "protocol");
  s.jobs = jobs;
  s.config_digest = config_digest(cfg);
  s.strategy = to_string(cfg.transfer.strategy);
  return s;
}

}  // namespace stealthlink
