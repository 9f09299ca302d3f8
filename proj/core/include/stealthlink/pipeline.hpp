#pragma once

#include <memory>
#include <string>

#include "stealthlink/config.hpp"
#include "stealthlink/data.hpp"
#include "stealthlink/mixfusion.hpp"
#include "stealthlink/protocols.hpp"
#include "stealthlink/transfer.hpp"

namespace stealthlink {

// Synthetic corpus from the config, or the configured files.
SyntheticCorpus load_run_corpus(const RunConfig& cfg);

// Corpus plus a warmed featurizer and the unlabeled target pool.
// The corpus lives on the heap so the featurizer's graph reference survives moves.
struct PreparedData {
  std::unique_ptr<SyntheticCorpus> corpus;
  std::unique_ptr<PairFeaturizer> featurizer;
  Matrix target_pool;  // joint representations of every corpus pair (labels unused)
};
PreparedData prepare_data(const RunConfig& cfg);

// Untrained model: fresh weights, optional encoder pretraining, fitted
// adapter and target normalizer. The transfer and no-transfer arms both start
// from this state.
TransferModel prepare_model(const RunConfig& cfg, const SourceDataset& source, const Matrix& target_pool,
                            std::vector<double>* pretrain_losses = nullptr);

// Runs train_transfer with the configured options and derived seed.
TrainLog run_transfer(const RunConfig& cfg, TransferModel& model, const SourceDataset& source,
                      const Matrix& target_pool);

ProtocolSetup make_protocol_setup(const RunConfig& cfg, const TransferModel& model, const PairFeaturizer& featurizer,
                                  std::size_t jobs);

}  // namespace stealthlink
