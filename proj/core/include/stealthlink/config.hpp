#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stealthlink/association.hpp"
#include "stealthlink/data.hpp"
#include "stealthlink/mixfusion.hpp"
#include "stealthlink/transfer.hpp"

namespace stealthlink {

struct DataConfig {
  bool synthetic = true;
  SynthConfig synth;
  // Used when synthetic == false.
  std::string source_path;
  std::string accounts_path;
  std::string edges_path;
  std::string pairs_path;

  bool operator==(const DataConfig&) const = default;
};

struct ProtocolConfig {
  std::vector<std::size_t> few_shot{1, 3, 5, 10, 0};  // 0 = ALL
  std::vector<double> etas{0.05, 0.10, 0.20, 0.30, 0.50};
  std::vector<std::size_t> ratios{5, 10, 15, 25};
  std::size_t trials = 10;
  std::size_t folds = 10;
  double holdout_fraction = 0.2;

  bool operator==(const ProtocolConfig&) const = default;
};

// Everything a run depends on besides the command line. Stage seeds are
// derived from `seed`.
struct RunConfig {
  DataConfig data;
  MixFusionConfig mixfusion;
  ModelConfig model;
  std::size_t pretrain_epochs = 0;
  nn::SgdOptions pretrain_sgd;
  TransferOptions transfer;
  ClassifierConfig classifier;
  FinetuneOptions finetune;
  ProtocolConfig protocol;
  std::uint64_t seed = 7;

  // Throws ArgumentError.
  void validate() const;
  bool operator==(const RunConfig& o) const;
};

std::string to_json(const RunConfig& cfg);
// Throws SchemaError on malformed or unknown fields.
RunConfig config_from_json(const std::string& text, const std::string& source_name = "config");
RunConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const RunConfig& cfg);

// SHA-256 of the canonical JSON form.
std::string config_digest(const RunConfig& cfg);

}  // namespace stealthlink
