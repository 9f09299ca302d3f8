#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "stealthlink/transfer.hpp"

namespace stealthlink {

// On-disk layout of a checkpoint directory:
//   manifest.txt  key=value lines: format, version, architecture enums, widths,
//                 lambda, seed, then one `tensor=<name>,<rows>,<cols>` line per
//                 tensor in payload order, and the payload digest.
//   tensors.bin   concatenated tensors, row-major, little-endian IEEE-754 f64.
inline constexpr int kCheckpointVersion = 1;

// `extra` entries (e.g. config_digest) are written to the manifest verbatim.
void save_checkpoint(const std::filesystem::path& dir, const TransferModel& model,
                     const std::map<std::string, std::string>& extra = {});

struct LoadedCheckpoint {
  TransferModel model;
  std::map<std::string, std::string> manifest;
};

// Throws IoError or SchemaError.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace stealthlink
