#include "stealthlink/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <sstream>

#include "stealthlink/csv.hpp"
#include "stealthlink/digest.hpp"
#include "stealthlink/error.hpp"

namespace stealthlink {

namespace {

struct Tensor {
  std::string name;
  nn::Matrix* value;
};

// Fixed order shared by save and load.
std::vector<Tensor> tensor_list(TransferModel& m) {
  std::vector<Tensor> out;
  for (auto& p : m.parameters()) out.push_back({p.name, &p.param->value});
  return out;
}

void append_le(std::string& buf, const nn::Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      std::uint64_t bits = std::bit_cast<std::uint64_t>(m(r, c));
      for (int b = 0; b < 8; ++b) buf.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
    }
  }
}

double read_le(const std::string& buf, std::size_t offset) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[offset + static_cast<std::size_t>(b)])) << (8 * b);
  return std::bit_cast<double>(bits);
}

nn::Matrix row_matrix(const nn::Vector& v) { return v.transpose(); }

std::map<std::string, std::string> model_keys(const TransferModel& m) {
  const ModelConfig& c = m.config;
  return {{"seed", std::to_string(m.seed)},
          {"model.d_s", std::to_string(c.d_s)},
          {"model.d_p", std::to_string(c.d_p)},
          {"model.encoder", to_string(c.encoder)},
          {"model.encoder_layers", std::to_string(c.encoder_layers)},
          {"model.d_model", std::to_string(c.d_model)},
          {"model.heads", std::to_string(c.heads)},
          {"model.ff_dim", std::to_string(c.ff_dim)},
          {"model.encoder_hidden", std::to_string(c.encoder_hidden)},
          {"model.adapter", to_string(c.adapter)},
          {"model.generator", to_string(c.generator)},
          {"model.generator_hidden", std::to_string(c.generator_hidden)},
          {"model.generator_layers", std::to_string(c.generator_layers)},
          {"model.classifier_hidden", std::to_string(c.classifier_hidden)},
          {"model.lambda", csv::format_double(c.lambda)},
          {"model.target_norm", to_string(m.normalizer.mode)}};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const TransferModel& model,
                     const std::map<std::string, std::string>& extra) {
  TransferModel& m = const_cast<TransferModel&>(model);
  std::vector<std::pair<std::string, nn::Matrix>> payload;
  for (auto& t : tensor_list(m)) payload.emplace_back(t.name, *t.value);
  payload.emplace_back("adapter.mu", row_matrix(model.adapter.mu));
  payload.emplace_back("normalizer.mean", nn::Matrix(model.normalizer.mean));
  payload.emplace_back("normalizer.scale", nn::Matrix(model.normalizer.scale));

  std::string blob;
  for (const auto& [name, value] : payload) append_le(blob, value);

  std::ostringstream os;
  os << "format=stealthlink-checkpoint\n";
  os << "version=" << kCheckpointVersion << "\n";
  for (const auto& [k, v] : model_keys(model)) os << k << '=' << v << '\n';
  for (const auto& [k, v] : extra) {
    if (k.find('=') != std::string::npos || v.find('\n') != std::string::npos) {
      throw ArgumentError("checkpoint: manifest entries may not contain '=' in keys or newlines");
    }
    os << k << '=' << v << '\n';
  }
  for (const auto& [name, value] : payload) os << "tensor=" << name << ',' << value.rows() << ',' << value.cols() << '\n';
  os << "tensors_sha256=" << sha256_hex(blob) << '\n';

  csv::write_file(dir / "tensors.bin", blob);
  csv::write_file(dir / "manifest.txt", os.str());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  const std::string manifest_path = (dir / "manifest.txt").string();
  std::string text = csv::read_file(dir / "manifest.txt");
  std::string blob = csv::read_file(dir / "tensors.bin");

  LoadedCheckpoint out;
  struct Entry {
    std::string name;
    Eigen::Index rows, cols;
  };
  std::vector<Entry> entries;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(manifest_path, lineno, "expected key=value");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    if (key == "tensor") {
      auto f = csv::split(value, ',');
      if (f.size() != 3) throw ParseError(manifest_path, lineno, "tensor entries need name,rows,cols");
      entries.push_back({f[0], static_cast<Eigen::Index>(csv::parse_uint(f[1], manifest_path, lineno)),
                         static_cast<Eigen::Index>(csv::parse_uint(f[2], manifest_path, lineno))});
    } else {
      out.manifest[key] = value;
    }
  }
  auto need = [&](const std::string& k) -> const std::string& {
    auto it = out.manifest.find(k);
    if (it == out.manifest.end()) throw SchemaError(manifest_path + ": missing key '" + k + "'");
    return it->second;
  };
  if (need("format") != "stealthlink-checkpoint") throw SchemaError(manifest_path + ": not a checkpoint manifest");
  if (need("version") != std::to_string(kCheckpointVersion)) {
    throw SchemaError(manifest_path + ": unsupported version " + need("version"));
  }
  if (need("tensors_sha256") != sha256_hex(blob)) throw SchemaError(manifest_path + ": tensor payload digest mismatch");

  auto as_size = [&](const std::string& k) {
    return static_cast<std::size_t>(csv::parse_uint(need(k), manifest_path, 0));
  };
  ModelConfig c;
  c.d_s = as_size("model.d_s");
  c.d_p = as_size("model.d_p");
  c.encoder = parse_encoder_arch(need("model.encoder"));
  c.encoder_layers = as_size("model.encoder_layers");
  c.d_model = as_size("model.d_model");
  c.heads = as_size("model.heads");
  c.ff_dim = as_size("model.ff_dim");
  c.encoder_hidden = as_size("model.encoder_hidden");
  c.adapter = parse_adapter_kind(need("model.adapter"));
  c.generator = parse_generator_arch(need("model.generator"));
  c.generator_hidden = as_size("model.generator_hidden");
  c.generator_layers = as_size("model.generator_layers");
  c.classifier_hidden = as_size("model.classifier_hidden");
  c.lambda = csv::parse_double(need("model.lambda"), manifest_path, 0);
  c.target_norm = parse_target_norm(need("model.target_norm"));
  const std::uint64_t seed = csv::parse_uint(need("seed"), manifest_path, 0);

  out.model = make_model(c, seed);
  std::map<std::string, nn::Matrix*> slots;
  for (auto& t : tensor_list(out.model)) slots[t.name] = t.value;
  nn::Matrix mu, mean, scale;
  slots["adapter.mu"] = &mu;
  slots["normalizer.mean"] = &mean;
  slots["normalizer.scale"] = &scale;

  std::size_t offset = 0;
  std::size_t filled = 0;
  for (const auto& e : entries) {
    auto it = slots.find(e.name);
    if (it == slots.end()) throw SchemaError(manifest_path + ": unexpected tensor '" + e.name + "'");
    nn::Matrix& dst = *it->second;
    if (dst.size() != 0 && (dst.rows() != e.rows || dst.cols() != e.cols)) {
      throw SchemaError(manifest_path + ": tensor '" + e.name + "' has shape " + std::to_string(e.rows) + "x" +
                        std::to_string(e.cols) + ", model expects " + std::to_string(dst.rows()) + "x" +
                        std::to_string(dst.cols()));
    }
    const std::size_t bytes = static_cast<std::size_t>(e.rows * e.cols) * 8;
    if (offset + bytes > blob.size()) throw SchemaError(manifest_path + ": tensor payload is truncated");
    dst.resize(e.rows, e.cols);
    for (Eigen::Index r = 0; r < e.rows; ++r) {
      for (Eigen::Index col = 0; col < e.cols; ++col) {
        dst(r, col) = read_le(blob, offset);
        offset += 8;
      }
    }
    ++filled;
  }
  if (offset != blob.size()) throw SchemaError(manifest_path + ": trailing bytes in tensor payload");
  if (filled != slots.size()) throw SchemaError(manifest_path + ": checkpoint is missing tensors");
  out.model.adapter.mu = mu.transpose();
  out.model.normalizer.mode = c.target_norm;
  out.model.normalizer.mean = mean;
  out.model.normalizer.scale = scale;
  for (auto& p : out.model.parameters()) {
    p.param->grad = nn::Matrix::Zero(p.param->value.rows(), p.param->value.cols());
    p.param->velocity = nn::Matrix::Zero(p.param->value.rows(), p.param->value.cols());
  }
  return out;
}

}  // namespace stealthlink
