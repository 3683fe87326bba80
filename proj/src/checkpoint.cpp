#include "lsgc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace lsgc {
namespace {

constexpr char kMagic[8] = {'L', 'S', 'G', 'C', 'C', 'K', 'P', 'T'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void put_f32(std::string& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

float get_f32(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

}  // namespace

nlohmann::json to_json(const ModelConfig& cfg) {
  return {{"n_layers", cfg.n_layers}, {"n_heads", cfg.n_heads},       {"d_model", cfg.d_model},
          {"d_ff", cfg.d_ff},         {"vocab_size", cfg.vocab_size}, {"max_seq_len", cfg.max_seq_len},
          {"dropout", cfg.dropout}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.n_layers = j.at("n_layers").get<int>();
  cfg.n_heads = j.at("n_heads").get<int>();
  cfg.d_model = j.at("d_model").get<int>();
  cfg.d_ff = j.at("d_ff").get<int>();
  cfg.vocab_size = j.at("vocab_size").get<int>();
  cfg.max_seq_len = j.at("max_seq_len").get<int>();
  cfg.dropout = j.at("dropout").get<double>();
  return cfg;
}

nlohmann::json to_json(const LoraConfig& cfg) {
  std::vector<std::string> targets;
  for (auto t : cfg.targets) targets.push_back(to_string(t));
  return {{"r", cfg.r}, {"lora_alpha", cfg.lora_alpha}, {"lora_dropout", cfg.lora_dropout}, {"targets", targets}};
}

LoraConfig lora_config_from_json(const nlohmann::json& j) {
  LoraConfig cfg;
  cfg.r = j.at("r").get<int>();
  cfg.lora_alpha = j.at("lora_alpha").get<double>();
  cfg.lora_dropout = j.at("lora_dropout").get<double>();
  cfg.targets.clear();
  for (const auto& t : j.at("targets")) cfg.targets.push_back(lora_target_from_string(t.get<std::string>()));
  return cfg;
}

void save_checkpoint(const std::filesystem::path& path, Model& model, Mode mode, const nlohmann::json& metadata) {
  std::string data;
  nlohmann::json params = nlohmann::json::array();
  for (auto& p : model.parameters()) {
    const std::size_t offset = data.size();
    for (float v : p.tensor.data()) put_f32(data, v);
    params.push_back({{"name", p.name},
                      {"shape", p.tensor.shape()},
                      {"precision", "f32"},
                      {"offset", offset},
                      {"nbytes", data.size() - offset}});
  }
  nlohmann::json manifest = {{"format_version", 1},
                             {"mode", to_string(mode)},
                             {"merged", model.merged()},
                             {"model_config", to_json(model.config())},
                             {"lora_config", model.lora_config() ? to_json(*model.lora_config()) : nlohmann::json()},
                             {"has_classifier_head", model.has_classifier_head()},
                             {"metadata", metadata},
                             {"parameters", params}};
  const std::string header = manifest.dump();
  std::string blob(kMagic, sizeof(kMagic));
  put_u64(blob, header.size());
  blob += header;
  blob += data;

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (blob.size() < 16 || std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a checkpoint file: " + path.string());
  }
  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
  const std::uint64_t header_len = get_u64(bytes + 8);
  if (16 + header_len > blob.size()) throw IoError("truncated checkpoint manifest: " + path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(blob.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt checkpoint manifest: " + std::string(e.what()));
  }
  const std::size_t data_start = 16 + header_len;

  Model model(model_config_from_json(manifest.at("model_config")), 0);
  const bool merged = manifest.at("merged").get<bool>();
  std::optional<LoraConfig> lora;
  if (!manifest.at("lora_config").is_null()) lora = lora_config_from_json(manifest.at("lora_config"));
  if (lora && !merged) model.attach_lora(*lora, 0);
  if (lora && merged) model.set_lora_config(lora);
  model.set_merged_flag(merged);
  if (manifest.at("has_classifier_head").get<bool>()) model.attach_classifier_head(0);

  std::size_t restored = 0;
  for (const auto& entry : manifest.at("parameters")) {
    const auto name = entry.at("name").get<std::string>();
    if (entry.at("precision").get<std::string>() != "f32") throw IoError("unsupported precision for " + name);
    auto* tensor = model.find_parameter(name);
    if (tensor == nullptr) throw IoError("checkpoint parameter '" + name + "' does not exist in the model");
    const auto shape = entry.at("shape").get<num::Shape>();
    if (shape != tensor->shape()) {
      throw IoError("checkpoint parameter '" + name + "' has shape " + num::shape_string(shape) + ", expected " +
                    num::shape_string(tensor->shape()));
    }
    const auto offset = entry.at("offset").get<std::size_t>();
    const auto nbytes = entry.at("nbytes").get<std::size_t>();
    if (nbytes != tensor->numel() * 4 || data_start + offset + nbytes > blob.size()) {
      throw IoError("checkpoint parameter '" + name + "' has an invalid byte range");
    }
    auto dst = tensor->data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = get_f32(bytes + data_start + offset + 4 * i);
    ++restored;
  }
  if (restored != model.parameters().size()) throw IoError("checkpoint is missing parameters: " + path.string());
  return Checkpoint{std::move(model), mode_from_string(manifest.at("mode").get<std::string>()),
                    manifest.value("metadata", nlohmann::json::object())};
}

}  // namespace lsgc
