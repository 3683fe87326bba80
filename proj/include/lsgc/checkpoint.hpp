#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "lsgc/model.hpp"

namespace lsgc {

// On-disk layout:
//   8 bytes   magic "LSGCCKPT"
//   8 bytes   manifest length, little-endian u64
//   manifest  JSON: format_version, mode, merged, model_config, lora_config,
//             has_classifier_head, metadata, parameters[{name, shape,
//             precision, offset, nbytes}]
//   data      raw little-endian f32 values; offsets are relative to this section
struct Checkpoint {
  Model model;
  Mode mode;
  nlohmann::json metadata;
};

void save_checkpoint(const std::filesystem::path& path, Model& model, Mode mode,
                     const nlohmann::json& metadata = nlohmann::json::object());

Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LoraConfig& cfg);
LoraConfig lora_config_from_json(const nlohmann::json& j);

}  // namespace lsgc
