#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "darkhash/hashmodel.hpp"

namespace darkhash {

// DHM1 model checkpoint (all integers little-endian):
//
//   "DHM1", u32 version (=1), u32 K, u32 C, u32 H, u32 W, u32 layer count
//   per layer: u8 kind, u8 frozen, u32 width (conv out channels or dense
//              outputs, else 0), u32 parameter count, float32[count]
//   u32 metadata length, UTF-8 JSON metadata (training config, method, ...)
struct Checkpoint {
  HashModel model;
  nlohmann::json metadata = nlohmann::json::object();
};

std::vector<std::uint8_t> encode_checkpoint(const HashModel& model, const nlohmann::json& metadata);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const HashModel& model,
                     const nlohmann::json& metadata = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Rounds every parameter through float32, matching what a checkpoint
// round trip produces.
void round_to_float(HashModel& model);

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace darkhash
