#pragma once

#include "tfh/training.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace tfh {

// Checkpoint file layout (integers and floats little-endian, like the embedding file):
//   "TFHC" | u16 version=1
//   u32 json_len | UTF-8 JSON {"model": <ModelConfig>, "train": <TrainConfig>}
//   u32 epoch | u32 n_history | n_history x f64 validation losses
//   u64 adam_step | u8 has_moments
//   u32 n_params, then per parameter in Model::parameters() order:
//     u16 name_len | name | u32 rank | rank x u32 dims | f64 values
//     [f64 adam m values | f64 adam v values]   (only when has_moments = 1)
inline constexpr std::uint16_t kCheckpointFormatVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint &ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint &ckpt, const std::filesystem::path &path);
Checkpoint load_checkpoint(const std::filesystem::path &path);

} // namespace tfh
