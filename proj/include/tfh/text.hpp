#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tfh {

/// Token embeddings for one channel's text: n_tokens rows of width d_tx,
/// stored as 32-bit floats exactly as they appear on disk.
struct TokenEmbeddingSet {
    std::string channel_id;
    std::size_t n_tokens = 0;
    std::size_t d_tx = 0;
    std::vector<float> tokens;
    std::optional<std::size_t> bos_index;
    std::optional<std::size_t> cls_index;

    std::span<const float> row(std::size_t i) const { return {tokens.data() + i * d_tx, d_tx}; }
    bool operator==(const TokenEmbeddingSet &) const = default;
};

using EmbeddingMap = std::map<std::string, TokenEmbeddingSet>;

enum class PoolingStrategy { mean, bos, cls };

std::string to_string(PoolingStrategy s);
PoolingStrategy pooling_from_string(const std::string &s);
inline constexpr PoolingStrategy kAllStrategies[] = {PoolingStrategy::mean, PoolingStrategy::bos, PoolingStrategy::cls};

void validate(const TokenEmbeddingSet &set);

// Embedding file layout (all integers little-endian):
//   "TFHE" | u16 version=1 | u32 d_tx | u32 n_channels
//   per channel: u16 id_len | id bytes (UTF-8) | u32 n_tokens | i32 bos (-1 absent)
//                | i32 cls (-1 absent) | n_tokens*d_tx f32 LE, row-major
// Channels are written in id order.
inline constexpr std::uint16_t kEmbeddingFormatVersion = 1;

std::vector<std::uint8_t> encode_embeddings(const EmbeddingMap &sets);
EmbeddingMap decode_embeddings(std::span<const std::uint8_t> bytes);
void write_embedding_file(const EmbeddingMap &sets, const std::filesystem::path &path);
EmbeddingMap read_embedding_file(const std::filesystem::path &path);

std::vector<double> pool(const TokenEmbeddingSet &set, PoolingStrategy strategy);

// Deterministic stand-in for a language model: whitespace tokens, each
// mapped to a pseudo-random row in [-1, 1] keyed by (token bytes, seed).
TokenEmbeddingSet hash_embed_text(const std::string &text, std::size_t d_tx, std::uint64_t seed,
                                  const std::string &channel_id = {});

} // namespace tfh
