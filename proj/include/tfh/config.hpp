#pragma once

#include "tfh/training.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace tfh {

enum class MetricScale { normalized, raw };

std::string to_string(MetricScale s);
MetricScale scale_from_string(const std::string &s);

struct DataConfig {
    std::string series;
    std::string texts;
    std::string embeddings;
    SplitRatios split;
    std::size_t window_stride = 1;
    bool normalize = true;
    bool operator==(const DataConfig &) const = default;
};

struct TextConfig {
    bool use_text = true;
    PoolingStrategy strategy = PoolingStrategy::mean;
    std::vector<PoolingStrategy> strategies{PoolingStrategy::mean, PoolingStrategy::bos, PoolingStrategy::cls};
    std::size_t d_tx = 32;  // width for the hash embedder when no embedding file is given
    bool operator==(const TextConfig &) const = default;
};

/// Everything one experiment needs. All randomness derives from `seed`.
struct RunConfig {
    std::uint64_t seed = 0;
    std::vector<std::size_t> horizons{7};
    std::string out = "out";
    DataConfig data;
    EncoderConfig encoder;  // carries input_len and the patch geometry
    FusionConfig fusion;
    TrainConfig train;
    TextConfig text;
    MetricScale scale = MetricScale::normalized;
    bool operator==(const RunConfig &) const = default;
};

void validate(const RunConfig &cfg);

// Strict: unknown keys and type mismatches are ValidationErrors naming the key path.
RunConfig parse_config(const nlohmann::json &j);
RunConfig load_config(const std::filesystem::path &path);
nlohmann::json to_json(const RunConfig &cfg);

nlohmann::json to_json(const ModelConfig &cfg);
ModelConfig model_config_from_json(const nlohmann::json &j);
nlohmann::json to_json(const TrainConfig &cfg);
TrainConfig train_config_from_json(const nlohmann::json &j);

// Model settings for one ablation arm.
ModelConfig model_config(const RunConfig &run, std::size_t horizon, Variant variant, PoolingStrategy pooling,
                         std::size_t d_tx);
// TrainConfig with its seed derived from the root seed.
TrainConfig train_config(const RunConfig &run);

} // namespace tfh
