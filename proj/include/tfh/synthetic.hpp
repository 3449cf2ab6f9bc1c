#pragma once

#include "tfh/config.hpp"
#include "tfh/data.hpp"
#include "tfh/text.hpp"

#include <json.hpp>

namespace tfh {

/// Text-conditioned benchmark: every channel shares the same input ramp and
/// only its regime (named in its text) decides where the series goes next.
struct SyntheticSpec {
    std::size_t channels = 40;
    std::size_t regimes = 4;
    std::size_t input_len = 7;
    std::size_t horizon = 7;
    std::vector<double> slopes{-1.0, -0.33, 0.33, 1.0};
    double noise_sigma = 0.02;
    std::size_t periods = 40;
    std::uint64_t seed = 7;
    std::size_t d_tx = 32;
    bool operator==(const SyntheticSpec &) const = default;
};

void validate(const SyntheticSpec &spec);
nlohmann::json to_json(const SyntheticSpec &spec);

std::size_t regime_of(const SyntheticSpec &spec, std::size_t channel);
std::string channel_name(std::size_t channel);
std::string regime_text(std::size_t regime, std::size_t channel);

// Noise-free value at step `t` of a period (0 <= t < input_len + horizon).
double clean_value(const SyntheticSpec &spec, std::size_t regime, std::size_t t);

struct SyntheticData {
    RawDataset dataset;
    EmbeddingMap embeddings;
};

// Embeddings come from hash_embed_text; the last token is flagged as the cls position.
SyntheticData generate(const SyntheticSpec &spec);

// Bayes-optimal test MAE by Monte Carlo over the generative model. With
// knows_regime the predictor sees the regime; otherwise it uses the per-step
// median of the regime mixture. On the normalized scale errors are divided by
// the same per-window divisor the models use.
double oracle_mae(const SyntheticSpec &spec, bool knows_regime, MetricScale scale = MetricScale::normalized,
                  std::size_t draws = 100000);

// Run settings matching the generated data: period-aligned windows.
RunConfig synthetic_run_config(const SyntheticSpec &spec);

} // namespace tfh
