#pragma once

#include "tfh/config.hpp"
#include "tfh/training.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <span>

namespace tfh {

// (1/N) sum |target - pred|
double mae(std::span<const double> pred, std::span<const double> target);
// sum |target - pred| / sum |target|; UndefinedMetric when the target is all zero.
double wape(std::span<const double> pred, std::span<const double> target);

struct MetricsReport {
    Variant variant = Variant::without_text;
    std::optional<PoolingStrategy> pooling;
    std::size_t horizon = 0;
    double mae = 0.0;
    double wape = 0.0;
    std::size_t n_windows = 0;
    std::uint64_t seed = 0;
    MetricScale scale = MetricScale::normalized;

    std::string arm() const;
    bool operator==(const MetricsReport &) const = default;
};

/// Flattened (window x horizon-step) forecasts and targets on one scale.
struct Predictions {
    std::vector<double> pred;
    std::vector<double> target;
};

Predictions predict(const Model &model, std::span<const WindowSample> windows,
                    const std::vector<std::vector<double>> &queries, MetricScale scale, std::size_t threads = 1);

// Pooled query per dataset channel, in channel order.
std::vector<std::vector<double>> pooled_queries(const std::vector<std::string> &channel_ids, const EmbeddingMap &embeddings,
                                                PoolingStrategy strategy);

// `queries` must be empty for text-free checkpoints and cover every channel otherwise.
MetricsReport evaluate_model(const Checkpoint &ckpt, std::span<const WindowSample> test,
                             const std::vector<std::vector<double>> &queries, MetricScale scale, std::uint64_t seed,
                             std::size_t threads = 1);

// Lowest value wins; ties are all marked.
std::vector<bool> mark_best(std::span<const double> values);

struct AblationCell {
    MetricsReport metrics;
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;
    bool early_stopped = false;
};

struct AblationReport {
    std::vector<std::size_t> horizons;
    std::vector<std::string> arms;  // "without_text", then "with_text:<strategy>" per strategy
    std::vector<AblationCell> cells;  // horizon-major, arms in `arms` order
    PoolingStrategy primary = PoolingStrategy::mean;
    MetricScale scale = MetricScale::normalized;
    std::uint64_t seed = 0;

    const AblationCell &cell(std::size_t horizon, const std::string &arm) const;
};

// Trains and evaluates the text-free arm plus one text arm per strategy for
// each horizon, every arm from the same seed and settings.
AblationReport run_ablation(const RawDataset &data, const EmbeddingMap &embeddings, const RunConfig &cfg,
                            std::size_t threads = 1);

nlohmann::json to_json(const AblationReport &report);
AblationReport ablation_from_json(const nlohmann::json &j);
// rows = arms, columns = horizons
std::string metric_csv(const AblationReport &report, const std::string &metric);
// Markdown tables: with/without text (best in bold) and the per-strategy comparison.
std::string comparison_markdown(const AblationReport &report);
void write_report(const AblationReport &report, const std::filesystem::path &dir);

} // namespace tfh
