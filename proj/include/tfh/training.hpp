#pragma once

#include "tfh/fusion.hpp"

#include <functional>
#include <span>

namespace tfh {

enum class LossKind { mse, mae };

std::string to_string(LossKind k);
LossKind loss_from_string(const std::string &s);

struct TrainConfig {
    std::size_t max_epochs = 100;
    double early_stop_delta = 1e-4;
    std::size_t patience = 1;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;
    std::size_t batch_size = 64;
    LossKind loss = LossKind::mse;
    std::uint64_t seed = 0;
    bool operator==(const TrainConfig &) const = default;
};

void validate(const TrainConfig &cfg);

// Mean over all elements of (pred - target)^2 or |pred - target|.
Var compute_loss(const Var &pred, const Var &target, LossKind kind);

struct AdamState {
    std::vector<std::vector<double>> m, v;
    std::uint64_t step = 0;
    bool operator==(const AdamState &) const = default;
};

// One bias-corrected Adam update from each parameter's accumulated grad.
void adam_step(std::span<Parameter *const> params, AdamState &state, const TrainConfig &cfg);

// True iff each of the last `patience` consecutive validation changes is below delta.
bool should_stop(std::span<const double> val_history, double delta, std::size_t patience = 1);

/// Windows plus per-channel pooled text queries (empty for text-free models).
struct TrainingData {
    std::vector<WindowSample> train;
    std::vector<WindowSample> val;
    std::vector<std::vector<double>> queries;
};

struct Checkpoint {
    Model model;
    TrainConfig train;
    AdamState optimizer;
    std::size_t epoch = 0;  // epoch (1-based) the stored parameters come from
    std::vector<double> val_history;
};

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainingLog {
    std::vector<EpochLog> epochs;
    std::size_t best_epoch = 0;
    bool early_stopped = false;
};

struct TrainHooks {
    // Replaces the measured validation loss (epoch is 1-based).
    std::function<double(std::size_t epoch, double measured)> val_loss_override;
    std::function<void(const EpochLog &)> on_epoch;
};

struct TrainResult {
    Checkpoint checkpoint;
    TrainingLog log;
};

// Query for a sample, or nullptr for text-free models.
const std::vector<double> *query_for(const Model &model, const std::vector<std::vector<double>> &queries,
                                     const WindowSample &sample);

// Mean loss over windows in normalized space, no gradients.
double evaluate_loss(const Model &model, std::span<const WindowSample> windows,
                     const std::vector<std::vector<double>> &queries, LossKind kind, std::size_t threads = 1);

TrainResult train(Model model, const TrainingData &data, const TrainConfig &cfg, const TrainHooks &hooks = {},
                  std::size_t threads = 1);

} // namespace tfh
