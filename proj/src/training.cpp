#include "tfh/training.hpp"

#include "tfh/errors.hpp"
#include "tfh/parallel.hpp"
#include "tfh/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tfh {

std::string to_string(LossKind k) { return k == LossKind::mse ? "mse" : "mae"; }

LossKind loss_from_string(const std::string &s) {
    if (s == "mse") return LossKind::mse;
    if (s == "mae") return LossKind::mae;
    throw ValidationError("unknown loss '" + s + "' (expected mse or mae)");
}

void validate(const TrainConfig &cfg) {
    if (cfg.max_epochs < 1) throw ValidationError("train.max_epochs must be at least 1");
    if (!(cfg.early_stop_delta > 0.0)) throw ValidationError("train.early_stop_delta must be positive");
    if (cfg.patience < 1) throw ValidationError("train.patience must be at least 1");
    if (!(cfg.lr > 0.0)) throw ValidationError("train.lr must be positive");
    if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0)) throw ValidationError("train.beta1 must lie in [0, 1)");
    if (!(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) throw ValidationError("train.beta2 must lie in [0, 1)");
    if (!(cfg.eps_adam > 0.0)) throw ValidationError("train.eps_adam must be positive");
    if (cfg.batch_size < 1) throw ValidationError("train.batch_size must be at least 1");
}

Var compute_loss(const Var &pred, const Var &target, LossKind kind) {
    if (pred.shape() != target.shape())
        throw DimensionError("loss shape mismatch: pred " + to_string(pred.shape()) + " vs target " + to_string(target.shape()));
    Var diff = sub(pred, target);
    return mean_all(kind == LossKind::mse ? mul(diff, diff) : abs(diff));
}

void adam_step(std::span<Parameter *const> params, AdamState &state, const TrainConfig &cfg) {
    if (state.m.size() != params.size()) {
        state.m.clear();
        state.v.clear();
        for (const auto *p : params) {
            state.m.emplace_back(p->value.size(), 0.0);
            state.v.emplace_back(p->value.size(), 0.0);
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto &p = *params[i];
        if (p.grad.size() != p.value.size()) p.zero_grad();
        auto &m = state.m[i];
        auto &v = state.v[i];
        for (std::size_t k = 0; k < p.value.size(); ++k) {
            const double g = p.grad[k];
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
            const double m_hat = m[k] / c1;
            const double v_hat = v[k] / c2;
            p.value[k] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps_adam);
        }
    }
}

bool should_stop(std::span<const double> h, double delta, std::size_t patience) {
    if (patience == 0 || h.size() <= patience) return false;
    for (std::size_t i = h.size() - patience; i < h.size(); ++i)
        if (!(std::fabs(h[i] - h[i - 1]) < delta)) return false;
    return true;
}

const std::vector<double> *query_for(const Model &model, const std::vector<std::vector<double>> &queries,
                                     const WindowSample &sample) {
    if (model.config.variant == Variant::without_text) return nullptr;
    if (sample.channel_index >= queries.size())
        throw ValidationError("no text query for channel index " + std::to_string(sample.channel_index));
    return &queries[sample.channel_index];
}

namespace {

// Samples per tape. Fixed so gradient summation order does not depend on the thread count.
constexpr std::size_t kChunk = 8;

std::vector<double> normalized_target(const WindowSample &s) {
    std::vector<double> y;
    y.reserve(s.y.size());
    for (double v : s.y) y.push_back(normalize_value(v, s.norm));
    return y;
}

Tensor stacked_targets(std::span<const WindowSample *const> samples) {
    const std::size_t h = samples.front()->y.size();
    std::vector<double> data;
    data.reserve(samples.size() * h);
    for (const auto *s : samples) {
        auto y = normalized_target(*s);
        data.insert(data.end(), y.begin(), y.end());
    }
    return Tensor::matrix(samples.size(), h, std::move(data));
}

void check_finite(double v, const char *what) {
    if (!std::isfinite(v)) throw TrainingDiverged(std::string("non-finite ") + what + " loss; lower the learning rate");
}

} // namespace

double evaluate_loss(const Model &model, std::span<const WindowSample> windows,
                     const std::vector<std::vector<double>> &queries, LossKind kind, std::size_t threads) {
    if (windows.empty()) throw ValidationError("cannot evaluate loss on an empty window set");
    const std::size_t chunks = (windows.size() + kChunk - 1) / kChunk;
    std::vector<double> sums(chunks, 0.0);
    parallel_for(chunks, threads, [&](std::size_t c) {
        Tape tape;
        auto vars = bind_frozen(tape, model);
        std::vector<Var> preds;
        std::vector<const WindowSample *> members;
        for (std::size_t i = c * kChunk; i < std::min(windows.size(), (c + 1) * kChunk); ++i) {
            preds.push_back(forward(tape, vars, model.config, normalized_input(windows[i]), query_for(model, queries, windows[i])));
            members.push_back(&windows[i]);
        }
        Var loss = compute_loss(concat_rows(preds), tape.constant(stacked_targets(members)), kind);
        sums[c] = loss.value().item() * static_cast<double>(members.size());
    });
    double total = 0.0;
    for (double s : sums) total += s;
    return total / static_cast<double>(windows.size());
}

TrainResult train(Model model, const TrainingData &data, const TrainConfig &cfg, const TrainHooks &hooks, std::size_t threads) {
    validate(cfg);
    if (data.train.empty()) throw ValidationError("training window set is empty");
    if (data.val.empty()) throw ValidationError("validation window set is empty");

    auto params = model.parameters();
    const std::size_t max_chunks = (std::min(cfg.batch_size, data.train.size()) + kChunk - 1) / kChunk;
    std::vector<Model> replicas(max_chunks, model);
    std::vector<std::vector<Parameter *>> replica_params;
    for (auto &r : replicas) replica_params.push_back(r.parameters());

    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
    std::vector<std::size_t> order(data.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainResult result;
    AdamState adam;
    double best_val = std::numeric_limits<double>::infinity();

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double train_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t n = std::min(cfg.batch_size, order.size() - start);
            const std::size_t chunks = (n + kChunk - 1) / kChunk;
            std::vector<double> chunk_loss(chunks, 0.0);
            parallel_for(chunks, threads, [&](std::size_t c) {
                Model &replica = replicas[c];
                for (auto *p : replica_params[c]) p->zero_grad();
                Tape tape;
                auto vars = bind(tape, replica);
                std::vector<Var> preds;
                std::vector<const WindowSample *> members;
                for (std::size_t i = start + c * kChunk; i < start + std::min(n, (c + 1) * kChunk); ++i) {
                    const auto &s = data.train[order[i]];
                    preds.push_back(forward(tape, vars, replica.config, normalized_input(s), query_for(replica, data.queries, s)));
                    members.push_back(&s);
                }
                Var loss = compute_loss(concat_rows(preds), tape.constant(stacked_targets(members)), cfg.loss);
                const double weight = static_cast<double>(members.size()) / static_cast<double>(n);
                check_finite(loss.value().item(), "training");
                chunk_loss[c] = loss.value().item() * static_cast<double>(members.size());
                tape.backward(scale(loss, weight));
            });
            for (std::size_t k = 0; k < params.size(); ++k) {
                auto &g = params[k]->grad;
                g.assign(params[k]->value.size(), 0.0);
                for (std::size_t c = 0; c < chunks; ++c) {
                    const auto &rg = replica_params[c][k]->grad;
                    for (std::size_t j = 0; j < g.size(); ++j) g[j] += rg[j];
                }
            }
            adam_step(params, adam, cfg);
            for (auto &rp : replica_params)
                for (std::size_t k = 0; k < params.size(); ++k) rp[k]->value = params[k]->value;
            for (double l : chunk_loss) train_sum += l;
        }

        EpochLog entry{epoch, train_sum / static_cast<double>(order.size()), 0.0};
        entry.val_loss = evaluate_loss(model, data.val, data.queries, cfg.loss, threads);
        if (hooks.val_loss_override) entry.val_loss = hooks.val_loss_override(epoch, entry.val_loss);
        check_finite(entry.val_loss, "validation");
        result.log.epochs.push_back(entry);
        result.checkpoint.val_history.push_back(entry.val_loss);
        if (hooks.on_epoch) hooks.on_epoch(entry);

        if (entry.val_loss < best_val) {
            best_val = entry.val_loss;
            result.checkpoint.model = model;
            result.checkpoint.optimizer = adam;
            result.checkpoint.epoch = epoch;
            result.log.best_epoch = epoch;
        }
        if (should_stop(result.checkpoint.val_history, cfg.early_stop_delta, cfg.patience)) {
            result.log.early_stopped = true;
            break;
        }
    }
    result.checkpoint.train = cfg;
    return result;
}

} // namespace tfh
