#include "tfh/synthetic.hpp"

#include "tfh/errors.hpp"
#include "tfh/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace tfh {

void validate(const SyntheticSpec &s) {
    if (s.channels < 1 || s.regimes < 1) throw ValidationError("synthetic: channels and regimes must be positive");
    if (s.regimes > s.channels) throw ValidationError("synthetic: more regimes than channels");
    if (s.slopes.size() != s.regimes) throw ValidationError("synthetic: need exactly one slope per regime");
    for (std::size_t i = 0; i < s.slopes.size(); ++i)
        for (std::size_t j = i + 1; j < s.slopes.size(); ++j)
            if (s.slopes[i] == s.slopes[j]) throw ValidationError("synthetic: slopes must be pairwise distinct");
    if (!(s.noise_sigma >= 0.0)) throw ValidationError("synthetic: noise_sigma must be non-negative");
    if (s.input_len < 1 || s.horizon < 1 || s.periods < 1) throw ValidationError("synthetic: window geometry must be positive");
    if (s.d_tx < 1) throw ValidationError("synthetic: d_tx must be positive");
}

nlohmann::json to_json(const SyntheticSpec &s) {
    return {{"channels", s.channels}, {"regimes", s.regimes},         {"input_len", s.input_len},
            {"horizon", s.horizon},   {"slopes", s.slopes},           {"noise_sigma", s.noise_sigma},
            {"periods", s.periods},   {"seed", s.seed},               {"d_tx", s.d_tx}};
}

std::size_t regime_of(const SyntheticSpec &spec, std::size_t channel) { return channel % spec.regimes; }

std::string channel_name(std::size_t channel) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "ch%03zu", channel);
    return buf;
}

std::string regime_text(std::size_t regime, std::size_t channel) {
    return "regime " + std::to_string(regime) + " channel " + std::to_string(channel);
}

double clean_value(const SyntheticSpec &spec, std::size_t regime, std::size_t t) {
    const double l = static_cast<double>(spec.input_len);
    if (t < spec.input_len) return static_cast<double>(t) / l;
    const double j = static_cast<double>(t - spec.input_len + 1);
    return (l - 1.0) / l + spec.slopes[regime] * j / static_cast<double>(spec.horizon);
}

SyntheticData generate(const SyntheticSpec &spec) {
    validate(spec);
    const std::size_t period = spec.input_len + spec.horizon;
    const std::size_t T = period * spec.periods;
    SyntheticData out;
    auto &d = out.dataset;
    for (std::size_t c = 0; c < spec.channels; ++c) d.channel_ids.push_back(channel_name(c));
    for (std::size_t t = 0; t < T; ++t) d.timestamps.push_back(std::to_string(t));
    d.values.assign(T * spec.channels, 0.0);

    Rng rng(derive_seed(spec.seed, "synthetic-noise"));
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t c = 0; c < spec.channels; ++c) {
        const std::size_t k = regime_of(spec, c);
        for (std::size_t t = 0; t < T; ++t) {
            const double eps = spec.noise_sigma > 0.0 ? spec.noise_sigma * noise(rng) : 0.0;
            d.values[t * spec.channels + c] = clean_value(spec, k, t % period) + eps;
        }
    }

    const std::uint64_t text_seed = derive_seed(spec.seed, "synthetic-text");
    for (std::size_t c = 0; c < spec.channels; ++c) {
        const auto id = channel_name(c);
        d.texts[id] = regime_text(regime_of(spec, c), c);
        auto set = hash_embed_text(d.texts[id], spec.d_tx, text_seed, id);
        set.cls_index = set.n_tokens - 1;
        out.embeddings.emplace(id, std::move(set));
    }
    validate_dataset(d, true);
    return out;
}

namespace {

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Draw {
    std::size_t regime;
    std::vector<double> x, y;
};

Draw sample(const SyntheticSpec &spec, Rng &rng) {
    std::uniform_int_distribution<std::size_t> pick(0, spec.channels - 1);
    std::normal_distribution<double> noise(0.0, 1.0);
    Draw d{regime_of(spec, pick(rng)), {}, {}};
    for (std::size_t t = 0; t < spec.input_len + spec.horizon; ++t) {
        const double v = clean_value(spec, d.regime, t) + (spec.noise_sigma > 0.0 ? spec.noise_sigma * noise(rng) : 0.0);
        (t < spec.input_len ? d.x : d.y).push_back(v);
    }
    return d;
}

} // namespace

double oracle_mae(const SyntheticSpec &spec, bool knows_regime, MetricScale scale, std::size_t draws) {
    validate(spec);
    if (draws == 0) throw ValidationError("oracle needs at least one draw");
    const std::size_t h = spec.horizon;

    // Regime-marginal predictor: per-step median of the continuation, which
    // is independent of the input window by construction.
    std::vector<double> marginal(h, 0.0);
    if (!knows_regime) {
        Rng rng(derive_seed(spec.seed, "oracle-median"));
        std::vector<std::vector<double>> steps(h);
        for (std::size_t i = 0; i < draws; ++i) {
            auto d = sample(spec, rng);
            for (std::size_t j = 0; j < h; ++j) steps[j].push_back(d.y[j]);
        }
        for (std::size_t j = 0; j < h; ++j) marginal[j] = median(std::move(steps[j]));
    }

    Rng rng(derive_seed(spec.seed, "oracle-eval"));
    double total = 0.0;
    for (std::size_t i = 0; i < draws; ++i) {
        auto d = sample(spec, rng);
        const double divisor = scale == MetricScale::normalized ? instance_normalize(d.x).stats.divisor() : 1.0;
        double err = 0.0;
        for (std::size_t j = 0; j < h; ++j) {
            const double pred = knows_regime ? clean_value(spec, d.regime, spec.input_len + j) : marginal[j];
            err += std::fabs(d.y[j] - pred);
        }
        total += err / (static_cast<double>(h) * divisor);
    }
    return total / static_cast<double>(draws);
}

RunConfig synthetic_run_config(const SyntheticSpec &spec) {
    RunConfig cfg;
    cfg.seed = spec.seed;
    cfg.encoder.input_len = spec.input_len;
    cfg.horizons = {spec.horizon};
    cfg.data.window_stride = spec.input_len + spec.horizon;
    cfg.text.d_tx = spec.d_tx;
    return cfg;
}

} // namespace tfh
