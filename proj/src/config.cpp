#include "tfh/config.hpp"

#include "tfh/errors.hpp"
#include "tfh/random.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace tfh {

using nlohmann::json;

std::string to_string(MetricScale s) { return s == MetricScale::normalized ? "normalized" : "raw"; }

MetricScale scale_from_string(const std::string &s) {
    if (s == "normalized") return MetricScale::normalized;
    if (s == "raw") return MetricScale::raw;
    throw ValidationError("unknown metric scale '" + s + "' (expected normalized or raw)");
}

namespace {

// Walks one JSON object, remembering which keys were consumed so leftovers
// can be reported as unknown.
class Fields {
public:
    Fields(const json &j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ValidationError(where() + ": expected an object");
    }

    std::string key_path(const std::string &key) const { return path_.empty() ? key : path_ + "." + key; }

    const json *get(const std::string &key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    template <typename T> void read(const std::string &key, T &out) {
        const json *v = get(key);
        if (!v) return;
        out = convert<T>(*v, key_path(key));
    }

    template <typename T> void read_enum(const std::string &key, T &out, T (*parse)(const std::string &)) {
        std::string s;
        read(key, s);
        if (s.empty()) return;
        try {
            out = parse(s);
        } catch (const ValidationError &e) {
            throw ValidationError(key_path(key) + ": " + e.what());
        }
    }

    Fields child(const std::string &key) {
        const json *v = get(key);
        static const json empty = json::object();
        if (v && !v->is_object()) throw ValidationError(key_path(key) + ": expected an object");
        return Fields(v ? *v : empty, key_path(key));
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.contains(it.key())) throw ValidationError("unknown config key '" + key_path(it.key()) + "'");
    }

    template <typename T> static T convert(const json &v, const std::string &path) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ValidationError(path + ": expected a boolean");
            return v.get<bool>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ValidationError(path + ": expected a string");
            return v.get<std::string>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
                throw ValidationError(path + ": expected a non-negative integer");
            return static_cast<T>(v.get<std::uint64_t>());
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ValidationError(path + ": expected a number");
            return v.get<double>();
        } else {
            static_assert(sizeof(T) == 0, "unsupported config field type");
        }
    }

private:
    std::string where() const { return path_.empty() ? "config" : path_; }

    const json &j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <typename T> std::vector<T> read_list(const json &v, const std::string &path) {
    if (!v.is_array()) throw ValidationError(path + ": expected an array");
    std::vector<T> out;
    for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(Fields::convert<T>(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

void read_patch(Fields f, PatchConfig &p) {
    f.read("patch_len", p.patch_len);
    f.read("stride", p.stride);
    f.read("pad_end", p.pad_end);
    f.finish();
}

void read_encoder(Fields f, EncoderConfig &e) {
    f.read("d_ts", e.d_ts);
    f.read("n_layers", e.n_layers);
    f.read("n_heads", e.n_heads);
    f.read("d_ff", e.d_ff);
    f.read_enum("activation", e.activation, activation_from_string);
    f.read("ln_eps", e.ln_eps);
    f.read("dropout", e.dropout);
    f.finish();
}

void read_fusion(Fields f, FusionConfig &c) {
    f.read("d", c.d);
    f.read("n_heads", c.n_heads);
    f.read("head_hidden", c.head_hidden);
    f.finish();
}

void read_train(Fields f, TrainConfig &t, bool with_seed) {
    f.read("max_epochs", t.max_epochs);
    f.read("early_stop_delta", t.early_stop_delta);
    f.read("patience", t.patience);
    f.read("lr", t.lr);
    f.read("beta1", t.beta1);
    f.read("beta2", t.beta2);
    f.read("eps_adam", t.eps_adam);
    f.read("batch_size", t.batch_size);
    f.read_enum("loss", t.loss, loss_from_string);
    if (with_seed) f.read("seed", t.seed);
    f.finish();
}

json patch_json(const PatchConfig &p) { return {{"patch_len", p.patch_len}, {"stride", p.stride}, {"pad_end", p.pad_end}}; }

json encoder_json(const EncoderConfig &e) {
    return {{"d_ts", e.d_ts},     {"n_layers", e.n_layers},
            {"n_heads", e.n_heads}, {"d_ff", e.d_ff},
            {"activation", to_string(e.activation)}, {"ln_eps", e.ln_eps},
            {"dropout", e.dropout}};
}

json fusion_json(const FusionConfig &c) { return {{"d", c.d}, {"n_heads", c.n_heads}, {"head_hidden", c.head_hidden}}; }

json train_json(const TrainConfig &t) {
    return {{"max_epochs", t.max_epochs}, {"early_stop_delta", t.early_stop_delta}, {"patience", t.patience},
            {"lr", t.lr},                 {"beta1", t.beta1},                       {"beta2", t.beta2},
            {"eps_adam", t.eps_adam},     {"batch_size", t.batch_size},             {"loss", to_string(t.loss)}};
}

template <typename Fn> void with_prefix(const std::string &prefix, Fn &&fn) {
    try {
        fn();
    } catch (const ValidationError &e) {
        throw ValidationError(prefix + ": " + e.what());
    }
}

} // namespace

void validate(const RunConfig &cfg) {
    if (cfg.horizons.empty()) throw ValidationError("horizons: list must not be empty");
    for (auto h : cfg.horizons)
        if (h == 0) throw ValidationError("horizons: every horizon must be positive");
    if (cfg.encoder.input_len == 0) throw ValidationError("input_len: must be positive");
    validate(cfg.encoder);
    validate(cfg.train);
    if (cfg.data.window_stride == 0) throw ValidationError("data.window_stride: must be positive");
    const auto &s = cfg.data.split;
    if (!(s.train > 0 && s.val > 0 && s.test > 0) || std::fabs(s.train + s.val + s.test - 1.0) > 1e-9)
        throw ValidationError("data.split: ratios must be positive and sum to 1");
    if (cfg.fusion.n_heads == 0) throw ValidationError("fusion.n_heads: must be positive");
    const std::size_t d = cfg.fusion.d ? cfg.fusion.d : cfg.encoder.d_ts;
    if (d % cfg.fusion.n_heads != 0) throw ValidationError("fusion.n_heads: must divide the fused width");
    if (cfg.text.strategies.empty()) throw ValidationError("text.strategies: list must not be empty");
    if (cfg.text.d_tx == 0) throw ValidationError("text.d_tx: must be positive");
}

RunConfig parse_config(const json &j) {
    RunConfig cfg;
    Fields root(j, "");
    root.read("seed", cfg.seed);
    root.read("input_len", cfg.encoder.input_len);
    if (const json *h = root.get("horizons")) cfg.horizons = read_list<std::size_t>(*h, "horizons");
    root.read("out", cfg.out);
    {
        Fields d = root.child("data");
        d.read("series", cfg.data.series);
        d.read("texts", cfg.data.texts);
        d.read("embeddings", cfg.data.embeddings);
        if (const json *s = d.get("split")) {
            auto r = read_list<double>(*s, "data.split");
            if (r.size() != 3) throw ValidationError("data.split: expected [train, val, test]");
            cfg.data.split = {r[0], r[1], r[2]};
        }
        d.read("window_stride", cfg.data.window_stride);
        d.read("normalize", cfg.data.normalize);
        d.finish();
    }
    read_patch(root.child("patch"), cfg.encoder.patch);
    read_encoder(root.child("encoder"), cfg.encoder);
    read_fusion(root.child("fusion"), cfg.fusion);
    read_train(root.child("train"), cfg.train, false);
    {
        Fields t = root.child("text");
        t.read("use_text", cfg.text.use_text);
        t.read_enum("strategy", cfg.text.strategy, pooling_from_string);
        if (const json *s = t.get("strategies")) {
            cfg.text.strategies.clear();
            for (const auto &name : read_list<std::string>(*s, "text.strategies")) {
                with_prefix("text.strategies", [&] { cfg.text.strategies.push_back(pooling_from_string(name)); });
            }
        }
        t.read("d_tx", cfg.text.d_tx);
        t.finish();
    }
    {
        Fields e = root.child("eval");
        e.read_enum("scale", cfg.scale, scale_from_string);
        e.finish();
    }
    root.finish();
    validate(cfg);
    return cfg;
}

RunConfig load_config(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error &e) {
        throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw ValidationError("config " + path.string() + " must be a JSON object");
    return parse_config(j);
}

json to_json(const RunConfig &cfg) {
    json strategies = json::array();
    for (auto s : cfg.text.strategies) strategies.push_back(to_string(s));
    return {{"seed", cfg.seed},
            {"input_len", cfg.encoder.input_len},
            {"horizons", cfg.horizons},
            {"out", cfg.out},
            {"data",
             {{"series", cfg.data.series},
              {"texts", cfg.data.texts},
              {"embeddings", cfg.data.embeddings},
              {"split", {cfg.data.split.train, cfg.data.split.val, cfg.data.split.test}},
              {"window_stride", cfg.data.window_stride},
              {"normalize", cfg.data.normalize}}},
            {"patch", patch_json(cfg.encoder.patch)},
            {"encoder", encoder_json(cfg.encoder)},
            {"fusion", fusion_json(cfg.fusion)},
            {"train", train_json(cfg.train)},
            {"text",
             {{"use_text", cfg.text.use_text},
              {"strategy", to_string(cfg.text.strategy)},
              {"strategies", strategies},
              {"d_tx", cfg.text.d_tx}}},
            {"eval", {{"scale", to_string(cfg.scale)}}}};
}

json to_json(const ModelConfig &cfg) {
    json enc = encoder_json(cfg.encoder);
    enc["input_len"] = cfg.encoder.input_len;
    enc["patch"] = patch_json(cfg.encoder.patch);
    return {{"encoder", enc},
            {"fusion", fusion_json(cfg.fusion)},
            {"horizon", cfg.horizon},
            {"d_tx", cfg.d_tx},
            {"variant", to_string(cfg.variant)},
            {"pooling", to_string(cfg.pooling)}};
}

ModelConfig model_config_from_json(const json &j) {
    ModelConfig cfg;
    Fields root(j, "model");
    {
        Fields e = root.child("encoder");
        e.read("input_len", cfg.encoder.input_len);
        read_patch(e.child("patch"), cfg.encoder.patch);
        e.read("d_ts", cfg.encoder.d_ts);
        e.read("n_layers", cfg.encoder.n_layers);
        e.read("n_heads", cfg.encoder.n_heads);
        e.read("d_ff", cfg.encoder.d_ff);
        e.read_enum("activation", cfg.encoder.activation, activation_from_string);
        e.read("ln_eps", cfg.encoder.ln_eps);
        e.read("dropout", cfg.encoder.dropout);
        e.finish();
    }
    read_fusion(root.child("fusion"), cfg.fusion);
    root.read("horizon", cfg.horizon);
    root.read("d_tx", cfg.d_tx);
    root.read_enum("variant", cfg.variant, variant_from_string);
    root.read_enum("pooling", cfg.pooling, pooling_from_string);
    root.finish();
    validate(cfg);
    return cfg;
}

json to_json(const TrainConfig &cfg) {
    json j = train_json(cfg);
    j["seed"] = cfg.seed;
    return j;
}

TrainConfig train_config_from_json(const json &j) {
    TrainConfig cfg;
    read_train(Fields(j, "train"), cfg, true);
    validate(cfg);
    return cfg;
}

ModelConfig model_config(const RunConfig &run, std::size_t horizon, Variant variant, PoolingStrategy pooling, std::size_t d_tx) {
    ModelConfig m;
    m.encoder = run.encoder;
    m.fusion = run.fusion;
    m.horizon = horizon;
    m.d_tx = d_tx;
    m.variant = variant;
    m.pooling = pooling;
    validate(m);
    return m;
}

TrainConfig train_config(const RunConfig &run) {
    TrainConfig t = run.train;
    t.seed = derive_seed(run.seed, "train");
    return t;
}

} // namespace tfh
