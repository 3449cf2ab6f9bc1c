#include "tfh/encoder.hpp"

#include "tfh/errors.hpp"

#include <cmath>

namespace tfh {

void validate(const EncoderConfig &cfg) {
    validate_patch_config(cfg.patch, cfg.input_len);
    if (cfg.d_ts == 0) throw ValidationError("encoder.d_ts must be positive");
    if (cfg.n_heads == 0) throw ValidationError("encoder.n_heads must be positive");
    if (cfg.d_ff == 0) throw ValidationError("encoder.d_ff must be positive");
    if (cfg.d_ts % cfg.n_heads != 0)
        throw ValidationError("encoder.n_heads=" + std::to_string(cfg.n_heads) + " does not divide encoder.d_ts=" +
                              std::to_string(cfg.d_ts));
    if (!(cfg.ln_eps > 0.0)) throw ValidationError("encoder.ln_eps must be positive");
    if (cfg.dropout != 0.0) throw ValidationError("encoder.dropout is not supported; rate must be 0");
}

Parameter uniform_parameter(std::string name, Shape shape, std::size_t fan_in, Rng &rng) {
    Tensor t(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto &v : t.data()) v = dist(rng);
    return Parameter(std::move(name), std::move(t));
}

namespace {

Parameter zeros(std::string name, std::size_t n) { return Parameter(std::move(name), Tensor({n})); }
Parameter ones(std::string name, std::size_t n) { return Parameter(std::move(name), Tensor::filled({n}, 1.0)); }

} // namespace

EncoderParams init_encoder(const EncoderConfig &cfg, std::uint64_t seed) {
    validate(cfg);
    Rng rng(seed);
    const std::size_t d = cfg.d_ts;
    EncoderParams p;
    p.patch_w = uniform_parameter("encoder.patch_w", {cfg.patch.patch_len, d}, cfg.patch.patch_len, rng);
    p.patch_b = zeros("encoder.patch_b", d);
    p.pos = uniform_parameter("encoder.pos", {cfg.patches(), d}, d, rng);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const std::string pre = "encoder.layer" + std::to_string(l) + ".";
        EncoderLayerParams L;
        L.ln1_gain = ones(pre + "ln1_gain", d);
        L.ln1_bias = zeros(pre + "ln1_bias", d);
        L.wq = uniform_parameter(pre + "wq", {d, d}, d, rng);
        L.bq = zeros(pre + "bq", d);
        L.wk = uniform_parameter(pre + "wk", {d, d}, d, rng);
        L.bk = zeros(pre + "bk", d);
        L.wv = uniform_parameter(pre + "wv", {d, d}, d, rng);
        L.bv = zeros(pre + "bv", d);
        L.wo = uniform_parameter(pre + "wo", {d, d}, d, rng);
        L.bo = zeros(pre + "bo", d);
        L.ln2_gain = ones(pre + "ln2_gain", d);
        L.ln2_bias = zeros(pre + "ln2_bias", d);
        L.ff1_w = uniform_parameter(pre + "ff1_w", {d, cfg.d_ff}, d, rng);
        L.ff1_b = zeros(pre + "ff1_b", cfg.d_ff);
        L.ff2_w = uniform_parameter(pre + "ff2_w", {cfg.d_ff, d}, cfg.d_ff, rng);
        L.ff2_b = zeros(pre + "ff2_b", d);
        p.layers.push_back(std::move(L));
    }
    return p;
}

namespace {

template <typename Self, typename Ptr> std::vector<Ptr> collect(Self &self) {
    std::vector<Ptr> out{&self.patch_w, &self.patch_b, &self.pos};
    for (auto &L : self.layers)
        for (Ptr q : {&L.ln1_gain, &L.ln1_bias, &L.wq, &L.bq, &L.wk, &L.bk, &L.wv, &L.bv, &L.wo, &L.bo, &L.ln2_gain,
                      &L.ln2_bias, &L.ff1_w, &L.ff1_b, &L.ff2_w, &L.ff2_b})
            out.push_back(q);
    return out;
}

} // namespace

std::vector<Parameter *> EncoderParams::parameters() { return collect<EncoderParams, Parameter *>(*this); }
std::vector<const Parameter *> EncoderParams::parameters() const {
    return collect<const EncoderParams, const Parameter *>(*this);
}

std::size_t encoder_parameter_count(const EncoderParams &params) {
    std::size_t n = 0;
    for (const auto *p : params.parameters()) n += p->value.size();
    return n;
}

namespace {

template <typename Params, typename Binder> EncoderVars bind_with(Params &params, Binder b) {
    EncoderVars v{b(params.patch_w), b(params.patch_b), b(params.pos), {}};
    for (auto &L : params.layers)
        v.layers.push_back({b(L.ln1_gain), b(L.ln1_bias), b(L.wq), b(L.bq), b(L.wk), b(L.bk), b(L.wv), b(L.bv), b(L.wo),
                            b(L.bo), b(L.ln2_gain), b(L.ln2_bias), b(L.ff1_w), b(L.ff1_b), b(L.ff2_w), b(L.ff2_b)});
    return v;
}

} // namespace

EncoderVars bind(Tape &tape, EncoderParams &params) {
    return bind_with(params, [&](Parameter &p) { return tape.parameter(p); });
}

EncoderVars bind_frozen(Tape &tape, const EncoderParams &params) {
    return bind_with(params, [&](const Parameter &p) { return tape.constant(p.value); });
}

Var linear(const Var &x, const Var &w, const Var &b) { return add(matmul(x, w), b); }

AttentionOutput multi_head_attention(const Var &q, const Var &k, const Var &v, std::size_t n_heads) {
    const std::size_t d = q.value().dim(1);
    if (k.value().dim(1) != d || v.value().dim(1) != d || k.value().dim(0) != v.value().dim(0))
        throw DimensionError("attention shape mismatch: q " + to_string(q.shape()) + ", k " + to_string(k.shape()) +
                             ", v " + to_string(v.shape()));
    if (n_heads == 0 || d % n_heads != 0)
        throw DimensionError("attention width " + std::to_string(d) + " not divisible into " + std::to_string(n_heads) + " heads");
    const std::size_t dh = d / n_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    AttentionOutput out;
    std::vector<Var> heads;
    for (std::size_t h = 0; h < n_heads; ++h) {
        Var qh = n_heads == 1 ? q : slice_cols(q, h * dh, (h + 1) * dh);
        Var kh = n_heads == 1 ? k : slice_cols(k, h * dh, (h + 1) * dh);
        Var vh = n_heads == 1 ? v : slice_cols(v, h * dh, (h + 1) * dh);
        Var w = softmax_lastdim(scale(matmul(qh, transpose(kh)), inv_sqrt));
        out.weights.push_back(w);
        heads.push_back(matmul(w, vh));
    }
    out.out = n_heads == 1 ? heads[0] : concat_cols(heads);
    return out;
}

Var encode_series(const Var &patches, const EncoderVars &vars, const EncoderConfig &cfg) {
    const auto &P = patches.value();
    if (P.rank() != 2 || P.dim(1) != cfg.patch.patch_len)
        throw DimensionError("encode_series expects p x " + std::to_string(cfg.patch.patch_len) + " patches, got " +
                             to_string(P.shape()));
    const std::size_t p = P.dim(0);
    const std::size_t p_max = vars.pos.value().dim(0);
    if (p > p_max)
        throw DimensionError("encode_series: " + std::to_string(p) + " patches exceed the positional table of " +
                             std::to_string(p_max));
    Var pos = vars.pos;
    if (p < p_max) // leading rows of the table
        pos = reshape(slice_cols(reshape(vars.pos, {1, p_max * cfg.d_ts}), 0, p * cfg.d_ts), {p, cfg.d_ts});
    Var h = add(linear(patches, vars.patch_w, vars.patch_b), pos);
    for (const auto &L : vars.layers) {
        Var a = layer_norm(h, L.ln1_gain, L.ln1_bias, cfg.ln_eps);
        Var q = linear(a, L.wq, L.bq);
        Var k = linear(a, L.wk, L.bk);
        Var v = linear(a, L.wv, L.bv);
        auto att = multi_head_attention(q, k, v, cfg.n_heads);
        h = add(h, linear(att.out, L.wo, L.bo));
        Var f = layer_norm(h, L.ln2_gain, L.ln2_bias, cfg.ln_eps);
        h = add(h, linear(activation(linear(f, L.ff1_w, L.ff1_b), cfg.activation), L.ff2_w, L.ff2_b));
    }
    return h;
}

} // namespace tfh
