#include "tfh/fusion.hpp"

#include "tfh/errors.hpp"
#include "tfh/random.hpp"

namespace tfh {

std::string to_string(Variant v) { return v == Variant::with_text ? "with_text" : "without_text"; }

Variant variant_from_string(const std::string &s) {
    if (s == "with_text") return Variant::with_text;
    if (s == "without_text") return Variant::without_text;
    throw ValidationError("unknown model variant '" + s + "'");
}

void validate(const ModelConfig &cfg) {
    validate(cfg.encoder);
    if (cfg.horizon == 0) throw ValidationError("horizon must be positive");
    if (cfg.variant == Variant::with_text) {
        if (cfg.d_tx == 0) throw ValidationError("d_tx must be positive");
        if (cfg.fusion.n_heads == 0 || cfg.fused_width() % cfg.fusion.n_heads != 0)
            throw ValidationError("fusion width " + std::to_string(cfg.fused_width()) + " is not divisible by fusion n_heads=" +
                                  std::to_string(cfg.fusion.n_heads));
    }
}

Model init_model(const ModelConfig &cfg, std::uint64_t seed) {
    validate(cfg);
    Model m;
    m.config = cfg;
    m.encoder = init_encoder(cfg.encoder, derive_seed(seed, "encoder"));
    Rng rng(derive_seed(seed, "fusion"));
    auto &f = m.fusion;
    const std::size_t d_ts = cfg.encoder.d_ts, d = cfg.fused_width(), hid = cfg.head_width(), h = cfg.horizon;
    if (cfg.variant == Variant::with_text) {
        f.wq = uniform_parameter("fusion.wq", {cfg.d_tx, d}, cfg.d_tx, rng);
        f.bq = Parameter("fusion.bq", Tensor({d}));
        f.wk = uniform_parameter("fusion.wk", {d_ts, d}, d_ts, rng);
        f.bk = Parameter("fusion.bk", Tensor({d}));
        f.wv = uniform_parameter("fusion.wv", {d_ts, d}, d_ts, rng);
        f.bv = Parameter("fusion.bv", Tensor({d}));
        f.head1_w = uniform_parameter("head.w1", {d, hid}, d, rng);
        f.head1_b = Parameter("head.b1", Tensor({hid}));
        f.head2_w = uniform_parameter("head.w2", {hid, h}, hid, rng);
        f.head2_b = Parameter("head.b2", Tensor({h}));
    } else {
        const std::size_t flat = cfg.encoder.patches() * d_ts;
        f.flat_w = uniform_parameter("head.flat_w", {flat, h}, flat, rng);
        f.flat_b = Parameter("head.flat_b", Tensor({h}));
    }
    return m;
}

namespace {

template <typename M, typename Ptr> std::vector<Ptr> collect_model(M &m) {
    std::vector<Ptr> out;
    for (auto p : m.encoder.parameters()) out.push_back(p);
    auto &f = m.fusion;
    if (m.config.variant == Variant::with_text) {
        for (Ptr p : {&f.wq, &f.bq, &f.wk, &f.bk, &f.wv, &f.bv, &f.head1_w, &f.head1_b, &f.head2_w, &f.head2_b})
            out.push_back(p);
    } else {
        out.push_back(&f.flat_w);
        out.push_back(&f.flat_b);
    }
    return out;
}

} // namespace

std::vector<Parameter *> Model::parameters() { return collect_model<Model, Parameter *>(*this); }
std::vector<const Parameter *> Model::parameters() const { return collect_model<const Model, const Parameter *>(*this); }

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto *p : parameters()) n += p->value.size();
    return n;
}

namespace {

template <typename F, typename Binder> FusionVars bind_fusion(F &f, Variant variant, Binder b) {
    FusionVars v;
    if (variant == Variant::with_text) {
        v = {b(f.wq), b(f.bq), b(f.wk), b(f.bk), b(f.wv), b(f.bv), b(f.head1_w), b(f.head1_b), b(f.head2_w), b(f.head2_b), {}, {}};
    } else {
        v.flat_w = b(f.flat_w);
        v.flat_b = b(f.flat_b);
    }
    return v;
}

} // namespace

ModelVars bind(Tape &tape, Model &model) {
    return {bind(tape, model.encoder),
            bind_fusion(model.fusion, model.config.variant, [&](Parameter &p) { return tape.parameter(p); })};
}

ModelVars bind_frozen(Tape &tape, const Model &model) {
    return {bind_frozen(tape, model.encoder),
            bind_fusion(model.fusion, model.config.variant, [&](const Parameter &p) { return tape.constant(p.value); })};
}

CrossAttentionOutput cross_attention(const Var &z_tx, const Var &z_ts, const Var &wq, const Var &bq, const Var &wk,
                                     const Var &bk, const Var &wv, const Var &bv, std::size_t n_heads) {
    if (z_tx.value().rank() != 2 || z_tx.value().dim(0) != 1)
        throw DimensionError("cross_attention expects a 1 x d_tx query, got " + to_string(z_tx.shape()));
    Var q = linear(z_tx, wq, bq);
    Var k = linear(z_ts, wk, bk);
    Var v = linear(z_ts, wv, bv);
    auto att = multi_head_attention(q, k, v, n_heads);
    return {att.out, std::move(att.weights)};
}

Var forward(Tape &tape, const ModelVars &vars, const ModelConfig &cfg, const std::vector<double> &x_norm,
            const std::vector<double> *query) {
    if (x_norm.size() != cfg.encoder.input_len)
        throw DimensionError("input window has length " + std::to_string(x_norm.size()) + ", model expects " +
                             std::to_string(cfg.encoder.input_len));
    const auto &pc = cfg.encoder.patch;
    const std::size_t p = patch_count(x_norm.size(), pc);
    Var patches = tape.constant(Tensor::matrix(p, pc.patch_len, patchify(x_norm, pc)));
    Var z_ts = encode_series(patches, vars.encoder, cfg.encoder);
    const auto &f = vars.fusion;
    if (cfg.variant == Variant::without_text) {
        if (query) throw std::invalid_argument("text-free model given a text query");
        Var flat = reshape(z_ts, {1, z_ts.value().size()});
        return linear(flat, f.flat_w, f.flat_b);
    }
    if (!query) throw std::invalid_argument("text model needs a text query");
    if (query->size() != cfg.d_tx)
        throw DimensionError("text query has width " + std::to_string(query->size()) + ", model expects d_tx=" +
                             std::to_string(cfg.d_tx));
    Var z_tx = tape.constant(Tensor::matrix(1, query->size(), *query));
    auto fused = cross_attention(z_tx, z_ts, f.wq, f.bq, f.wk, f.bk, f.wv, f.bv, cfg.fusion.n_heads);
    return linear(gelu(linear(fused.z, f.head1_w, f.head1_b)), f.head2_w, f.head2_b);
}

std::vector<double> normalized_input(const WindowSample &sample) {
    std::vector<double> x;
    x.reserve(sample.x.size());
    for (double v : sample.x) x.push_back(normalize_value(v, sample.norm));
    return x;
}

namespace {

std::vector<double> run(const Model &model, const WindowSample &sample, const std::vector<double> *query) {
    Tape tape;
    auto vars = bind_frozen(tape, model);
    Var y = forward(tape, vars, model.config, normalized_input(sample), query);
    return denormalize(y.value().values(), sample.norm);
}

} // namespace

std::vector<double> forecast_with_text(const Model &model, const WindowSample &sample, const TokenEmbeddingSet &embedding,
                                       PoolingStrategy strategy) {
    if (model.config.variant != Variant::with_text) throw std::invalid_argument("model was built without a text arm");
    const auto query = pool(embedding, strategy);
    return run(model, sample, &query);
}

std::vector<double> forecast_without_text(const Model &model, const WindowSample &sample) {
    if (model.config.variant != Variant::without_text) throw std::invalid_argument("model was built with a text arm");
    return run(model, sample, nullptr);
}

} // namespace tfh
