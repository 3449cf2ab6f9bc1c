#pragma once

#include "tfh/encoder.hpp"
#include "tfh/text.hpp"

#include <optional>

namespace tfh {

enum class Variant { with_text, without_text };

std::string to_string(Variant v);
Variant variant_from_string(const std::string &s);

struct FusionConfig {
    std::size_t d = 0;            // fused width; 0 means d_ts
    std::size_t n_heads = 1;
    std::size_t head_hidden = 0;  // head MLP hidden width; 0 means 2*d
    bool operator==(const FusionConfig &) const = default;
};

struct ModelConfig {
    EncoderConfig encoder;
    FusionConfig fusion;
    std::size_t horizon = 7;
    std::size_t d_tx = 32;
    Variant variant = Variant::with_text;
    PoolingStrategy pooling = PoolingStrategy::mean;

    std::size_t fused_width() const { return fusion.d ? fusion.d : encoder.d_ts; }
    std::size_t head_width() const { return fusion.head_hidden ? fusion.head_hidden : 2 * fused_width(); }
    bool operator==(const ModelConfig &) const = default;
};

void validate(const ModelConfig &cfg);

/// Cross-attention projections plus the forecast heads. Only the arm used by
/// the model variant is populated.
struct FusionParams {
    Parameter wq, bq, wk, bk, wv, bv;
    Parameter head1_w, head1_b, head2_w, head2_b;
    Parameter flat_w, flat_b;  // text-free baseline: (p*d_ts) -> h
};

struct Model {
    ModelConfig config;
    EncoderParams encoder;
    FusionParams fusion;

    // Flat list of learnable weights, stable order.
    std::vector<Parameter *> parameters();
    std::vector<const Parameter *> parameters() const;
    std::size_t parameter_count() const;
};

Model init_model(const ModelConfig &cfg, std::uint64_t seed);

struct FusionVars {
    Var wq, bq, wk, bk, wv, bv, head1_w, head1_b, head2_w, head2_b, flat_w, flat_b;
};

struct ModelVars {
    EncoderVars encoder;
    FusionVars fusion;
};

ModelVars bind(Tape &tape, Model &model);
ModelVars bind_frozen(Tape &tape, const Model &model);

struct CrossAttentionOutput {
    Var z;                     // 1 x d
    std::vector<Var> weights;  // 1 x p per head
};

// q = z_tx Wq + bq; k = z_ts Wk + bk; v = z_ts Wv + bv; z = softmax(q k^T / sqrt(d_head)) v.
CrossAttentionOutput cross_attention(const Var &z_tx, const Var &z_ts, const Var &wq, const Var &bq, const Var &wk,
                                     const Var &bk, const Var &wv, const Var &bv, std::size_t n_heads);

// Normalized-space forecast (1 x h) from a normalized input window.
// `query` is the pooled text vector; it must be present iff the variant uses text.
Var forward(Tape &tape, const ModelVars &vars, const ModelConfig &cfg, const std::vector<double> &x_norm,
            const std::vector<double> *query);

std::vector<double> normalized_input(const WindowSample &sample);

// Full pipeline: normalize -> patchify -> encode -> pool -> cross-attend -> head -> de-normalize.
std::vector<double> forecast_with_text(const Model &model, const WindowSample &sample, const TokenEmbeddingSet &embedding,
                                       PoolingStrategy strategy);
std::vector<double> forecast_without_text(const Model &model, const WindowSample &sample);

} // namespace tfh
