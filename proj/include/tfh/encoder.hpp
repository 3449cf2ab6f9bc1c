#pragma once

#include "tfh/autodiff.hpp"
#include "tfh/data.hpp"
#include "tfh/random.hpp"

#include <cstdint>
#include <vector>

namespace tfh {

struct EncoderConfig {
    std::size_t input_len = 7;
    PatchConfig patch;
    std::size_t d_ts = 64;
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t d_ff = 128;
    Activation activation = Activation::gelu;
    double ln_eps = 1e-5;
    // Kept for config compatibility; any non-zero rate is rejected.
    double dropout = 0.0;

    std::size_t patches() const { return patch_count(input_len, patch); }
    bool operator==(const EncoderConfig &) const = default;
};

void validate(const EncoderConfig &cfg);

struct EncoderLayerParams {
    Parameter ln1_gain, ln1_bias;
    Parameter wq, bq, wk, bk, wv, bv, wo, bo;
    Parameter ln2_gain, ln2_bias;
    Parameter ff1_w, ff1_b, ff2_w, ff2_b;
};

struct EncoderParams {
    Parameter patch_w, patch_b;
    Parameter pos;  // p_max x d_ts learned positions
    std::vector<EncoderLayerParams> layers;

    std::vector<Parameter *> parameters();
    std::vector<const Parameter *> parameters() const;
};

// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero, layer-norm gains one.
EncoderParams init_encoder(const EncoderConfig &cfg, std::uint64_t seed);
std::size_t encoder_parameter_count(const EncoderParams &params);

// Fills a parameter of shape [fan_in, ...] with U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Parameter uniform_parameter(std::string name, Shape shape, std::size_t fan_in, Rng &rng);

struct EncoderLayerVars {
    Var ln1_gain, ln1_bias, wq, bq, wk, bk, wv, bv, wo, bo, ln2_gain, ln2_bias, ff1_w, ff1_b, ff2_w, ff2_b;
};

struct EncoderVars {
    Var patch_w, patch_b, pos;
    std::vector<EncoderLayerVars> layers;
};

// Trainable binding: gradients flow into params on backward().
EncoderVars bind(Tape &tape, EncoderParams &params);
// Records constants, so no backward closures are built.
EncoderVars bind_frozen(Tape &tape, const EncoderParams &params);

// patches: p x patch_len. Returns z_ts, p x d_ts.
Var encode_series(const Var &patches, const EncoderVars &vars, const EncoderConfig &cfg);

// Scaled dot-product attention of q (m x d) over k, v (n x d), split into n_heads column blocks.
struct AttentionOutput {
    Var out;
    std::vector<Var> weights;  // one m x n matrix per head
};
AttentionOutput multi_head_attention(const Var &q, const Var &k, const Var &v, std::size_t n_heads);

// x W + b for x (m x in), W (in x out), b (out).
Var linear(const Var &x, const Var &w, const Var &b);

} // namespace tfh
