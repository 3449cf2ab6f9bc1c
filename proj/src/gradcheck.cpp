#include "tfh/gradcheck.hpp"

#include "tfh/fusion.hpp"
#include "tfh/random.hpp"
#include "tfh/training.hpp"

#include <algorithm>
#include <cmath>

namespace tfh {

double GradCheckReport::max_rel_error() const {
    double m = 0.0;
    for (const auto &e : entries) m = std::max(m, e.max_rel_error);
    return m;
}

namespace {

double rel_error(double a, double n) { return std::fabs(a - n) / std::max({std::fabs(a), std::fabs(n), kGradCheckFloor}); }

double eval_loss(const std::vector<Tensor> &inputs, const LossBuilder &loss) {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto &t : inputs) leaves.push_back(tape.constant(t));
    return loss(tape, leaves).value().item();
}

Tensor random_tensor(Shape shape, Rng &rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto &v : t.data()) v = u(rng);
    return t;
}

// Random magnitudes in [0.1, 1] with random signs, keeping ReLU/abs away from their kinks.
Tensor away_from_zero(Shape shape, Rng &rng) {
    Tensor t = random_tensor(std::move(shape), rng, 0.1, 1.0);
    std::bernoulli_distribution sign(0.5);
    for (auto &v : t.data())
        if (sign(rng)) v = -v;
    return t;
}

// Weighted sum so that every output entry carries a distinct gradient.
Var weighted_sum(Tape &tape, const Var &out, std::uint64_t seed) {
    Rng rng(seed);
    return sum_all(mul(out, tape.constant(random_tensor(out.shape(), rng))));
}

} // namespace

GradCheckEntry check_gradients(const std::string &name, const std::vector<Tensor> &inputs, const LossBuilder &loss, double step) {
    GradCheckEntry entry{name, 0, 0.0};
    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        std::vector<Var> leaves;
        for (const auto &t : inputs) leaves.push_back(tape.variable(t));
        tape.backward(loss(tape, leaves));
        for (const auto &v : leaves) {
            auto g = tape.grad(v);
            analytic.emplace_back(g.begin(), g.end());
            analytic.back().resize(v.value().size(), 0.0);
        }
    }
    std::vector<Tensor> probe = inputs;
    for (std::size_t i = 0; i < probe.size(); ++i) {
        for (std::size_t k = 0; k < probe[i].size(); ++k) {
            const double orig = probe[i][k];
            probe[i][k] = orig + step;
            const double up = eval_loss(probe, loss);
            probe[i][k] = orig - step;
            const double down = eval_loss(probe, loss);
            probe[i][k] = orig;
            const double numeric = (up - down) / (2.0 * step);
            entry.max_rel_error = std::max(entry.max_rel_error, rel_error(analytic[i][k], numeric));
            ++entry.checked;
        }
    }
    return entry;
}

namespace {

GradCheckEntry check_model(const std::string &name, Variant variant, std::uint64_t seed) {
    ModelConfig cfg;
    cfg.encoder.input_len = 7;
    cfg.encoder.d_ts = 8;
    cfg.encoder.n_layers = 1;
    cfg.encoder.n_heads = 2;
    cfg.encoder.d_ff = 16;
    cfg.horizon = 3;
    cfg.d_tx = 6;
    cfg.variant = variant;
    Model model = init_model(cfg, seed);
    // Non-trivial gains and biases so their gradients are exercised too.
    Rng rng(derive_seed(seed, "gradcheck-perturb"));
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (auto *p : model.parameters())
        for (auto &v : p->value.data()) v += 0.1 * u(rng);

    std::vector<std::vector<double>> inputs, targets, queries;
    for (int s = 0; s < 2; ++s) {
        std::vector<double> x(cfg.encoder.input_len), y(cfg.horizon), q(cfg.d_tx);
        for (auto &v : x) v = 2.0 * u(rng);
        for (auto &v : y) v = 2.0 * u(rng);
        for (auto &v : q) v = 2.0 * u(rng);
        inputs.push_back(x);
        targets.push_back(y);
        queries.push_back(q);
    }

    auto params = model.parameters();
    std::vector<Tensor> values;
    for (auto *p : params) values.push_back(p->value);

    LossBuilder loss = [&](Tape &tape, const std::vector<Var> &leaves) {
        // Rebind the leaves as model variables, in Model::parameters() order.
        ModelVars vars;
        std::size_t i = 0;
        auto next = [&] { return leaves[i++]; };
        vars.encoder.patch_w = next();
        vars.encoder.patch_b = next();
        vars.encoder.pos = next();
        for (std::size_t l = 0; l < cfg.encoder.n_layers; ++l) {
            EncoderLayerVars L;
            for (Var *v : {&L.ln1_gain, &L.ln1_bias, &L.wq, &L.bq, &L.wk, &L.bk, &L.wv, &L.bv, &L.wo, &L.bo, &L.ln2_gain,
                           &L.ln2_bias, &L.ff1_w, &L.ff1_b, &L.ff2_w, &L.ff2_b})
                *v = next();
            vars.encoder.layers.push_back(L);
        }
        auto &f = vars.fusion;
        if (variant == Variant::with_text) {
            for (Var *v : {&f.wq, &f.bq, &f.wk, &f.bk, &f.wv, &f.bv, &f.head1_w, &f.head1_b, &f.head2_w, &f.head2_b}) *v = next();
        } else {
            f.flat_w = next();
            f.flat_b = next();
        }
        std::vector<Var> preds;
        std::vector<double> flat_targets;
        for (std::size_t s = 0; s < inputs.size(); ++s) {
            preds.push_back(forward(tape, vars, cfg, inputs[s], variant == Variant::with_text ? &queries[s] : nullptr));
            flat_targets.insert(flat_targets.end(), targets[s].begin(), targets[s].end());
        }
        Var target = tape.constant(Tensor::matrix(inputs.size(), cfg.horizon, flat_targets));
        return compute_loss(concat_rows(preds), target, LossKind::mse);
    };
    return check_gradients(name, values, loss);
}

} // namespace

GradCheckReport run_grad_check(std::uint64_t seed) {
    GradCheckReport report;
    Rng rng(derive_seed(seed, "gradcheck"));
    auto rt = [&](Shape s) { return random_tensor(std::move(s), rng); };
    std::uint64_t w = derive_seed(seed, "weights");
    auto unary = [&](const std::string &name, Tensor x, auto op) {
        report.entries.push_back(check_gradients(name, {std::move(x)}, [op, w](Tape &t, const std::vector<Var> &v) {
            return weighted_sum(t, op(v[0]), w);
        }));
    };
    auto binary = [&](const std::string &name, Tensor a, Tensor b, auto op) {
        report.entries.push_back(check_gradients(name, {std::move(a), std::move(b)}, [op, w](Tape &t, const std::vector<Var> &v) {
            return weighted_sum(t, op(v[0], v[1]), w);
        }));
    };

    binary("matmul", rt({3, 4}), rt({4, 5}), [](const Var &a, const Var &b) { return matmul(a, b); });
    binary("add", rt({3, 4}), rt({3, 4}), [](const Var &a, const Var &b) { return add(a, b); });
    binary("sub", rt({3, 4}), rt({3, 4}), [](const Var &a, const Var &b) { return sub(a, b); });
    binary("mul", rt({3, 4}), rt({3, 4}), [](const Var &a, const Var &b) { return mul(a, b); });
    binary("add_broadcast", rt({3, 4}), rt({4}), [](const Var &a, const Var &b) { return add(a, b); });
    binary("mul_broadcast", rt({3, 4}), rt({4}), [](const Var &a, const Var &b) { return mul(a, b); });
    unary("scale", rt({2, 3}), [](const Var &a) { return scale(a, -1.7); });
    unary("abs", away_from_zero({2, 5}, rng), [](const Var &a) { return abs(a); });
    unary("relu", away_from_zero({2, 5}, rng), [](const Var &a) { return relu(a); });
    unary("gelu", rt({2, 5}), [](const Var &a) { return gelu(a); });
    unary("softmax_lastdim", rt({3, 4}), [](const Var &a) { return softmax_lastdim(a); });
    report.entries.push_back(check_gradients("layer_norm", {rt({3, 6}), rt({6}), rt({6})}, [w](Tape &t, const std::vector<Var> &v) {
        return weighted_sum(t, layer_norm(v[0], v[1], v[2], 1e-5), w);
    }));
    unary("mean_axis0", rt({3, 4}), [](const Var &a) { return mean_axis(a, 0); });
    unary("mean_axis1", rt({3, 4}), [](const Var &a) { return mean_axis(a, 1); });
    unary("sum_all", rt({3, 4}), [](const Var &a) { return sum_all(a); });
    unary("mean_all", rt({3, 4}), [](const Var &a) { return mean_all(a); });
    unary("transpose", rt({3, 4}), [](const Var &a) { return transpose(a); });
    unary("reshape", rt({3, 4}), [](const Var &a) { return reshape(a, {2, 6}); });
    unary("slice_cols", rt({3, 5}), [](const Var &a) { return slice_cols(a, 1, 4); });
    binary("concat_cols", rt({3, 2}), rt({3, 4}), [](const Var &a, const Var &b) { return concat_cols({a, b}); });
    binary("concat_rows", rt({2, 4}), rt({1, 4}), [](const Var &a, const Var &b) { return concat_rows({a, b}); });
    report.entries.push_back(check_gradients("attention", {rt({2, 4}), rt({3, 4}), rt({3, 4})}, [w](Tape &t, const std::vector<Var> &v) {
        return weighted_sum(t, multi_head_attention(v[0], v[1], v[2], 2).out, w);
    }));
    binary("mse_loss", rt({2, 3}), rt({2, 3}), [](const Var &a, const Var &b) { return compute_loss(a, b, LossKind::mse); });
    {
        // Targets offset from the predictions by at least 0.1, away from the |.| kink.
        Tensor pred = rt({2, 3});
        Tensor target = away_from_zero({2, 3}, rng);
        for (std::size_t i = 0; i < target.size(); ++i) target[i] += pred[i];
        binary("mae_loss", pred, target, [](const Var &a, const Var &b) { return compute_loss(a, b, LossKind::mae); });
    }

    report.entries.push_back(check_model("model_with_text", Variant::with_text, derive_seed(seed, "model-wt")));
    report.entries.push_back(check_model("model_without_text", Variant::without_text, derive_seed(seed, "model-wo")));
    return report;
}

} // namespace tfh
