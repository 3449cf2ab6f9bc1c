#include <doctest.h>

#include "tfh/errors.hpp"
#include "tfh/evaluation.hpp"
#include "tfh/synthetic.hpp"

#include "helpers.hpp"

#include <cmath>

using namespace tfh;

namespace {

using Vec = std::vector<double>;

double oracle_mae(const Vec &p, const Vec &t) {
    long double s = 0.0L;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::fabs((long double)t[i] - (long double)p[i]);
    return double(s / p.size());
}

double oracle_wape(const Vec &p, const Vec &t) {
    long double num = 0.0L, den = 0.0L;
    for (std::size_t i = 0; i < p.size(); ++i) {
        num += std::fabs((long double)t[i] - (long double)p[i]);
        den += std::fabs((long double)t[i]);
    }
    return double(num / den);
}

Vec random_vec(std::size_t n, Rng &rng) {
    std::normal_distribution<double> g(0.0, 3.0);
    Vec v(n);
    for (auto &x : v) x = g(rng);
    return v;
}

// Small synthetic problem with a tiny model, cheap enough for unit tests.
RunConfig tiny_run(const SyntheticSpec &spec) {
    auto cfg = synthetic_run_config(spec);
    cfg.encoder.d_ts = 8;
    cfg.encoder.n_layers = 1;
    cfg.encoder.n_heads = 2;
    cfg.encoder.d_ff = 16;
    cfg.train.max_epochs = 2;
    cfg.train.lr = 1e-3;
    return cfg;
}

SyntheticSpec tiny_spec() {
    SyntheticSpec spec;
    spec.channels = 8;
    spec.regimes = 2;
    spec.slopes = {-1.0, 1.0};
    spec.horizon = 5;
    spec.periods = 10;
    spec.d_tx = 8;
    return spec;
}

} // namespace

TEST_CASE("metric examples") {
    CHECK(mae(Vec{1, 2}, Vec{1, 2}) == 0.0);
    CHECK(mae(Vec{0, 2}, Vec{1, 1}) == 1.0);
    CHECK(wape(Vec{1, 3}, Vec{2, 2}) == 0.5);
    CHECK(wape(Vec{-4, 7}, Vec{-4, 7}) == 0.0);
    CHECK_THROWS_AS(wape(Vec{1, 1}, Vec{0, 0}), UndefinedMetric);
    CHECK_THROWS_AS(mae(Vec{1, 1}, Vec{1}), DimensionError);
    CHECK_THROWS_AS(mae(Vec{}, Vec{}), DimensionError);
    CHECK(wape(Vec{2, 6}, Vec{4, 4}) == wape(Vec{1, 3}, Vec{2, 2}));
}

TEST_CASE("metrics match direct summation on random vectors") {
    Rng rng(30);
    std::uniform_real_distribution<double> alpha(0.01, 100.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng() % 200;
        const auto p = random_vec(n, rng), t = random_vec(n, rng);
        CHECK(std::fabs(mae(p, t) - oracle_mae(p, t)) <= 1e-12 * std::max(1.0, oracle_mae(p, t)));
        CHECK(std::fabs(wape(p, t) - oracle_wape(p, t)) <= 1e-12 * std::max(1.0, oracle_wape(p, t)));
        CHECK(mae(p, t) == mae(t, p));

        const double a = alpha(rng);
        Vec ap = p, at = t;
        for (auto &v : ap) v *= a;
        for (auto &v : at) v *= a;
        CHECK(std::fabs(wape(ap, at) - wape(p, t)) <= 1e-12 * std::max(1.0, wape(p, t)));
        CHECK(std::fabs(mae(ap, at) - a * mae(p, t)) <= 1e-12 * std::max(1.0, a * mae(p, t)));
    }
}

TEST_CASE("best marking") {
    CHECK(mark_best(Vec{0.3464, 0.3367}) == std::vector<bool>{false, true});
    CHECK(mark_best(Vec{0.6382, 0.6474}) == std::vector<bool>{true, false});
    CHECK(mark_best(Vec{0.5, 0.5}) == std::vector<bool>{true, true});
    CHECK(mark_best(Vec{0.7, 0.2, 0.2}) == std::vector<bool>{false, true, true});
}

TEST_CASE("a memorizable task is learned") {
    // Every window is the same ramp followed by a flat continuation.
    RawDataset d;
    d.channel_ids = {"flat"};
    const Vec period = {0, 1, 2, 3, 4, 5, 6, 6, 6, 6};
    for (std::size_t t = 0; t < 300; ++t) {
        d.timestamps.push_back(std::to_string(t));
        d.values.push_back(period[t % period.size()]);
    }
    TrainingData data;
    data.train = make_windows(d, {0, 200}, 7, 3, 10);
    data.val = make_windows(d, {200, 300}, 7, 3, 10);
    ModelConfig cfg;
    cfg.encoder.d_ts = 8;
    cfg.encoder.n_layers = 1;
    cfg.encoder.n_heads = 2;
    cfg.encoder.d_ff = 16;
    cfg.horizon = 3;
    cfg.variant = Variant::without_text;
    TrainConfig tc;
    tc.lr = 1e-2;
    tc.max_epochs = 300;
    tc.early_stop_delta = 1e-12;
    tc.batch_size = 8;
    const auto r = train(init_model(cfg, 1), data, tc);
    const auto report = evaluate_model(r.checkpoint, data.val, {}, MetricScale::raw, 1);
    CHECK(report.mae < 0.05);
    CHECK(report.n_windows == 10);
}

TEST_CASE("evaluation agrees with recomputation from forecasts") {
    const auto spec = tiny_spec();
    const auto syn = generate(spec);
    const auto run = tiny_run(spec);
    const auto splits = split_chronological(syn.dataset, run.data.split, spec.input_len + spec.horizon);
    const auto stride = run.data.window_stride;
    TrainingData data{make_windows(syn.dataset, splits.train, 7, 5, stride), make_windows(syn.dataset, splits.val, 7, 5, stride),
                      pooled_queries(syn.dataset.channel_ids, syn.embeddings, PoolingStrategy::bos)};
    const auto test = make_windows(syn.dataset, splits.test, 7, 5, stride);
    auto cfg = model_config(run, 5, Variant::with_text, PoolingStrategy::bos, spec.d_tx);
    const auto r = train(init_model(cfg, 2), data, train_config(run));

    for (auto scale : {MetricScale::normalized, MetricScale::raw}) {
        const auto report = evaluate_model(r.checkpoint, test, data.queries, scale, 9);
        CHECK(report == evaluate_model(r.checkpoint, test, data.queries, scale, 9, 4));
        CHECK(report.pooling == PoolingStrategy::bos);
        CHECK(report.n_windows == test.size());

        const auto dumped = predict(r.checkpoint.model, test, data.queries, scale);
        CHECK(std::fabs(report.mae - oracle_mae(dumped.pred, dumped.target)) <= 1e-12);
        CHECK(std::fabs(report.wape - oracle_wape(dumped.pred, dumped.target)) <= 1e-12);

        Vec pred, target;
        for (const auto &w : test) {
            const auto &emb = syn.embeddings.at(syn.dataset.channel_ids[w.channel_index]);
            const auto y = forecast_with_text(r.checkpoint.model, w, emb, PoolingStrategy::bos);
            for (std::size_t j = 0; j < y.size(); ++j) {
                const double div = scale == MetricScale::normalized ? w.norm.divisor() : 1.0;
                pred.push_back(y[j] / div);
                target.push_back(w.y[j] / div);
            }
        }
        CHECK(report.mae == doctest::Approx(oracle_mae(pred, target)).epsilon(1e-9));
    }

    CHECK_THROWS_AS(evaluate_model(r.checkpoint, test, {}, MetricScale::raw, 0), ValidationError);
    CHECK_THROWS_AS(evaluate_model(r.checkpoint, {}, data.queries, MetricScale::raw, 0), ValidationError);
}

TEST_CASE("ablation covers every horizon and arm") {
    const auto spec = tiny_spec();
    const auto syn = generate(spec);
    auto run = tiny_run(spec);
    run.horizons = {3, 5};
    const auto report = run_ablation(syn.dataset, syn.embeddings, run);
    CHECK(report.arms == std::vector<std::string>{"without_text", "with_text:mean", "with_text:bos", "with_text:cls"});
    REQUIRE(report.cells.size() == 8);
    for (std::size_t h : run.horizons) {
        for (const auto &arm : report.arms) {
            const auto &c = report.cell(h, arm);
            CHECK(c.metrics.horizon == h);
            CHECK(c.metrics.arm() == arm);
            CHECK(std::isfinite(c.metrics.mae));
            CHECK(std::isfinite(c.metrics.wape));
            CHECK(c.epochs_run >= 1);
        }
    }
    CHECK_THROWS(report.cell(7, "without_text"));

    const auto back = ablation_from_json(to_json(report));
    CHECK(to_json(back) == to_json(report));

    const auto csv = metric_csv(report, "mae");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
    CHECK(csv.rfind("variant,3,5\n", 0) == 0);
    const auto md = comparison_markdown(report);
    CHECK(md.find("**") != std::string::npos);

    const test::TempDir tmp("tfh_test_report");
    write_report(report, tmp.path());
    for (const char *f : {"report.json", "mae.csv", "wape.csv", "comparison.md"})
        CHECK(std::filesystem::exists(tmp / f));
}
