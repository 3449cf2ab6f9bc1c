#include "tfh/evaluation.hpp"

#include "tfh/errors.hpp"
#include "tfh/parallel.hpp"
#include "tfh/random.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

namespace tfh {

using nlohmann::json;

namespace {

void check_lengths(std::span<const double> pred, std::span<const double> target, const char *metric) {
    if (pred.size() != target.size())
        throw DimensionError(std::string(metric) + ": length mismatch " + std::to_string(pred.size()) + " vs " +
                             std::to_string(target.size()));
    if (pred.empty()) throw DimensionError(std::string(metric) + ": empty input");
}

} // namespace

double mae(std::span<const double> pred, std::span<const double> target) {
    check_lengths(pred, target, "mae");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::fabs(target[i] - pred[i]);
    return s / static_cast<double>(pred.size());
}

double wape(std::span<const double> pred, std::span<const double> target) {
    check_lengths(pred, target, "wape");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        num += std::fabs(target[i] - pred[i]);
        den += std::fabs(target[i]);
    }
    if (den == 0.0) throw UndefinedMetric("wape is undefined for an all-zero target");
    return num / den;
}

std::string MetricsReport::arm() const {
    return variant == Variant::without_text ? "without_text" : "with_text:" + to_string(pooling.value_or(PoolingStrategy::mean));
}

Predictions predict(const Model &model, std::span<const WindowSample> windows,
                    const std::vector<std::vector<double>> &queries, MetricScale scale, std::size_t threads) {
    const std::size_t h = model.config.horizon;
    Predictions out;
    out.pred.resize(windows.size() * h);
    out.target.resize(windows.size() * h);
    parallel_for(windows.size(), threads, [&](std::size_t i) {
        const auto &w = windows[i];
        if (w.y.size() != h)
            throw DimensionError("window horizon " + std::to_string(w.y.size()) + " does not match model horizon " +
                                 std::to_string(h));
        Tape tape;
        auto vars = bind_frozen(tape, model);
        const auto &y = forward(tape, vars, model.config, normalized_input(w), query_for(model, queries, w)).value();
        for (std::size_t j = 0; j < h; ++j) {
            if (scale == MetricScale::normalized) {
                out.pred[i * h + j] = y[j];
                out.target[i * h + j] = normalize_value(w.y[j], w.norm);
            } else {
                out.pred[i * h + j] = denormalize_value(y[j], w.norm);
                out.target[i * h + j] = w.y[j];
            }
        }
    });
    return out;
}

std::vector<std::vector<double>> pooled_queries(const std::vector<std::string> &channel_ids, const EmbeddingMap &embeddings,
                                                PoolingStrategy strategy) {
    std::vector<std::vector<double>> out;
    for (const auto &id : channel_ids) {
        auto it = embeddings.find(id);
        if (it == embeddings.end()) throw ValidationError("no text embedding for channel '" + id + "'");
        out.push_back(pool(it->second, strategy));
    }
    return out;
}

MetricsReport evaluate_model(const Checkpoint &ckpt, std::span<const WindowSample> test,
                             const std::vector<std::vector<double>> &queries, MetricScale scale, std::uint64_t seed,
                             std::size_t threads) {
    if (test.empty()) throw ValidationError("cannot evaluate on an empty test set");
    const auto &cfg = ckpt.model.config;
    if (cfg.variant == Variant::without_text && !queries.empty())
        throw ValidationError("text-free checkpoint given text queries");
    if (cfg.variant == Variant::with_text) {
        if (queries.empty()) throw ValidationError("text checkpoint needs text embeddings");
        for (const auto &q : queries)
            if (q.size() != cfg.d_tx)
                throw ValidationError("text query width " + std::to_string(q.size()) + " does not match checkpoint d_tx " +
                                      std::to_string(cfg.d_tx));
    }
    const auto p = predict(ckpt.model, test, queries, scale, threads);
    MetricsReport r;
    r.variant = cfg.variant;
    if (cfg.variant == Variant::with_text) r.pooling = cfg.pooling;
    r.horizon = cfg.horizon;
    r.mae = mae(p.pred, p.target);
    r.wape = wape(p.pred, p.target);
    r.n_windows = test.size();
    r.seed = seed;
    r.scale = scale;
    return r;
}

std::vector<bool> mark_best(std::span<const double> values) {
    std::vector<bool> best(values.size(), true);
    for (std::size_t i = 0; i < values.size(); ++i)
        for (std::size_t j = 0; j < values.size(); ++j)
            if (values[j] < values[i]) best[i] = false;
    return best;
}

const AblationCell &AblationReport::cell(std::size_t horizon, const std::string &arm) const {
    for (const auto &c : cells)
        if (c.metrics.horizon == horizon && c.metrics.arm() == arm) return c;
    throw std::out_of_range("no ablation cell for horizon " + std::to_string(horizon) + ", arm " + arm);
}

AblationReport run_ablation(const RawDataset &data, const EmbeddingMap &embeddings, const RunConfig &cfg, std::size_t threads) {
    validate(cfg);
    AblationReport report;
    report.horizons = cfg.horizons;
    report.scale = cfg.scale;
    report.seed = cfg.seed;
    report.primary = cfg.text.strategies.front();
    for (auto s : cfg.text.strategies)
        if (s == cfg.text.strategy) report.primary = s;
    report.arms.push_back("without_text");
    for (auto s : cfg.text.strategies) report.arms.push_back("with_text:" + to_string(s));

    std::size_t d_tx = 0;
    for (const auto &[id, set] : embeddings) d_tx = set.d_tx;
    std::vector<std::vector<std::vector<double>>> queries;
    for (auto s : cfg.text.strategies) queries.push_back(pooled_queries(data.channel_ids, embeddings, s));

    const std::size_t l = cfg.encoder.input_len;
    const TrainConfig tcfg = train_config(cfg);
    const std::uint64_t init_seed = derive_seed(cfg.seed, "init");
    for (auto h : cfg.horizons) {
        const auto splits = split_chronological(data, cfg.data.split, l + h);
        TrainingData td;
        td.train = make_windows(data, splits.train, l, h, cfg.data.window_stride, cfg.data.normalize);
        td.val = make_windows(data, splits.val, l, h, cfg.data.window_stride, cfg.data.normalize);
        const auto test = make_windows(data, splits.test, l, h, cfg.data.window_stride, cfg.data.normalize);

        auto run_arm = [&](Variant variant, PoolingStrategy strategy, const std::vector<std::vector<double>> &q) {
            td.queries = q;
            Model model = init_model(model_config(cfg, h, variant, strategy, d_tx ? d_tx : cfg.text.d_tx), init_seed);
            auto result = train(std::move(model), td, tcfg, {}, threads);
            AblationCell cell;
            cell.metrics = evaluate_model(result.checkpoint, test, q, cfg.scale, cfg.seed, threads);
            cell.epochs_run = result.log.epochs.size();
            cell.best_epoch = result.log.best_epoch;
            cell.early_stopped = result.log.early_stopped;
            report.cells.push_back(cell);
        };
        run_arm(Variant::without_text, PoolingStrategy::mean, {});
        for (std::size_t k = 0; k < cfg.text.strategies.size(); ++k)
            run_arm(Variant::with_text, cfg.text.strategies[k], queries[k]);
    }
    return report;
}

namespace {

double metric_of(const MetricsReport &m, const std::string &metric) {
    if (metric == "mae") return m.mae;
    if (metric == "wape") return m.wape;
    throw std::invalid_argument("unknown metric '" + metric + "'");
}

std::string fmt(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string fixed4(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

} // namespace

json to_json(const AblationReport &report) {
    json cells = json::array();
    for (const auto &c : report.cells) {
        const auto &m = c.metrics;
        cells.push_back({{"variant", to_string(m.variant)},
                         {"pooling", m.pooling ? json(to_string(*m.pooling)) : json(nullptr)},
                         {"arm", m.arm()},
                         {"horizon", m.horizon},
                         {"mae", m.mae},
                         {"wape", m.wape},
                         {"n_windows", m.n_windows},
                         {"seed", m.seed},
                         {"scale", to_string(m.scale)},
                         {"epochs_run", c.epochs_run},
                         {"best_epoch", c.best_epoch},
                         {"early_stopped", c.early_stopped}});
    }
    json comparison = json::object();
    const std::string primary = "with_text:" + to_string(report.primary);
    for (const std::string metric : {"mae", "wape"}) {
        json per_h = json::array();
        for (auto h : report.horizons) {
            const double wo = metric_of(report.cell(h, "without_text").metrics, metric);
            const double wt = metric_of(report.cell(h, primary).metrics, metric);
            const double pair[] = {wo, wt};
            auto best = mark_best(pair);
            json strategies = json::object();
            std::vector<double> sv;
            for (std::size_t a = 1; a < report.arms.size(); ++a) sv.push_back(metric_of(report.cell(h, report.arms[a]).metrics, metric));
            auto sbest = mark_best(sv);
            for (std::size_t a = 1; a < report.arms.size(); ++a)
                strategies[report.arms[a]] = {{"value", sv[a - 1]}, {"best", static_cast<bool>(sbest[a - 1])}};
            per_h.push_back({{"horizon", h},
                             {"without_text", {{"value", wo}, {"best", static_cast<bool>(best[0])}}},
                             {"with_text", {{"value", wt}, {"best", static_cast<bool>(best[1])}}},
                             {"strategies", strategies}});
        }
        comparison[metric] = per_h;
    }
    return {{"horizons", report.horizons}, {"arms", report.arms},        {"primary_strategy", to_string(report.primary)},
            {"scale", to_string(report.scale)}, {"seed", report.seed}, {"cells", cells},
            {"comparison", comparison}};
}

AblationReport ablation_from_json(const json &j) {
    try {
        AblationReport r;
        r.horizons = j.at("horizons").get<std::vector<std::size_t>>();
        r.arms = j.at("arms").get<std::vector<std::string>>();
        r.primary = pooling_from_string(j.at("primary_strategy").get<std::string>());
        r.scale = scale_from_string(j.at("scale").get<std::string>());
        r.seed = j.at("seed").get<std::uint64_t>();
        for (const auto &c : j.at("cells")) {
            AblationCell cell;
            auto &m = cell.metrics;
            m.variant = variant_from_string(c.at("variant").get<std::string>());
            if (!c.at("pooling").is_null()) m.pooling = pooling_from_string(c.at("pooling").get<std::string>());
            m.horizon = c.at("horizon").get<std::size_t>();
            m.mae = c.at("mae").get<double>();
            m.wape = c.at("wape").get<double>();
            m.n_windows = c.at("n_windows").get<std::size_t>();
            m.seed = c.at("seed").get<std::uint64_t>();
            m.scale = scale_from_string(c.at("scale").get<std::string>());
            cell.epochs_run = c.at("epochs_run").get<std::size_t>();
            cell.best_epoch = c.at("best_epoch").get<std::size_t>();
            cell.early_stopped = c.at("early_stopped").get<bool>();
            r.cells.push_back(cell);
        }
        for (auto h : r.horizons)
            for (const auto &a : r.arms) (void)r.cell(h, a);
        return r;
    } catch (const json::exception &e) {
        throw ValidationError(std::string("malformed report: ") + e.what());
    } catch (const std::out_of_range &e) {
        throw ValidationError(std::string("incomplete report: ") + e.what());
    }
}

std::string metric_csv(const AblationReport &report, const std::string &metric) {
    std::string out = "variant";
    for (auto h : report.horizons) out += "," + std::to_string(h);
    out += "\n";
    for (const auto &arm : report.arms) {
        out += arm;
        for (auto h : report.horizons) out += "," + fmt(metric_of(report.cell(h, arm).metrics, metric));
        out += "\n";
    }
    return out;
}

std::string comparison_markdown(const AblationReport &report) {
    const std::string primary = "with_text:" + to_string(report.primary);
    std::string out = "Metrics on the " + to_string(report.scale) + " scale, seed " + std::to_string(report.seed) + ".\n\n";
    auto table = [&](const std::vector<std::string> &arms) {
        std::string t = "| variant |";
        for (const std::string metric : {"MAE", "WAPE"})
            for (auto h : report.horizons) t += " " + metric + " h=" + std::to_string(h) + " |";
        t += "\n|---|";
        for (std::size_t i = 0; i < 2 * report.horizons.size(); ++i) t += "---|";
        t += "\n";
        std::vector<std::vector<std::string>> rows(arms.size());
        for (const std::string metric : {"mae", "wape"})
            for (auto h : report.horizons) {
                std::vector<double> v;
                for (const auto &a : arms) v.push_back(metric_of(report.cell(h, a).metrics, metric));
                auto best = mark_best(v);
                for (std::size_t i = 0; i < arms.size(); ++i)
                    rows[i].push_back(best[i] ? "**" + fixed4(v[i]) + "**" : fixed4(v[i]));
            }
        for (std::size_t i = 0; i < arms.size(); ++i) {
            t += "| " + arms[i] + " |";
            for (const auto &c : rows[i]) t += " " + c + " |";
            t += "\n";
        }
        return t;
    };
    out += "## Text vs no text\n\n" + table({"without_text", primary});
    out += "\n## Pooling strategies\n\n" + table(std::vector<std::string>(report.arms.begin() + 1, report.arms.end()));
    return out;
}

void write_report(const AblationReport &report, const std::filesystem::path &dir) {
    std::filesystem::create_directories(dir);
    auto put = [&](const std::string &name, const std::string &content) {
        std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
        out << content;
    };
    put("report.json", to_json(report).dump(2) + "\n");
    put("mae.csv", metric_csv(report, "mae"));
    put("wape.csv", metric_csv(report, "wape"));
    put("comparison.md", comparison_markdown(report));
}

} // namespace tfh
