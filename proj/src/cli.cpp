#include "tfh/cli.hpp"

#include "tfh/checkpoint.hpp"
#include "tfh/errors.hpp"
#include "tfh/evaluation.hpp"
#include "tfh/gradcheck.hpp"
#include "tfh/parallel.hpp"
#include "tfh/random.hpp"
#include "tfh/synthetic.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace tfh::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string horizons;
    std::string out;
    std::string strategy;
    bool no_text = false;
};

void add_common(CLI::App *cmd, Overrides &o) {
    cmd->add_option("--config", o.config, "JSON run configuration");
    cmd->add_option("--seed", o.seed, "root seed");
    cmd->add_option("--horizons", o.horizons, "comma-separated horizons, e.g. 7,14");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--strategy", o.strategy, "pooling strategy: mean, bos or cls");
    cmd->add_flag("--no-text", o.no_text, "use the text-free model");
}

std::vector<std::size_t> parse_horizons(const std::string &s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const long v = std::stol(item, &used);
            if (used != item.size() || v <= 0) throw std::invalid_argument(item);
            out.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception &) {
            throw ValidationError("--horizons: '" + item + "' is not a positive integer");
        }
    }
    if (out.empty()) throw ValidationError("--horizons: list must not be empty");
    return out;
}

// Relative data paths in a config file resolve against the file's directory.
std::string resolve_path(const std::string &p, const Overrides &o) {
    if (p.empty() || fs::path(p).is_absolute() || o.config.empty()) return p;
    return (fs::path(o.config).parent_path() / p).string();
}

RunConfig resolve_config(const Overrides &o) {
    RunConfig cfg = o.config.empty() ? parse_config(json::object()) : load_config(o.config);
    if (o.seed) cfg.seed = *o.seed;
    if (!o.horizons.empty()) cfg.horizons = parse_horizons(o.horizons);
    cfg.out = o.out.empty() ? resolve_path(cfg.out, o) : o.out;
    if (!o.strategy.empty()) cfg.text.strategy = pooling_from_string(o.strategy);
    if (o.no_text) cfg.text.use_text = false;
    validate(cfg);
    return cfg;
}

struct Inputs {
    RawDataset data;
    EmbeddingMap embeddings;
};

Inputs load_inputs(const RunConfig &cfg, const Overrides &o, bool need_text) {
    if (cfg.data.series.empty()) throw ValidationError("data.series: no series CSV configured");
    const auto series = resolve_path(cfg.data.series, o);
    const auto texts = resolve_path(cfg.data.texts, o);
    Inputs in;
    in.data = load_dataset(series, texts.empty() ? std::nullopt : std::optional<fs::path>(texts));
    if (!need_text) return in;
    if (!cfg.data.embeddings.empty()) {
        in.embeddings = read_embedding_file(resolve_path(cfg.data.embeddings, o));
    } else if (!in.data.texts.empty()) {
        validate_dataset(in.data, true);
        const auto seed = derive_seed(cfg.seed, "hash-embed");
        for (const auto &[id, text] : in.data.texts) in.embeddings.emplace(id, hash_embed_text(text, cfg.text.d_tx, seed, id));
    } else {
        throw ValidationError("text is enabled but neither data.embeddings nor data.texts is configured");
    }
    for (const auto &id : in.data.channel_ids)
        if (!in.embeddings.contains(id)) throw ValidationError("no text embedding for channel '" + id + "'");
    return in;
}

std::size_t embedding_width(const EmbeddingMap &m) { return m.empty() ? 0 : m.begin()->second.d_tx; }

void write_text(const fs::path &path, const std::string &content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
}

std::string checkpoint_name(std::size_t h, Variant v, PoolingStrategy s) {
    return "model_h" + std::to_string(h) + "_" + (v == Variant::without_text ? "without_text" : "with_text_" + to_string(s)) + ".tfhc";
}

int cmd_train(const Overrides &o, std::ostream &out) {
    const RunConfig cfg = resolve_config(o);
    const bool text = cfg.text.use_text;
    auto in = load_inputs(cfg, o, text);
    const std::size_t h = cfg.horizons.front();
    const std::size_t l = cfg.encoder.input_len;
    const auto splits = split_chronological(in.data, cfg.data.split, l + h);
    TrainingData td;
    td.train = make_windows(in.data, splits.train, l, h, cfg.data.window_stride, cfg.data.normalize);
    td.val = make_windows(in.data, splits.val, l, h, cfg.data.window_stride, cfg.data.normalize);
    const Variant variant = text ? Variant::with_text : Variant::without_text;
    if (text) td.queries = pooled_queries(in.data.channel_ids, in.embeddings, cfg.text.strategy);
    Model model = init_model(model_config(cfg, h, variant, cfg.text.strategy, text ? embedding_width(in.embeddings) : cfg.text.d_tx),
                             derive_seed(cfg.seed, "init"));
    TrainHooks hooks;
    hooks.on_epoch = [](const EpochLog &e) {
        std::cerr << "epoch " << e.epoch << " train_loss " << e.train_loss << " val_loss " << e.val_loss << "\n";
    };
    auto result = train(std::move(model), td, train_config(cfg), hooks, worker_count());
    fs::create_directories(cfg.out);
    const auto ckpt_path = fs::path(cfg.out) / checkpoint_name(h, variant, cfg.text.strategy);
    save_checkpoint(result.checkpoint, ckpt_path);
    json log = json::array();
    for (const auto &e : result.log.epochs) log.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
    write_text(fs::path(cfg.out) / "train_log.json",
               json{{"epochs", log}, {"best_epoch", result.log.best_epoch}, {"early_stopped", result.log.early_stopped},
                    {"checkpoint", ckpt_path.string()}}
                       .dump(2) + "\n");
    out << "checkpoint " << ckpt_path.string() << " (best epoch " << result.log.best_epoch << ", val loss "
        << result.checkpoint.val_history[result.log.best_epoch - 1] << ")\n";
    return kExitOk;
}

int cmd_evaluate(const Overrides &o, const std::string &checkpoint, std::ostream &out) {
    const RunConfig cfg = resolve_config(o);
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    const auto &mc = ckpt.model.config;
    const bool text = mc.variant == Variant::with_text;
    auto in = load_inputs(cfg, o, text);
    const std::size_t l = mc.encoder.input_len, h = mc.horizon;
    const auto splits = split_chronological(in.data, cfg.data.split, l + h);
    const auto test = make_windows(in.data, splits.test, l, h, cfg.data.window_stride, cfg.data.normalize);
    std::vector<std::vector<double>> queries;
    if (text) queries = pooled_queries(in.data.channel_ids, in.embeddings, mc.pooling);
    const auto r = evaluate_model(ckpt, test, queries, cfg.scale, cfg.seed, worker_count());
    const json j{{"arm", r.arm()},     {"horizon", r.horizon},     {"mae", r.mae},   {"wape", r.wape},
                 {"n_windows", r.n_windows}, {"seed", r.seed}, {"scale", to_string(r.scale)}};
    fs::create_directories(cfg.out);
    write_text(fs::path(cfg.out) / "metrics.json", j.dump(2) + "\n");
    out << r.arm() << " h=" << r.horizon << " mae=" << r.mae << " wape=" << r.wape << " (" << to_string(r.scale) << " scale, "
        << r.n_windows << " windows)\n";
    return kExitOk;
}

int cmd_ablate(const Overrides &o, std::ostream &out) {
    const RunConfig cfg = resolve_config(o);
    auto in = load_inputs(cfg, o, true);
    const auto report = run_ablation(in.data, in.embeddings, cfg, worker_count());
    write_report(report, cfg.out);
    out << comparison_markdown(report);
    return kExitOk;
}

int cmd_gen_synthetic(SyntheticSpec spec, const std::string &dir, std::ostream &out) {
    const auto syn = generate(spec);
    fs::create_directories(dir);
    write_text(fs::path(dir) / "series.csv", format_series_csv(syn.dataset));
    write_text(fs::path(dir) / "texts.jsonl", format_text_sidecar(syn.dataset));
    write_embedding_file(syn.embeddings, fs::path(dir) / "embeddings.tfhe");
    RunConfig cfg = synthetic_run_config(spec);
    cfg.data.series = "series.csv";
    cfg.data.texts = "texts.jsonl";
    cfg.data.embeddings = "embeddings.tfhe";
    cfg.out = "run";
    write_text(fs::path(dir) / "config.json", to_json(cfg).dump(2) + "\n");
    const json meta{{"spec", to_json(spec)},
                    {"oracle_mae",
                     {{"scale", "normalized"},
                      {"knows_regime", oracle_mae(spec, true)},
                      {"regime_marginal", oracle_mae(spec, false)}}}};
    write_text(fs::path(dir) / "synthetic.json", meta.dump(2) + "\n");
    out << "wrote " << spec.channels << " channels x " << syn.dataset.length() << " steps to " << dir << "\n";
    return kExitOk;
}

int cmd_grad_check(std::uint64_t seed, std::ostream &out) {
    const auto report = run_grad_check(seed);
    for (const auto &e : report.entries)
        out << e.name << ": " << e.checked << " partials, max rel. error " << e.max_rel_error << "\n";
    const double worst = report.max_rel_error();
    out << "max relative error " << worst << (worst < 1e-4 ? " (ok)" : " (FAILED, threshold 1e-4)") << "\n";
    return worst < 1e-4 ? kExitOk : kExitRuntime;
}

int cmd_export_report(const std::string &report_path, const std::string &dir, std::ostream &out) {
    std::ifstream in(report_path);
    if (!in) throw ValidationError("cannot open report " + report_path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error &e) {
        throw ValidationError(std::string("report is not valid JSON: ") + e.what());
    }
    const auto report = ablation_from_json(j);
    fs::create_directories(dir);
    write_text(fs::path(dir) / "mae.csv", metric_csv(report, "mae"));
    write_text(fs::path(dir) / "wape.csv", metric_csv(report, "wape"));
    write_text(fs::path(dir) / "comparison.md", comparison_markdown(report));
    out << comparison_markdown(report);
    return kExitOk;
}

} // namespace

int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    CLI::App app{"Text-fused high-dimensional time series forecasting", "tfh"};
    app.require_subcommand(1);

    Overrides o;
    auto *train_cmd = app.add_subcommand("train", "train one model variant on the first configured horizon");
    add_common(train_cmd, o);

    std::string checkpoint;
    auto *eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint on the test split");
    add_common(eval_cmd, o);
    eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();

    auto *ablate_cmd = app.add_subcommand("ablate", "with/without-text and pooling-strategy ablation");
    add_common(ablate_cmd, o);

    SyntheticSpec spec;
    std::string syn_out = "synthetic";
    auto *gen_cmd = app.add_subcommand("gen-synthetic", "write the text-conditioned synthetic benchmark");
    gen_cmd->add_option("--seed", spec.seed, "generator seed");
    gen_cmd->add_option("--out", syn_out, "output directory");
    gen_cmd->add_option("--channels", spec.channels, "channel count");
    gen_cmd->add_option("--regimes", spec.regimes, "regime count (slopes spread evenly over [-1, 1] unless --slopes)");
    gen_cmd->add_option("--slopes", spec.slopes, "one continuation slope per regime")->delimiter(',');
    gen_cmd->add_option("--input-len", spec.input_len, "input window length");
    gen_cmd->add_option("--horizon", spec.horizon, "forecast horizon");
    gen_cmd->add_option("--periods", spec.periods, "periods per channel");
    gen_cmd->add_option("--noise", spec.noise_sigma, "Gaussian noise sigma");
    gen_cmd->add_option("--d-tx", spec.d_tx, "text embedding width");

    std::uint64_t gc_seed = 0;
    auto *gc_cmd = app.add_subcommand("grad-check", "finite-difference check of every op and the tiny model");
    gc_cmd->add_option("--seed", gc_seed, "seed for the random test inputs");

    std::string report_path, export_out;
    auto *export_cmd = app.add_subcommand("export-report", "re-emit CSV and Markdown tables from report.json");
    export_cmd->add_option("--report", report_path, "report.json written by ablate")->required();
    export_cmd->add_option("--out", export_out, "output directory")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp &) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError &e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitValidation;
    }

    try {
        if (*train_cmd) return cmd_train(o, out);
        if (*eval_cmd) return cmd_evaluate(o, checkpoint, out);
        if (*ablate_cmd) return cmd_ablate(o, out);
        if (*gen_cmd) {
            if (gen_cmd->count("--regimes") && !gen_cmd->count("--slopes")) {
                spec.slopes.clear();
                for (std::size_t k = 0; k < spec.regimes; ++k)
                    spec.slopes.push_back(spec.regimes == 1 ? 0.0 : -1.0 + 2.0 * static_cast<double>(k) / static_cast<double>(spec.regimes - 1));
            }
            return cmd_gen_synthetic(spec, syn_out, out);
        }
        if (*gc_cmd) return cmd_grad_check(gc_seed, out);
        if (*export_cmd) return cmd_export_report(report_path, export_out, out);
    } catch (const ValidationError &e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception &e) {
        err << "runtime failure: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitValidation;
}

int run(int argc, char **argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

} // namespace tfh::cli
