#include <doctest.h>

#include "tfh/cli.hpp"
#include "tfh/config.hpp"
#include "tfh/errors.hpp"
#include "tfh/evaluation.hpp"

#include "helpers.hpp"

#include <sstream>

using namespace tfh;
using nlohmann::json;
using tfh::test::message_of;
using tfh::test::read_file;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result tfh_cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

const std::filesystem::path kSource = TFH_SOURCE_DIR;

} // namespace

TEST_CASE("config parsing") {
    SUBCASE("empty object gives defaults") {
        const auto cfg = parse_config(json::object());
        CHECK(cfg == RunConfig{});
        CHECK(cfg.encoder.input_len == 7);
        CHECK(cfg.train.max_epochs == 100);
        CHECK(cfg.train.early_stop_delta == 1e-4);
    }
    SUBCASE("invalid values name their key") {
        CHECK(message_of([] { parse_config(json::parse(R"({"train": {"max_epochs": 0}})")); }).find("train.max_epochs") !=
              std::string::npos);
        CHECK(message_of([] { parse_config(json::parse(R"({"encoder": {"n_heads": 3}})")); }).find("encoder.n_heads") !=
              std::string::npos);
    }
    SUBCASE("unknown keys are rejected") {
        CHECK(message_of([] { parse_config(json::parse(R"({"train": {"max_epoch": 5}})")); }).find("train.max_epoch") !=
              std::string::npos);
        CHECK_THROWS_AS(parse_config(json::parse(R"({"colour": 1})")), ValidationError);
    }
    SUBCASE("type mismatches name their key") {
        CHECK(message_of([] { parse_config(json::parse(R"({"train": {"lr": "fast"}})")); }).find("train.lr") !=
              std::string::npos);
        CHECK_THROWS_AS(parse_config(json::parse(R"({"horizons": 7})")), ValidationError);
        CHECK_THROWS_AS(parse_config(json::parse(R"([1, 2])")), ValidationError);
    }
}

TEST_CASE("shipped experiment settings load") {
    const auto wiki = load_config(kSource / "configs" / "wiki_people.json");
    CHECK(wiki.encoder.input_len == 7);
    CHECK(wiki.horizons == std::vector<std::size_t>{7, 14, 21, 28, 35});
    CHECK(wiki.train.max_epochs == 100);
    CHECK(wiki.train.early_stop_delta == 1e-4);
    const auto news = load_config(kSource / "configs" / "news.json");
    CHECK(news.encoder.input_len == 9);
    CHECK(news.horizons == std::vector<std::size_t>{1, 3, 9, 12, 15});
    CHECK(news.encoder.patches() == 4);
}

TEST_CASE("config survives a serialization round trip") {
    Rng rng(40);
    for (int trial = 0; trial < 200; ++trial) {
        RunConfig cfg;
        cfg.seed = rng();
        cfg.horizons.clear();
        for (std::size_t i = 0, n = 1 + rng() % 5; i < n; ++i) cfg.horizons.push_back(1 + rng() % 40);
        cfg.out = "dir" + std::to_string(rng() % 100);
        cfg.data.series = "s.csv";
        cfg.data.window_stride = 1 + rng() % 5;
        cfg.data.normalize = rng() % 2;
        cfg.data.split = {0.6, 0.15, 0.25};
        cfg.encoder.input_len = 4 + rng() % 20;
        cfg.encoder.patch = {4, 1 + rng() % 4, bool(rng() % 2)};
        cfg.encoder.n_heads = 1 + rng() % 4;
        cfg.encoder.d_ts = cfg.encoder.n_heads * (1 + rng() % 8);
        cfg.encoder.n_layers = rng() % 3;
        cfg.encoder.activation = rng() % 2 ? Activation::relu : Activation::gelu;
        cfg.encoder.ln_eps = 1e-6 * double(1 + rng() % 10);
        cfg.fusion.n_heads = 1;
        cfg.fusion.head_hidden = rng() % 30;
        cfg.train.max_epochs = 1 + rng() % 200;
        cfg.train.lr = 1e-5 * double(1 + rng() % 1000);
        cfg.train.batch_size = 1 + rng() % 128;
        cfg.train.patience = 1 + rng() % 3;
        cfg.train.loss = rng() % 2 ? LossKind::mae : LossKind::mse;
        cfg.text.use_text = rng() % 2;
        cfg.text.strategy = kAllStrategies[rng() % 3];
        cfg.text.strategies = {PoolingStrategy::cls, PoolingStrategy::mean};
        cfg.scale = rng() % 2 ? MetricScale::raw : MetricScale::normalized;
        validate(cfg);
        const auto back = parse_config(json::parse(to_json(cfg).dump()));
        CHECK(back == cfg);
    }
}

TEST_CASE("cli usage errors") {
    auto r = tfh_cli({"train", "--bogus"});
    CHECK(r.code == cli::kExitValidation);
    CHECK(r.err.find("Usage") != std::string::npos);
    CHECK(tfh_cli({}).code == cli::kExitValidation);
    CHECK(tfh_cli({"fly"}).code == cli::kExitValidation);
    CHECK(tfh_cli({"evaluate"}).code == cli::kExitValidation);
    r = tfh_cli({"train", "--strategy", "max"});
    CHECK(r.code == cli::kExitValidation);
    r = tfh_cli({"train"});
    CHECK(r.code == cli::kExitValidation);
    CHECK(r.err.find("data.series") != std::string::npos);
}

TEST_CASE("grad-check subcommand") {
    const auto r = tfh_cli({"grad-check"});
    CHECK(r.code == cli::kExitOk);
    CHECK(r.out.find("(ok)") != std::string::npos);
}

TEST_CASE("gen-synthetic is reproducible") {
    const test::TempDir a("tfh_cli_syn_a"), b("tfh_cli_syn_b");
    for (const auto *dir : {&a, &b})
        REQUIRE(tfh_cli({"gen-synthetic", "--seed", "7", "--out", dir->path().string(), "--channels", "8", "--periods", "6"}).code ==
                cli::kExitOk);
    for (const char *f : {"series.csv", "texts.jsonl", "embeddings.tfhe", "config.json", "synthetic.json"}) {
        INFO(f);
        CHECK(read_file(a / f) == read_file(b / f));
        CHECK(!read_file(a / f).empty());
    }
    CHECK_NOTHROW(load_config(a / "config.json"));
}

TEST_CASE("train, evaluate, ablate and export on a small synthetic set") {
    const test::TempDir dir("tfh_cli_run");
    REQUIRE(tfh_cli({"gen-synthetic", "--out", dir.path().string(), "--channels", "8", "--regimes", "2", "--horizon", "14",
                     "--periods", "10", "--d-tx", "8"})
                .code == cli::kExitOk);
    auto cfg = json::parse(read_file(dir / "config.json"));
    cfg["encoder"]["d_ts"] = 8;
    cfg["encoder"]["d_ff"] = 16;
    cfg["encoder"]["n_heads"] = 2;
    cfg["encoder"]["n_layers"] = 1;
    cfg["train"]["max_epochs"] = 2;
    std::ofstream(dir / "small.json") << cfg.dump(2);
    const auto config = (dir / "small.json").string();

    auto r = tfh_cli({"train", "--config", config, "--strategy", "bos"});
    REQUIRE(r.code == cli::kExitOk);
    CHECK(std::filesystem::exists(dir / "run" / "model_h14_with_text_bos.tfhc"));
    CHECK(std::filesystem::exists(dir / "run" / "train_log.json"));

    r = tfh_cli({"evaluate", "--config", config, "--checkpoint", (dir / "run" / "model_h14_with_text_bos.tfhc").string()});
    REQUIRE(r.code == cli::kExitOk);
    const auto metrics = json::parse(read_file(dir / "run" / "metrics.json"));
    CHECK(metrics["horizon"] == 14);
    CHECK(metrics["scale"] == "normalized");

    r = tfh_cli({"train", "--config", config, "--no-text", "--out", (dir / "wo").string()});
    REQUIRE(r.code == cli::kExitOk);
    CHECK(std::filesystem::exists(dir / "wo" / "model_h14_without_text.tfhc"));

    r = tfh_cli({"ablate", "--config", config, "--horizons", "7,14", "--out", (dir / "ablation").string()});
    REQUIRE(r.code == cli::kExitOk);
    const auto report = ablation_from_json(json::parse(read_file(dir / "ablation" / "report.json")));
    CHECK(report.horizons == std::vector<std::size_t>{7, 14});
    CHECK(report.arms.size() == 4);
    CHECK(report.cells.size() == 2 * 4);

    r = tfh_cli({"export-report", "--report", (dir / "ablation" / "report.json").string(), "--out", (dir / "export").string()});
    REQUIRE(r.code == cli::kExitOk);
    CHECK(read_file(dir / "export" / "mae.csv") == read_file(dir / "ablation" / "mae.csv"));
    CHECK(read_file(dir / "export" / "comparison.md") == read_file(dir / "ablation" / "comparison.md"));

    r = tfh_cli({"ablate", "--config", config, "--horizons", "7,0"});
    CHECK(r.code == cli::kExitValidation);
}
