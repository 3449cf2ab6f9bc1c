#include <doctest.h>

#include "tfh/data.hpp"
#include "tfh/errors.hpp"
#include "tfh/random.hpp"

#include "helpers.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

using namespace tfh;
using tfh::test::message_of;

namespace {

std::string ramp_csv(std::size_t rows, std::size_t channels) {
    std::string s = "timestamp";
    for (std::size_t c = 0; c < channels; ++c) s += ",c" + std::to_string(c);
    s += "\n";
    for (std::size_t t = 0; t < rows; ++t) {
        s += std::to_string(t);
        for (std::size_t c = 0; c < channels; ++c) s += "," + std::to_string(double(t) * (c + 1));
        s += "\n";
    }
    return s;
}

RawDataset sequential(std::size_t rows) {
    RawDataset d;
    d.channel_ids = {"a", "b"};
    for (std::size_t t = 0; t < rows; ++t) {
        d.timestamps.push_back(std::to_string(t));
        d.values.push_back(double(t));
        d.values.push_back(-double(t));
    }
    return d;
}

} // namespace

TEST_CASE("load_dataset reads a series file and text sidecar") {
    const test::TempDir tmp("tfh_test_data");
    const auto &dir = tmp.path();
    {
        std::ofstream(dir / "series.csv") << ramp_csv(20, 3);
        std::ofstream(dir / "texts.jsonl") << "{\"channel\":\"c0\",\"text\":\"first\"}\n"
                                           << "{\"channel\":\"c1\",\"text\":\"second\"}\n"
                                           << "{\"channel\":\"c2\",\"text\":\"third\"}\n";
    }
    const auto d = load_dataset(dir / "series.csv", dir / "texts.jsonl");
    CHECK(d.channels() == 3);
    CHECK(d.length() == 20);
    CHECK(d.texts.at("c1") == "second");
    CHECK(d.at(4, 2) == 12.0);

    std::ofstream(dir / "bad.jsonl") << "{\"channel\":\"zz\",\"text\":\"ghost\"}\n";
    const auto msg = message_of([&] { load_dataset(dir / "series.csv", dir / "bad.jsonl"); });
    CHECK(msg.find("'zz'") != std::string::npos);
}

TEST_CASE("series CSV errors") {
    SUBCASE("blank cell names row and column") {
        const auto msg = message_of([] { parse_series_csv("timestamp,a,b\n0,1,2\n1,,3\n"); });
        CHECK(msg.find("row 3") != std::string::npos);
        CHECK(msg.find("column 2") != std::string::npos);
    }
    SUBCASE("duplicate channel id") {
        CHECK_THROWS_AS(parse_series_csv("timestamp,a,a\n0,1,2\n"), ValidationError);
    }
    SUBCASE("ragged row") {
        CHECK_THROWS_AS(parse_series_csv("timestamp,a,b\n0,1\n"), ValidationError);
    }
    SUBCASE("bad header") {
        CHECK_THROWS_AS(parse_series_csv("time,a\n0,1\n"), ValidationError);
    }
    SUBCASE("non-monotone timestamps") {
        auto d = parse_series_csv("timestamp,a\n0,1\n2,1\n1,1\n");
        CHECK_THROWS_AS(validate_dataset(d, false), ValidationError);
    }
    SUBCASE("uneven spacing") {
        auto d = parse_series_csv("timestamp,a\n0,1\n1,1\n3,1\n");
        CHECK_THROWS_AS(validate_dataset(d, false), ValidationError);
    }
    SUBCASE("ISO dates at a daily cadence") {
        auto d = parse_series_csv("timestamp,a\n2024-02-28,1\n2024-02-29,2\n2024-03-01,3\n");
        CHECK_NOTHROW(validate_dataset(d, false));
    }
    SUBCASE("missing text when texts are required") {
        auto d = parse_series_csv("timestamp,a,b\n0,1,2\n");
        d.texts["a"] = "only a";
        CHECK_THROWS_AS(validate_dataset(d, true), ValidationError);
        CHECK_NOTHROW(validate_dataset(d, false));
    }
}

TEST_CASE("CSV and sidecar formatting round trips") {
    auto d = parse_series_csv(ramp_csv(6, 2));
    d.texts["c0"] = "quoted \"text\"";
    d.texts["c1"] = "plain";
    const auto again = parse_series_csv(format_series_csv(d));
    CHECK(again.values == d.values);
    CHECK(again.timestamps == d.timestamps);
    CHECK(parse_text_sidecar(format_text_sidecar(d)) == d.texts);
}

TEST_CASE("chronological split") {
    const auto d = sequential(100);
    const auto s = split_chronological(d, {}, 1);
    CHECK(s.train == IndexRange{0, 70});
    CHECK(s.val == IndexRange{70, 80});
    CHECK(s.test == IndexRange{80, 100});

    CHECK_THROWS_AS(split_chronological(d, {0.9, 0.05, 0.05}, 14), ValidationError);
    CHECK_THROWS_AS(split_chronological(d, {1.0, 0.0, 0.0}, 1), ValidationError);
    CHECK_THROWS_AS(split_chronological(d, {0.5, 0.2, 0.2}, 1), ValidationError);
}

TEST_CASE("window counts") {
    const auto d = sequential(40);
    CHECK(make_windows(d, {0, 14}, 7, 7).size() == 2 * 1);
    CHECK(make_windows(d, {0, 12}, 9, 3).size() == 2 * 1);
    CHECK(make_windows(d, {0, 16}, 7, 7, 2).size() == 2 * 2);
    CHECK_THROWS_AS(make_windows(d, {0, 13}, 7, 7), ValidationError);

    const auto w = make_windows(d, {3, 20}, 4, 2, 1, false);
    CHECK(w.size() == 2 * 12);
    CHECK(w[0].x == std::vector<double>{3, 4, 5, 6});
    CHECK(w[0].y == std::vector<double>{7, 8});
    CHECK(w[0].norm.identity);
}

TEST_CASE("windows never cross their split") {
    Rng rng(21);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t T = 30 + rng() % 200;
        const std::size_t l = 1 + rng() % 10, h = 1 + rng() % 10, stride = 1 + rng() % 4;
        RawDataset d;
        d.channel_ids = {"only"};
        for (std::size_t t = 0; t < T; ++t) {
            d.timestamps.push_back(std::to_string(t));
            d.values.push_back(double(t));
        }
        Splits s;
        try {
            s = split_chronological(d, {}, l + h);
        } catch (const ValidationError &) {
            continue;
        }
        for (const auto range : {s.train, s.val, s.test}) {
            const auto windows = make_windows(d, range, l, h, stride, false);
            CHECK(windows.size() == (range.size() - l - h) / stride + 1);
            for (const auto &w : windows) {
                CHECK(w.x.front() >= double(range.begin));
                CHECK(w.y.back() < double(range.end));
                CHECK(w.y.front() == w.x.back() + 1);
            }
        }
        CHECK(s.train.end == s.val.begin);
        CHECK(s.val.end == s.test.begin);
        CHECK(s.test.end == T);
    }
}

TEST_CASE("instance normalization") {
    auto n = instance_normalize({2, 4, 6});
    const double sd = std::sqrt(8.0 / 3.0);
    CHECK(n.stats.mean == 4.0);
    CHECK(n.values[0] == doctest::Approx(-2.0 / (sd + 1e-5)).epsilon(1e-14));
    CHECK(n.values[1] == 0.0);

    auto flat = instance_normalize({5, 5, 5});
    for (double v : flat.values) CHECK(v == 0.0);
    CHECK(denormalize_value(0.0, flat.stats) == 5.0);

    Rng rng(4);
    std::normal_distribution<double> g(3.0, 10.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> x(9);
        for (auto &v : x) v = g(rng);
        auto norm = instance_normalize(x);
        auto back = denormalize(norm.values, norm.stats);
        for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::fabs(back[i] - x[i]) < 1e-9);
    }
}

TEST_CASE("patchify") {
    const PatchConfig cfg{4, 2, true};
    CHECK(patch_count(7, cfg) == 3);
    CHECK(patchify({1, 2, 3, 4, 5, 6, 7}, cfg) == std::vector<double>{1, 2, 3, 4, 3, 4, 5, 6, 5, 6, 7, 7});
    CHECK(patch_count(9, cfg) == 4);
    CHECK(patch_count(7, PatchConfig{4, 2, false}) == 2);
    CHECK_THROWS_AS(validate_patch_config(PatchConfig{8, 2, true}, 7), ValidationError);
    CHECK_THROWS_AS(validate_patch_config(PatchConfig{4, 5, true}, 7), ValidationError);
    CHECK_THROWS_AS(validate_patch_config(PatchConfig{4, 0, true}, 7), ValidationError);
}

TEST_CASE("every input step appears in some patch") {
    Rng rng(8);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t l = 1 + rng() % 40;
        const std::size_t pl = 1 + rng() % l;
        const std::size_t s = 1 + rng() % pl;
        const PatchConfig cfg{pl, s, true};
        std::vector<double> x(l);
        for (std::size_t i = 0; i < l; ++i) x[i] = double(i);
        const auto patches = patchify(x, cfg);
        const std::size_t p = patch_count(l, cfg);
        REQUIRE(patches.size() == p * pl);
        std::vector<bool> seen(l, false);
        for (double v : patches) seen[std::size_t(v)] = true;
        for (std::size_t i = 0; i < l; ++i) CHECK(seen[i]);
        for (std::size_t j = 0; j < p; ++j) CHECK(patches[j * pl] == double(std::min(j * s, l - 1)));
    }
}
