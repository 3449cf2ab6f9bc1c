#include <doctest.h>

#include "tfh/errors.hpp"
#include "tfh/random.hpp"
#include "tfh/text.hpp"

#include "helpers.hpp"

#include <cmath>

using namespace tfh;
using tfh::test::message_of;

namespace {

TokenEmbeddingSet three_tokens() {
    TokenEmbeddingSet s;
    s.channel_id = "c";
    s.n_tokens = 3;
    s.d_tx = 2;
    s.tokens = {1, 0, 0, 1, 1, 1};
    s.bos_index = 0;
    s.cls_index = 2;
    return s;
}

TokenEmbeddingSet random_set(const std::string &id, std::size_t d_tx, Rng &rng) {
    std::uniform_real_distribution<float> u(-3.0f, 3.0f);
    TokenEmbeddingSet s;
    s.channel_id = id;
    s.n_tokens = 1 + rng() % 12;
    s.d_tx = d_tx;
    s.tokens.resize(s.n_tokens * d_tx);
    for (auto &v : s.tokens) v = u(rng);
    if (rng() % 2) s.bos_index = rng() % s.n_tokens;
    if (rng() % 2) s.cls_index = rng() % s.n_tokens;
    return s;
}

EmbeddingMap random_map(Rng &rng) {
    EmbeddingMap m;
    const std::size_t d_tx = 1 + rng() % 8;
    const std::size_t n = 1 + rng() % 5;
    for (std::size_t i = 0; i < n; ++i) {
        auto s = random_set("channel-" + std::to_string(rng() % 1000), d_tx, rng);
        m[s.channel_id] = s;
    }
    return m;
}

} // namespace

TEST_CASE("pooling examples") {
    const auto s = three_tokens();
    const auto mean = pool(s, PoolingStrategy::mean);
    CHECK(mean[0] == doctest::Approx(2.0 / 3));
    CHECK(mean[1] == doctest::Approx(2.0 / 3));
    CHECK(pool(s, PoolingStrategy::bos) == std::vector<double>{1, 0});
    CHECK(pool(s, PoolingStrategy::cls) == std::vector<double>{1, 1});

    auto no_cls = s;
    no_cls.cls_index.reset();
    CHECK_THROWS_AS(pool(no_cls, PoolingStrategy::cls), StrategyUnavailable);

    TokenEmbeddingSet one{"one", 1, 3, {0.5f, -2.0f, 4.0f}, 0, 0};
    for (auto strategy : kAllStrategies) CHECK(pool(one, strategy) == std::vector<double>{0.5, -2.0, 4.0});
}

TEST_CASE("strategy names") {
    for (auto s : kAllStrategies) CHECK(pooling_from_string(to_string(s)) == s);
    CHECK_THROWS_AS(pooling_from_string("max"), ValidationError);
}

TEST_CASE("mean pooling matches a direct average and stays inside the token hull") {
    Rng rng(13);
    for (int trial = 0; trial < 300; ++trial) {
        const auto s = random_set("x", 1 + rng() % 16, rng);
        const auto mean = pool(s, PoolingStrategy::mean);
        double max_norm = 0.0, mean_norm = 0.0;
        for (std::size_t k = 0; k < s.d_tx; ++k) {
            long double acc = 0.0L;
            for (std::size_t i = 0; i < s.n_tokens; ++i) acc += s.tokens[i * s.d_tx + k];
            CHECK(std::fabs(mean[k] - double(acc / s.n_tokens)) <= 1e-12);
            mean_norm += mean[k] * mean[k];
        }
        for (std::size_t i = 0; i < s.n_tokens; ++i) {
            double n = 0.0;
            for (float v : s.row(i)) n += double(v) * v;
            max_norm = std::max(max_norm, n);
        }
        CHECK(std::sqrt(mean_norm) <= std::sqrt(max_norm) + 1e-12);
    }
}

TEST_CASE("embedding file round trip is byte-identical") {
    Rng rng(14);
    for (int trial = 0; trial < 50; ++trial) {
        const auto m = random_map(rng);
        const auto bytes = encode_embeddings(m);
        const auto back = decode_embeddings(bytes);
        CHECK(back == m);
        CHECK(encode_embeddings(back) == bytes);
    }
    const test::TempDir tmp("tfh_test_text");
    const auto m = random_map(rng);
    write_embedding_file(m, tmp / "e.tfhe");
    CHECK(read_embedding_file(tmp / "e.tfhe") == m);
}

TEST_CASE("embedding file errors") {
    EmbeddingMap m{{"c", three_tokens()}};
    const auto good = encode_embeddings(m);

    auto v2 = good;
    v2[4] = 2;
    CHECK(message_of([&] { decode_embeddings(v2); }).find("version 2") != std::string::npos);

    auto magic = good;
    magic[0] = 'X';
    CHECK_THROWS_AS(decode_embeddings(magic), ValidationError);

    // Channel record starts at byte 14: u16 id_len, id, u32 n_tokens.
    auto empty = good;
    const std::size_t n_tokens_at = 14 + 2 + 1;
    for (int i = 0; i < 4; ++i) empty[n_tokens_at + i] = 0;
    CHECK(message_of([&] { decode_embeddings(empty); }).find("n_tokens = 0") != std::string::npos);

    auto truncated = good;
    truncated.pop_back();
    CHECK_THROWS_AS(decode_embeddings(truncated), ValidationError);

    auto trailing = good;
    trailing.push_back(0);
    CHECK_THROWS_AS(decode_embeddings(trailing), ValidationError);

    // Two copies of the same channel record.
    auto dup = good;
    dup[10] = 2;
    dup.insert(dup.end(), good.begin() + 14, good.end());
    CHECK(message_of([&] { decode_embeddings(dup); }).find("duplicate") != std::string::npos);

    EmbeddingMap mixed{{"a", three_tokens()}, {"c", three_tokens()}};
    mixed["a"].channel_id = "a";
    mixed["a"].d_tx = 3;
    mixed["a"].tokens.resize(9);
    CHECK_THROWS_AS(encode_embeddings(mixed), ValidationError);
}

TEST_CASE("corrupted embedding files parse or fail cleanly") {
    Rng rng(15);
    const auto base = encode_embeddings(random_map(rng));
    for (int trial = 0; trial < 1000; ++trial) {
        auto bytes = base;
        const int edits = 1 + int(rng() % 4);
        for (int e = 0; e < edits; ++e) {
            switch (rng() % 3) {
            case 0: bytes[rng() % bytes.size()] = std::uint8_t(rng()); break;
            case 1: bytes.resize(rng() % bytes.size()); break;
            default: bytes.insert(bytes.begin() + long(rng() % (bytes.size() + 1)), std::uint8_t(rng())); break;
            }
            if (bytes.empty()) break;
        }
        try {
            const auto decoded = decode_embeddings(bytes);
            for (const auto &[id, set] : decoded) CHECK_NOTHROW(validate(set));
        } catch (const ValidationError &) {
        }
    }
}

TEST_CASE("hash embeddings") {
    const auto a = hash_embed_text("the quick brown fox", 8, 1);
    CHECK(a == hash_embed_text("the quick brown fox", 8, 1));
    CHECK(a.n_tokens == 4);
    CHECK(a.bos_index == 0u);
    CHECK_FALSE(a.cls_index.has_value());
    for (float v : a.tokens) CHECK(std::fabs(v) <= 1.0f);

    SUBCASE("one changed token changes exactly one row") {
        const auto b = hash_embed_text("the quick green fox", 8, 1);
        for (std::size_t i = 0; i < 4; ++i) {
            const bool same = std::equal(a.row(i).begin(), a.row(i).end(), b.row(i).begin());
            CHECK(same == (i != 2));
        }
    }
    SUBCASE("seed changes every row") {
        const auto c = hash_embed_text("the quick brown fox", 8, 2);
        for (std::size_t i = 0; i < 4; ++i) CHECK_FALSE(std::equal(a.row(i).begin(), a.row(i).end(), c.row(i).begin()));
    }
    SUBCASE("texts differing in one word pool apart") {
        const auto ma = pool(hash_embed_text("regime A", 16, 0), PoolingStrategy::mean);
        const auto mb = pool(hash_embed_text("regime B", 16, 0), PoolingStrategy::mean);
        CHECK(ma != mb);
    }
    CHECK_THROWS_AS(hash_embed_text("   ", 8, 1), ValidationError);
}
