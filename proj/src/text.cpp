#include "tfh/text.hpp"

#include "tfh/errors.hpp"
#include "tfh/random.hpp"

#include "binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

namespace tfh {

std::string to_string(PoolingStrategy s) {
    switch (s) {
    case PoolingStrategy::mean: return "mean";
    case PoolingStrategy::bos: return "bos";
    case PoolingStrategy::cls: return "cls";
    }
    return "?";
}

PoolingStrategy pooling_from_string(const std::string &s) {
    if (s == "mean") return PoolingStrategy::mean;
    if (s == "bos") return PoolingStrategy::bos;
    if (s == "cls") return PoolingStrategy::cls;
    throw ValidationError("unknown pooling strategy '" + s + "' (expected mean, bos or cls)");
}

void validate(const TokenEmbeddingSet &set) {
    const std::string who = "channel '" + set.channel_id + "'";
    if (set.n_tokens < 1) throw ValidationError(who + ": embedding set has no tokens");
    if (set.d_tx < 1) throw ValidationError(who + ": embedding width is zero");
    if (set.tokens.size() != set.n_tokens * set.d_tx) throw ValidationError(who + ": token matrix has the wrong size");
    if (set.bos_index && *set.bos_index >= set.n_tokens) throw ValidationError(who + ": bos_index out of range");
    if (set.cls_index && *set.cls_index >= set.n_tokens) throw ValidationError(who + ": cls_index out of range");
}

namespace {

static_assert(std::numeric_limits<float>::is_iec559 && sizeof(float) == 4);

using detail::ByteReader;
using detail::ByteWriter;

std::optional<std::size_t> decode_index(std::int32_t v, const std::string &id, const char *name) {
    if (v == -1) return std::nullopt;
    if (v < 0) throw ValidationError("channel '" + id + "': invalid " + name + " " + std::to_string(v));
    return static_cast<std::size_t>(v);
}

} // namespace

std::vector<std::uint8_t> encode_embeddings(const EmbeddingMap &sets) {
    std::size_t d_tx = 0;
    for (const auto &[id, set] : sets) {
        validate(set);
        if (id != set.channel_id) throw ValidationError("embedding map key '" + id + "' != channel id '" + set.channel_id + "'");
        if (d_tx == 0) d_tx = set.d_tx;
        if (set.d_tx != d_tx) throw ValidationError("channel '" + id + "': d_tx mismatch");
        if (id.size() > std::numeric_limits<std::uint16_t>::max()) throw ValidationError("channel id too long");
        if (set.n_tokens > static_cast<std::size_t>(std::numeric_limits<std::int32_t>::max()))
            throw ValidationError("channel '" + id + "': too many tokens");
    }
    ByteWriter w;
    w.bytes("TFHE", 4);
    w.le<std::uint16_t>(kEmbeddingFormatVersion);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(d_tx));
    w.le<std::uint32_t>(static_cast<std::uint32_t>(sets.size()));
    for (const auto &[id, set] : sets) {
        w.le<std::uint16_t>(static_cast<std::uint16_t>(id.size()));
        w.bytes(id.data(), id.size());
        w.le<std::uint32_t>(static_cast<std::uint32_t>(set.n_tokens));
        w.le<std::int32_t>(set.bos_index ? static_cast<std::int32_t>(*set.bos_index) : -1);
        w.le<std::int32_t>(set.cls_index ? static_cast<std::int32_t>(*set.cls_index) : -1);
        for (float v : set.tokens) w.f32(v);
    }
    return w.take();
}

EmbeddingMap decode_embeddings(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes, "embedding file");
    if (r.str(4, "magic") != "TFHE") throw ValidationError("not an embedding file (bad magic)");
    const auto version = r.le<std::uint16_t>("version");
    if (version != kEmbeddingFormatVersion)
        throw ValidationError("unsupported embedding file version " + std::to_string(version));
    const auto d_tx = r.le<std::uint32_t>("d_tx");
    const auto n_channels = r.le<std::uint32_t>("channel count");
    if (d_tx == 0) throw ValidationError("embedding file has d_tx = 0");
    EmbeddingMap out;
    for (std::uint32_t c = 0; c < n_channels; ++c) {
        TokenEmbeddingSet set;
        const auto id_len = r.le<std::uint16_t>("channel id length");
        set.channel_id = r.str(id_len, "channel id");
        set.n_tokens = r.le<std::uint32_t>("token count");
        const auto bos = r.le<std::int32_t>("bos index");
        const auto cls = r.le<std::int32_t>("cls index");
        set.bos_index = decode_index(bos, set.channel_id, "bos_index");
        set.cls_index = decode_index(cls, set.channel_id, "cls_index");
        set.d_tx = d_tx;
        if (set.n_tokens == 0) throw ValidationError("channel '" + set.channel_id + "': n_tokens = 0");
        // n_tokens < 2^32 and d_tx < 2^32, so the product fits in 64 bits; check before allocating.
        const std::uint64_t count = static_cast<std::uint64_t>(set.n_tokens) * d_tx;
        if (count > r.remaining() / 4) throw ValidationError("embedding file truncated in channel '" + set.channel_id + "'");
        set.tokens.resize(static_cast<std::size_t>(count));
        for (auto &v : set.tokens) v = r.f32("token values");
        validate(set);
        auto id = set.channel_id;
        if (!out.emplace(id, std::move(set)).second) throw ValidationError("duplicate channel '" + id + "' in embedding file");
    }
    if (r.remaining() != 0) throw ValidationError("trailing bytes after embedding payload");
    return out;
}

void write_embedding_file(const EmbeddingMap &sets, const std::filesystem::path &path) {
    const auto bytes = encode_embeddings(sets);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

EmbeddingMap read_embedding_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_embeddings(bytes);
}

std::vector<double> pool(const TokenEmbeddingSet &set, PoolingStrategy strategy) {
    validate(set);
    std::vector<double> out(set.d_tx, 0.0);
    auto copy_row = [&](std::size_t i) {
        auto r = set.row(i);
        for (std::size_t j = 0; j < set.d_tx; ++j) out[j] = r[j];
    };
    switch (strategy) {
    case PoolingStrategy::mean:
        for (std::size_t i = 0; i < set.n_tokens; ++i) {
            auto r = set.row(i);
            for (std::size_t j = 0; j < set.d_tx; ++j) out[j] += r[j];
        }
        for (auto &v : out) v /= static_cast<double>(set.n_tokens);
        break;
    case PoolingStrategy::bos:
        if (!set.bos_index) throw StrategyUnavailable("bos pooling unavailable: channel '" + set.channel_id + "' has no bos index");
        copy_row(*set.bos_index);
        break;
    case PoolingStrategy::cls:
        if (!set.cls_index) throw StrategyUnavailable("cls pooling unavailable: channel '" + set.channel_id + "' has no cls index");
        copy_row(*set.cls_index);
        break;
    }
    return out;
}

TokenEmbeddingSet hash_embed_text(const std::string &text, std::size_t d_tx, std::uint64_t seed, const std::string &channel_id) {
    if (d_tx < 1) throw ValidationError("d_tx must be at least 1");
    std::istringstream in(text);
    std::vector<std::string> words{std::istream_iterator<std::string>(in), std::istream_iterator<std::string>()};
    if (words.empty()) throw ValidationError("cannot embed empty text for channel '" + channel_id + "'");
    TokenEmbeddingSet set;
    set.channel_id = channel_id;
    set.n_tokens = words.size();
    set.d_tx = d_tx;
    set.bos_index = 0;
    set.tokens.reserve(words.size() * d_tx);
    for (const auto &w : words) {
        std::uint64_t state = splitmix64(fnv1a64(w) ^ splitmix64(seed));
        for (std::size_t j = 0; j < d_tx; ++j) {
            state = splitmix64(state);
            // 24 random bits -> exactly representable float in [-1, 1].
            const double u = static_cast<double>(state >> 40) / static_cast<double>((1u << 24) - 1);
            set.tokens.push_back(static_cast<float>(2.0 * u - 1.0));
        }
    }
    return set;
}

} // namespace tfh
