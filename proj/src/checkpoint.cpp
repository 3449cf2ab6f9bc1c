#include "tfh/checkpoint.hpp"

#include "tfh/config.hpp"
#include "tfh/errors.hpp"

#include "binary_io.hpp"

#include <fstream>
#include <iterator>
#include <limits>

namespace tfh {

using detail::ByteReader;
using detail::ByteWriter;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint &ckpt) {
    ByteWriter w;
    w.bytes("TFHC", 4);
    w.le<std::uint16_t>(kCheckpointFormatVersion);
    const std::string meta = nlohmann::json{{"model", to_json(ckpt.model.config)}, {"train", to_json(ckpt.train)}}.dump();
    w.le<std::uint32_t>(static_cast<std::uint32_t>(meta.size()));
    w.bytes(meta.data(), meta.size());
    w.le<std::uint32_t>(static_cast<std::uint32_t>(ckpt.epoch));
    w.le<std::uint32_t>(static_cast<std::uint32_t>(ckpt.val_history.size()));
    for (double v : ckpt.val_history) w.f64(v);
    const auto params = ckpt.model.parameters();
    const bool has_moments = ckpt.optimizer.m.size() == params.size() && ckpt.optimizer.v.size() == params.size();
    w.le<std::uint64_t>(ckpt.optimizer.step);
    w.le<std::uint8_t>(has_moments ? 1 : 0);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto &p = *params[i];
        w.le<std::uint16_t>(static_cast<std::uint16_t>(p.name.size()));
        w.bytes(p.name.data(), p.name.size());
        w.le<std::uint32_t>(static_cast<std::uint32_t>(p.value.rank()));
        for (auto d : p.value.shape()) w.le<std::uint32_t>(static_cast<std::uint32_t>(d));
        for (double v : p.value.data()) w.f64(v);
        if (has_moments) {
            if (ckpt.optimizer.m[i].size() != p.value.size() || ckpt.optimizer.v[i].size() != p.value.size())
                throw std::invalid_argument("optimizer moments do not match parameter '" + p.name + "'");
            for (double v : ckpt.optimizer.m[i]) w.f64(v);
            for (double v : ckpt.optimizer.v[i]) w.f64(v);
        }
    }
    return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes, "checkpoint");
    if (r.str(4, "magic") != "TFHC") throw ValidationError("not a checkpoint file (bad magic)");
    const auto version = r.le<std::uint16_t>("version");
    if (version != kCheckpointFormatVersion) throw ValidationError("unsupported checkpoint version " + std::to_string(version));
    const auto meta_len = r.le<std::uint32_t>("metadata length");
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(r.str(meta_len, "metadata"));
    } catch (const nlohmann::json::parse_error &e) {
        throw ValidationError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
    }
    if (!meta.is_object() || !meta.contains("model") || !meta.contains("train") || meta.size() != 2)
        throw ValidationError("checkpoint metadata must hold exactly 'model' and 'train'");

    Checkpoint ckpt;
    const ModelConfig cfg = model_config_from_json(meta["model"]);
    ckpt.train = train_config_from_json(meta["train"]);
    ckpt.model = init_model(cfg, 0);
    ckpt.epoch = r.le<std::uint32_t>("epoch");
    const auto n_hist = r.le<std::uint32_t>("history length");
    if (n_hist > r.remaining() / 8) throw ValidationError("checkpoint truncated in validation history");
    for (std::uint32_t i = 0; i < n_hist; ++i) ckpt.val_history.push_back(r.f64("validation history"));
    ckpt.optimizer.step = r.le<std::uint64_t>("adam step");
    const auto has_moments = r.le<std::uint8_t>("moment flag");
    if (has_moments > 1) throw ValidationError("checkpoint moment flag must be 0 or 1");

    auto params = ckpt.model.parameters();
    const auto n_params = r.le<std::uint32_t>("parameter count");
    if (n_params != params.size())
        throw ValidationError("checkpoint holds " + std::to_string(n_params) + " parameters, model expects " +
                              std::to_string(params.size()));
    for (auto *p : params) {
        const auto name_len = r.le<std::uint16_t>("parameter name length");
        const auto name = r.str(name_len, "parameter name");
        if (name != p->name) throw ValidationError("checkpoint parameter '" + name + "' where '" + p->name + "' was expected");
        const auto rank = r.le<std::uint32_t>("parameter rank");
        if (rank != p->value.rank()) throw ValidationError("parameter '" + name + "' has the wrong rank");
        for (std::size_t k = 0; k < rank; ++k)
            if (r.le<std::uint32_t>("parameter shape") != p->value.dim(k))
                throw ValidationError("parameter '" + name + "' has shape different from its config");
        const std::size_t count = p->value.size() * (has_moments ? 3 : 1);
        if (count > r.remaining() / 8) throw ValidationError("checkpoint truncated in parameter '" + name + "'");
        for (auto &v : p->value.data()) v = r.f64("parameter values");
        p->zero_grad();
        if (has_moments) {
            std::vector<double> m(p->value.size()), v(p->value.size());
            for (auto &x : m) x = r.f64("adam moments");
            for (auto &x : v) x = r.f64("adam moments");
            ckpt.optimizer.m.push_back(std::move(m));
            ckpt.optimizer.v.push_back(std::move(v));
        }
    }
    if (r.remaining() != 0) throw ValidationError("trailing bytes after checkpoint payload");
    return ckpt;
}

void save_checkpoint(const Checkpoint &ckpt, const std::filesystem::path &path) {
    const auto bytes = encode_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open checkpoint " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

} // namespace tfh
