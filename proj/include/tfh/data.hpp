#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tfh {

/// Channel-major series table plus the optional per-channel text.
struct RawDataset {
    std::vector<std::string> channel_ids;
    std::vector<std::string> timestamps;
    // values[t * channels() + c]
    std::vector<double> values;
    std::map<std::string, std::string> texts;

    std::size_t length() const { return timestamps.size(); }
    std::size_t channels() const { return channel_ids.size(); }
    double at(std::size_t t, std::size_t c) const { return values[t * channels() + c]; }
    std::optional<std::size_t> channel_index(const std::string &id) const;
};

struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
    bool operator==(const IndexRange &) const = default;
};

struct SplitRatios {
    double train = 0.7;
    double val = 0.1;
    double test = 0.2;
    bool operator==(const SplitRatios &) const = default;
};

struct Splits {
    IndexRange train, val, test;
};

inline constexpr double kNormEps = 1e-5;

struct NormStats {
    double mean = 0.0;
    double std = 0.0;
    // Set when normalization is switched off: the transform is the identity.
    bool identity = false;

    double divisor() const { return identity ? 1.0 : std + kNormEps; }
    double shift() const { return identity ? 0.0 : mean; }
};

struct WindowSample {
    std::size_t channel_index = 0;
    std::vector<double> x;
    std::vector<double> y;
    NormStats norm;
};

struct PatchConfig {
    std::size_t patch_len = 4;
    std::size_t stride = 2;
    bool pad_end = true;
    bool operator==(const PatchConfig &) const = default;
};

RawDataset load_dataset(const std::filesystem::path &series_path,
                        const std::optional<std::filesystem::path> &text_path = std::nullopt);
RawDataset parse_series_csv(const std::string &content);
std::map<std::string, std::string> parse_text_sidecar(const std::string &content);
void validate_dataset(const RawDataset &d, bool require_texts);

std::string format_series_csv(const RawDataset &d);
std::string format_text_sidecar(const RawDataset &d);

// Windows of `min_len` rows must fit in every split.
Splits split_chronological(const RawDataset &d, const SplitRatios &ratios, std::size_t min_len);

std::vector<WindowSample> make_windows(const RawDataset &d, IndexRange range, std::size_t input_len,
                                       std::size_t horizon, std::size_t window_stride = 1, bool normalize = true);

struct Normalized {
    std::vector<double> values;
    NormStats stats;
};

// Population statistics; x_norm = (x - mean) / (std + 1e-5).
Normalized instance_normalize(const std::vector<double> &x);
double normalize_value(double v, const NormStats &s);
double denormalize_value(double v, const NormStats &s);
std::vector<double> denormalize(const std::vector<double> &v, const NormStats &s);

void validate_patch_config(const PatchConfig &cfg, std::size_t input_len);
std::size_t patch_count(std::size_t input_len, const PatchConfig &cfg);
// Row-major p x patch_len matrix.
std::vector<double> patchify(const std::vector<double> &x, const PatchConfig &cfg);

} // namespace tfh
