#include "tfh/data.hpp"

#include "tfh/errors.hpp"

#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace tfh {

namespace {

std::string read_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> split_line(const std::string &line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::optional<double> parse_double(const std::string &s) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const char *first = s.data();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

// Seconds on a common axis: plain numbers are taken as-is, otherwise
// YYYY-MM-DD with an optional [T ]HH:MM[:SS] suffix.
std::optional<double> timestamp_seconds(const std::string &s) {
    if (auto v = parse_double(s)) return v;
    int y = 0, mo = 0, d = 0, hh = 0, mm = 0, ss = 0;
    char sep = 0;
    int n = std::sscanf(s.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d", &y, &mo, &d, &sep, &hh, &mm, &ss);
    if (n < 3 || (n > 3 && n < 6) || (n >= 4 && sep != 'T' && sep != ' ')) return std::nullopt;
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) return std::nullopt;
    const auto days = sys_days{ymd}.time_since_epoch().count();
    return static_cast<double>(days) * 86400.0 + hh * 3600.0 + mm * 60.0 + ss;
}

} // namespace

std::optional<std::size_t> RawDataset::channel_index(const std::string &id) const {
    for (std::size_t i = 0; i < channel_ids.size(); ++i)
        if (channel_ids[i] == id) return i;
    return std::nullopt;
}

RawDataset parse_series_csv(const std::string &content) {
    std::istringstream in(content);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("series CSV is empty");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    auto header = split_line(trim(line), ',');
    if (header.size() < 2 || trim(header[0]) != "timestamp")
        throw ValidationError("series CSV header must be 'timestamp,<id1>,...'");
    RawDataset d;
    std::set<std::string> seen;
    for (std::size_t c = 1; c < header.size(); ++c) {
        auto id = trim(header[c]);
        if (id.empty()) throw ValidationError("series CSV header column " + std::to_string(c + 1) + " has an empty channel id");
        if (!seen.insert(id).second) throw ValidationError("duplicate channel id '" + id + "' in series CSV header");
        d.channel_ids.push_back(id);
    }
    const std::size_t C = d.channel_ids.size();
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        auto cells = split_line(line, ',');
        if (cells.size() != C + 1)
            throw ValidationError("series CSV row " + std::to_string(row) + ": expected " + std::to_string(C + 1) +
                                  " cells, got " + std::to_string(cells.size()));
        d.timestamps.push_back(trim(cells[0]));
        for (std::size_t c = 0; c < C; ++c) {
            auto cell = trim(cells[c + 1]);
            if (cell.empty())
                throw ValidationError("series CSV row " + std::to_string(row) + ", column " + std::to_string(c + 2) +
                                      " ('" + d.channel_ids[c] + "'): missing value");
            auto v = parse_double(cell);
            if (!v)
                throw ValidationError("series CSV row " + std::to_string(row) + ", column " + std::to_string(c + 2) +
                                      " ('" + d.channel_ids[c] + "'): not a finite number: '" + cell + "'");
            d.values.push_back(*v);
        }
    }
    if (d.timestamps.empty()) throw ValidationError("series CSV has no data rows");
    return d;
}

std::map<std::string, std::string> parse_text_sidecar(const std::string &content) {
    std::map<std::string, std::string> texts;
    std::istringstream in(content);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error &e) {
            throw ValidationError("text sidecar line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!j.is_object() || !j.contains("channel") || !j.contains("text") || !j["channel"].is_string() ||
            !j["text"].is_string())
            throw ValidationError("text sidecar line " + std::to_string(lineno) +
                                  ": expected {\"channel\": <string>, \"text\": <string>}");
        auto id = j["channel"].get<std::string>();
        if (!texts.emplace(id, j["text"].get<std::string>()).second)
            throw ValidationError("text sidecar line " + std::to_string(lineno) + ": duplicate channel '" + id + "'");
    }
    return texts;
}

void validate_dataset(const RawDataset &d, bool require_texts) {
    if (d.channel_ids.empty()) throw ValidationError("dataset has no channels");
    if (d.values.size() != d.length() * d.channels()) throw ValidationError("dataset value matrix has the wrong size");
    std::vector<double> ts;
    for (std::size_t t = 0; t < d.length(); ++t) {
        auto s = timestamp_seconds(d.timestamps[t]);
        if (!s) throw ValidationError("row " + std::to_string(t + 2) + ": unparseable timestamp '" + d.timestamps[t] + "'");
        ts.push_back(*s);
    }
    for (std::size_t t = 1; t < ts.size(); ++t) {
        if (!(ts[t] > ts[t - 1]))
            throw ValidationError("timestamps not strictly increasing at row " + std::to_string(t + 2) + " ('" +
                                  d.timestamps[t] + "')");
        const double step = ts[1] - ts[0];
        if (std::fabs((ts[t] - ts[t - 1]) - step) > 1e-9 * std::max(1.0, std::fabs(step)))
            throw ValidationError("timestamps not uniformly spaced at row " + std::to_string(t + 2) + " ('" +
                                  d.timestamps[t] + "')");
    }
    for (const auto &[id, text] : d.texts)
        if (!d.channel_index(id)) throw ValidationError("text record references unknown channel '" + id + "'");
    if (require_texts)
        for (const auto &id : d.channel_ids)
            if (!d.texts.contains(id)) throw ValidationError("channel '" + id + "' has no text");
}

RawDataset load_dataset(const std::filesystem::path &series_path, const std::optional<std::filesystem::path> &text_path) {
    RawDataset d = parse_series_csv(read_file(series_path));
    if (text_path) d.texts = parse_text_sidecar(read_file(*text_path));
    validate_dataset(d, false);
    return d;
}

std::string format_series_csv(const RawDataset &d) {
    std::string out = "timestamp";
    for (const auto &id : d.channel_ids) out += "," + id;
    out += "\n";
    char buf[64];
    for (std::size_t t = 0; t < d.length(); ++t) {
        out += d.timestamps[t];
        for (std::size_t c = 0; c < d.channels(); ++c) {
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, d.at(t, c));
            out += ",";
            out.append(buf, ptr);
        }
        out += "\n";
    }
    return out;
}

std::string format_text_sidecar(const RawDataset &d) {
    std::string out;
    for (const auto &id : d.channel_ids) {
        auto it = d.texts.find(id);
        if (it == d.texts.end()) continue;
        out += nlohmann::json{{"channel", id}, {"text", it->second}}.dump() + "\n";
    }
    return out;
}

Splits split_chronological(const RawDataset &d, const SplitRatios &r, std::size_t min_len) {
    if (!(r.train > 0.0 && r.val > 0.0 && r.test > 0.0))
        throw ValidationError("split ratios must all be positive");
    if (std::fabs(r.train + r.val + r.test - 1.0) > 1e-9) throw ValidationError("split ratios must sum to 1");
    const std::size_t T = d.length();
    const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(T) * r.train + 1e-9));
    const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(T) * r.val + 1e-9));
    if (n_train + n_val > T) throw ValidationError("split ratios leave no test rows");
    Splits s{{0, n_train}, {n_train, n_train + n_val}, {n_train + n_val, T}};
    const std::pair<const char *, IndexRange> parts[] = {{"train", s.train}, {"val", s.val}, {"test", s.test}};
    for (const auto &[name, range] : parts)
        if (range.size() < min_len)
            throw ValidationError(std::string(name) + " split has " + std::to_string(range.size()) +
                                  " rows, fewer than input_len + horizon = " + std::to_string(min_len));
    return s;
}

Normalized instance_normalize(const std::vector<double> &x) {
    Normalized out;
    if (x.empty()) return out;
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size());
    out.stats = {mean, std::sqrt(var), false};
    out.values.reserve(x.size());
    for (double v : x) out.values.push_back(normalize_value(v, out.stats));
    return out;
}

double normalize_value(double v, const NormStats &s) { return (v - s.shift()) / s.divisor(); }
double denormalize_value(double v, const NormStats &s) { return v * s.divisor() + s.shift(); }

std::vector<double> denormalize(const std::vector<double> &v, const NormStats &s) {
    std::vector<double> out;
    out.reserve(v.size());
    for (double x : v) out.push_back(denormalize_value(x, s));
    return out;
}

std::vector<WindowSample> make_windows(const RawDataset &d, IndexRange range, std::size_t input_len, std::size_t horizon,
                                       std::size_t window_stride, bool normalize) {
    if (input_len == 0 || horizon == 0) throw ValidationError("input_len and horizon must be positive");
    if (window_stride == 0) throw ValidationError("window_stride must be positive");
    if (range.end > d.length() || range.begin > range.end) throw ValidationError("window range outside dataset");
    if (range.size() < input_len + horizon)
        throw ValidationError("range of " + std::to_string(range.size()) + " rows cannot hold input_len + horizon = " +
                              std::to_string(input_len + horizon));
    const std::size_t per_channel = (range.size() - input_len - horizon) / window_stride + 1;
    std::vector<WindowSample> out;
    out.reserve(per_channel * d.channels());
    for (std::size_t c = 0; c < d.channels(); ++c) {
        for (std::size_t w = 0; w < per_channel; ++w) {
            const std::size_t s = range.begin + w * window_stride;
            WindowSample ws;
            ws.channel_index = c;
            for (std::size_t t = s; t < s + input_len; ++t) ws.x.push_back(d.at(t, c));
            for (std::size_t t = s + input_len; t < s + input_len + horizon; ++t) ws.y.push_back(d.at(t, c));
            ws.norm = normalize ? instance_normalize(ws.x).stats : NormStats{0.0, 0.0, true};
            out.push_back(std::move(ws));
        }
    }
    return out;
}

void validate_patch_config(const PatchConfig &cfg, std::size_t input_len) {
    if (cfg.patch_len < 1 || cfg.patch_len > input_len)
        throw ValidationError("patch.patch_len=" + std::to_string(cfg.patch_len) + " must lie in [1, input_len=" +
                              std::to_string(input_len) + "]");
    if (cfg.stride < 1 || cfg.stride > cfg.patch_len)
        throw ValidationError("patch.stride=" + std::to_string(cfg.stride) + " must lie in [1, patch_len=" +
                              std::to_string(cfg.patch_len) + "]");
}

std::size_t patch_count(std::size_t input_len, const PatchConfig &cfg) {
    validate_patch_config(cfg, input_len);
    return (input_len - cfg.patch_len) / cfg.stride + (cfg.pad_end ? 2 : 1);
}

std::vector<double> patchify(const std::vector<double> &x, const PatchConfig &cfg) {
    const std::size_t p = patch_count(x.size(), cfg);
    std::vector<double> series = x;
    if (cfg.pad_end) series.insert(series.end(), cfg.stride, x.back());
    std::vector<double> out;
    out.reserve(p * cfg.patch_len);
    for (std::size_t i = 0; i < p; ++i)
        out.insert(out.end(), series.begin() + static_cast<std::ptrdiff_t>(i * cfg.stride),
                   series.begin() + static_cast<std::ptrdiff_t>(i * cfg.stride + cfg.patch_len));
    return out;
}

} // namespace tfh
