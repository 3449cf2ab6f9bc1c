#pragma once

#include "tfh/errors.hpp"

#include <bit>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace tfh::detail {

class ByteWriter {
public:
    void bytes(const void *p, std::size_t n) {
        auto b = static_cast<const std::uint8_t *>(p);
        out_.insert(out_.end(), b, b + n);
    }
    template <typename T> void le(T v) {
        using U = std::make_unsigned_t<T>;
        auto u = static_cast<U>(v);
        for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
    }
    void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

// Bounds-checked little-endian reader; every overrun is a ValidationError.
class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> b, std::string context) : b_(b), context_(std::move(context)) {}

    std::size_t remaining() const { return b_.size() - pos_; }
    void need(std::size_t n, const char *what) const {
        if (remaining() < n) throw ValidationError(context_ + " truncated while reading " + what);
    }
    template <typename T> T le(const char *what) {
        using U = std::make_unsigned_t<T>;
        need(sizeof(T), what);
        U u = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(static_cast<U>(b_[pos_ + i]) << (8 * i));
        pos_ += sizeof(T);
        return static_cast<T>(u);
    }
    std::string str(std::size_t n, const char *what) {
        need(n, what);
        std::string s(reinterpret_cast<const char *>(b_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    float f32(const char *what) { return std::bit_cast<float>(le<std::uint32_t>(what)); }
    double f64(const char *what) { return std::bit_cast<double>(le<std::uint64_t>(what)); }
    const std::string &context() const { return context_; }

private:
    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
    std::string context_;
};

} // namespace tfh::detail
