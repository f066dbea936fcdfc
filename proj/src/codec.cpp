#include "v2g/codec.hpp"

#include <bit>

namespace v2g::codec {

Writer& Writer::u8(std::uint8_t v) {
    buf_.push_back(v);
    return *this;
}

Writer& Writer::u32(std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) buf_.push_back(static_cast<std::uint8_t>(v >> shift));
    return *this;
}

Writer& Writer::u64(std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8) buf_.push_back(static_cast<std::uint8_t>(v >> shift));
    return *this;
}

Writer& Writer::f64(double v) { return u64(std::bit_cast<std::uint64_t>(v)); }

Writer& Writer::raw(std::span<const std::uint8_t> data) {
    buf_.insert(buf_.end(), data.begin(), data.end());
    return *this;
}

Writer& Writer::bytes(std::span<const std::uint8_t> data) {
    count(data.size());
    return raw(data);
}

Writer& Writer::str(std::string_view s) {
    count(s.size());
    buf_.insert(buf_.end(), s.begin(), s.end());
    return *this;
}

Writer& Writer::count(std::size_t n) {
    if (n > UINT32_MAX) throw std::length_error("canonical encoding: length exceeds u32");
    return u32(static_cast<std::uint32_t>(n));
}

std::span<const std::uint8_t> Reader::raw(std::size_t n) {
    if (n > data_.size() - pos_) throw DecodeError("truncated input");
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
}

std::uint8_t Reader::u8() { return raw(1)[0]; }

std::uint32_t Reader::u32() {
    std::uint32_t v = 0;
    for (auto b : raw(4)) v = (v << 8) | b;
    return v;
}

std::uint64_t Reader::u64() {
    std::uint64_t v = 0;
    for (auto b : raw(8)) v = (v << 8) | b;
    return v;
}

double Reader::f64() { return std::bit_cast<double>(u64()); }

Bytes Reader::bytes() {
    auto s = raw(count());
    return Bytes(s.begin(), s.end());
}

std::string Reader::str() {
    auto s = raw(count());
    return std::string(s.begin(), s.end());
}

std::size_t Reader::count(std::size_t min_element_size) {
    const std::size_t n = u32();
    if (min_element_size > 0 && n > (data_.size() - pos_) / min_element_size)
        throw DecodeError("length prefix exceeds remaining input");
    return n;
}

void Reader::expect_done() const {
    if (!done()) throw DecodeError("trailing bytes after canonical value");
}

std::string to_hex(std::span<const std::uint8_t> data) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(data.size() * 2);
    for (auto b : data) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0x0f]);
    }
    return out;
}

namespace {

int nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

}  // namespace

Bytes from_hex(std::string_view hex) {
    if (hex.size() % 2 != 0) throw DecodeError("odd-length hex string");
    Bytes out(hex.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const int hi = nibble(hex[2 * i]);
        const int lo = nibble(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) throw DecodeError("invalid hex character");
        out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return out;
}

}  // namespace v2g::codec
