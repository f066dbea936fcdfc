#pragma once

// Canonical byte encoding shared by everything that is hashed or signed.
//
//   u8        1 byte
//   u32, u64  big-endian
//   f64       IEEE-754 binary64 bit pattern as u64
//   bytes     u32 length, then the raw bytes
//   string    same as bytes (UTF-8)
//   list<T>   u32 count, then each element
//
// Decoding is strict: truncation, oversize lengths, and trailing bytes are errors.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace v2g::codec {

using Bytes = std::vector<std::uint8_t>;

class DecodeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Writer {
public:
    Writer& u8(std::uint8_t v);
    Writer& u32(std::uint32_t v);
    Writer& u64(std::uint64_t v);
    Writer& f64(double v);
    Writer& raw(std::span<const std::uint8_t> data);
    Writer& bytes(std::span<const std::uint8_t> data);
    Writer& str(std::string_view s);
    Writer& count(std::size_t n);

    const Bytes& data() const { return buf_; }
    Bytes take() { return std::move(buf_); }

private:
    Bytes buf_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

    std::uint8_t u8();
    std::uint32_t u32();
    std::uint64_t u64();
    double f64();
    std::span<const std::uint8_t> raw(std::size_t n);
    Bytes bytes();
    std::string str();
    /// List length, rejected when it cannot possibly fit in what is left.
    std::size_t count(std::size_t min_element_size = 1);

    bool done() const { return pos_ == data_.size(); }
    void expect_done() const;

private:
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

std::string to_hex(std::span<const std::uint8_t> data);
Bytes from_hex(std::string_view hex);

}  // namespace v2g::codec
