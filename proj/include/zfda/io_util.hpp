#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "zfda/common.hpp"

namespace zfda {

// Little-endian byte stream helpers shared by the binary file formats.

class ByteWriter {
public:
    void u8(uint8_t v) { bytes_.push_back(v); }
    void u16(uint16_t v) {
        for (int i = 0; i < 2; ++i) bytes_.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<uint64_t>(v)); }
    void raw(const uint8_t* p, size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
    void magic(const char tag[4]) { raw(reinterpret_cast<const uint8_t*>(tag), 4); }

    const std::vector<uint8_t>& bytes() const { return bytes_; }

private:
    std::vector<uint8_t> bytes_;
};

class ByteReader {
public:
    ByteReader(const uint8_t* data, size_t len, std::string what)
        : data_(data), len_(len), what_(std::move(what)) {}
    explicit ByteReader(const std::vector<uint8_t>& data, std::string what)
        : ByteReader(data.data(), data.size(), std::move(what)) {}

    uint8_t u8() { return take(1)[0]; }
    uint16_t u16() {
        const uint8_t* p = take(2);
        return static_cast<uint16_t>(p[0] | (p[1] << 8));
    }
    uint32_t u32() {
        const uint8_t* p = take(4);
        return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
               (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
    }
    uint64_t u64() {
        uint64_t v = 0;
        const uint8_t* p = take(8);
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    const uint8_t* raw(size_t n) { return take(n); }

    void expect_magic(const char tag[4]) {
        const uint8_t* p = take(4);
        if (std::memcmp(p, tag, 4) != 0)
            throw DataError(what_ + ": bad magic (expected '" + std::string(tag, 4) + "')");
    }
    size_t remaining() const { return len_ - pos_; }
    void expect_eof() const {
        if (pos_ != len_)
            throw DataError(what_ + ": " + std::to_string(len_ - pos_) + " trailing bytes after payload");
    }

private:
    const uint8_t* take(size_t n) {
        if (len_ - pos_ < n) throw DataError(what_ + ": truncated file");
        const uint8_t* p = data_ + pos_;
        pos_ += n;
        return p;
    }
    const uint8_t* data_;
    size_t len_;
    size_t pos_ = 0;
    std::string what_;
};

std::vector<uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes);

}  // namespace zfda
