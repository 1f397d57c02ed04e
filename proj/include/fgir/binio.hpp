#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fgir/errors.hpp"

namespace fgir {

// Little-endian binary stream helpers shared by every persisted format.
// Writers emit explicit byte order; readers track the byte offset so that
// truncation and corruption errors can name where parsing stopped.

class BinWriter {
public:
    explicit BinWriter(const std::filesystem::path& path)
        : out_(path, std::ios::binary), path_(path.string()) {
        if (!out_) throw IoError("cannot open for writing: " + path_);
    }

    void bytes(const void* data, std::size_t n) {
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    }

    void magic(const char tag[4]) { bytes(tag, 4); }

    void u8(std::uint8_t v) { bytes(&v, 1); }

    void u32(std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
        bytes(b, 4);
    }

    void u64(std::uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        bytes(b, 8);
    }

    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    void f64_array(const double* data, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) f64(data[i]);
    }

    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }

    void close() {
        out_.close();
        if (!out_) throw IoError("write failed: " + path_);
    }

private:
    std::ofstream out_;
    std::string path_;
};

class BinReader {
public:
    explicit BinReader(const std::filesystem::path& path)
        : in_(path, std::ios::binary), path_(path.string()) {
        if (!in_) throw IoError("cannot open for reading: " + path_);
    }

    std::size_t offset() const { return offset_; }

    void bytes(void* data, std::size_t n) {
        in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw FormatError(path_ + ": truncated at offset " + std::to_string(offset_));
        offset_ += n;
    }

    void expect_magic(const char tag[4]) {
        char got[4];
        bytes(got, 4);
        if (std::memcmp(got, tag, 4) != 0)
            throw FormatError(path_ + ": bad magic at offset 0, expected \"" + std::string(tag, 4) + "\"");
    }

    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }

    std::uint32_t u32() {
        unsigned char b[4];
        bytes(b, 4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }

    std::uint64_t u64() {
        unsigned char b[8];
        bytes(b, 8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }

    double f64() { return std::bit_cast<double>(u64()); }

    void f64_array(double* data, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) data[i] = f64();
    }

    std::string str(std::size_t max_len = 1u << 20) {
        std::uint32_t n = u32();
        if (n > max_len)
            throw FormatError(path_ + ": implausible string length at offset " + std::to_string(offset_ - 4));
        std::string s(n, '\0');
        if (n > 0) bytes(s.data(), n);
        return s;
    }

    void expect_eof() {
        char c;
        in_.read(&c, 1);
        if (in_.gcount() != 0)
            throw FormatError(path_ + ": trailing bytes at offset " + std::to_string(offset_));
    }

private:
    std::ifstream in_;
    std::string path_;
    std::size_t offset_ = 0;
};

} // namespace fgir
