#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lpcn/errors.hpp"

namespace lpcn {

// Little-endian byte buffer with a running CRC32 trailer. All project file
// formats (LPCN / LPCO / LPCD) are written through this: payload bytes, then
// CRC32 of everything before it.
class ByteWriter {
  public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(std::uint8_t(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(std::uint8_t(v >> (8 * i)));
    }
    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void magic(const char m[4]) { buf_.insert(buf_.end(), m, m + 4); }

    // Appends the CRC and writes atomically (temp file + rename).
    void write_file(const std::filesystem::path& path) {
        const std::uint32_t crc =
            ::crc32(0, reinterpret_cast<const Bytef*>(buf_.data()), uInt(buf_.size()));
        u32(crc);
        const std::filesystem::path tmp = path.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw IoError("cannot open for writing: " + tmp.string());
            out.write(reinterpret_cast<const char*>(buf_.data()),
                      std::streamsize(buf_.size()));
            if (!out) throw IoError("short write: " + tmp.string());
        }
        std::filesystem::rename(tmp, path);
    }

    const std::vector<std::uint8_t>& bytes() const { return buf_; }

  private:
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
  public:
    explicit ByteReader(std::vector<std::uint8_t> bytes) : buf_(std::move(bytes)) {}

    static ByteReader from_file(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open: " + path.string());
        std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
        return ByteReader(std::move(bytes));
    }

    // Validates the CRC trailer and removes it from the readable range.
    void check_crc(const std::string& what) {
        if (buf_.size() < 4) throw FormatError(what + ": file truncated (no CRC)");
        std::uint32_t stored = 0;
        for (int i = 0; i < 4; ++i)
            stored |= std::uint32_t(buf_[buf_.size() - 4 + i]) << (8 * i);
        const std::uint32_t actual = ::crc32(
            0, reinterpret_cast<const Bytef*>(buf_.data()), uInt(buf_.size() - 4));
        if (stored != actual) throw FormatError(what + ": checksum mismatch");
        end_ = buf_.size() - 4;
    }

    std::uint8_t u8() {
        need(1);
        return buf_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(buf_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(buf_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    void expect_magic(const char m[4], const std::string& what) {
        need(4);
        if (std::memcmp(buf_.data() + pos_, m, 4) != 0)
            throw FormatError(what + ": bad magic");
        pos_ += 4;
    }

    std::size_t remaining() const { return end_ - pos_; }

  private:
    void need(std::size_t n) {
        if (pos_ + n > end_) throw FormatError("file truncated (payload too short)");
    }

    std::vector<std::uint8_t> buf_;
    std::size_t pos_ = 0;
    std::size_t end_ = buf_.empty() ? 0 : buf_.size();
};

}  // namespace lpcn
