#include "ammrg/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ammrg/errors.hpp"

namespace ammrg::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

template <typename T>
void append_raw(std::vector<std::uint8_t>& buf, T v) {
    std::uint8_t tmp[sizeof(T)];
    std::memcpy(tmp, &v, sizeof(T));
    buf.insert(buf.end(), tmp, tmp + sizeof(T));
}

} // namespace

void ByteWriter::bytes(std::string_view raw) { buf_.insert(buf_.end(), raw.begin(), raw.end()); }
void ByteWriter::u8(std::uint8_t v) { buf_.push_back(v); }
void ByteWriter::u16(std::uint16_t v) { append_raw(buf_, v); }
void ByteWriter::u32(std::uint32_t v) { append_raw(buf_, v); }
void ByteWriter::u64(std::uint64_t v) { append_raw(buf_, v); }
void ByteWriter::f32(float v) { append_raw(buf_, v); }
void ByteWriter::f64(double v) { append_raw(buf_, v); }

void ByteWriter::str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
}

void ByteReader::need(std::size_t n, const char* what) const {
    if (remaining() < n) {
        throw TruncationError(std::string("truncated input while reading ") + what, pos_);
    }
}

std::string ByteReader::bytes(std::size_t n) {
    need(n, "raw bytes");
    std::string out(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return out;
}

#define AMMRG_READ_SCALAR(name, T)                     \
    T ByteReader::name() {                             \
        need(sizeof(T), #name);                        \
        T v;                                           \
        std::memcpy(&v, data_.data() + pos_, sizeof(T)); \
        pos_ += sizeof(T);                             \
        return v;                                      \
    }

AMMRG_READ_SCALAR(u8, std::uint8_t)
AMMRG_READ_SCALAR(u16, std::uint16_t)
AMMRG_READ_SCALAR(u32, std::uint32_t)
AMMRG_READ_SCALAR(u64, std::uint64_t)
AMMRG_READ_SCALAR(f32, float)
AMMRG_READ_SCALAR(f64, double)

#undef AMMRG_READ_SCALAR

std::string ByteReader::str() {
    const std::size_t at = pos_;
    const std::uint32_t len = u32();
    if (remaining() < len) {
        throw TruncationError("string length " + std::to_string(len) + " exceeds remaining input", at);
    }
    return bytes(len);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string() + " for reading");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) {
        throw Error("write failed for " + path.string());
    }
}

} // namespace ammrg::io
