#include "vulgnn/common.hpp"

#include <array>

namespace vulgnn {

std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return out;
}

namespace io {

namespace {

void put_le(std::ostream& os, std::uint64_t v, int n) {
    std::array<char, 8> buf{};
    for (int i = 0; i < n; ++i) {
        buf[static_cast<std::size_t>(i)] = static_cast<char>(v & 0xFF);
        v >>= 8;
    }
    os.write(buf.data(), n);
}

std::uint64_t get_le(std::istream& is, int n) {
    std::array<char, 8> buf{};
    is.read(buf.data(), n);
    if (!is) {
        throw DataError("unexpected end of stream");
    }
    std::uint64_t v = 0;
    for (int i = n - 1; i >= 0; --i) {
        v = (v << 8) | static_cast<std::uint8_t>(buf[static_cast<std::size_t>(i)]);
    }
    return v;
}

} // namespace

void write_u8(std::ostream& os, std::uint8_t v) { put_le(os, v, 1); }
void write_u16(std::ostream& os, std::uint16_t v) { put_le(os, v, 2); }
void write_u32(std::ostream& os, std::uint32_t v) { put_le(os, v, 4); }
void write_u64(std::ostream& os, std::uint64_t v) { put_le(os, v, 8); }

void write_bytes(std::ostream& os, std::string_view bytes) {
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::uint8_t read_u8(std::istream& is) { return static_cast<std::uint8_t>(get_le(is, 1)); }
std::uint16_t read_u16(std::istream& is) { return static_cast<std::uint16_t>(get_le(is, 2)); }
std::uint32_t read_u32(std::istream& is) { return static_cast<std::uint32_t>(get_le(is, 4)); }
std::uint64_t read_u64(std::istream& is) { return get_le(is, 8); }

std::string read_bytes(std::istream& is, std::size_t n) {
    std::string out(n, '\0');
    is.read(out.data(), static_cast<std::streamsize>(n));
    if (!is) {
        throw DataError("unexpected end of stream");
    }
    return out;
}

} // namespace io

} // namespace vulgnn
