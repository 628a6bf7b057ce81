#pragma once

#include <cstdint>
#include <ostream>
#include <istream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace vulgnn {

// CPG schema sizes the whole pipeline is keyed to.
inline constexpr std::size_t kNodeKindCount = 44;
inline constexpr std::size_t kEdgeRelationCount = 20;

// Configuration or usage problems (CLI exit code 1).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent input data (CLI exit code 2).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values or other numerical faults during compute (CLI exit code 3).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// FNV-1a, used for config hashes and dataset digests in run manifests.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xCBF29CE484222325ull) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

std::string to_hex(std::uint64_t v);

// Little-endian binary I/O for checkpoint and shard files.
namespace io {

void write_u8(std::ostream& os, std::uint8_t v);
void write_u16(std::ostream& os, std::uint16_t v);
void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_bytes(std::ostream& os, std::string_view bytes);

std::uint8_t read_u8(std::istream& is);
std::uint16_t read_u16(std::istream& is);
std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
std::string read_bytes(std::istream& is, std::size_t n);

} // namespace io

} // namespace vulgnn
