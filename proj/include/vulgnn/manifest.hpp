#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace vulgnn {

inline constexpr const char* kToolVersion = "0.1.0";

// Content digest of one input the run depends on.
struct DigestEntry {
    std::string path;
    std::string digest; // fnv1a-64, 16 hex digits
    std::uint64_t bytes = 0;
};

// Audit record written before training starts and never touched again.
// Two runs are comparable exactly when their config digests, seeds and
// input digests agree; the timestamp is the only field allowed to vary.
struct RunManifest {
    std::string tool_version = kToolVersion;
    std::string created; // ISO 8601 UTC
    std::uint64_t seed = 0;
    std::string config_digest;
    std::vector<DigestEntry> inputs;
    std::vector<std::string> outputs;
};

// Digests a file, or a directory as the combined digest of its files
// (sorted by relative path, so the result is order-independent).
DigestEntry digest_path(const std::string& path);

std::string current_timestamp_utc();

std::string manifest_to_json(const RunManifest& manifest);
void write_manifest(const RunManifest& manifest, const std::string& path);

} // namespace vulgnn
