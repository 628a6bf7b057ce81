#include "vulgnn/manifest.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "vulgnn/common.hpp"

namespace vulgnn {

namespace fs = std::filesystem;

namespace {

std::string fnv1a64_hex(std::string_view data) { return to_hex(fnv1a64(data)); }

std::pair<std::string, std::uint64_t> digest_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open input for digesting: " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string data = buf.str();
    return {fnv1a64_hex(data), data.size()};
}

} // namespace

DigestEntry digest_path(const std::string& path) {
    DigestEntry entry;
    entry.path = path;
    const fs::path p(path);
    if (fs::is_directory(p)) {
        std::vector<fs::path> files;
        for (const auto& de : fs::recursive_directory_iterator(p)) {
            if (de.is_regular_file()) {
                files.push_back(de.path());
            }
        }
        std::sort(files.begin(), files.end());
        std::ostringstream combined;
        for (const fs::path& f : files) {
            auto [digest, bytes] = digest_file(f);
            combined << fs::relative(f, p).generic_string() << '\0' << digest << '\n';
            entry.bytes += bytes;
        }
        entry.digest = fnv1a64_hex(combined.str());
    } else if (fs::is_regular_file(p)) {
        auto [digest, bytes] = digest_file(p);
        entry.digest = digest;
        entry.bytes = bytes;
    } else {
        throw DataError("input does not exist: " + path);
    }
    return entry;
}

std::string current_timestamp_utc() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return std::string(buf);
}

std::string manifest_to_json(const RunManifest& manifest) {
    nlohmann::json inputs = nlohmann::json::array();
    for (const DigestEntry& e : manifest.inputs) {
        inputs.push_back({{"path", e.path}, {"digest", e.digest}, {"bytes", e.bytes}});
    }
    nlohmann::json doc = {{"tool_version", manifest.tool_version},
                          {"created", manifest.created},
                          {"seed", manifest.seed},
                          {"config_digest", manifest.config_digest},
                          {"inputs", inputs},
                          {"outputs", manifest.outputs}};
    return doc.dump(2);
}

void write_manifest(const RunManifest& manifest, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError("cannot write manifest: " + path);
    }
    out << manifest_to_json(manifest) << "\n";
}

} // namespace vulgnn
