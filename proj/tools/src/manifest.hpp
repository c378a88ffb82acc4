#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace marginlab::cli {

/// Filesystem failures map to exit code 3.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// FNV-1a 64-bit content hash, hex encoded.
std::string fnv1a_hex(std::string_view bytes);

std::string read_text(const std::filesystem::path& path);

/// Writes to <path>.tmp, then renames into place.
void write_text_atomic(const std::filesystem::path& path, const std::string& content);

/// One manifest per successful command run: the resolved config, the
/// file checksums, and enough context to reproduce the run.
struct RunManifest {
    std::string command;
    nlohmann::json config;
    nlohmann::json inputs = nlohmann::json::object();   // name -> path
    nlohmann::json outputs = nlohmann::json::object();  // name -> path
    std::uint64_t seed = 0;
    double duration_ms = 0.0;

    /// Hashes every output file (checksums keyed by filename, so two runs
    /// into different directories compare equal) and writes atomically.
    void write(const std::filesystem::path& path) const;
};

}  // namespace marginlab::cli
