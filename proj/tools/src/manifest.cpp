#include "manifest.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace marginlab::cli {

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t hash = 0xcbf29ce484222325ull;
    for (unsigned char ch : bytes) {
        hash ^= ch;
        hash *= 0x100000001b3ull;
    }
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    if (in.bad()) throw IoError("read failed for " + path.string());
    return buffer.str();
}

void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + path.string());
        out << content;
        out.flush();
        if (!out) throw IoError("write failed for " + path.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move " + tmp + " to " + path.string() + ": " + ec.message());
}

void RunManifest::write(const std::filesystem::path& path) const {
    nlohmann::json checksums = nlohmann::json::object();
    for (const auto& [name, file] : outputs.items()) {
        const std::filesystem::path p = file.get<std::string>();
        checksums[p.filename().string()] = fnv1a_hex(read_text(p));
    }
    const nlohmann::json j{{"command", command}, {"config", config},
                           {"inputs", inputs},   {"outputs", outputs},
                           {"seed", seed},       {"duration_ms", duration_ms},
                           {"checksums", checksums}};
    write_text_atomic(path, j.dump(2) + "\n");
}

}  // namespace marginlab::cli
