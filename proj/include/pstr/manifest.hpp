#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pstr/common.hpp"
#include "pstr/rng.hpp"

namespace pstr {

inline constexpr const char* kArtifactVersion = "0.1.0";

// Audit record emitted alongside every output file: the exact command,
// seeds, and digests of the inputs it consumed.
struct RunManifest {
    std::string command;
    std::vector<std::string> args;
    std::vector<std::uint64_t> seeds;
    std::vector<std::pair<std::string, std::string>> input_digests; // (path, fnv1a hex)
};

inline std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot digest missing file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    std::ostringstream hex;
    hex << std::hex << fnv1a(buf.str());
    return hex.str();
}

inline void write_manifest(const RunManifest& m, const std::string& output_path) {
    nlohmann::json j;
    j["artifact_version"] = kArtifactVersion;
    j["command"] = m.command;
    j["args"] = m.args;
    j["seeds"] = m.seeds;
    nlohmann::json inputs = nlohmann::json::object();
    for (const auto& [path, digest] : m.input_digests) inputs[path] = digest;
    j["input_digests"] = std::move(inputs);
    std::ofstream out(output_path + ".manifest.json", std::ios::binary);
    if (!out) throw ArgumentError("cannot write manifest for: " + output_path);
    out << j.dump(2) << "\n";
}

} // namespace pstr
