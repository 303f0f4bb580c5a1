#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "guidecap/common.hpp"

namespace gcap {

inline constexpr const char* kToolVersion = "0.1.0";

// Emitted alongside every command's outputs. Paths are stored relative to the
// manifest's directory and nothing time-dependent goes in, so re-running a
// command with the same inputs reproduces the manifest byte for byte.
struct RunManifest {
    std::string command;
    std::string version = kToolVersion;
    uint64_t rng_seed = 0;
    bool deterministic = false;
    std::map<std::string, std::string> config;  // resolved, defaults materialized
    std::vector<std::pair<std::string, std::string>> inputs;  // path, sha256
    std::vector<std::string> outputs;
};

std::string sha256_file(const std::filesystem::path& path);

void write_manifest(const RunManifest& m, const std::filesystem::path& dir);
RunManifest read_manifest(const std::filesystem::path& file);

}  // namespace gcap
