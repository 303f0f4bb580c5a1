#include "guidecap/manifest.hpp"

#include <fstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

namespace gcap {

using nlohmann::json;

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("sha256: cannot open " + path.string());

    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        if (ctx) EVP_MD_CTX_free(ctx);
        throw Error("sha256: digest init failed");
    }
    char buf[1 << 16];
    while (is) {
        is.read(buf, sizeof(buf));
        const auto got = is.gcount();
        if (got > 0) EVP_DigestUpdate(ctx, buf, static_cast<size_t>(got));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);

    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

void write_manifest(const RunManifest& m, const std::filesystem::path& dir) {
    json j;
    j["command"] = m.command;
    j["version"] = m.version;
    j["rng_seed"] = m.rng_seed;
    j["deterministic"] = m.deterministic;
    j["config"] = m.config;
    json inputs = json::array();
    for (const auto& [path, digest] : m.inputs) inputs.push_back({{"path", path}, {"sha256", digest}});
    j["inputs"] = inputs;
    j["outputs"] = m.outputs;

    std::ofstream os(dir / "manifest.json", std::ios::binary);
    if (!os) throw DataError("manifest: cannot open " + (dir / "manifest.json").string());
    os << j.dump(2) << "\n";
}

RunManifest read_manifest(const std::filesystem::path& file) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw DataError("manifest: cannot open " + file.string());
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw DataError("manifest: bad JSON in " + file.string() + ": " + e.what());
    }
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.version = j.at("version").get<std::string>();
    m.rng_seed = j.at("rng_seed").get<uint64_t>();
    m.deterministic = j.at("deterministic").get<bool>();
    m.config = j.at("config").get<std::map<std::string, std::string>>();
    for (const auto& in : j.at("inputs")) {
        m.inputs.emplace_back(in.at("path").get<std::string>(), in.at("sha256").get<std::string>());
    }
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
    return m;
}

}  // namespace gcap
