#include "guidecap/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "guidecap/gten.hpp"

namespace gcap {

using nlohmann::json;

namespace {

json config_json(const ModelConfig& c) {
    return json{{"d_model", c.d_model},
                {"n_layers", c.n_layers},
                {"n_heads", c.n_heads},
                {"d_ff", c.d_ff},
                {"vocab_size", c.vocab_size},
                {"max_caption_len", c.max_caption_len},
                {"input_flags", ablation_name(c.input_flags)},
                {"g_dim", c.feat.g_dim},
                {"n_regions", c.feat.n_regions},
                {"rgr_dim", c.feat.rgr_dim},
                {"rfrcnn_dim", c.feat.rfrcnn_dim},
                {"proj_hidden", c.proj_hidden},
                {"dropout", c.dropout}};
}

ModelConfig config_from(const json& j) {
    ModelConfig c;
    c.d_model = j.at("d_model").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.max_caption_len = j.at("max_caption_len").get<int>();
    const auto flags = parse_ablation(j.at("input_flags").get<std::string>());
    if (!flags || *flags == 0) throw DataError("checkpoint: bad input_flags " + j.at("input_flags").dump());
    c.input_flags = *flags;
    c.feat.g_dim = j.at("g_dim").get<int>();
    c.feat.n_regions = j.at("n_regions").get<int>();
    c.feat.rgr_dim = j.at("rgr_dim").get<int>();
    c.feat.rfrcnn_dim = j.at("rfrcnn_dim").get<int>();
    c.proj_hidden = j.at("proj_hidden").get<int>();
    c.dropout = j.at("dropout").get<float>();
    return c;
}

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff), static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
    put_u32(os, static_cast<uint32_t>(v & 0xffffffffULL));
    put_u32(os, static_cast<uint32_t>(v >> 32));
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw DataError("checkpoint: truncated header");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) | (static_cast<uint32_t>(b[2]) << 16) |
           (static_cast<uint32_t>(b[3]) << 24);
}

uint64_t get_u64(std::istream& is) {
    const uint64_t lo = get_u32(is);
    const uint64_t hi = get_u32(is);
    return lo | (hi << 32);
}

}  // namespace

std::string model_config_to_json(const ModelConfig& cfg) { return config_json(cfg).dump(); }

ModelConfig model_config_from_json(const std::string& text) {
    try {
        return config_from(json::parse(text));
    } catch (const json::exception& e) {
        throw DataError(std::string("model config: ") + e.what());
    }
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const Parameters& params,
                     const TrainMeta& meta) {
    json header;
    header["model_config"] = config_json(cfg);
    header["train_meta"] = {{"step", meta.step},
                            {"lr", meta.lr},
                            {"best_dev_cider", meta.best_dev_cider},
                            {"best_step", meta.best_step},
                            {"rng_state", meta.rng_state}};
    json tensors = json::array();
    uint64_t off = 0;
    for (const auto& [name, t] : params.named) {
        tensors.push_back({{"name", name}, {"offset", off}});
        off += gten_byte_size(t);
    }
    header["tensors"] = tensors;
    const std::string hs = header.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("checkpoint: cannot open " + path.string() + " for writing");
    os.write("GCKP", 4);
    put_u32(os, 1);
    put_u64(os, hs.size());
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, t] : params.named) write_gten(os, t);
    if (!os) throw DataError("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("checkpoint: cannot open " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "GCKP", 4) != 0) throw DataError("checkpoint: bad magic in " + path.string());
    const uint32_t version = get_u32(is);
    if (version != 1) throw DataError("checkpoint: unsupported version " + std::to_string(version));
    const uint64_t hlen = get_u64(is);
    std::string hs(hlen, '\0');
    is.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!is) throw DataError("checkpoint: truncated JSON header");

    json header;
    try {
        header = json::parse(hs);
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint: bad JSON header: ") + e.what());
    }

    Checkpoint ck;
    ck.config = config_from(header.at("model_config"));
    const auto& tm = header.at("train_meta");
    ck.meta.step = tm.at("step").get<int64_t>();
    ck.meta.lr = tm.at("lr").get<float>();
    ck.meta.best_dev_cider = tm.at("best_dev_cider").get<double>();
    ck.meta.best_step = tm.at("best_step").get<int64_t>();
    ck.meta.rng_state = tm.at("rng_state").get<std::string>();

    const auto expected = parameter_shapes(ck.config);
    for (const auto& entry : header.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        Tensor t = read_gten(is);
        const auto it = expected.find(name);
        if (it == expected.end()) throw ShapeError("checkpoint: unexpected parameter " + name);
        if (t.shape() != it->second) {
            throw ShapeError("checkpoint: parameter " + name + " has shape " + t.shape_str() + ", config expects " +
                             Tensor::shape_str(it->second));
        }
        // Parameters are trainable by definition.
        auto rg = Tensor::from(t.shape(), std::vector<float>(t.values().begin(), t.values().end()), true);
        ck.params.named.emplace(name, std::move(rg));
    }
    for (const auto& [name, shape] : expected) {
        if (!ck.params.named.count(name)) throw ShapeError("checkpoint: missing parameter " + name);
    }
    return ck;
}

}  // namespace gcap
