#pragma once

#include <filesystem>
#include <string>

#include "guidecap/model.hpp"

namespace gcap {

// Book-keeping carried inside a checkpoint so training can resume with a
// bit-identical trajectory.
struct TrainMeta {
    int64_t step = 0;
    float lr = 0.0f;
    double best_dev_cider = -1.0;
    int64_t best_step = -1;
    std::string rng_state;  // serialized std::mt19937

    bool operator==(const TrainMeta&) const = default;
};

// Checkpoint file: magic "GCKP", u32 version, u64 JSON header length, JSON
// header (model config, tensor names and offsets, train meta), then one GTEN
// block per parameter. Round trips bit-exactly; loading validates every
// tensor shape against the config and names the offending parameter.
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const Parameters& params,
                     const TrainMeta& meta);

struct Checkpoint {
    ModelConfig config;
    Parameters params;
    TrainMeta meta;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

// JSON round trip for configs (also used by the CLI manifest).
std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace gcap
