#pragma once

#include <filesystem>

#include "guidecap/corpus.hpp"
#include "guidecap/model.hpp"

namespace gcap {

struct BeamConfig {
    int beam_width = 5;
    int max_len = 32;
    float length_normalization_alpha = 0.0f;
};

struct DecodeResult {
    std::vector<int> ids;  // caption token ids, BOS/EOS stripped
    double score = 0.0;    // cumulative log-probability
    bool finished = false;
};

// Standard beam search over the decoder. Expansion keeps the top beam_width
// (hypothesis, token) pairs by cumulative log-probability (divided by
// length^alpha when alpha > 0); EOS moves a hypothesis to the finished pool;
// ties break toward the lexicographically smaller token sequence. Returns the
// best finished hypothesis, else the best live one. Width 1 is exactly greedy
// argmax decoding.
DecodeResult beam_search(const ModelConfig& cfg, const Parameters& params, const ImageFeatures& features,
                         const std::vector<int>& guide_ids, const BeamConfig& beam);

// Table-5 "Set output to T" baseline: the guide tokens, framed as a caption.
DecodeResult copy_baseline(const std::vector<int>& guide_ids);

struct DecodeRecord {
    std::string image_id;
    std::string guiding_text;
    std::string caption;
    double score = 0.0;
};

// Decode one caption per (image, guide) pair; shards across threads (the
// parameter snapshot is read-only) with a deterministic merge by input order.
// flags == 0 selects the copy baseline and needs no parameters.
std::vector<DecodeRecord> decode_batch(const ModelConfig& cfg, const Parameters& params, const Vocab& vocab,
                                       std::span<const TrainingTuple> tuples, const BeamConfig& beam,
                                       int n_threads);

void save_decodes(std::span<const DecodeRecord> records, const std::filesystem::path& path);
std::vector<DecodeRecord> load_decodes(const std::filesystem::path& path);

}  // namespace gcap
