#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "guidecap/features.hpp"

namespace gcap {

struct TrainingTuple {
    std::string image_id;
    ImageFeatures features;
    std::string guiding_text;
    std::string caption;
};

struct CorpusStats {
    int64_t n_images = 0;
    int64_t n_tuples = 0;
    int64_t n_unique_guiding_texts = 0;
    int64_t n_unique_tokens = 0;
    double guide_len_frac_1 = 0.0;
    double guide_len_frac_2 = 0.0;
    double guide_len_frac_3plus = 0.0;
    double guide_entropy_bits = 0.0;
};

struct OverlapStats {
    int64_t n_unique_test_guides = 0;
    double pct_guides_seen_in_train = 0.0;
    int64_t n_unique_test_guide_tokens = 0;
    double pct_tokens_seen_in_train = 0.0;
};

struct SyntheticWorldSpec {
    uint64_t rng_seed = 1;
    int n_objects = 24;
    int n_attributes = 8;
    int n_relations = 6;
    int objects_per_image_min = 2;
    int objects_per_image_max = 4;
    float feature_noise_sigma = 0.05f;
    FeatureDims dims;
};

// Fixed 50-word function-word list, versioned as data in stopwords.cpp.
const std::vector<std::string>& stopwords();
bool is_stopword(const std::string& word);
// Prepositions and verb forms that terminate a salient span.
bool is_span_terminator(const std::string& word);

// First maximal noun-like span: the longest run of non-stopword tokens before
// the first span terminator, falling back to the first non-stopword token.
// Throws DataError when the caption is entirely stopwords.
std::string extract_guiding_text(const std::string& caption);

// True when the normalized guide token sequence occurs contiguously in the
// normalized caption token sequence. Shared with metrics' verbatim presence.
bool guide_in_caption(const std::string& guide, const std::string& caption);

std::vector<TrainingTuple> text_match_filter(std::span<const TrainingTuple> tuples);

std::vector<TrainingTuple> generate_synthetic_corpus(const SyntheticWorldSpec& spec, int n_images,
                                                     int guides_per_image);

// Noise-free global feature for a set of object ids; test hook for the
// multiset-injectivity property.
Tensor synth_global_feature(const SyntheticWorldSpec& spec, std::span<const int> object_ids);

// Built-in synthetic inventories (objects/attributes/relations).
int synth_max_objects();
int synth_max_attributes();
int synth_max_relations();

CorpusStats compute_corpus_stats(std::span<const TrainingTuple> tuples);
OverlapStats compute_overlap(std::span<const TrainingTuple> train_tuples, std::span<const std::string> test_guides);

// JSONL records {image_id, guiding_text, caption, features_file,
// feature_offsets}; the features live in a sibling GTEN container file.
void save_tuples(std::span<const TrainingTuple> tuples, const std::filesystem::path& jsonl_path);
std::vector<TrainingTuple> load_tuples(const std::filesystem::path& jsonl_path);

// T2-style guide file: image_id then up to 6 tab-separated guides per line.
using GuideEntry = std::pair<std::string, std::vector<std::string>>;
void save_guide_file(std::span<const GuideEntry> entries, const std::filesystem::path& path);
std::vector<GuideEntry> load_guide_file(const std::filesystem::path& path);

std::string corpus_stats_csv(const CorpusStats& s);
std::string overlap_stats_csv(const OverlapStats& s);

}  // namespace gcap
