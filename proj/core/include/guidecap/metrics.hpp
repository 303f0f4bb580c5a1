#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "guidecap/common.hpp"

namespace gcap {

struct EvalInstance {
    std::string image_id;
    std::string guiding_text;
    std::vector<std::string> candidate;                 // word tokens
    std::vector<std::vector<std::string>> references;   // >= 1, word tokens
};

struct EvalReport {
    double cider = 0.0;
    double rouge_l = 0.0;
    double meteor = 0.0;
    double div1 = 0.0;
    double div2 = 0.0;
    double presence_verbatim_pct = 0.0;
    int64_t n_instances = 0;
};

// Consensus CIDEr over n-grams 1..4: TF-IDF weighted count vectors with
// IDF = log(|instances| / df), df counted over reference sets (floor 1);
// per instance (10/4) * sum over n of the mean reference cosine; corpus mean.
double cider(std::span<const EvalInstance> instances);

// LCS F-measure, beta = 1.2, max over references, corpus mean.
double rouge_l(std::span<const EvalInstance> instances);

// Exact-match METEOR: unigram alignment maximizing matches then minimizing
// chunks; alpha 0.9, penalty gamma 0.5 * (chunks/m)^3; max over references;
// corpus mean. No stem or synonym stages.
double meteor_lite(std::span<const EvalInstance> instances);

// Distinct n-grams over total n-grams across one image's caption group.
double ngram_diversity(std::span<const std::vector<std::string>> captions, int n);

// Share of instances whose guide token sequence appears contiguously in the
// candidate (same matcher as the corpus text-match filter), in percent.
double presence_verbatim(std::span<const EvalInstance> instances);

// All metrics at once; Div-n is averaged over per-image caption groups.
EvalReport evaluate(std::span<const EvalInstance> instances);

// JSONL {image_id, guiding_text, candidate, references[]}; candidate and
// references are plain strings, tokenized on load.
std::vector<EvalInstance> load_instances(const std::filesystem::path& path);
void save_instances(std::span<const EvalInstance> instances, const std::filesystem::path& path);

std::string eval_report_csv_header();
std::string eval_report_csv_row(const std::string& system, const EvalReport& r);
// Markdown comparison table shaped like the paper's metric tables (SPICE
// omitted; a footnote says so).
std::string eval_report_markdown(std::span<const std::pair<std::string, EvalReport>> systems);

}  // namespace gcap
