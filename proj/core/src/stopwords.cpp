#include "guidecap/corpus.hpp"

#include <algorithm>

namespace gcap {

namespace {

// 50 entries. Determinism matters more than linguistic coverage here, so the
// list is frozen data; edit with care, fixtures depend on it.
const std::vector<std::string> kStopwords = {
    // articles, determiners, pronouns, conjunctions, misc
    "a", "an", "the", "this", "that", "these", "those", "and", "or", "but",
    "it", "he", "she", "they", "we", "you", "i", "not", "there", "as",
    // verb forms (span terminators)
    "is", "are", "was", "were", "be", "has", "have", "had", "do", "did",
    // prepositions (span terminators)
    "in", "on", "at", "of", "with", "by", "for", "from", "to", "into",
    "over", "under", "near", "behind", "above", "below", "against", "across", "beside", "between",
};

const std::vector<std::string> kTerminators = {
    "is", "are", "was", "were", "be", "has", "have", "had", "do", "did",
    "in", "on", "at", "of", "with", "by", "for", "from", "to", "into",
    "over", "under", "near", "behind", "above", "below", "against", "across", "beside", "between",
};

}  // namespace

const std::vector<std::string>& stopwords() { return kStopwords; }

bool is_stopword(const std::string& word) {
    return std::find(kStopwords.begin(), kStopwords.end(), word) != kStopwords.end();
}

bool is_span_terminator(const std::string& word) {
    return std::find(kTerminators.begin(), kTerminators.end(), word) != kTerminators.end();
}

}  // namespace gcap
