#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "guidecap/common.hpp"

namespace gcap {

// Subword vocabulary shared between guiding texts and captions. Byte-pair
// merges over normalized text; the single space that separates words stays
// attached to the first symbol of the following word, so decode is plain
// concatenation and spaces restore themselves.
struct Vocab {
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;
    static constexpr int kNumSpecials = 4;

    std::vector<std::string> id_to_piece;           // [0..3] are the specials
    std::unordered_map<std::string, int> piece_to_id;
    std::vector<std::pair<std::string, std::string>> merges;  // in training order

    int size() const { return static_cast<int>(id_to_piece.size()); }
    int id_of(const std::string& piece) const {
        auto it = piece_to_id.find(piece);
        return it == piece_to_id.end() ? kUnk : it->second;
    }
};

// Lowercase, collapse whitespace runs to a single space, strip ends.
std::string normalize_text(std::string_view text);

// Whitespace tokens of the normalized text. Shared by the corpus matcher and
// the word-level metrics.
std::vector<std::string> tokenize_words(std::string_view text);

Vocab train_vocab(std::span<const std::string> corpus, int target_size);

std::vector<int> encode(const Vocab& v, std::string_view text);
std::string decode(const Vocab& v, std::span<const int> ids);

// Text format: header "GVOCAB <count>", one piece per line in id order, then
// "#MERGES <count>" and tab-separated merge pairs. Bit-exact round trip.
void save_vocab(const Vocab& v, const std::filesystem::path& path);
Vocab load_vocab(const std::filesystem::path& path);

}  // namespace gcap
