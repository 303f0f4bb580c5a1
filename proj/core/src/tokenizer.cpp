#include "guidecap/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace gcap {

namespace {

const char* kSpecialNames[4] = {"<pad>", "<bos>", "<eos>", "<unk>"};

// Pre-tokens: the first word plain, every following word with its separating
// space attached in front. Merges never cross pre-token boundaries, so no
// piece ever contains an interior space.
std::vector<std::string> pretokens(const std::string& normalized) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < normalized.size()) {
        size_t j = normalized.find(' ', i);
        if (j == std::string::npos) j = normalized.size();
        if (out.empty()) {
            out.push_back(normalized.substr(i, j - i));
        } else {
            out.push_back(" " + normalized.substr(i, j - i));
        }
        i = j + 1;
    }
    return out;
}

std::vector<std::string> byte_symbols(const std::string& pretoken) {
    std::vector<std::string> syms;
    syms.reserve(pretoken.size());
    for (char c : pretoken) syms.emplace_back(1, c);
    return syms;
}

// Repeatedly merge the lowest-ranked adjacent pair, leftmost occurrence
// first. Equivalent to one greedy pass per merge rule in training order.
void apply_merges(std::vector<std::string>& syms,
                  const std::map<std::pair<std::string, std::string>, int>& rank) {
    if (syms.size() < 2) return;
    while (true) {
        int best_rank = -1;
        size_t best_pos = 0;
        for (size_t i = 0; i + 1 < syms.size(); ++i) {
            auto it = rank.find({syms[i], syms[i + 1]});
            if (it != rank.end() && (best_rank < 0 || it->second < best_rank)) {
                best_rank = it->second;
                best_pos = i;
            }
        }
        if (best_rank < 0) break;
        syms[best_pos] += syms[best_pos + 1];
        syms.erase(syms.begin() + static_cast<std::ptrdiff_t>(best_pos) + 1);
    }
}

}  // namespace

std::string normalize_text(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

std::vector<std::string> tokenize_words(std::string_view text) {
    const std::string norm = normalize_text(text);
    std::vector<std::string> words;
    std::istringstream is(norm);
    std::string w;
    while (is >> w) words.push_back(w);
    return words;
}

Vocab train_vocab(std::span<const std::string> corpus, int target_size) {
    if (corpus.empty()) throw DataError("train_vocab: empty corpus");
    if (target_size < Vocab::kNumSpecials + 1) {
        throw DataError("train_vocab: target_size must be at least " + std::to_string(Vocab::kNumSpecials + 1));
    }

    // Unique pre-token -> occurrence count, plus current symbol split.
    std::map<std::string, int64_t> counts;
    for (const auto& text : corpus) {
        for (auto& pt : pretokens(normalize_text(text))) counts[pt] += 1;
    }
    std::vector<std::pair<std::vector<std::string>, int64_t>> words;
    words.reserve(counts.size());
    for (const auto& [pt, c] : counts) words.emplace_back(byte_symbols(pt), c);

    Vocab v;
    for (const char* s : kSpecialNames) v.id_to_piece.emplace_back(s);

    std::map<std::string, int> alphabet;  // sorted by byte value for determinism
    for (const auto& [syms, c] : words) {
        for (const auto& s : syms) alphabet[s] = 1;
    }
    if (static_cast<int>(v.id_to_piece.size() + alphabet.size()) > target_size) {
        throw DataError("train_vocab: target_size " + std::to_string(target_size) + " below specials + alphabet (" +
                        std::to_string(v.id_to_piece.size() + alphabet.size()) + ")");
    }
    for (const auto& [s, _] : alphabet) v.id_to_piece.push_back(s);

    while (static_cast<int>(v.id_to_piece.size()) < target_size) {
        std::map<std::pair<std::string, std::string>, int64_t> pair_counts;
        for (const auto& [syms, c] : words) {
            for (size_t i = 0; i + 1 < syms.size(); ++i) pair_counts[{syms[i], syms[i + 1]}] += c;
        }
        // Most frequent pair; ties broken by lexicographically smaller merged
        // string so training is deterministic.
        int64_t best_count = 0;
        std::pair<std::string, std::string> best;
        std::string best_merged;
        for (const auto& [pr, c] : pair_counts) {
            const std::string merged = pr.first + pr.second;
            if (c > best_count || (c == best_count && best_count > 0 && merged < best_merged)) {
                best_count = c;
                best = pr;
                best_merged = merged;
            }
        }
        if (best_count < 2) break;

        v.merges.push_back(best);
        v.id_to_piece.push_back(best_merged);
        for (auto& [syms, c] : words) {
            for (size_t i = 0; i + 1 < syms.size();) {
                if (syms[i] == best.first && syms[i + 1] == best.second) {
                    syms[i] = best_merged;
                    syms.erase(syms.begin() + static_cast<std::ptrdiff_t>(i) + 1);
                } else {
                    ++i;
                }
            }
        }
    }

    for (size_t i = 0; i < v.id_to_piece.size(); ++i) v.piece_to_id[v.id_to_piece[i]] = static_cast<int>(i);
    return v;
}

std::vector<int> encode(const Vocab& v, std::string_view text) {
    const std::string norm = normalize_text(text);
    if (norm.empty()) return {};
    std::map<std::pair<std::string, std::string>, int> rank;
    for (size_t i = 0; i < v.merges.size(); ++i) rank[v.merges[i]] = static_cast<int>(i);

    std::vector<int> ids;
    for (auto& pt : pretokens(norm)) {
        auto syms = byte_symbols(pt);
        apply_merges(syms, rank);
        for (const auto& s : syms) ids.push_back(v.id_of(s));
    }
    return ids;
}

std::string decode(const Vocab& v, std::span<const int> ids) {
    std::string out;
    for (int id : ids) {
        if (id < 0 || id >= v.size()) {
            throw IndexError("decode: id " + std::to_string(id) + " out of range [0," + std::to_string(v.size()) + ")");
        }
        if (id < Vocab::kNumSpecials) continue;
        out += v.id_to_piece[static_cast<size_t>(id)];
    }
    // A leading boundary space can only appear when decoding starts mid-text.
    if (!out.empty() && out.front() == ' ') out.erase(out.begin());
    return out;
}

void save_vocab(const Vocab& v, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("save_vocab: cannot open " + path.string());
    os << "GVOCAB " << v.size() << "\n";
    for (const auto& p : v.id_to_piece) os << p << "\n";
    os << "#MERGES " << v.merges.size() << "\n";
    for (const auto& [l, r] : v.merges) os << l << "\t" << r << "\n";
    if (!os) throw DataError("save_vocab: write failed for " + path.string());
}

Vocab load_vocab(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("load_vocab: cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line) || line.rfind("GVOCAB ", 0) != 0) {
        throw DataError("load_vocab: bad header in " + path.string());
    }
    const int n = std::stoi(line.substr(7));
    Vocab v;
    for (int i = 0; i < n; ++i) {
        if (!std::getline(is, line)) throw DataError("load_vocab: truncated piece list at line " + std::to_string(i + 2));
        v.id_to_piece.push_back(line);
    }
    for (int i = 0; i < Vocab::kNumSpecials; ++i) {
        if (v.id_to_piece[static_cast<size_t>(i)] != kSpecialNames[i]) {
            throw DataError("load_vocab: special id " + std::to_string(i) + " is not " + kSpecialNames[i]);
        }
    }
    if (!std::getline(is, line) || line.rfind("#MERGES ", 0) != 0) {
        throw DataError("load_vocab: missing #MERGES separator");
    }
    const int m = std::stoi(line.substr(8));
    for (int i = 0; i < m; ++i) {
        if (!std::getline(is, line)) throw DataError("load_vocab: truncated merge list");
        const size_t tab = line.find('\t');
        if (tab == std::string::npos) throw DataError("load_vocab: merge line " + std::to_string(i) + " lacks a tab");
        v.merges.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    for (size_t i = 0; i < v.id_to_piece.size(); ++i) v.piece_to_id[v.id_to_piece[i]] = static_cast<int>(i);
    if (v.piece_to_id.size() != v.id_to_piece.size()) {
        throw DataError("load_vocab: duplicate pieces in " + path.string());
    }
    return v;
}

}  // namespace gcap
