#include "guidecap/corpus.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "guidecap/gten.hpp"
#include "guidecap/tokenizer.hpp"

namespace gcap {

using nlohmann::json;

std::string extract_guiding_text(const std::string& caption) {
    const auto tokens = tokenize_words(caption);
    if (tokens.empty()) throw DataError("extract_guiding_text: empty caption");

    size_t stop_at = tokens.size();
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (is_span_terminator(tokens[i])) {
            stop_at = i;
            break;
        }
    }
    // Longest run of consecutive non-stopword tokens before the terminator.
    size_t best_begin = 0, best_len = 0;
    size_t run_begin = 0, run_len = 0;
    for (size_t i = 0; i < stop_at; ++i) {
        if (is_stopword(tokens[i])) {
            run_len = 0;
            continue;
        }
        if (run_len == 0) run_begin = i;
        ++run_len;
        if (run_len > best_len) {
            best_len = run_len;
            best_begin = run_begin;
        }
    }
    if (best_len == 0) {
        // Fall back to the first non-stopword token anywhere in the caption.
        for (const auto& t : tokens) {
            if (!is_stopword(t)) return t;
        }
        throw DataError("extract_guiding_text: caption is entirely stopwords: \"" + caption + "\"");
    }
    std::string out;
    for (size_t i = best_begin; i < best_begin + best_len; ++i) {
        if (!out.empty()) out += ' ';
        out += tokens[i];
    }
    return out;
}

bool guide_in_caption(const std::string& guide, const std::string& caption) {
    const auto g = tokenize_words(guide);
    const auto c = tokenize_words(caption);
    if (g.empty() || g.size() > c.size()) return false;
    for (size_t i = 0; i + g.size() <= c.size(); ++i) {
        bool match = true;
        for (size_t j = 0; j < g.size(); ++j) {
            if (c[i + j] != g[j]) {
                match = false;
                break;
            }
        }
        if (match) return true;
    }
    return false;
}

std::vector<TrainingTuple> text_match_filter(std::span<const TrainingTuple> tuples) {
    std::vector<TrainingTuple> kept;
    for (const auto& t : tuples) {
        if (guide_in_caption(t.guiding_text, t.caption)) kept.push_back(t);
    }
    return kept;
}

CorpusStats compute_corpus_stats(std::span<const TrainingTuple> tuples) {
    if (tuples.empty()) throw DataError("compute_corpus_stats: empty tuple list");
    CorpusStats s;
    s.n_tuples = static_cast<int64_t>(tuples.size());

    std::set<std::string> images;
    std::map<std::string, int64_t> guide_counts;
    std::set<std::string> tokens;
    int64_t len1 = 0, len2 = 0, len3 = 0;
    for (const auto& t : tuples) {
        images.insert(t.image_id);
        const std::string guide = normalize_text(t.guiding_text);
        guide_counts[guide] += 1;
        const auto gw = tokenize_words(t.guiding_text);
        if (gw.size() == 1) ++len1;
        else if (gw.size() == 2) ++len2;
        else ++len3;
        for (const auto& w : gw) tokens.insert(w);
        for (const auto& w : tokenize_words(t.caption)) tokens.insert(w);
    }
    s.n_images = static_cast<int64_t>(images.size());
    s.n_unique_guiding_texts = static_cast<int64_t>(guide_counts.size());
    s.n_unique_tokens = static_cast<int64_t>(tokens.size());
    const double n = static_cast<double>(s.n_tuples);
    s.guide_len_frac_1 = static_cast<double>(len1) / n;
    s.guide_len_frac_2 = static_cast<double>(len2) / n;
    s.guide_len_frac_3plus = static_cast<double>(len3) / n;

    double h = 0.0;
    for (const auto& [g, c] : guide_counts) {
        const double p = static_cast<double>(c) / n;
        h -= p * std::log2(p);
    }
    s.guide_entropy_bits = h < 0.0 ? 0.0 : h;
    return s;
}

OverlapStats compute_overlap(std::span<const TrainingTuple> train_tuples,
                             std::span<const std::string> test_guides) {
    if (test_guides.empty()) throw DataError("compute_overlap: empty test guide list");
    std::set<std::string> train_guides;
    std::set<std::string> train_tokens;
    for (const auto& t : train_tuples) {
        train_guides.insert(normalize_text(t.guiding_text));
        for (const auto& w : tokenize_words(t.guiding_text)) train_tokens.insert(w);
        for (const auto& w : tokenize_words(t.caption)) train_tokens.insert(w);
    }
    std::set<std::string> guides;
    std::set<std::string> tokens;
    for (const auto& g : test_guides) {
        guides.insert(normalize_text(g));
        for (const auto& w : tokenize_words(g)) tokens.insert(w);
    }
    OverlapStats o;
    o.n_unique_test_guides = static_cast<int64_t>(guides.size());
    o.n_unique_test_guide_tokens = static_cast<int64_t>(tokens.size());
    int64_t seen_guides = 0;
    for (const auto& g : guides) seen_guides += train_guides.count(g) ? 1 : 0;
    int64_t seen_tokens = 0;
    for (const auto& t : tokens) seen_tokens += train_tokens.count(t) ? 1 : 0;
    o.pct_guides_seen_in_train = 100.0 * static_cast<double>(seen_guides) / static_cast<double>(guides.size());
    o.pct_tokens_seen_in_train = 100.0 * static_cast<double>(seen_tokens) / static_cast<double>(tokens.size());
    return o;
}

namespace {

int count_valid_regions(const Tensor& rows) {
    int n = 0;
    for (int64_t i = 0; i < rows.dim(0); ++i) {
        bool nonzero = false;
        for (int64_t j = 0; j < rows.dim(1); ++j) {
            if (rows.at(i, j) != 0.0f) {
                nonzero = true;
                break;
            }
        }
        if (nonzero) n = static_cast<int>(i) + 1;
    }
    return n;
}

}  // namespace

void save_tuples(std::span<const TrainingTuple> tuples, const std::filesystem::path& jsonl_path) {
    std::filesystem::path feat_path = jsonl_path;
    feat_path.replace_extension(".gten");

    std::ofstream jf(jsonl_path, std::ios::binary);
    if (!jf) throw DataError("save_tuples: cannot open " + jsonl_path.string());
    std::ofstream ff(feat_path, std::ios::binary);
    if (!ff) throw DataError("save_tuples: cannot open " + feat_path.string());

    // One feature block per image; tuples of the same image share offsets.
    std::unordered_map<std::string, std::array<uint64_t, 3>> offsets;
    uint64_t pos = 0;
    for (const auto& t : tuples) {
        auto it = offsets.find(t.image_id);
        if (it == offsets.end()) {
            std::array<uint64_t, 3> off{};
            off[0] = pos;
            write_gten(ff, t.features.g);
            pos += gten_byte_size(t.features.g);
            off[1] = pos;
            write_gten(ff, t.features.r_gr);
            pos += gten_byte_size(t.features.r_gr);
            off[2] = pos;
            write_gten(ff, t.features.r_frcnn);
            pos += gten_byte_size(t.features.r_frcnn);
            it = offsets.emplace(t.image_id, off).first;
        }
        json rec;
        rec["image_id"] = t.image_id;
        rec["guiding_text"] = t.guiding_text;
        rec["caption"] = t.caption;
        rec["features_file"] = feat_path.filename().string();
        rec["feature_offsets"] = {{"g", it->second[0]}, {"r_gr", it->second[1]}, {"r_frcnn", it->second[2]}};
        jf << rec.dump() << "\n";
    }
    if (!jf || !ff) throw DataError("save_tuples: write failed");
}

std::vector<TrainingTuple> load_tuples(const std::filesystem::path& jsonl_path) {
    std::ifstream jf(jsonl_path, std::ios::binary);
    if (!jf) throw DataError("load_tuples: cannot open " + jsonl_path.string());

    std::vector<TrainingTuple> out;
    std::unordered_map<std::string, std::shared_ptr<std::ifstream>> files;
    // Features keyed by (file, g offset); tuples of one image share tensors.
    std::map<std::pair<std::string, uint64_t>, ImageFeatures> cache;

    std::string line;
    int64_t line_no = 0;
    while (std::getline(jf, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError("load_tuples: " + jsonl_path.string() + " line " + std::to_string(line_no) + ": " +
                            e.what());
        }
        TrainingTuple t;
        try {
            t.image_id = rec.at("image_id").get<std::string>();
            t.guiding_text = rec.at("guiding_text").get<std::string>();
            t.caption = rec.at("caption").get<std::string>();
        } catch (const json::exception& e) {
            throw DataError("load_tuples: " + jsonl_path.string() + " line " + std::to_string(line_no) + ": " +
                            e.what());
        }
        if (t.guiding_text.empty() || t.caption.empty()) {
            throw DataError("load_tuples: line " + std::to_string(line_no) + ": empty guiding_text or caption");
        }
        const std::string feat_name = rec.at("features_file").get<std::string>();
        const auto& off = rec.at("feature_offsets");
        const uint64_t og = off.at("g").get<uint64_t>();
        const uint64_t ogr = off.at("r_gr").get<uint64_t>();
        const uint64_t ofr = off.at("r_frcnn").get<uint64_t>();

        const auto key = std::make_pair(feat_name, og);
        auto cit = cache.find(key);
        if (cit == cache.end()) {
            auto fit = files.find(feat_name);
            if (fit == files.end()) {
                const auto path = jsonl_path.parent_path() / feat_name;
                auto fs = std::make_shared<std::ifstream>(path, std::ios::binary);
                if (!*fs) throw DataError("load_tuples: missing feature file " + path.string());
                fit = files.emplace(feat_name, std::move(fs)).first;
            }
            ImageFeatures f;
            try {
                auto& is = *fit->second;
                is.clear();
                is.seekg(static_cast<std::streamoff>(og));
                f.g = read_gten(is);
                is.clear();
                is.seekg(static_cast<std::streamoff>(ogr));
                f.r_gr = read_gten(is);
                is.clear();
                is.seekg(static_cast<std::streamoff>(ofr));
                f.r_frcnn = read_gten(is);
            } catch (const DataError& e) {
                throw DataError("load_tuples: image " + t.image_id + ": " + e.what());
            }
            f.region_count = count_valid_regions(f.r_gr);
            cit = cache.emplace(key, std::move(f)).first;
        }
        t.features = cit->second;
        out.push_back(std::move(t));
    }
    return out;
}

void save_guide_file(std::span<const GuideEntry> entries, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("save_guide_file: cannot open " + path.string());
    for (const auto& [image_id, guides] : entries) {
        if (guides.empty() || guides.size() > 6) {
            throw DataError("save_guide_file: image " + image_id + " needs 1..6 guides, has " +
                            std::to_string(guides.size()));
        }
        os << image_id;
        for (const auto& g : guides) os << "\t" << g;
        os << "\n";
    }
}

std::vector<GuideEntry> load_guide_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("load_guide_file: cannot open " + path.string());
    std::vector<GuideEntry> out;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> parts;
        size_t start = 0;
        while (true) {
            const size_t tab = line.find('\t', start);
            parts.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (parts.size() < 2 || parts.size() > 7) {
            throw DataError("load_guide_file: line " + std::to_string(line_no) + ": expected image_id + 1..6 guides");
        }
        out.emplace_back(parts[0], std::vector<std::string>(parts.begin() + 1, parts.end()));
    }
    return out;
}

std::string corpus_stats_csv(const CorpusStats& s) {
    std::ostringstream os;
    os << "n_images,n_tuples,n_unique_guiding_texts,n_unique_tokens,"
          "guide_len_frac_1,guide_len_frac_2,guide_len_frac_3plus,guide_entropy_bits\n";
    os.precision(12);
    os << s.n_images << "," << s.n_tuples << "," << s.n_unique_guiding_texts << "," << s.n_unique_tokens << ","
       << s.guide_len_frac_1 << "," << s.guide_len_frac_2 << "," << s.guide_len_frac_3plus << ","
       << s.guide_entropy_bits << "\n";
    return os.str();
}

std::string overlap_stats_csv(const OverlapStats& s) {
    std::ostringstream os;
    os << "n_unique_test_guides,pct_guides_seen_in_train,n_unique_test_guide_tokens,pct_tokens_seen_in_train\n";
    os.precision(12);
    os << s.n_unique_test_guides << "," << s.pct_guides_seen_in_train << "," << s.n_unique_test_guide_tokens << ","
       << s.pct_tokens_seen_in_train << "\n";
    return os.str();
}

}  // namespace gcap
