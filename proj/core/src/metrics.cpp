#include "guidecap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "guidecap/tokenizer.hpp"

namespace gcap {

using nlohmann::json;

namespace {

void check_instances(std::span<const EvalInstance> instances) {
    if (instances.empty()) throw DataError("metrics: empty instance list");
    for (const auto& ins : instances) {
        if (ins.references.empty()) throw DataError("metrics: instance " + ins.image_id + " has no references");
        if (ins.candidate.empty()) throw DataError("metrics: instance " + ins.image_id + " has empty candidate");
        for (const auto& r : ins.references) {
            if (r.empty()) throw DataError("metrics: instance " + ins.image_id + " has an empty reference");
        }
    }
}

using NgramCounts = std::map<std::string, int64_t>;

NgramCounts ngram_counts(const std::vector<std::string>& tokens, int n) {
    NgramCounts counts;
    if (static_cast<int>(tokens.size()) < n) return counts;
    for (size_t i = 0; i + static_cast<size_t>(n) <= tokens.size(); ++i) {
        std::string key = tokens[i];
        for (int j = 1; j < n; ++j) {
            key += '\x1f';
            key += tokens[i + static_cast<size_t>(j)];
        }
        counts[key] += 1;
    }
    return counts;
}

double tfidf_cosine(const NgramCounts& a, const NgramCounts& b,
                    const std::unordered_map<std::string, double>& idf, double idf_unseen) {
    const auto weight = [&](const std::string& key) {
        const auto it = idf.find(key);
        return it == idf.end() ? idf_unseen : it->second;
    };
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (const auto& [k, c] : a) {
        const double w = static_cast<double>(c) * weight(k);
        na += w * w;
        const auto it = b.find(k);
        if (it != b.end()) dot += w * static_cast<double>(it->second) * weight(k);
    }
    for (const auto& [k, c] : b) {
        const double w = static_cast<double>(c) * weight(k);
        nb += w * w;
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

int64_t lcs_len(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    const size_t m = a.size(), n = b.size();
    std::vector<int64_t> prev(n + 1, 0), cur(n + 1, 0);
    for (size_t i = 1; i <= m; ++i) {
        for (size_t j = 1; j <= n; ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[n];
}

// Matched unigrams (sum of min counts) plus a chunk count from a
// longest-fragment-first cover of the matches. Leftover single matches each
// count as their own chunk.
struct Alignment {
    int64_t matches = 0;
    int64_t chunks = 0;
};

Alignment align_exact(const std::vector<std::string>& cand, const std::vector<std::string>& ref) {
    Alignment al;
    std::map<std::string, int64_t> cc, rc;
    for (const auto& w : cand) cc[w] += 1;
    for (const auto& w : ref) rc[w] += 1;
    for (const auto& [w, c] : cc) {
        const auto it = rc.find(w);
        if (it != rc.end()) al.matches += std::min(c, it->second);
    }
    if (al.matches == 0) return al;

    std::vector<bool> used_c(cand.size(), false), used_r(ref.size(), false);
    int64_t covered = 0;
    while (covered < al.matches) {
        // Longest contiguous common fragment over unused positions,
        // leftmost-in-candidate then leftmost-in-reference on ties.
        size_t best_len = 0, best_i = 0, best_j = 0;
        for (size_t i = 0; i < cand.size(); ++i) {
            if (used_c[i]) continue;
            for (size_t j = 0; j < ref.size(); ++j) {
                if (used_r[j]) continue;
                size_t len = 0;
                while (i + len < cand.size() && j + len < ref.size() && !used_c[i + len] && !used_r[j + len] &&
                       cand[i + len] == ref[j + len]) {
                    ++len;
                }
                if (len > best_len) {
                    best_len = len;
                    best_i = i;
                    best_j = j;
                }
            }
        }
        if (best_len == 0) break;
        for (size_t k = 0; k < best_len; ++k) {
            used_c[best_i + k] = true;
            used_r[best_j + k] = true;
        }
        covered += static_cast<int64_t>(best_len);
        al.chunks += 1;
    }
    // Any matches the fragment cover could not reach align as singletons.
    al.chunks += al.matches - covered;
    return al;
}

}  // namespace

double cider(std::span<const EvalInstance> instances) {
    check_instances(instances);
    const double n_inst = static_cast<double>(instances.size());
    double total = 0.0;
    for (int n = 1; n <= 4; ++n) {
        // df = number of instances whose reference set contains the n-gram.
        std::unordered_map<std::string, int64_t> df;
        for (const auto& ins : instances) {
            std::set<std::string> seen;
            for (const auto& ref : ins.references) {
                for (const auto& [k, c] : ngram_counts(ref, n)) seen.insert(k);
            }
            for (const auto& k : seen) df[k] += 1;
        }
        std::unordered_map<std::string, double> idf;
        idf.reserve(df.size());
        for (const auto& [k, d] : df) idf[k] = std::log(n_inst / static_cast<double>(std::max<int64_t>(d, 1)));
        const double idf_unseen = std::log(n_inst);  // df floor 1 for candidate-only n-grams

        double level = 0.0;
        for (const auto& ins : instances) {
            const auto gc = ngram_counts(ins.candidate, n);
            double ref_mean = 0.0;
            for (const auto& ref : ins.references) {
                ref_mean += tfidf_cosine(gc, ngram_counts(ref, n), idf, idf_unseen);
            }
            level += ref_mean / static_cast<double>(ins.references.size());
        }
        total += level / n_inst;
    }
    return total * (10.0 / 4.0);
}

double rouge_l(std::span<const EvalInstance> instances) {
    check_instances(instances);
    const double beta2 = 1.2 * 1.2;
    double total = 0.0;
    for (const auto& ins : instances) {
        double best = 0.0;
        for (const auto& ref : ins.references) {
            const double lcs = static_cast<double>(lcs_len(ins.candidate, ref));
            if (lcs == 0.0) continue;
            const double r = lcs / static_cast<double>(ref.size());
            const double p = lcs / static_cast<double>(ins.candidate.size());
            const double denom = r + beta2 * p;
            const double f = denom > 0.0 ? ((1.0 + beta2) * p * r) / denom : 0.0;
            best = std::max(best, f);
        }
        total += best;
    }
    return total / static_cast<double>(instances.size());
}

double meteor_lite(std::span<const EvalInstance> instances) {
    check_instances(instances);
    constexpr double kAlpha = 0.9;
    constexpr double kGamma = 0.5;
    constexpr double kBeta = 3.0;
    double total = 0.0;
    for (const auto& ins : instances) {
        double best = 0.0;
        for (const auto& ref : ins.references) {
            const auto al = align_exact(ins.candidate, ref);
            if (al.matches == 0) continue;
            const double m = static_cast<double>(al.matches);
            const double p = m / static_cast<double>(ins.candidate.size());
            const double r = m / static_cast<double>(ref.size());
            const double f_mean = (p * r) / (kAlpha * p + (1.0 - kAlpha) * r);
            const double penalty = kGamma * std::pow(static_cast<double>(al.chunks) / m, kBeta);
            best = std::max(best, f_mean * (1.0 - penalty));
        }
        total += best;
    }
    return total / static_cast<double>(instances.size());
}

double ngram_diversity(std::span<const std::vector<std::string>> captions, int n) {
    std::set<std::string> distinct;
    int64_t total = 0;
    for (const auto& cap : captions) {
        for (const auto& [k, c] : ngram_counts(cap, n)) {
            distinct.insert(k);
            total += c;
        }
    }
    if (total == 0) return 0.0;
    return static_cast<double>(distinct.size()) / static_cast<double>(total);
}

double presence_verbatim(std::span<const EvalInstance> instances) {
    if (instances.empty()) return 0.0;
    int64_t present = 0;
    for (const auto& ins : instances) {
        const auto guide = tokenize_words(ins.guiding_text);
        if (guide.empty() || guide.size() > ins.candidate.size()) continue;
        bool found = false;
        for (size_t i = 0; i + guide.size() <= ins.candidate.size() && !found; ++i) {
            bool match = true;
            for (size_t j = 0; j < guide.size(); ++j) {
                if (ins.candidate[i + j] != guide[j]) {
                    match = false;
                    break;
                }
            }
            found = match;
        }
        present += found ? 1 : 0;
    }
    return 100.0 * static_cast<double>(present) / static_cast<double>(instances.size());
}

EvalReport evaluate(std::span<const EvalInstance> instances) {
    check_instances(instances);
    EvalReport rep;
    rep.n_instances = static_cast<int64_t>(instances.size());
    rep.cider = cider(instances);
    rep.rouge_l = rouge_l(instances);
    rep.meteor = meteor_lite(instances);
    rep.presence_verbatim_pct = presence_verbatim(instances);

    // Group candidates by image, first-appearance order is irrelevant to the
    // mean; images whose group has zero n-grams are skipped.
    std::map<std::string, std::vector<std::vector<std::string>>> groups;
    for (const auto& ins : instances) groups[ins.image_id].push_back(ins.candidate);
    for (int n : {1, 2}) {
        double sum = 0.0;
        int64_t used = 0;
        for (const auto& [img, caps] : groups) {
            int64_t total = 0;
            for (const auto& c : caps) total += std::max<int64_t>(0, static_cast<int64_t>(c.size()) - n + 1);
            if (total == 0) continue;
            sum += ngram_diversity(caps, n);
            ++used;
        }
        const double d = used > 0 ? sum / static_cast<double>(used) : 0.0;
        if (n == 1) rep.div1 = d;
        else rep.div2 = d;
    }
    return rep;
}

std::vector<EvalInstance> load_instances(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("load_instances: cannot open " + path.string());
    std::vector<EvalInstance> out;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json rec = json::parse(line);
            EvalInstance ins;
            ins.image_id = rec.at("image_id").get<std::string>();
            ins.guiding_text = rec.at("guiding_text").get<std::string>();
            ins.candidate = tokenize_words(rec.at("candidate").get<std::string>());
            for (const auto& r : rec.at("references")) ins.references.push_back(tokenize_words(r.get<std::string>()));
            out.push_back(std::move(ins));
        } catch (const json::exception& e) {
            throw DataError("load_instances: " + path.string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

void save_instances(std::span<const EvalInstance> instances, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("save_instances: cannot open " + path.string());
    const auto join = [](const std::vector<std::string>& words) {
        std::string s;
        for (const auto& w : words) {
            if (!s.empty()) s += ' ';
            s += w;
        }
        return s;
    };
    for (const auto& ins : instances) {
        json refs = json::array();
        for (const auto& r : ins.references) refs.push_back(join(r));
        json rec{{"image_id", ins.image_id},
                 {"guiding_text", ins.guiding_text},
                 {"candidate", join(ins.candidate)},
                 {"references", refs}};
        os << rec.dump() << "\n";
    }
}

std::string eval_report_csv_header() {
    return "system,cider,rouge_l,meteor,div1,div2,presence_verbatim_pct,n_instances\n";
}

std::string eval_report_csv_row(const std::string& system, const EvalReport& r) {
    std::ostringstream os;
    os.precision(12);
    os << system << "," << r.cider << "," << r.rouge_l << "," << r.meteor << "," << r.div1 << "," << r.div2 << ","
       << r.presence_verbatim_pct << "," << r.n_instances << "\n";
    return os.str();
}

std::string eval_report_markdown(std::span<const std::pair<std::string, EvalReport>> systems) {
    std::ostringstream os;
    os << "| Model | CIDEr | ROUGE-L | METEOR | Div-1 | Div-2 | T in cap (=%) |\n";
    os << "|---|---|---|---|---|---|---|\n";
    char buf[256];
    for (const auto& [name, r] : systems) {
        std::snprintf(buf, sizeof(buf), "| %s | %.3f | %.3f | %.3f | %.2f | %.2f | %.1f |\n", name.c_str(), r.cider,
                      r.rouge_l, r.meteor, r.div1, r.div2, r.presence_verbatim_pct);
        os << buf;
    }
    os << "\nSPICE is not reported; it needs a scene-graph parser this tool does not ship.\n";
    return os.str();
}

}  // namespace gcap
