#include "guidecap/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace gcap {

using nlohmann::json;

namespace {

struct Hypothesis {
    std::vector<int> ids;  // BOS-initiated
    double logp = 0.0;
};

// Ranking score: cumulative log-prob, length-normalized when alpha > 0.
double rank_score(const Hypothesis& h, float alpha) {
    const auto len = static_cast<double>(h.ids.size() - 1);  // emitted tokens
    if (alpha > 0.0f && len > 0.0) return h.logp / std::pow(len, static_cast<double>(alpha));
    return h.logp;
}

bool better(double score_a, const std::vector<int>& ids_a, double score_b, const std::vector<int>& ids_b) {
    if (score_a != score_b) return score_a > score_b;
    return ids_a < ids_b;  // deterministic tie-break: lower token-id sequence
}

std::vector<double> log_softmax_row(const Tensor& logits, int64_t row) {
    const int64_t v = logits.dim(1);
    std::vector<double> out(static_cast<size_t>(v));
    auto lv = logits.values();
    const size_t base = static_cast<size_t>(row * v);
    float mx = lv[base];
    for (int64_t j = 1; j < v; ++j) mx = std::max(mx, lv[base + static_cast<size_t>(j)]);
    double sum = 0.0;
    for (int64_t j = 0; j < v; ++j) sum += std::exp(static_cast<double>(lv[base + static_cast<size_t>(j)]) - mx);
    const double lse = static_cast<double>(mx) + std::log(sum);
    for (int64_t j = 0; j < v; ++j) out[static_cast<size_t>(j)] = static_cast<double>(lv[base + static_cast<size_t>(j)]) - lse;
    return out;
}

}  // namespace

DecodeResult beam_search(const ModelConfig& cfg, const Parameters& params, const ImageFeatures& features,
                         const std::vector<int>& guide_ids, const BeamConfig& beam) {
    if (beam.beam_width < 1 || beam.max_len < 1) throw ContractError("beam search: beam_width and max_len must be >= 1");
    const int max_emit = std::min(beam.max_len, cfg.max_caption_len - 1);

    Graph enc_graph(/*grad_enabled=*/false);
    const auto enc_in = build_encoder_input(enc_graph, cfg, params, features, guide_ids);
    const auto enc_out = encode(enc_graph, cfg, params, enc_in);

    std::vector<Hypothesis> live{Hypothesis{{Vocab::kBos}, 0.0}};
    std::vector<Hypothesis> finished;

    struct Candidate {
        double logp;
        double rank;
        const Hypothesis* parent;
        int token;
    };

    for (int step = 0; step < max_emit && !live.empty(); ++step) {
        std::vector<Candidate> cands;
        cands.reserve(live.size() * static_cast<size_t>(cfg.vocab_size));
        for (const auto& h : live) {
            Graph g(/*grad_enabled=*/false);
            const auto logits = decode_logits(g, cfg, params, enc_out, enc_in.mask, h.ids);
            const auto logp = log_softmax_row(logits, logits.dim(0) - 1);
            for (int tok = 0; tok < cfg.vocab_size; ++tok) {
                if (tok == Vocab::kPad || tok == Vocab::kBos) continue;
                Hypothesis ext{h.ids, h.logp + logp[static_cast<size_t>(tok)]};
                ext.ids.push_back(tok);
                cands.push_back(Candidate{ext.logp, rank_score(ext, beam.length_normalization_alpha), &h, tok});
            }
        }
        const size_t keep = std::min(static_cast<size_t>(beam.beam_width), cands.size());
        std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                          [&](const Candidate& a, const Candidate& b) {
                              if (a.rank != b.rank) return a.rank > b.rank;
                              if (a.parent->ids != b.parent->ids) return a.parent->ids < b.parent->ids;
                              return a.token < b.token;
                          });
        std::vector<Hypothesis> next;
        for (size_t i = 0; i < keep; ++i) {
            Hypothesis h{cands[i].parent->ids, cands[i].logp};
            h.ids.push_back(cands[i].token);
            if (cands[i].token == Vocab::kEos) {
                finished.push_back(std::move(h));
            } else {
                next.push_back(std::move(h));
            }
        }
        live = std::move(next);
    }

    const auto strip = [](const Hypothesis& h, bool fin) {
        DecodeResult r;
        r.ids.assign(h.ids.begin() + 1, h.ids.end());
        if (fin) r.ids.pop_back();  // drop EOS
        r.score = h.logp;
        r.finished = fin;
        return r;
    };

    const Hypothesis* best = nullptr;
    bool best_finished = false;
    for (const auto& h : finished) {
        if (!best || better(rank_score(h, beam.length_normalization_alpha), h.ids,
                            rank_score(*best, beam.length_normalization_alpha), best->ids)) {
            best = &h;
            best_finished = true;
        }
    }
    if (!best) {
        for (const auto& h : live) {
            if (!best || better(rank_score(h, beam.length_normalization_alpha), h.ids,
                                rank_score(*best, beam.length_normalization_alpha), best->ids)) {
                best = &h;
            }
        }
    }
    if (!best) throw ContractError("beam search: no hypothesis produced");
    return strip(*best, best_finished);
}

DecodeResult copy_baseline(const std::vector<int>& guide_ids) {
    if (guide_ids.empty()) throw ContractError("copy baseline: empty guide");
    DecodeResult r;
    r.ids = guide_ids;
    r.score = 0.0;
    r.finished = true;
    return r;
}

std::vector<DecodeRecord> decode_batch(const ModelConfig& cfg, const Parameters& params, const Vocab& vocab,
                                       std::span<const TrainingTuple> tuples, const BeamConfig& beam,
                                       int n_threads) {
    std::vector<DecodeRecord> out(tuples.size());
    const bool copy_mode = cfg.input_flags == 0;
    const auto work = [&](size_t begin, size_t end) {
        for (size_t i = begin; i < end; ++i) {
            const auto& t = tuples[i];
            const auto guide_ids = encode(vocab, t.guiding_text);
            DecodeResult r;
            if (copy_mode) {
                r = copy_baseline(guide_ids);
            } else {
                r = beam_search(cfg, params, t.features, guide_ids, beam);
            }
            out[i] = DecodeRecord{t.image_id, t.guiding_text, decode(vocab, r.ids), r.score};
        }
    };
    const int threads = std::max(1, n_threads);
    if (threads == 1 || tuples.size() < 2) {
        work(0, tuples.size());
    } else {
        std::vector<std::thread> pool;
        const size_t chunk = (tuples.size() + static_cast<size_t>(threads) - 1) / static_cast<size_t>(threads);
        for (int w = 0; w < threads; ++w) {
            const size_t b = static_cast<size_t>(w) * chunk;
            const size_t e = std::min(tuples.size(), b + chunk);
            if (b >= e) break;
            pool.emplace_back(work, b, e);
        }
        for (auto& th : pool) th.join();
    }
    return out;
}

void save_decodes(std::span<const DecodeRecord> records, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("save_decodes: cannot open " + path.string());
    for (const auto& r : records) {
        json rec{{"image_id", r.image_id}, {"guiding_text", r.guiding_text}, {"caption", r.caption}, {"score", r.score}};
        os << rec.dump() << "\n";
    }
}

std::vector<DecodeRecord> load_decodes(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("load_decodes: cannot open " + path.string());
    std::vector<DecodeRecord> out;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json rec = json::parse(line);
            out.push_back(DecodeRecord{rec.at("image_id").get<std::string>(),
                                       rec.at("guiding_text").get<std::string>(),
                                       rec.at("caption").get<std::string>(), rec.at("score").get<double>()});
        } catch (const json::exception& e) {
            throw DataError("load_decodes: " + path.string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace gcap
