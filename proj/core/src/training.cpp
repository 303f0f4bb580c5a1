#include "guidecap/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <sstream>

namespace gcap {

namespace {

uint64_t mix_seed(uint64_t seed, uint64_t epoch) {
    uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL + epoch * 0xbf58476d1ce4e5b9ULL);
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Epoch orders are derived from (seed, epoch) alone so a resumed run replays
// the identical batch sequence without serializing an index permutation.
std::vector<size_t> epoch_order(uint64_t seed, int64_t epoch, size_t n) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    std::mt19937 rng(static_cast<uint32_t>(mix_seed(seed, static_cast<uint64_t>(epoch))));
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
}

std::vector<EncodedExample> encode_tuples(const ModelConfig& cfg, const Vocab& vocab,
                                          std::span<const TrainingTuple> tuples) {
    std::vector<EncodedExample> out;
    out.reserve(tuples.size());
    for (const auto& t : tuples) {
        EncodedExample ex;
        ex.features = &t.features;
        ex.guide_ids = encode(vocab, t.guiding_text);
        ex.caption_ids = encode(vocab, t.caption);
        const size_t max_tokens = static_cast<size_t>(cfg.max_caption_len - 1);
        if (ex.caption_ids.size() > max_tokens) ex.caption_ids.resize(max_tokens);
        if (ex.guide_ids.empty() || ex.caption_ids.empty()) {
            throw DataError("training: tuple for image " + t.image_id + " encodes to an empty sequence");
        }
        out.push_back(std::move(ex));
    }
    return out;
}

void sgd_step(Parameters& params, float lr, float clip_norm) {
    if (clip_norm > 0.0f) {
        double norm2 = 0.0;
        for (auto& [name, t] : params.named) {
            if (!t.has_grad()) continue;
            for (float g : t.grad()) norm2 += static_cast<double>(g) * static_cast<double>(g);
        }
        const double norm = std::sqrt(norm2);
        if (norm > clip_norm) {
            const float s = static_cast<float>(clip_norm / norm);
            for (auto& [name, t] : params.named) {
                if (!t.has_grad()) continue;
                for (auto& g : t.grad()) g *= s;
            }
        }
    }
    for (auto& [name, t] : params.named) {
        if (!t.has_grad()) continue;
        auto v = t.values();
        auto g = t.grad();
        for (size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
    }
}

std::string rng_to_string(const std::mt19937& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

void rng_from_string(std::mt19937& rng, const std::string& s) {
    if (s.empty()) return;
    std::istringstream is(s);
    is >> rng;
}

}  // namespace

float lr_at_step(const TrainConfig& cfg, int64_t step, int steps_per_epoch) {
    const int every = cfg.decay_every_steps > 0 ? cfg.decay_every_steps : std::max(1, steps_per_epoch);
    const auto k = static_cast<double>(step / every);
    return static_cast<float>(static_cast<double>(cfg.learning_rate) *
                              std::pow(static_cast<double>(cfg.decay_rate), k));
}

double dev_cider_score(const ModelConfig& cfg, const Parameters& params, const Vocab& vocab,
                       std::span<const TrainingTuple> dev_tuples, int beam_width, int n_threads) {
    BeamConfig beam;
    beam.beam_width = beam_width;
    beam.max_len = cfg.max_caption_len - 1;
    const auto decodes = decode_batch(cfg, params, vocab, dev_tuples, beam, n_threads);
    std::vector<EvalInstance> instances(dev_tuples.size());
    for (size_t i = 0; i < dev_tuples.size(); ++i) {
        instances[i].image_id = dev_tuples[i].image_id;
        instances[i].guiding_text = dev_tuples[i].guiding_text;
        instances[i].candidate = tokenize_words(decodes[i].caption);
        instances[i].references = {tokenize_words(dev_tuples[i].caption)};
        if (instances[i].candidate.empty()) instances[i].candidate = {"<empty>"};
    }
    return cider(instances);
}

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg, const Vocab& vocab,
                  std::span<const TrainingTuple> train_tuples, std::span<const TrainingTuple> dev_tuples,
                  const std::filesystem::path& out_dir, const std::function<void(const TrainLogRow&)>& progress,
                  const Checkpoint* resume) {
    model_cfg.validate();
    train_cfg.validate();
    if (train_tuples.empty()) throw DataError("training: empty training set");
    std::filesystem::create_directories(out_dir);

    const auto examples = encode_tuples(model_cfg, vocab, train_tuples);
    const int steps_per_epoch =
        static_cast<int>((examples.size() + static_cast<size_t>(train_cfg.batch_size) - 1) /
                         static_cast<size_t>(train_cfg.batch_size));

    Parameters params;
    int64_t start_step = 0;
    std::mt19937 dropout_rng(static_cast<uint32_t>(mix_seed(train_cfg.rng_seed, 0x0d0d)));
    TrainResult result;
    result.best_checkpoint = out_dir / "best.ckpt";
    result.final_checkpoint = out_dir / "final.ckpt";

    if (resume) {
        if (!(resume->config == model_cfg)) throw DataError("training: resume checkpoint config differs");
        params = resume->params;
        start_step = resume->meta.step;
        result.best_dev_cider = resume->meta.best_dev_cider;
        result.best_step = resume->meta.best_step;
        rng_from_string(dropout_rng, resume->meta.rng_state);
    } else {
        params = init_parameters<float>(model_cfg, train_cfg.rng_seed);
    }

    const bool have_dev = !dev_tuples.empty();
    if (!have_dev) {
        std::cerr << "train: dev set is empty; model selection falls back to the final checkpoint\n";
    }

    const auto save = [&](const std::filesystem::path& path, int64_t step, float lr) {
        TrainMeta meta;
        meta.step = step;
        meta.lr = lr;
        meta.best_dev_cider = result.best_dev_cider;
        meta.best_step = result.best_step;
        meta.rng_state = rng_to_string(dropout_rng);
        save_checkpoint(path, model_cfg, params, meta);
    };

    std::vector<size_t> order;
    int64_t order_epoch = -1;
    for (int64_t step = start_step; step < train_cfg.max_steps; ++step) {
        const int64_t epoch = step / steps_per_epoch;
        if (epoch != order_epoch) {
            order = epoch_order(train_cfg.rng_seed, epoch, examples.size());
            order_epoch = epoch;
        }
        const size_t pos = static_cast<size_t>(step % steps_per_epoch) * static_cast<size_t>(train_cfg.batch_size);
        std::vector<EncodedExample> batch;
        for (size_t i = pos; i < std::min(pos + static_cast<size_t>(train_cfg.batch_size), examples.size()); ++i) {
            batch.push_back(examples[order[i]]);
        }

        const float lr = lr_at_step(train_cfg, step, steps_per_epoch);
        Graph g;
        auto loss = model_loss(g, model_cfg, params,
                               batch, model_cfg.dropout > 0.0f ? &dropout_rng : nullptr);
        const double loss_v = static_cast<double>(loss.item());
        if (!std::isfinite(loss_v)) {
            throw NumericError("training: non-finite loss at step " + std::to_string(step), step);
        }
        g.backward(loss);
        sgd_step(params, lr, train_cfg.clip_norm);
        params.zero_grads();

        TrainLogRow row{step, loss_v, lr, std::nullopt};
        const bool last = step + 1 == train_cfg.max_steps;
        if (have_dev && ((step + 1) % train_cfg.eval_every_steps == 0 || last)) {
            const double score =
                dev_cider_score(model_cfg, params, vocab, dev_tuples, train_cfg.beam_width, train_cfg.n_threads);
            row.dev_cider = score;
            if (score > result.best_dev_cider) {
                result.best_dev_cider = score;
                result.best_step = step + 1;
                save(result.best_checkpoint, step + 1, lr);
            }
        }
        result.log.push_back(row);
        if (progress) progress(row);
    }

    const float final_lr = lr_at_step(train_cfg, train_cfg.max_steps - 1, steps_per_epoch);
    save(result.final_checkpoint, train_cfg.max_steps, final_lr);
    if (!have_dev || result.best_step < 0) {
        std::filesystem::copy_file(result.final_checkpoint, result.best_checkpoint,
                                   std::filesystem::copy_options::overwrite_existing);
    }
    return result;
}

SweepResult sweep(const ModelConfig& model_cfg, const TrainConfig& base_cfg, std::span<const float> learning_rates,
                  std::span<const float> decay_rates, const Vocab& vocab,
                  std::span<const TrainingTuple> train_tuples, std::span<const TrainingTuple> dev_tuples,
                  const std::filesystem::path& out_dir, const std::function<void(const SweepCell&)>& progress) {
    if (learning_rates.empty() || decay_rates.empty()) throw DataError("sweep: empty grid");
    SweepResult result;
    result.best.dev_cider = std::numeric_limits<double>::quiet_NaN();
    for (const float lr : learning_rates) {
        for (const float decay : decay_rates) {
            TrainConfig cfg = base_cfg;
            cfg.learning_rate = lr;
            cfg.decay_rate = decay;
            char sub[64];
            std::snprintf(sub, sizeof(sub), "cell_lr%g_decay%g", static_cast<double>(lr), static_cast<double>(decay));
            SweepCell cell{lr, decay, std::numeric_limits<double>::quiet_NaN()};
            try {
                const auto r = train(model_cfg, cfg, vocab, train_tuples, dev_tuples, out_dir / sub);
                cell.dev_cider = r.best_dev_cider;
            } catch (const NumericError&) {
                // NaN sentinel stays; the sweep continues.
            }
            result.cells.push_back(cell);
            if (progress) progress(cell);
            if (!std::isnan(cell.dev_cider) &&
                (std::isnan(result.best.dev_cider) || cell.dev_cider > result.best.dev_cider)) {
                result.best = cell;
            }
        }
    }
    return result;
}

const std::vector<float>& paper_learning_rate_grid() {
    static const std::vector<float> grid = {0.0016f, 0.008f, 0.016f, 0.048f, 0.096f, 0.128f, 0.16f};
    return grid;
}

const std::vector<float>& paper_decay_rate_grid() {
    static const std::vector<float> grid = {0.90f, 0.95f};
    return grid;
}

std::string train_log_csv(std::span<const TrainLogRow> rows) {
    std::ostringstream os;
    os << "step,loss,lr,dev_cider\n";
    os.precision(12);
    for (const auto& r : rows) {
        os << r.step << "," << r.loss << "," << r.lr << ",";
        if (r.dev_cider) os << *r.dev_cider;
        os << "\n";
    }
    return os.str();
}

std::string sweep_csv(const SweepResult& result) {
    std::ostringstream os;
    os << "learning_rate,decay_rate,dev_cider\n";
    os.precision(12);
    for (const auto& c : result.cells) {
        os << c.learning_rate << "," << c.decay_rate << ",";
        if (std::isnan(c.dev_cider)) os << "nan";
        else os << c.dev_cider;
        os << "\n";
    }
    return os.str();
}

}  // namespace gcap
