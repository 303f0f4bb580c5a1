#pragma once

#include <filesystem>
#include <functional>
#include <optional>

#include "guidecap/checkpoint.hpp"
#include "guidecap/corpus.hpp"
#include "guidecap/decoding.hpp"
#include "guidecap/metrics.hpp"

namespace gcap {

struct TrainConfig {
    float learning_rate = 0.128f;   // paper SGD recipe
    float decay_rate = 0.95f;
    int decay_every_steps = 0;      // 0 = one epoch's worth of steps
    int batch_size = 64;            // paper uses 4096; desk default
    int max_steps = 3000;
    int eval_every_steps = 500;
    uint64_t rng_seed = 1;
    int beam_width = 5;
    float clip_norm = 0.0f;         // 0 = no gradient clipping
    int n_threads = 1;              // dev-set decoding only

    void validate() const {
        if (learning_rate <= 0.0f) throw ContractError("train config: learning_rate must be > 0");
        if (decay_rate <= 0.0f || decay_rate > 1.0f) throw ContractError("train config: decay_rate in (0,1]");
        if (batch_size < 1 || max_steps < 1) throw ContractError("train config: batch_size/max_steps must be >= 1");
    }
};

struct TrainLogRow {
    int64_t step = 0;
    double loss = 0.0;
    float lr = 0.0f;
    std::optional<double> dev_cider;
};

struct TrainResult {
    std::filesystem::path best_checkpoint;
    std::filesystem::path final_checkpoint;
    double best_dev_cider = -1.0;
    int64_t best_step = -1;
    std::vector<TrainLogRow> log;
};

// lr = learning_rate * decay_rate^(step div decay_every) with `step` counting
// completed optimizer updates.
float lr_at_step(const TrainConfig& cfg, int64_t step, int steps_per_epoch);

// Plain SGD on the caption NLL; epoch-wise seeded shuffling; every
// eval_every_steps the dev set is beam-decoded and scored with CIDEr and the
// argmax checkpoint kept. Throws NumericError naming the step if the loss
// goes non-finite. progress, when set, receives each log row as it happens.
TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg, const Vocab& vocab,
                  std::span<const TrainingTuple> train_tuples, std::span<const TrainingTuple> dev_tuples,
                  const std::filesystem::path& out_dir,
                  const std::function<void(const TrainLogRow&)>& progress = {},
                  const Checkpoint* resume = nullptr);

struct SweepCell {
    float learning_rate = 0.0f;
    float decay_rate = 0.0f;
    double dev_cider = 0.0;  // NaN when the cell aborted on a numeric error
};

struct SweepResult {
    std::vector<SweepCell> cells;  // row-major: learning rates outer, decay rates inner
    SweepCell best;
};

// Grid sweep with a shared seed; a cell that aborts on NaN records a NaN
// sentinel and the sweep continues. Paper grid: lr in {0.0016, 0.008, 0.016,
// 0.048, 0.096, 0.128, 0.16}, decay in {0.90, 0.95}.
SweepResult sweep(const ModelConfig& model_cfg, const TrainConfig& base_cfg, std::span<const float> learning_rates,
                  std::span<const float> decay_rates, const Vocab& vocab,
                  std::span<const TrainingTuple> train_tuples, std::span<const TrainingTuple> dev_tuples,
                  const std::filesystem::path& out_dir,
                  const std::function<void(const SweepCell&)>& progress = {});

const std::vector<float>& paper_learning_rate_grid();
const std::vector<float>& paper_decay_rate_grid();

std::string train_log_csv(std::span<const TrainLogRow> rows);
std::string sweep_csv(const SweepResult& result);

// Dev-set CIDEr of a parameter snapshot: beam-decode every tuple and score
// against its ground-truth caption.
double dev_cider_score(const ModelConfig& cfg, const Parameters& params, const Vocab& vocab,
                       std::span<const TrainingTuple> dev_tuples, int beam_width, int n_threads);

}  // namespace gcap
