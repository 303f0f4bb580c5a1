#include <fstream>
#include <iostream>

#include "cli_common.hpp"
#include "guidecap/training.hpp"

namespace gcap::cli {

namespace fs = std::filesystem;

namespace {

ModelConfig model_config_from_flags(const struct TrainArgs& a, std::span<const TrainingTuple> train_tuples);

struct TrainArgs {
    CommonArgs common;
    std::string train_path;
    std::string dev_path;
    std::string vocab_path;
    std::string ablation = "T+G+R_GR+R_FRCNN";
    std::string resume_path;
    int vocab_size = 4000;
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    int d_ff = 256;
    int max_caption_len = 32;
    int proj_hidden = 64;
    float dropout = 0.0f;
    bool paper_scale = false;
    float lr = 0.128f;
    float decay = 0.95f;
    int decay_every = 0;
    int batch_size = 64;
    int max_steps = 3000;
    int eval_every = 500;
    int beam_width = 5;
    float clip_norm = 0.0f;
};

unsigned flags_for_training(const std::string& name) {
    const auto flags = parse_ablation(name);
    if (!flags) {
        std::string valid;
        for (const auto& n : ablation_names()) valid += (valid.empty() ? "" : ", ") + n;
        throw UsageError("unknown ablation \"" + name + "\"; valid names: " + valid);
    }
    if (*flags == 0) throw UsageError("ablation \"copy\" is model-free; it is only valid for decode/eval");
    return *flags;
}

ModelConfig model_config_from_flags(const TrainArgs& a, std::span<const TrainingTuple> train_tuples) {
    ModelConfig cfg = a.paper_scale ? ModelConfig::paper_scale() : ModelConfig{};
    if (!a.paper_scale) {
        cfg.d_model = a.d_model;
        cfg.n_layers = a.n_layers;
        cfg.n_heads = a.n_heads;
        cfg.d_ff = a.d_ff;
        cfg.proj_hidden = a.proj_hidden;
    }
    cfg.max_caption_len = a.max_caption_len;
    cfg.dropout = a.dropout;
    cfg.input_flags = flags_for_training(a.ablation);
    // Feature dimensions come from the data.
    const auto& f = train_tuples.front().features;
    cfg.feat.g_dim = static_cast<int>(f.g.dim(1));
    cfg.feat.n_regions = static_cast<int>(f.r_gr.dim(0));
    cfg.feat.rgr_dim = static_cast<int>(f.r_gr.dim(1));
    cfg.feat.rfrcnn_dim = static_cast<int>(f.r_frcnn.dim(1));
    return cfg;
}

void run_train(const TrainArgs& a) {
    const fs::path out = prepare_out_dir(a.common.out, "train", a.common.force);
    const auto train_tuples = load_tuples(a.train_path);
    if (train_tuples.empty()) throw DataError("train: " + a.train_path + " holds no tuples");
    std::vector<TrainingTuple> dev_tuples;
    if (!a.dev_path.empty()) dev_tuples = load_tuples(a.dev_path);

    Vocab vocab;
    fs::path vocab_out = out / "vocab.txt";
    if (!a.vocab_path.empty()) {
        vocab = load_vocab(a.vocab_path);
        vocab_out = a.vocab_path;
    } else {
        std::vector<std::string> corpus;
        corpus.reserve(train_tuples.size() * 2);
        for (const auto& t : train_tuples) {
            corpus.push_back(t.guiding_text);
            corpus.push_back(t.caption);
        }
        vocab = train_vocab(corpus, a.vocab_size);
        save_vocab(vocab, vocab_out);
    }

    ModelConfig cfg = model_config_from_flags(a, train_tuples);
    cfg.vocab_size = vocab.size();

    TrainConfig tc;
    tc.learning_rate = a.lr;
    tc.decay_rate = a.decay;
    tc.decay_every_steps = a.decay_every;
    tc.batch_size = a.batch_size;
    tc.max_steps = a.max_steps;
    tc.eval_every_steps = a.eval_every;
    tc.rng_seed = a.common.seed;
    tc.beam_width = a.beam_width;
    tc.clip_norm = a.clip_norm;
    tc.n_threads = a.common.deterministic ? 1 : std::max(1, a.common.threads);

    std::optional<Checkpoint> resume;
    if (!a.resume_path.empty()) resume = load_checkpoint(a.resume_path);

    const auto result = train(cfg, tc, vocab, train_tuples, dev_tuples, out,
                              [](const TrainLogRow& row) {
                                  if (row.step % 50 == 0 || row.dev_cider) {
                                      std::cout << "step " << row.step << " loss " << row.loss << " lr " << row.lr;
                                      if (row.dev_cider) std::cout << " dev_cider " << *row.dev_cider;
                                      std::cout << "\n";
                                  }
                              },
                              resume ? &*resume : nullptr);

    {
        std::ofstream os(out / "log.csv", std::ios::binary);
        os << train_log_csv(result.log);
    }
    std::cout << "best dev CIDEr " << result.best_dev_cider << " at step " << result.best_step << "\n";

    RunManifest m;
    m.command = "train";
    m.rng_seed = a.common.seed;
    m.deterministic = a.common.deterministic;
    m.config = {{"ablation", ablation_name(cfg.input_flags)},
                {"model_config", model_config_to_json(cfg)},
                {"lr", std::to_string(a.lr)},
                {"decay", std::to_string(a.decay)},
                {"decay_every", std::to_string(a.decay_every)},
                {"batch_size", std::to_string(a.batch_size)},
                {"max_steps", std::to_string(a.max_steps)},
                {"eval_every", std::to_string(a.eval_every)},
                {"beam_width", std::to_string(a.beam_width)},
                {"clip_norm", std::to_string(a.clip_norm)}};
    manifest_add_input(m, out, a.train_path);
    if (!a.dev_path.empty()) manifest_add_input(m, out, a.dev_path);
    if (!a.vocab_path.empty()) manifest_add_input(m, out, a.vocab_path);
    else manifest_add_output(m, out, vocab_out);
    manifest_add_output(m, out, result.best_checkpoint);
    manifest_add_output(m, out, result.final_checkpoint);
    manifest_add_output(m, out, out / "log.csv");
    write_manifest(m, out);
}

}  // namespace

void add_train_command(CLI::App& app) {
    auto args = std::make_shared<TrainArgs>();
    CLI::App* cmd = app.add_subcommand("train", "Train a guided captioning model with SGD");
    add_common(cmd, args->common);
    cmd->add_option("--train", args->train_path, "Training tuple JSONL")->required();
    cmd->add_option("--dev", args->dev_path, "Dev tuple JSONL for CIDEr model selection");
    cmd->add_option("--vocab", args->vocab_path, "Existing vocab file (default: train one)");
    cmd->add_option("--vocab-size", args->vocab_size, "Subword vocabulary size when training one")->default_val(4000);
    cmd->add_option("--ablation", args->ablation, "Encoder inputs: T, G, T+G, T+G+R_GR, T+G+R_FRCNN, T+G+R_GR+R_FRCNN")
        ->default_val("T+G+R_GR+R_FRCNN");
    cmd->add_option("--resume", args->resume_path, "Checkpoint to resume from");
    cmd->add_option("--d-model", args->d_model)->default_val(64);
    cmd->add_option("--n-layers", args->n_layers)->default_val(2);
    cmd->add_option("--n-heads", args->n_heads)->default_val(4);
    cmd->add_option("--d-ff", args->d_ff)->default_val(256);
    cmd->add_option("--max-caption-len", args->max_caption_len)->default_val(32);
    cmd->add_option("--proj-hidden", args->proj_hidden)->default_val(64);
    cmd->add_option("--dropout", args->dropout)->default_val(0.0f);
    cmd->add_flag("--paper-scale", args->paper_scale, "6 layers, 8 heads, d_model 512 (slow; not a desk run)");
    cmd->add_option("--lr", args->lr, "SGD learning rate")->default_val(0.128f);
    cmd->add_option("--decay", args->decay, "Learning-rate decay factor")->default_val(0.95f);
    cmd->add_option("--decay-every", args->decay_every, "Decay period in steps (0 = one epoch)")->default_val(0);
    cmd->add_option("--batch-size", args->batch_size)->default_val(64);
    cmd->add_option("--max-steps", args->max_steps)->default_val(3000);
    cmd->add_option("--eval-every", args->eval_every)->default_val(500);
    cmd->add_option("--beam-width", args->beam_width, "Beam width for dev decoding")->default_val(5);
    cmd->add_option("--clip-norm", args->clip_norm, "Gradient clipping (0 = off)")->default_val(0.0f);
    cmd->callback([args]() { run_train(*args); });
}

}  // namespace gcap::cli
