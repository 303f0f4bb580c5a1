#include <fstream>
#include <iostream>

#include "cli_common.hpp"
#include "guidecap/training.hpp"

namespace gcap::cli {

namespace fs = std::filesystem;

namespace {

struct SweepArgs {
    CommonArgs common;
    std::string train_path;
    std::string dev_path;
    std::string vocab_path;
    std::string ablation = "T+G+R_GR+R_FRCNN";
    std::vector<float> lrs;
    std::vector<float> decays;
    int vocab_size = 4000;
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    int d_ff = 256;
    int max_caption_len = 32;
    int batch_size = 64;
    int max_steps = 300;
    int eval_every = 100;
    int beam_width = 5;
};

void run_sweep(const SweepArgs& a) {
    const fs::path out = prepare_out_dir(a.common.out, "sweep", a.common.force);
    const auto train_tuples = load_tuples(a.train_path);
    if (train_tuples.empty()) throw DataError("sweep: " + a.train_path + " holds no tuples");
    const auto dev_tuples = load_tuples(a.dev_path);

    Vocab vocab;
    if (!a.vocab_path.empty()) {
        vocab = load_vocab(a.vocab_path);
    } else {
        std::vector<std::string> corpus;
        for (const auto& t : train_tuples) {
            corpus.push_back(t.guiding_text);
            corpus.push_back(t.caption);
        }
        vocab = train_vocab(corpus, a.vocab_size);
        save_vocab(vocab, out / "vocab.txt");
    }

    const auto flags = parse_ablation(a.ablation);
    if (!flags || *flags == 0) {
        std::string valid;
        for (const auto& n : ablation_names()) valid += (valid.empty() ? "" : ", ") + n;
        throw UsageError("sweep: unknown or model-free ablation \"" + a.ablation + "\"; valid: " + valid);
    }

    ModelConfig cfg;
    cfg.d_model = a.d_model;
    cfg.n_layers = a.n_layers;
    cfg.n_heads = a.n_heads;
    cfg.d_ff = a.d_ff;
    cfg.max_caption_len = a.max_caption_len;
    cfg.input_flags = *flags;
    cfg.vocab_size = vocab.size();
    const auto& f = train_tuples.front().features;
    cfg.feat.g_dim = static_cast<int>(f.g.dim(1));
    cfg.feat.n_regions = static_cast<int>(f.r_gr.dim(0));
    cfg.feat.rgr_dim = static_cast<int>(f.r_gr.dim(1));
    cfg.feat.rfrcnn_dim = static_cast<int>(f.r_frcnn.dim(1));

    TrainConfig base;
    base.batch_size = a.batch_size;
    base.max_steps = a.max_steps;
    base.eval_every_steps = a.eval_every;
    base.rng_seed = a.common.seed;
    base.beam_width = a.beam_width;
    base.n_threads = a.common.deterministic ? 1 : std::max(1, a.common.threads);

    const auto& lrs = a.lrs.empty() ? paper_learning_rate_grid() : a.lrs;
    const auto& decays = a.decays.empty() ? paper_decay_rate_grid() : a.decays;

    const auto result = sweep(cfg, base, lrs, decays, vocab, train_tuples, dev_tuples, out,
                              [](const SweepCell& c) {
                                  std::cout << "lr " << c.learning_rate << " decay " << c.decay_rate << " dev_cider "
                                            << c.dev_cider << "\n";
                              });

    {
        std::ofstream os(out / "sweep.csv", std::ios::binary);
        os << sweep_csv(result);
    }
    std::cout << "best: lr " << result.best.learning_rate << " decay " << result.best.decay_rate << " dev_cider "
              << result.best.dev_cider << "\n";

    RunManifest m;
    m.command = "sweep";
    m.rng_seed = a.common.seed;
    m.deterministic = a.common.deterministic;
    m.config = {{"ablation", a.ablation},
                {"max_steps", std::to_string(a.max_steps)},
                {"batch_size", std::to_string(a.batch_size)},
                {"model_config", model_config_to_json(cfg)}};
    manifest_add_input(m, out, a.train_path);
    manifest_add_input(m, out, a.dev_path);
    manifest_add_output(m, out, out / "sweep.csv");
    write_manifest(m, out);
}

}  // namespace

void add_sweep_command(CLI::App& app) {
    auto args = std::make_shared<SweepArgs>();
    CLI::App* cmd = app.add_subcommand("sweep", "Hyperparameter grid sweep (defaults to the paper's 7x2 grid)");
    add_common(cmd, args->common);
    cmd->add_option("--train", args->train_path)->required();
    cmd->add_option("--dev", args->dev_path)->required();
    cmd->add_option("--vocab", args->vocab_path);
    cmd->add_option("--vocab-size", args->vocab_size)->default_val(4000);
    cmd->add_option("--ablation", args->ablation)->default_val("T+G+R_GR+R_FRCNN");
    cmd->add_option("--lrs", args->lrs, "Learning rates (default: paper grid)")->delimiter(',');
    cmd->add_option("--decays", args->decays, "Decay rates (default: paper grid)")->delimiter(',');
    cmd->add_option("--d-model", args->d_model)->default_val(64);
    cmd->add_option("--n-layers", args->n_layers)->default_val(2);
    cmd->add_option("--n-heads", args->n_heads)->default_val(4);
    cmd->add_option("--d-ff", args->d_ff)->default_val(256);
    cmd->add_option("--max-caption-len", args->max_caption_len)->default_val(32);
    cmd->add_option("--batch-size", args->batch_size)->default_val(64);
    cmd->add_option("--max-steps", args->max_steps, "Reduced step budget per cell")->default_val(300);
    cmd->add_option("--eval-every", args->eval_every)->default_val(100);
    cmd->add_option("--beam-width", args->beam_width)->default_val(5);
    cmd->callback([args]() { run_sweep(*args); });
}

}  // namespace gcap::cli
