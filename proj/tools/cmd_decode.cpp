#include <iostream>
#include <unordered_map>

#include "cli_common.hpp"
#include "guidecap/decoding.hpp"
#include "guidecap/training.hpp"

namespace gcap::cli {

namespace fs = std::filesystem;

namespace {

struct DecodeArgs {
    CommonArgs common;
    std::string checkpoint;
    std::string tuples;
    std::string guides;
    std::string vocab_path;
    std::string ablation;  // empty = take the checkpoint's; "copy" = baseline
    int beam_width = 5;
    int max_len = 31;
    float alpha = 0.0f;
};

void run_decode(const DecodeArgs& a) {
    const fs::path out = prepare_out_dir(a.common.out, "decode", a.common.force);
    const auto tuples = load_tuples(a.tuples);
    if (tuples.empty()) throw DataError("decode: " + a.tuples + " holds no tuples");

    const bool copy_mode = a.ablation == "copy";
    if (!a.ablation.empty() && !parse_ablation(a.ablation)) {
        std::string valid;
        for (const auto& n : ablation_names()) valid += (valid.empty() ? "" : ", ") + n;
        throw UsageError("unknown ablation \"" + a.ablation + "\"; valid names: " + valid);
    }
    if (copy_mode && a.vocab_path.empty()) throw UsageError("decode: --ablation copy requires --vocab");
    if (!copy_mode && a.checkpoint.empty()) throw UsageError("decode: --checkpoint required (or --ablation copy)");
    if (a.vocab_path.empty()) throw UsageError("decode: --vocab required");

    const Vocab vocab = load_vocab(a.vocab_path);

    ModelConfig cfg;
    Parameters params;
    if (copy_mode) {
        cfg.input_flags = 0;  // decode_batch dispatches to the copy baseline
        cfg.vocab_size = vocab.size();
    } else {
        auto ck = load_checkpoint(a.checkpoint);
        cfg = ck.config;
        params = std::move(ck.params);
        if (cfg.vocab_size != vocab.size()) {
            throw ShapeError("decode: checkpoint vocab_size " + std::to_string(cfg.vocab_size) +
                             " != vocab file size " + std::to_string(vocab.size()));
        }
    }

    // Decode either the tuple list itself or a T2-style guide file joined to
    // the tuples' image features.
    std::vector<TrainingTuple> work;
    if (a.guides.empty()) {
        work = tuples;
    } else {
        std::unordered_map<std::string, const TrainingTuple*> by_image;
        for (const auto& t : tuples) by_image.emplace(t.image_id, &t);
        for (const auto& [image_id, gs] : load_guide_file(a.guides)) {
            const auto it = by_image.find(image_id);
            if (it == by_image.end()) throw DataError("decode: guide file names unknown image " + image_id);
            for (const auto& g : gs) {
                TrainingTuple t;
                t.image_id = image_id;
                t.features = it->second->features;
                t.guiding_text = g;
                t.caption = "-";  // unused by decoding
                work.push_back(std::move(t));
            }
        }
    }

    BeamConfig beam;
    beam.beam_width = a.beam_width;
    beam.max_len = a.max_len;
    beam.length_normalization_alpha = a.alpha;
    const int threads = a.common.deterministic ? 1 : std::max(1, a.common.threads);

    const auto records = decode_batch(cfg, params, vocab, work, beam, threads);
    save_decodes(records, out / "decodes.jsonl");
    std::cout << "decoded " << records.size() << " captions\n";

    RunManifest m;
    m.command = "decode";
    m.rng_seed = a.common.seed;
    m.deterministic = a.common.deterministic;
    m.config = {{"ablation", copy_mode ? "copy" : ablation_name(cfg.input_flags)},
                {"beam_width", std::to_string(a.beam_width)},
                {"max_len", std::to_string(a.max_len)},
                {"alpha", std::to_string(a.alpha)}};
    manifest_add_input(m, out, a.tuples);
    if (!a.guides.empty()) manifest_add_input(m, out, a.guides);
    if (!copy_mode) manifest_add_input(m, out, a.checkpoint);
    manifest_add_input(m, out, a.vocab_path);
    manifest_add_output(m, out, out / "decodes.jsonl");
    write_manifest(m, out);
}

}  // namespace

void add_decode_command(CLI::App& app) {
    auto args = std::make_shared<DecodeArgs>();
    CLI::App* cmd = app.add_subcommand("decode", "Beam-search captions for (image, guide) pairs");
    add_common(cmd, args->common);
    cmd->add_option("--checkpoint", args->checkpoint, "Trained model checkpoint");
    cmd->add_option("--tuples", args->tuples, "Tuple JSONL (features source, and guides unless --guides)")->required();
    cmd->add_option("--guides", args->guides, "T2-style guide file decoded against the tuples' images");
    cmd->add_option("--vocab", args->vocab_path, "Vocab file")->required();
    cmd->add_option("--ablation", args->ablation, "\"copy\" for the copy-T baseline (no checkpoint needed)");
    cmd->add_option("--beam-width", args->beam_width)->default_val(5);
    cmd->add_option("--max-len", args->max_len)->default_val(31);
    cmd->add_option("--alpha", args->alpha, "Length normalization exponent")->default_val(0.0f);
    cmd->callback([args]() { run_decode(*args); });
}

}  // namespace gcap::cli
