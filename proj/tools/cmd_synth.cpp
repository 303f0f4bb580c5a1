#include <iostream>
#include <map>

#include "cli_common.hpp"
#include "guidecap/corpus.hpp"

namespace gcap::cli {

namespace fs = std::filesystem;

namespace {

struct SynthArgs {
    CommonArgs common;
    int n_train = 200;
    int n_dev = 50;
    int n_test = 50;
    int guides_per_image = 2;
    int n_objects = 24;
    int n_attributes = 8;
    int n_relations = 6;
    int objects_min = 2;
    int objects_max = 4;
    float noise = 0.05f;
    int g_dim = 64;
    int n_regions = 16;
    int rgr_dim = 64;
    int rfrcnn_dim = 2048;
};

void run_synth(const SynthArgs& a) {
    const fs::path out = prepare_out_dir(a.common.out, "synth", a.common.force);

    SyntheticWorldSpec spec;
    spec.rng_seed = a.common.seed;
    spec.n_objects = a.n_objects;
    spec.n_attributes = a.n_attributes;
    spec.n_relations = a.n_relations;
    spec.objects_per_image_min = a.objects_min;
    spec.objects_per_image_max = a.objects_max;
    spec.feature_noise_sigma = a.noise;
    spec.dims = FeatureDims{a.g_dim, a.n_regions, a.rgr_dim, a.rfrcnn_dim};

    const int total = a.n_train + a.n_dev + a.n_test;
    const auto tuples = generate_synthetic_corpus(spec, total, a.guides_per_image);

    // Partition by image index; every split shares the same world.
    const auto image_index = [](const TrainingTuple& t) {
        return std::stoi(t.image_id.substr(t.image_id.find('-') + 1));
    };
    std::vector<TrainingTuple> train, dev, test;
    for (const auto& t : tuples) {
        const int idx = image_index(t);
        if (idx < a.n_train) train.push_back(t);
        else if (idx < a.n_train + a.n_dev) dev.push_back(t);
        else test.push_back(t);
    }

    save_tuples(train, out / "train.jsonl");
    save_tuples(dev, out / "dev.jsonl");
    save_tuples(test, out / "test.jsonl");

    // T2-style guide file for the held-out images.
    std::vector<GuideEntry> guides;
    std::map<std::string, std::vector<std::string>> by_image;
    std::vector<std::string> order;
    for (const auto& t : test) {
        if (!by_image.count(t.image_id)) order.push_back(t.image_id);
        auto& g = by_image[t.image_id];
        if (g.size() < 6) g.push_back(t.guiding_text);
    }
    for (const auto& id : order) guides.emplace_back(id, by_image[id]);
    save_guide_file(guides, out / "test_guides.txt");

    const auto stats = compute_corpus_stats(train);
    const std::string csv = corpus_stats_csv(stats);
    {
        std::ofstream os(out / "stats.csv", std::ios::binary);
        os << csv;
    }
    std::cout << csv;

    RunManifest m;
    m.command = "synth";
    m.rng_seed = a.common.seed;
    m.deterministic = a.common.deterministic;
    m.config = {{"n_train", std::to_string(a.n_train)},
                {"n_dev", std::to_string(a.n_dev)},
                {"n_test", std::to_string(a.n_test)},
                {"guides_per_image", std::to_string(a.guides_per_image)},
                {"n_objects", std::to_string(a.n_objects)},
                {"n_attributes", std::to_string(a.n_attributes)},
                {"n_relations", std::to_string(a.n_relations)},
                {"objects_min", std::to_string(a.objects_min)},
                {"objects_max", std::to_string(a.objects_max)},
                {"noise", std::to_string(a.noise)},
                {"g_dim", std::to_string(a.g_dim)},
                {"n_regions", std::to_string(a.n_regions)},
                {"rgr_dim", std::to_string(a.rgr_dim)},
                {"rfrcnn_dim", std::to_string(a.rfrcnn_dim)}};
    for (const char* f : {"train.jsonl", "train.gten", "dev.jsonl", "dev.gten", "test.jsonl", "test.gten",
                          "test_guides.txt", "stats.csv"}) {
        manifest_add_output(m, out, out / f);
    }
    write_manifest(m, out);
}

}  // namespace

void add_synth_command(CLI::App& app) {
    auto args = std::make_shared<SynthArgs>();
    CLI::App* cmd = app.add_subcommand("synth", "Generate a synthetic guided-captioning corpus");
    add_common(cmd, args->common);
    cmd->add_option("--n-train", args->n_train, "Training images")->default_val(200);
    cmd->add_option("--n-dev", args->n_dev, "Dev images")->default_val(50);
    cmd->add_option("--n-test", args->n_test, "Held-out test images")->default_val(50);
    cmd->add_option("--guides-per-image", args->guides_per_image,
                    "Guides per image; 1 = CC-style extracted spans, >1 = VG-style object names")
        ->default_val(2);
    cmd->add_option("--n-objects", args->n_objects)->default_val(24);
    cmd->add_option("--n-attributes", args->n_attributes)->default_val(8);
    cmd->add_option("--n-relations", args->n_relations)->default_val(6);
    cmd->add_option("--objects-min", args->objects_min)->default_val(2);
    cmd->add_option("--objects-max", args->objects_max)->default_val(4);
    cmd->add_option("--noise", args->noise, "Feature noise sigma")->default_val(0.05f);
    cmd->add_option("--g-dim", args->g_dim)->default_val(64);
    cmd->add_option("--n-regions", args->n_regions)->default_val(16);
    cmd->add_option("--rgr-dim", args->rgr_dim)->default_val(64);
    cmd->add_option("--rfrcnn-dim", args->rfrcnn_dim)->default_val(2048);
    cmd->callback([args]() { run_synth(*args); });
}

}  // namespace gcap::cli
