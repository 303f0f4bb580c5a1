#include <fstream>
#include <iostream>

#include "cli_common.hpp"
#include "guidecap/corpus.hpp"

namespace gcap::cli {

namespace fs = std::filesystem;

namespace {

struct StatsArgs {
    CommonArgs common;
    std::string tuples;
    std::string test_guides;
};

void run_stats(const StatsArgs& a) {
    const fs::path out = prepare_out_dir(a.common.out, "stats", a.common.force);
    const auto tuples = load_tuples(a.tuples);
    if (tuples.empty()) throw DataError("stats: " + a.tuples + " holds no tuples");

    const auto stats = compute_corpus_stats(tuples);
    const std::string csv = corpus_stats_csv(stats);
    {
        std::ofstream os(out / "stats.csv", std::ios::binary);
        os << csv;
    }
    std::cout << csv;

    RunManifest m;
    m.command = "stats";
    m.rng_seed = a.common.seed;
    m.deterministic = a.common.deterministic;
    m.config = {{"tuples", a.tuples}, {"test_guides", a.test_guides}};
    manifest_add_input(m, out, a.tuples);
    manifest_add_output(m, out, out / "stats.csv");

    if (!a.test_guides.empty()) {
        std::vector<std::string> guides;
        for (const auto& [image_id, gs] : load_guide_file(a.test_guides)) {
            guides.insert(guides.end(), gs.begin(), gs.end());
        }
        const auto overlap = compute_overlap(tuples, guides);
        const std::string ocsv = overlap_stats_csv(overlap);
        std::ofstream os(out / "overlap.csv", std::ios::binary);
        os << ocsv;
        std::cout << ocsv;
        manifest_add_input(m, out, a.test_guides);
        manifest_add_output(m, out, out / "overlap.csv");
    }
    write_manifest(m, out);
}

}  // namespace

void add_stats_command(CLI::App& app) {
    auto args = std::make_shared<StatsArgs>();
    CLI::App* cmd = app.add_subcommand("stats", "Corpus statistics (counts, length histogram, entropy, overlap)");
    add_common(cmd, args->common);
    cmd->add_option("--tuples", args->tuples, "Tuple JSONL file")->required();
    cmd->add_option("--test-guides", args->test_guides, "T2-style guide file for overlap statistics");
    cmd->callback([args]() { run_stats(*args); });
}

}  // namespace gcap::cli
