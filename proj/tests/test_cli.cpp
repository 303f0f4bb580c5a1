#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "guidecap/corpus.hpp"
#include "guidecap/decoding.hpp"
#include "guidecap/manifest.hpp"
#include "test_support.hpp"

using namespace gcap;

namespace {

int run(const std::string& cmd) {
    const int rc = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(rc);
}

std::string bin() { return GCAP_BIN; }

std::string synth_flags(const std::filesystem::path& out) {
    return bin() + " synth --out " + out.string() +
           " --seed 5 --n-train 6 --n-dev 3 --n-test 3 --guides-per-image 2 --n-objects 8 --n-attributes 4"
           " --n-relations 3 --g-dim 8 --n-regions 4 --rgr-dim 6 --rfrcnn-dim 10";
}

}  // namespace

TEST_CASE("cli: synth writes splits, guide file, stats, and a manifest") {
    const auto dir = gcap::test::scratch_dir("cli_synth");
    REQUIRE(run(synth_flags(dir / "c")) == 0);
    for (const char* f : {"train.jsonl", "train.gten", "dev.jsonl", "test.jsonl", "test_guides.txt", "stats.csv",
                          "manifest.json"}) {
        CHECK_MESSAGE(std::filesystem::exists(dir / "c" / f), f);
    }
    const auto m = read_manifest(dir / "c" / "manifest.json");
    CHECK(m.command == "synth");
    CHECK(m.rng_seed == 5);
    CHECK(!m.outputs.empty());

    const auto tuples = load_tuples(dir / "c" / "train.jsonl");
    CHECK(tuples.size() == 12);  // 6 images x 2 guides
    const auto guides = load_guide_file(dir / "c" / "test_guides.txt");
    CHECK(guides.size() == 3);
    for (const auto& [img, gs] : guides) CHECK(gs.size() == 2);
}

TEST_CASE("cli: refusing to overwrite without --force") {
    const auto dir = gcap::test::scratch_dir("cli_force");
    REQUIRE(run(synth_flags(dir / "c")) == 0);
    CHECK(run(synth_flags(dir / "c")) == 2);
    CHECK(run(synth_flags(dir / "c") + " --force") == 0);
}

TEST_CASE("cli: same seed twice gives identical file digests") {
    const auto dir = gcap::test::scratch_dir("cli_seed");
    REQUIRE(run(synth_flags(dir / "a")) == 0);
    REQUIRE(run(synth_flags(dir / "b")) == 0);
    for (const char* f : {"train.jsonl", "train.gten", "test_guides.txt", "stats.csv", "manifest.json"}) {
        CHECK_MESSAGE(sha256_file(dir / "a" / f) == sha256_file(dir / "b" / f), f);
    }
}

TEST_CASE("cli: usage and data error exit codes") {
    const auto dir = gcap::test::scratch_dir("cli_codes");
    CHECK(run(bin() + " train --out " + (dir / "x").string()) == 1);       // missing required --train
    CHECK(run(bin() + " nosuchcommand") == 1);                              // unknown subcommand
    CHECK(run(bin() + " stats --tuples /nonexistent.jsonl --out " + (dir / "s").string()) == 2);
    CHECK(run(bin() + " --help") == 0);
}

TEST_CASE("cli: unknown ablation lists the valid names") {
    const auto dir = gcap::test::scratch_dir("cli_ablation");
    REQUIRE(run(synth_flags(dir / "c")) == 0);
    const std::string cmd = bin() + " train --train " + (dir / "c" / "train.jsonl").string() + " --out " +
                            (dir / "t").string() + " --ablation WRONG --max-steps 1 2>" + (dir / "err.txt").string();
    const int rc = std::system((cmd + " >/dev/null").c_str());
    CHECK(WEXITSTATUS(rc) == 1);
    std::ifstream err(dir / "err.txt");
    const std::string text((std::istreambuf_iterator<char>(err)), std::istreambuf_iterator<char>());
    CHECK(text.find("T+G+R_GR+R_FRCNN") != std::string::npos);
    CHECK(text.find("copy") != std::string::npos);
}

TEST_CASE("cli: train, decode, eval pipeline on a tiny corpus") {
    const auto dir = gcap::test::scratch_dir("cli_pipeline");
    REQUIRE(run(synth_flags(dir / "c")) == 0);
    const auto c = dir / "c";

    const std::string train_cmd = bin() + " train --train " + (c / "train.jsonl").string() + " --dev " +
                                  (c / "dev.jsonl").string() + " --out " + (dir / "t").string() +
                                  " --ablation T+G --d-model 16 --n-layers 1 --n-heads 2 --d-ff 32 --proj-hidden 8" +
                                  " --vocab-size 200 --batch-size 8 --max-steps 30 --eval-every 15 --beam-width 2" +
                                  " --lr 0.2 --seed 9 --deterministic";
    REQUIRE(run(train_cmd) == 0);
    for (const char* f : {"best.ckpt", "final.ckpt", "log.csv", "vocab.txt", "manifest.json"}) {
        CHECK_MESSAGE(std::filesystem::exists(dir / "t" / f), f);
    }

    const std::string decode_cmd = bin() + " decode --checkpoint " + (dir / "t" / "best.ckpt").string() +
                                   " --tuples " + (c / "test.jsonl").string() + " --guides " +
                                   (c / "test_guides.txt").string() + " --vocab " + (dir / "t" / "vocab.txt").string() +
                                   " --out " + (dir / "d").string() + " --beam-width 2 --max-len 10 --deterministic";
    REQUIRE(run(decode_cmd) == 0);
    const auto decodes = load_decodes(dir / "d" / "decodes.jsonl");
    CHECK(decodes.size() == 6);  // 3 test images x 2 guides

    const std::string copy_cmd = bin() + " decode --ablation copy --tuples " + (c / "test.jsonl").string() +
                                 " --vocab " + (dir / "t" / "vocab.txt").string() + " --out " + (dir / "dc").string();
    REQUIRE(run(copy_cmd) == 0);

    const std::string eval_cmd = bin() + " eval --refs " + (c / "test.jsonl").string() + " --system model=" +
                                 (dir / "d" / "decodes.jsonl").string() + " --system copy=" +
                                 (dir / "dc" / "decodes.jsonl").string() + " --out " + (dir / "e").string();
    REQUIRE(run(eval_cmd) == 0);
    CHECK(std::filesystem::exists(dir / "e" / "report.csv"));
    CHECK(std::filesystem::exists(dir / "e" / "report.md"));
    std::ifstream rep(dir / "e" / "report.csv");
    std::string header;
    std::getline(rep, header);
    CHECK(header == "system,cider,rouge_l,meteor,div1,div2,presence_verbatim_pct,n_instances");
    int rows = 0;
    std::string line;
    while (std::getline(rep, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 2);
}

TEST_CASE("cli: stats command emits corpus and overlap CSVs") {
    const auto dir = gcap::test::scratch_dir("cli_stats");
    REQUIRE(run(synth_flags(dir / "c")) == 0);
    const std::string cmd = bin() + " stats --tuples " + (dir / "c" / "train.jsonl").string() + " --test-guides " +
                            (dir / "c" / "test_guides.txt").string() + " --out " + (dir / "s").string();
    REQUIRE(run(cmd) == 0);
    CHECK(std::filesystem::exists(dir / "s" / "stats.csv"));
    CHECK(std::filesystem::exists(dir / "s" / "overlap.csv"));
    std::ifstream os(dir / "s" / "overlap.csv");
    std::string header;
    std::getline(os, header);
    CHECK(header ==
          "n_unique_test_guides,pct_guides_seen_in_train,n_unique_test_guide_tokens,pct_tokens_seen_in_train");
}

TEST_CASE("cli: config file values are overridden by explicit flags") {
    const auto dir = gcap::test::scratch_dir("cli_config");
    {
        std::ofstream cfg(dir / "synth.ini");
        cfg << "n-train=6\nn-dev=3\nn-test=3\nguides-per-image=2\nn-objects=8\nn-attributes=4\nn-relations=3\n"
               "g-dim=8\nn-regions=4\nrgr-dim=6\nrfrcnn-dim=10\nseed=5\n";
    }
    const std::string base = bin() + " synth --config " + (dir / "synth.ini").string();
    REQUIRE(run(base + " --out " + (dir / "a").string()) == 0);
    // Flag overrides the config file's seed; corpora must differ.
    REQUIRE(run(base + " --out " + (dir / "b").string() + " --seed 6") == 0);
    CHECK(sha256_file(dir / "a" / "train.gten") != sha256_file(dir / "b" / "train.gten"));
    // Identical invocation reproduces the config-file run exactly.
    REQUIRE(run(base + " --out " + (dir / "a2").string()) == 0);
    CHECK(sha256_file(dir / "a" / "train.gten") == sha256_file(dir / "a2" / "train.gten"));
}
