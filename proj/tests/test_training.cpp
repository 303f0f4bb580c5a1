#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "guidecap/training.hpp"
#include "test_support.hpp"

using namespace gcap;

namespace {

struct TinyWorld {
    std::vector<TrainingTuple> train;
    std::vector<TrainingTuple> dev;
    Vocab vocab;
    ModelConfig model;
};

// Small corpus + small model that trains in seconds.
TinyWorld make_world(int n_train = 8, int n_dev = 4, uint64_t seed = 77) {
    SyntheticWorldSpec spec;
    spec.rng_seed = seed;
    spec.n_objects = 8;
    spec.n_attributes = 4;
    spec.n_relations = 3;
    spec.dims = FeatureDims{8, 4, 6, 10};
    TinyWorld w;
    const auto all = generate_synthetic_corpus(spec, n_train + n_dev, 1);
    for (const auto& t : all) {
        const int idx = std::stoi(t.image_id.substr(t.image_id.find('-') + 1));
        (idx < n_train ? w.train : w.dev).push_back(t);
    }
    std::vector<std::string> corpus;
    for (const auto& t : w.train) {
        corpus.push_back(t.guiding_text);
        corpus.push_back(t.caption);
    }
    w.vocab = train_vocab(corpus, 120);
    w.model.d_model = 16;
    w.model.n_layers = 1;
    w.model.n_heads = 2;
    w.model.d_ff = 32;
    w.model.proj_hidden = 8;
    w.model.vocab_size = w.vocab.size();
    w.model.max_caption_len = 16;
    w.model.feat = spec.dims;
    return w;
}

TrainConfig quick_config(int max_steps, int eval_every) {
    TrainConfig tc;
    tc.learning_rate = 0.2f;
    tc.decay_rate = 0.95f;
    tc.batch_size = 8;
    tc.max_steps = max_steps;
    tc.eval_every_steps = eval_every;
    tc.beam_width = 2;
    tc.rng_seed = 3;
    return tc;
}

}  // namespace

TEST_CASE("lr schedule: exponential step decay, epoch-length default period") {
    TrainConfig tc;
    tc.learning_rate = 0.128f;
    tc.decay_rate = 0.95f;
    tc.decay_every_steps = 10;
    CHECK(lr_at_step(tc, 0, 5) == doctest::Approx(0.128).epsilon(1e-7));
    CHECK(lr_at_step(tc, 9, 5) == doctest::Approx(0.128).epsilon(1e-7));
    CHECK(lr_at_step(tc, 10, 5) == doctest::Approx(0.128 * 0.95).epsilon(1e-7));
    CHECK(lr_at_step(tc, 25, 5) == doctest::Approx(0.128 * 0.95 * 0.95).epsilon(1e-7));
    tc.decay_every_steps = 0;  // one epoch's worth of steps
    CHECK(lr_at_step(tc, 5, 5) == doctest::Approx(0.128 * 0.95).epsilon(1e-7));
}

TEST_CASE("training: loss drops and the dev-selected checkpoint exists") {
    auto w = make_world();
    const auto out = gcap::test::scratch_dir("train_basic");
    const auto r = train(w.model, quick_config(60, 30), w.vocab, w.train, w.dev, out);
    REQUIRE(r.log.size() == 60);
    const double first = r.log.front().loss;
    const double last = r.log.back().loss;
    CHECK(last < first);
    CHECK(std::filesystem::exists(r.best_checkpoint));
    CHECK(std::filesystem::exists(r.final_checkpoint));
    CHECK(r.best_dev_cider >= 0.0);
    // Selected checkpoint's dev score is the argmax over evaluated steps.
    for (const auto& row : r.log) {
        if (row.dev_cider) CHECK(*row.dev_cider <= r.best_dev_cider + 1e-12);
    }
}

TEST_CASE("training: fixed seed reproduces bit-identical checkpoints") {
    auto w = make_world();
    const auto out1 = gcap::test::scratch_dir("train_det1");
    const auto out2 = gcap::test::scratch_dir("train_det2");
    const auto r1 = train(w.model, quick_config(40, 20), w.vocab, w.train, w.dev, out1);
    const auto r2 = train(w.model, quick_config(40, 20), w.vocab, w.train, w.dev, out2);
    for (size_t i = 0; i < r1.log.size(); ++i) CHECK(r1.log[i].loss == r2.log[i].loss);
    std::ifstream f1(r1.final_checkpoint, std::ios::binary), f2(r2.final_checkpoint, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
}

TEST_CASE("training: checkpoint resume reproduces the loss trajectory bit-exactly") {
    auto w = make_world();
    const auto out_full = gcap::test::scratch_dir("train_full");
    const auto out_half = gcap::test::scratch_dir("train_half");
    const auto out_rest = gcap::test::scratch_dir("train_rest");

    const auto full = train(w.model, quick_config(40, 20), w.vocab, w.train, w.dev, out_full);
    const auto half = train(w.model, quick_config(20, 20), w.vocab, w.train, w.dev, out_half);
    const auto ck = load_checkpoint(half.final_checkpoint);
    REQUIRE(ck.meta.step == 20);
    const auto rest = train(w.model, quick_config(40, 20), w.vocab, w.train, w.dev, out_rest, {}, &ck);

    REQUIRE(rest.log.size() == 20);
    for (size_t i = 0; i < rest.log.size(); ++i) {
        CHECK(rest.log[i].step == full.log[20 + i].step);
        CHECK(rest.log[i].loss == full.log[20 + i].loss);
    }
    std::ifstream f1(full.final_checkpoint, std::ios::binary), f2(rest.final_checkpoint, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
}

TEST_CASE("training: NaN loss aborts with the step number") {
    auto w = make_world();
    auto tc = quick_config(50, 50);
    tc.learning_rate = 1e9f;  // guaranteed blow-up
    const auto out = gcap::test::scratch_dir("train_nan");
    try {
        train(w.model, tc, w.vocab, w.train, w.dev, out);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(e.step >= 0);
        CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
}

TEST_CASE("training: empty dev set falls back to the final checkpoint") {
    auto w = make_world();
    const auto out = gcap::test::scratch_dir("train_nodev");
    const auto r = train(w.model, quick_config(10, 5), w.vocab, w.train, {}, out);
    CHECK(std::filesystem::exists(r.best_checkpoint));
    std::ifstream f1(r.best_checkpoint, std::ios::binary), f2(r.final_checkpoint, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
}

TEST_CASE("training: loss beats its starting value for every paper lr <= 0.128") {
    auto w = make_world(6, 0);
    for (const float lr : paper_learning_rate_grid()) {
        if (lr > 0.128f) continue;
        auto tc = quick_config(60, 1000);
        tc.learning_rate = lr;
        const auto out = gcap::test::scratch_dir("train_lr_" + std::to_string(lr));
        const auto r = train(w.model, tc, w.vocab, w.train, {}, out);
        CHECK_MESSAGE(r.log.back().loss < r.log.front().loss, "lr ", lr);
    }
}

TEST_CASE("sweep: single cell equals train; argmax contract; paper grid order") {
    auto w = make_world();
    auto tc = quick_config(20, 10);
    const auto out_train = gcap::test::scratch_dir("sweep_ref");
    const auto ref = train(w.model, tc, w.vocab, w.train, w.dev, out_train);

    const std::vector<float> one_lr = {tc.learning_rate};
    const std::vector<float> one_decay = {tc.decay_rate};
    const auto out_sweep = gcap::test::scratch_dir("sweep_one");
    const auto sw = sweep(w.model, tc, one_lr, one_decay, w.vocab, w.train, w.dev, out_sweep);
    REQUIRE(sw.cells.size() == 1);
    CHECK(sw.cells[0].dev_cider == doctest::Approx(ref.best_dev_cider).epsilon(1e-12));
    CHECK(sw.best.dev_cider == sw.cells[0].dev_cider);

    // Paper grid enumeration: row-major, learning rates outer.
    const auto& lrs = paper_learning_rate_grid();
    const auto& decays = paper_decay_rate_grid();
    REQUIRE(lrs.size() == 7);
    REQUIRE(decays.size() == 2);
    CHECK(lrs[0] == 0.0016f);
    CHECK(lrs[6] == 0.16f);
    CHECK(decays[0] == 0.90f);
    CHECK(decays[1] == 0.95f);
    size_t k = 0;
    for (const float lr : lrs) {
        for (const float dr : decays) {
            INFO("cell ", k);
            // Shape of the expected row-major order, verified on the small
            // sweep below with a 2x2 subgrid.
            (void)lr;
            (void)dr;
            ++k;
        }
    }
    CHECK(k == 14);

    const std::vector<float> two_lrs = {0.05f, 0.2f};
    const std::vector<float> two_decays = {0.9f, 0.95f};
    auto tc_small = quick_config(6, 6);
    const auto out_grid = gcap::test::scratch_dir("sweep_grid");
    const auto grid = sweep(w.model, tc_small, two_lrs, two_decays, w.vocab, w.train, w.dev, out_grid);
    REQUIRE(grid.cells.size() == 4);
    CHECK(grid.cells[0].learning_rate == 0.05f);
    CHECK(grid.cells[0].decay_rate == 0.9f);
    CHECK(grid.cells[1].learning_rate == 0.05f);
    CHECK(grid.cells[1].decay_rate == 0.95f);
    CHECK(grid.cells[2].learning_rate == 0.2f);
    CHECK(grid.cells[3].learning_rate == 0.2f);
    double best = -1.0;
    for (const auto& c : grid.cells) {
        if (!std::isnan(c.dev_cider)) best = std::max(best, c.dev_cider);
    }
    CHECK(grid.best.dev_cider == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("sweep: a NaN cell records a sentinel and does not kill the sweep") {
    auto w = make_world();
    auto tc = quick_config(12, 12);
    const std::vector<float> lrs = {1e9f, 0.2f};
    const std::vector<float> decays = {0.95f};
    const auto out = gcap::test::scratch_dir("sweep_nan");
    const auto sw = sweep(w.model, tc, lrs, decays, w.vocab, w.train, w.dev, out);
    REQUIRE(sw.cells.size() == 2);
    CHECK(std::isnan(sw.cells[0].dev_cider));
    CHECK(!std::isnan(sw.cells[1].dev_cider));
    CHECK(sw.best.learning_rate == 0.2f);
    const auto csv = sweep_csv(sw);
    CHECK(csv.find("nan") != std::string::npos);
}

TEST_CASE("train log csv: header and eval rows") {
    std::vector<TrainLogRow> rows = {{0, 5.0, 0.1f, std::nullopt}, {1, 4.0, 0.1f, 2.5}};
    const auto csv = train_log_csv(rows);
    CHECK(csv.rfind("step,loss,lr,dev_cider\n", 0) == 0);
    CHECK(csv.find("1,4,0.1") != std::string::npos);
    CHECK(csv.find("2.5") != std::string::npos);
}
