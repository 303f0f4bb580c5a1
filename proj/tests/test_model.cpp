#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "guidecap/checkpoint.hpp"
#include "guidecap/model.hpp"
#include "test_support.hpp"

using namespace gcap;
using gcap::test::random_tensor;

namespace {

// Small feature world for model tests, templated so the gradient oracle can
// run in double precision.
template <class S>
ImageFeaturesT<S> make_features(std::mt19937& rng, const FeatureDims& dims, int region_count) {
    ImageFeaturesT<S> f;
    f.g = random_tensor<S>(rng, {1, dims.g_dim}, 0.5);
    f.r_gr = TensorT<S>::zeros({dims.n_regions, dims.rgr_dim});
    f.r_frcnn = TensorT<S>::zeros({dims.n_regions, dims.rfrcnn_dim});
    std::normal_distribution<double> n(0.0, 0.5);
    for (int r = 0; r < region_count; ++r) {
        for (int c = 0; c < dims.rgr_dim; ++c) f.r_gr.at(r, c) = static_cast<S>(n(rng));
        for (int c = 0; c < dims.rfrcnn_dim; ++c) f.r_frcnn.at(r, c) = static_cast<S>(n(rng));
    }
    f.region_count = region_count;
    return f;
}

ModelConfig tiny_config(unsigned flags = kAllInputs) {
    ModelConfig cfg;
    cfg.d_model = 16;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.d_ff = 32;
    cfg.vocab_size = 29;
    cfg.max_caption_len = 12;
    cfg.proj_hidden = 8;
    cfg.input_flags = flags;
    cfg.feat = FeatureDims{6, 4, 5, 7};
    return cfg;
}

}  // namespace

TEST_CASE("ablation names round trip") {
    for (const auto& name : ablation_names()) {
        const auto flags = parse_ablation(name);
        REQUIRE(flags.has_value());
        CHECK(ablation_name(*flags) == name);
    }
    CHECK(!parse_ablation("bogus"));
    CHECK(*parse_ablation("copy") == 0u);
}

TEST_CASE("config validation: head divisibility and empty flags") {
    ModelConfig cfg = tiny_config();
    cfg.n_heads = 3;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
    cfg = tiny_config();
    cfg.input_flags = 0;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
}

TEST_CASE("encoder input: T-only length equals guide length") {
    const auto cfg = tiny_config(kInputT);
    auto params = init_parameters<float>(cfg, 1);
    std::mt19937 rng(1);
    const auto feats = make_features<float>(rng, cfg.feat, 2);
    Graph g;
    const auto enc = build_encoder_input(g, cfg, params, feats, {5, 6, 7});
    CHECK(enc.len == 3);
    CHECK(enc.mask == std::vector<uint8_t>{1, 1, 1});
    for (int t : enc.type_ids) CHECK(t == 3);
}

TEST_CASE("encoder input: full flags order G, R_GR, R_FRCNN, T") {
    const auto cfg = tiny_config();  // n_regions = 4
    auto params = init_parameters<float>(cfg, 1);
    std::mt19937 rng(2);
    const auto feats = make_features<float>(rng, cfg.feat, 2);
    Graph g;
    const auto enc = build_encoder_input(g, cfg, params, feats, {5, 6, 7});
    CHECK(enc.len == 1 + 4 + 4 + 3);
    const std::vector<int> want_types = {0, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3};
    CHECK(enc.type_ids == want_types);
    // Padding rows (region_count 2 of 4) are masked off in both segments.
    const std::vector<uint8_t> want_mask = {1, 1, 1, 0, 0, 1, 1, 0, 0, 1, 1, 1};
    CHECK(enc.mask == want_mask);
}

TEST_CASE("encoder input: paper-scale lengths add up to 36") {
    ModelConfig cfg;
    cfg.vocab_size = 50;
    auto params = init_parameters<float>(cfg, 1);
    std::mt19937 rng(3);
    const auto feats = make_features<float>(rng, cfg.feat, 10);
    Graph g;
    const auto enc = build_encoder_input(g, cfg, params, feats, {5, 6, 7});
    CHECK(enc.len == 1 + 16 + 16 + 3);
}

TEST_CASE("encoder input: enabled flag with missing feature is a contract error") {
    const auto cfg = tiny_config();
    auto params = init_parameters<float>(cfg, 1);
    ImageFeatures feats;  // nothing filled in
    Graph g;
    CHECK_THROWS_AS(build_encoder_input(g, cfg, params, feats, {5}), ContractError);

    const auto t_only = tiny_config(kInputT);
    auto params_t = init_parameters<float>(t_only, 1);
    std::mt19937 rng(4);
    const auto full = make_features<float>(rng, t_only.feat, 2);
    // Disabled flags ignore supplied features silently.
    CHECK_NOTHROW(build_encoder_input(g, t_only, params_t, full, {5}));
    CHECK_THROWS_AS(build_encoder_input(g, t_only, params_t, full, {}), ContractError);
}

TEST_CASE("padded region rows do not influence the logits") {
    const auto cfg = tiny_config();
    auto params = init_parameters<float>(cfg, 7);
    std::mt19937 rng(5);
    auto feats = make_features<float>(rng, cfg.feat, 2);
    const std::vector<int> guide = {5, 6};
    const std::vector<int> cap = {Vocab::kBos, 9, 10};

    const auto run = [&](const ImageFeatures& f) {
        Graph g(false);
        const auto enc = build_encoder_input(g, cfg, params, f, guide);
        const auto logits = model_forward(g, cfg, params, enc, cap);
        return std::vector<float>(logits.values().begin(), logits.values().end());
    };
    const auto base = run(feats);
    // Scribble over the padding rows; the mask must hide every change.
    for (int64_t r = feats.region_count; r < cfg.feat.n_regions; ++r) {
        for (int64_t c = 0; c < cfg.feat.rgr_dim; ++c) feats.r_gr.at(r, c) = 1e3f;
        for (int64_t c = 0; c < cfg.feat.rfrcnn_dim; ++c) feats.r_frcnn.at(r, c) = -1e3f;
    }
    const auto poked = run(feats);
    CHECK(std::memcmp(base.data(), poked.data(), base.size() * sizeof(float)) == 0);
}

TEST_CASE("causality: token j changes no logit at positions <= j") {
    const auto cfg = tiny_config(kInputT);
    auto params = init_parameters<float>(cfg, 11);
    std::mt19937 rng(6);
    const auto feats = make_features<float>(rng, cfg.feat, 2);
    const std::vector<int> guide = {5, 6, 7};

    std::vector<int> cap = {Vocab::kBos, 9, 10, 11, 12};
    const auto run = [&](const std::vector<int>& ids) {
        Graph g(false);
        const auto enc = build_encoder_input(g, cfg, params, feats, guide);
        const auto logits = model_forward(g, cfg, params, enc, ids);
        return std::vector<float>(logits.values().begin(), logits.values().end());
    };
    const auto base = run(cap);
    for (size_t j = 1; j < cap.size(); ++j) {
        auto changed = cap;
        changed[j] = 20;
        const auto out = run(changed);
        // Rows strictly before j must be bit-identical.
        CHECK(std::memcmp(base.data(), out.data(), j * static_cast<size_t>(cfg.vocab_size) * sizeof(float)) == 0);
        bool later_differs = false;
        for (size_t i = j * static_cast<size_t>(cfg.vocab_size); i < base.size(); ++i) {
            later_differs = later_differs || base[i] != out[i];
        }
        CHECK(later_differs);
    }
}

TEST_CASE("ablation soundness: T-only ignores images; G-only ignores the guide") {
    std::mt19937 rng(8);
    const std::vector<int> guide = {5, 6};
    const std::vector<int> cap = {Vocab::kBos, 9, 10};

    {
        const auto cfg = tiny_config(kInputT);
        auto params = init_parameters<float>(cfg, 3);
        auto f1 = make_features<float>(rng, cfg.feat, 2);
        auto f2 = make_features<float>(rng, cfg.feat, 3);
        const auto run = [&](const ImageFeatures& f) {
            Graph g(false);
            const auto enc = build_encoder_input(g, cfg, params, f, guide);
            const auto logits = model_forward(g, cfg, params, enc, cap);
            return std::vector<float>(logits.values().begin(), logits.values().end());
        };
        CHECK(run(f1) == run(f2));
    }
    {
        const auto cfg = tiny_config(kInputG);
        auto params = init_parameters<float>(cfg, 3);
        const auto f = make_features<float>(rng, cfg.feat, 2);
        const auto run = [&](const std::vector<int>& gd) {
            Graph g(false);
            const auto enc = build_encoder_input(g, cfg, params, f, gd);
            const auto logits = model_forward(g, cfg, params, enc, cap);
            return std::vector<float>(logits.values().begin(), logits.values().end());
        };
        CHECK(run({5, 6}) == run({20, 21, 22}));
    }
    {
        // T vs T+G on the same inputs: image information must reach the logits.
        const auto cfg_tg = tiny_config(kInputT | kInputG);
        auto params = init_parameters<float>(cfg_tg, 3);
        auto f1 = make_features<float>(rng, cfg_tg.feat, 2);
        auto f2 = make_features<float>(rng, cfg_tg.feat, 2);
        const auto run = [&](const ImageFeatures& f) {
            Graph g(false);
            const auto enc = build_encoder_input(g, cfg_tg, params, f, guide);
            const auto logits = model_forward(g, cfg_tg, params, enc, cap);
            return std::vector<float>(logits.values().begin(), logits.values().end());
        };
        CHECK(run(f1) != run(f2));
    }
}

TEST_CASE("embedding tying: one row steers both guide encoding and output logits") {
    const auto cfg = tiny_config(kInputT);
    auto params = init_parameters<float>(cfg, 13);
    std::mt19937 rng(9);
    const auto feats = make_features<float>(rng, cfg.feat, 2);
    const int token = 17;
    const std::vector<int> cap = {Vocab::kBos, 9};

    const auto logits_for = [&](const std::vector<int>& guide) {
        Graph g(false);
        const auto enc = build_encoder_input(g, cfg, params, feats, guide);
        const auto logits = model_forward(g, cfg, params, enc, cap);
        return std::vector<float>(logits.values().begin(), logits.values().end());
    };
    const auto base_with_token = logits_for({token, 5});
    const auto base_without = logits_for({5, 6});

    auto& embed = params.at("embed");
    for (int64_t c = 0; c < cfg.d_model; ++c) embed.at(token, c) += 0.25f;

    // Encoder side: guides containing the token see different logits.
    CHECK(logits_for({token, 5}) != base_with_token);
    // Decoder side: the tied output projection moves logit column `token`
    // even when the token never appears in the input.
    const auto after_without = logits_for({5, 6});
    bool column_moved = false;
    for (size_t row = 0; row < cap.size(); ++row) {
        const size_t ix = row * static_cast<size_t>(cfg.vocab_size) + static_cast<size_t>(token);
        column_moved = column_moved || after_without[ix] != base_without[ix];
    }
    CHECK(column_moved);
}

TEST_CASE("loss: untrained model on V=4000 sits near ln(4000)") {
    ModelConfig cfg = tiny_config();
    cfg.vocab_size = 4000;
    auto params = init_parameters<float>(cfg, 21);
    std::mt19937 rng(10);
    const auto feats = make_features<float>(rng, cfg.feat, 3);
    std::vector<EncodedExample> batch;
    for (int i = 0; i < 4; ++i) {
        EncodedExample ex;
        ex.features = &feats;
        ex.guide_ids = {5, 6};
        ex.caption_ids = {100 + i, 200 + i, 300 + i};
        batch.push_back(ex);
    }
    Graph g;
    const auto loss = model_loss(g, cfg, params, batch);
    CHECK(loss.item() == doctest::Approx(std::log(4000.0)).epsilon(0.5 / std::log(4000.0)));
}

TEST_CASE("loss: duplicating every tuple leaves the value unchanged") {
    const auto cfg = tiny_config();
    auto params = init_parameters<float>(cfg, 23);
    std::mt19937 rng(11);
    const auto feats = make_features<float>(rng, cfg.feat, 2);
    std::vector<EncodedExample> batch;
    for (int i = 0; i < 3; ++i) {
        EncodedExample ex;
        ex.features = &feats;
        ex.guide_ids = {5};
        ex.caption_ids = {static_cast<int>(7 + i), 9};
        batch.push_back(ex);
    }
    Graph g1, g2;
    const float single = model_loss(g1, cfg, params, batch).item();
    auto doubled = batch;
    doubled.insert(doubled.end(), batch.begin(), batch.end());
    const float twice = model_loss(g2, cfg, params, doubled).item();
    CHECK(single == doctest::Approx(twice).epsilon(1e-6));
}

TEST_CASE("loss: empty batch is a contract error; gradients reach every parameter") {
    const auto cfg = tiny_config();
    auto params = init_parameters<float>(cfg, 29);
    Graph g;
    std::vector<EncodedExample> empty;
    CHECK_THROWS_AS(model_loss(g, cfg, params, empty), ContractError);

    std::mt19937 rng(12);
    const auto feats = make_features<float>(rng, cfg.feat, 4);  // all regions valid
    std::vector<EncodedExample> batch;
    EncodedExample ex;
    ex.features = &feats;
    ex.guide_ids = {5, 6, 7};
    ex.caption_ids = {9, 10, 11};
    batch.push_back(ex);
    Graph g2;
    auto loss = model_loss(g2, cfg, params, batch);
    g2.backward(loss);
    for (const auto& [name, t] : params.named) {
        REQUIRE_MESSAGE(t.has_grad(), name);
        double norm = 0.0;
        for (float v : t.grad()) norm += std::abs(static_cast<double>(v));
        CHECK_MESSAGE(norm > 0.0, "zero gradient for ", name);
    }
}

TEST_CASE("full gradient check: dim-8 one-layer full-flag model vs finite differences") {
    ModelConfig cfg;
    cfg.d_model = 8;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.d_ff = 16;
    cfg.vocab_size = 23;
    cfg.max_caption_len = 8;
    cfg.proj_hidden = 6;
    cfg.input_flags = kAllInputs;
    cfg.feat = FeatureDims{5, 3, 4, 6};

    // Central differences are invalid where a ReLU pre-activation sits within
    // eps of zero, so the fixture scales the weights to push pre-activations
    // away from the kinks and uses a seed verified to keep clear of them.
    auto params = init_parameters<double>(cfg, 128);
    for (auto& [name, t] : params.named) {
        if (name.find("ln") == std::string::npos) {
            for (auto& v : t.values()) v *= 10.0;
        }
    }
    std::mt19937 rng(13);
    const auto feats = make_features<double>(rng, cfg.feat, 2);
    std::vector<EncodedExampleT<double>> batch;
    EncodedExampleT<double> ex;
    ex.features = &feats;
    ex.guide_ids = {5, 6};
    ex.caption_ids = {9, 10, 11};
    batch.push_back(ex);
    EncodedExampleT<double> ex2 = ex;
    ex2.guide_ids = {7};
    ex2.caption_ids = {12, 13};
    batch.push_back(ex2);

    std::vector<std::pair<std::string, TensorT<double>>> named(params.named.begin(), params.named.end());
    const auto res = gcap::test::finite_difference_check<double>(
        named, [&](GraphT<double>& g) { return model_loss(g, cfg, params, batch); }, 1e-3);
    CHECK(res.checked == params.count());
    CHECK_MESSAGE(res.max_rel_err < 1e-3, "worst at ", res.worst);
}

TEST_CASE("float32 path: loss and gradients finite, forward deterministic") {
    const auto cfg = tiny_config();
    auto params = init_parameters<float>(cfg, 37);
    std::mt19937 rng(14);
    const auto feats = make_features<float>(rng, cfg.feat, 2);
    std::vector<EncodedExample> batch;
    EncodedExample ex;
    ex.features = &feats;
    ex.guide_ids = {5, 6};
    ex.caption_ids = {9, 10};
    batch.push_back(ex);

    const auto run = [&] {
        Graph g;
        auto loss = model_loss(g, cfg, params, batch);
        g.backward(loss);
        const float v = loss.item();
        params.zero_grads();
        return v;
    };
    const float a = run();
    const float b = run();
    CHECK(a == b);
    CHECK(std::isfinite(a));
}

TEST_CASE("parameter count: fixed for the documented desk config; paper scale buildable") {
    ModelConfig desk;  // d_model 64, 2 layers, 4 heads, d_ff 256, vocab 4000
    const auto shapes = parameter_shapes(desk);
    int64_t count = 0;
    for (const auto& [name, shape] : shapes) count += Tensor::numel_of(shape);
    CHECK(count == 640384);

    ModelConfig paper = ModelConfig::paper_scale();
    const auto pshapes = parameter_shapes(paper);
    int64_t pcount = 0;
    for (const auto& [name, shape] : pshapes) pcount += Tensor::numel_of(shape);
    // Order-of-magnitude check against the reported 47.3M/48.6M trainable
    // parameters; FC hidden sizes are unspecified there.
    CHECK(pcount > 10'000'000);
    CHECK(pcount < 200'000'000);

    ModelConfig paper_no_frcnn = paper;
    paper_no_frcnn.input_flags = kInputT | kInputG | kInputRGr;
    int64_t qcount = 0;
    for (const auto& [name, shape] : parameter_shapes(paper_no_frcnn)) qcount += Tensor::numel_of(shape);
    CHECK(pcount > qcount);  // dropping R_FRCNN sheds its projection network
}

TEST_CASE("forward outputs finite for large-magnitude inputs") {
    const auto cfg = tiny_config();
    auto params = init_parameters<float>(cfg, 41);
    std::mt19937 rng(15);
    auto feats = make_features<float>(rng, cfg.feat, 2);
    for (auto& v : feats.g.values()) v = 1000.0f;
    for (int64_t r = 0; r < feats.region_count; ++r)
        for (int64_t c = 0; c < cfg.feat.rgr_dim; ++c) feats.r_gr.at(r, c) = -1000.0f;
    Graph g(false);
    const auto enc = build_encoder_input(g, cfg, params, feats, {5, 6});
    const auto logits = model_forward(g, cfg, params, enc, {Vocab::kBos, 9});
    CHECK(logits.all_finite());
}

TEST_CASE("checkpoint: bit-exact round trip, shape validation names the parameter") {
    const auto cfg = tiny_config();
    auto params = init_parameters<float>(cfg, 43);
    TrainMeta meta;
    meta.step = 123;
    meta.lr = 0.5f;
    meta.best_dev_cider = 1.25;
    meta.best_step = 100;
    meta.rng_state = "1 2 3";
    const auto dir = gcap::test::scratch_dir("ckpt");
    save_checkpoint(dir / "m.ckpt", cfg, params, meta);
    const auto ck = load_checkpoint(dir / "m.ckpt");
    CHECK(ck.config == cfg);
    CHECK(ck.meta == meta);
    REQUIRE(ck.params.named.size() == params.named.size());
    for (const auto& [name, t] : params.named) {
        const auto& l = ck.params.at(name);
        CHECK(l.requires_grad());
        CHECK(std::memcmp(l.values().data(), t.values().data(), sizeof(float) * t.numel()) == 0);
    }
    // Re-saving the loaded checkpoint reproduces the file byte for byte.
    save_checkpoint(dir / "m2.ckpt", ck.config, ck.params, ck.meta);
    std::ifstream f1(dir / "m.ckpt", std::ios::binary), f2(dir / "m2.ckpt", std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);

    // A config/tensor mismatch points at the offending parameter.
    auto wrong = params;
    wrong.named.erase("embed");
    wrong.named.emplace("embed", Tensor::zeros({3, 3}, true));
    save_checkpoint(dir / "bad.ckpt", cfg, wrong, meta);
    CHECK_THROWS_WITH_AS(load_checkpoint(dir / "bad.ckpt"), doctest::Contains("embed"), ShapeError);
}
