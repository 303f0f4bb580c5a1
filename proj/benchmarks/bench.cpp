#include <benchmark/benchmark.h>

#include <random>

#include "guidecap/decoding.hpp"
#include "guidecap/metrics.hpp"
#include "guidecap/model.hpp"
#include "guidecap/tokenizer.hpp"

namespace {

using namespace gcap;

Tensor random_tensor(std::mt19937& rng, std::vector<int64_t> shape, bool rg = false) {
    std::normal_distribution<double> n(0.0, 1.0);
    auto t = Tensor::zeros(std::move(shape), rg);
    for (auto& v : t.values()) v = static_cast<float>(n(rng));
    return t;
}

void BM_MatmulForward(benchmark::State& state) {
    const int64_t n = state.range(0);
    std::mt19937 rng(1);
    auto a = random_tensor(rng, {n, n});
    auto b = random_tensor(rng, {n, n});
    for (auto _ : state) {
        Graph g(false);
        benchmark::DoNotOptimize(g.matmul(a, b).values().data());
    }
    state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_MatmulForward)->Arg(64)->Arg(128)->Arg(256);

void BM_TrainStep(benchmark::State& state) {
    ModelConfig cfg;
    cfg.d_model = 64;
    cfg.n_layers = 2;
    cfg.n_heads = 4;
    cfg.d_ff = 256;
    cfg.vocab_size = 300;
    cfg.feat = FeatureDims{64, 16, 64, 256};
    auto params = init_parameters<float>(cfg, 1);
    std::mt19937 rng(2);
    ImageFeatures feats;
    feats.g = random_tensor(rng, {1, 64});
    feats.r_gr = random_tensor(rng, {16, 64});
    feats.r_frcnn = random_tensor(rng, {16, 256});
    feats.region_count = 16;
    std::vector<EncodedExample> batch;
    for (int i = 0; i < 8; ++i) {
        EncodedExample ex;
        ex.features = &feats;
        ex.guide_ids = {5, 6};
        ex.caption_ids = {9, 10, 11, 12, 13, 14};
        batch.push_back(ex);
    }
    for (auto _ : state) {
        Graph g;
        auto loss = model_loss(g, cfg, params, batch);
        g.backward(loss);
        params.zero_grads();
        benchmark::DoNotOptimize(loss.item());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(batch.size()));
}
BENCHMARK(BM_TrainStep);

void BM_TokenizerEncode(benchmark::State& state) {
    const std::vector<std::string> corpus = {"the quick brown fox jumps over the lazy dog",
                                             "a red car parked near the old stone bridge",
                                             "small boats float across the quiet green lake"};
    const auto vocab = train_vocab(corpus, 300);
    const std::string text = "a quick red fox jumps across the quiet lake near the old bridge";
    for (auto _ : state) {
        benchmark::DoNotOptimize(encode(vocab, text));
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_TokenizerEncode);

void BM_BeamSearch(benchmark::State& state) {
    ModelConfig cfg;
    cfg.d_model = 32;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.d_ff = 64;
    cfg.vocab_size = 120;
    cfg.proj_hidden = 16;
    cfg.input_flags = kInputT | kInputG;
    cfg.feat = FeatureDims{16, 4, 16, 32};
    const auto params = init_parameters<float>(cfg, 3);
    std::mt19937 rng(4);
    ImageFeatures feats;
    feats.g = random_tensor(rng, {1, 16});
    feats.r_gr = random_tensor(rng, {4, 16});
    feats.r_frcnn = random_tensor(rng, {4, 32});
    feats.region_count = 4;
    BeamConfig beam;
    beam.beam_width = static_cast<int>(state.range(0));
    beam.max_len = 12;
    for (auto _ : state) {
        benchmark::DoNotOptimize(beam_search(cfg, params, feats, {5, 6}, beam));
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_BeamSearch)->Arg(1)->Arg(5);

void BM_Cider(benchmark::State& state) {
    std::mt19937 rng(5);
    const std::vector<std::string> words = {"a", "red",  "fox",  "over", "the", "lamp",
                                            "b", "blue", "boat", "near", "old", "bridge"};
    std::uniform_int_distribution<size_t> pick(0, words.size() - 1);
    std::vector<EvalInstance> instances;
    for (int i = 0; i < 200; ++i) {
        EvalInstance ins;
        ins.image_id = "img" + std::to_string(i / 3);
        ins.guiding_text = words[pick(rng)];
        for (int k = 0; k < 6; ++k) ins.candidate.push_back(words[pick(rng)]);
        ins.references.emplace_back();
        for (int k = 0; k < 6; ++k) ins.references.back().push_back(words[pick(rng)]);
        instances.push_back(std::move(ins));
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(cider(instances));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(instances.size()));
}
BENCHMARK(BM_Cider);

}  // namespace

BENCHMARK_MAIN();
