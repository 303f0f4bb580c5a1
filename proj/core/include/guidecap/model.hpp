#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "guidecap/features.hpp"
#include "guidecap/tensor.hpp"
#include "guidecap/tokenizer.hpp"

namespace gcap {

enum InputFlag : unsigned {
    kInputT = 1u,
    kInputG = 2u,
    kInputRGr = 4u,
    kInputRFrcnn = 8u,
};
constexpr unsigned kAllInputs = kInputT | kInputG | kInputRGr | kInputRFrcnn;

// Ablation row names as used in the paper-style tables. "copy" selects the
// model-free copy baseline and maps to no input flags.
std::optional<unsigned> parse_ablation(const std::string& name);
std::string ablation_name(unsigned flags);
const std::vector<std::string>& ablation_names();

struct ModelConfig {
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    int d_ff = 256;
    int vocab_size = 4000;
    int max_caption_len = 32;
    unsigned input_flags = kAllInputs;
    FeatureDims feat;
    int proj_hidden = 64;  // hidden width of the per-feature FC networks
    float dropout = 0.0f;

    bool operator==(const ModelConfig&) const = default;

    void validate() const {
        if (d_model % n_heads != 0) {
            throw ContractError("model config: d_model " + std::to_string(d_model) + " not divisible by " +
                                std::to_string(n_heads) + " heads");
        }
        if (input_flags == 0) throw ContractError("model config: input_flags must be non-empty");
        if (vocab_size < Vocab::kNumSpecials + 1) throw ContractError("model config: vocab_size too small");
    }

    // Hyperparameters reported in the source experiments; training at this
    // scale is far beyond a desk run, but the configuration must build.
    static ModelConfig paper_scale() {
        ModelConfig c;
        c.d_model = 512;
        c.n_layers = 6;
        c.n_heads = 8;
        c.d_ff = 2048;
        c.proj_hidden = 512;
        return c;
    }
};

template <class S>
struct ParametersT {
    std::map<std::string, TensorT<S>> named;

    int64_t count() const {
        int64_t n = 0;
        for (const auto& [k, t] : named) n += t.numel();
        return n;
    }
    TensorT<S>& at(const std::string& name) {
        auto it = named.find(name);
        if (it == named.end()) throw ContractError("parameters: missing tensor " + name);
        return it->second;
    }
    const TensorT<S>& at(const std::string& name) const {
        auto it = named.find(name);
        if (it == named.end()) throw ContractError("parameters: missing tensor " + name);
        return it->second;
    }
    void zero_grads() {
        for (auto& [k, t] : named) t.zero_grad();
    }
    bool all_finite() const {
        for (const auto& [k, t] : named)
            if (!t.all_finite()) return false;
        return true;
    }
};

using Parameters = ParametersT<float>;

// Expected parameter shapes for a config; checkpoint loading validates
// against this.
std::map<std::string, std::vector<int64_t>> parameter_shapes(const ModelConfig& cfg);

template <class S>
ParametersT<S> init_parameters(const ModelConfig& cfg, uint64_t seed);

// Encoder input: projected feature segments and guide-token embeddings
// concatenated in the fixed order G, R_GR, R_FRCNN, T (enabled flags only),
// with type embeddings per segment and sinusoidal positions within the
// regional and T segments. mask marks attendable positions.
template <class S>
struct EncoderInputT {
    TensorT<S> seq;  // [len x d_model]
    std::vector<uint8_t> mask;
    std::vector<int> type_ids;
    int len = 0;
};

using EncoderInput = EncoderInputT<float>;

template <class S>
EncoderInputT<S> build_encoder_input(GraphT<S>& g, const ModelConfig& cfg, const ParametersT<S>& params,
                                     const ImageFeaturesT<S>& features, const std::vector<int>& guide_ids);

// One tokenized training example; features are consumed read-only.
template <class S>
struct EncodedExampleT {
    const ImageFeaturesT<S>* features = nullptr;
    std::vector<int> guide_ids;
    std::vector<int> caption_ids;  // no BOS/EOS framing; the loss adds it
};

using EncodedExample = EncodedExampleT<float>;

// --- implementation ---

namespace detail {

template <class S>
TensorT<S> sinusoidal_positions(int len, int d_model) {
    auto t = TensorT<S>::zeros({len, d_model});
    auto v = t.values();
    for (int p = 0; p < len; ++p) {
        for (int i = 0; i < d_model / 2; ++i) {
            const double rate = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(d_model));
            v[static_cast<size_t>(p * d_model + 2 * i)] = static_cast<S>(std::sin(p * rate));
            v[static_cast<size_t>(p * d_model + 2 * i + 1)] = static_cast<S>(std::cos(p * rate));
        }
    }
    return t;
}

// Additive attention mask: 0 where key j is attendable from query i, -1e9
// otherwise. Constant tensor, no gradient.
template <class S>
TensorT<S> attention_mask(int q_len, const std::vector<uint8_t>& key_mask, bool causal) {
    const int k_len = static_cast<int>(key_mask.size());
    auto t = TensorT<S>::zeros({q_len, k_len});
    auto v = t.values();
    for (int i = 0; i < q_len; ++i) {
        for (int j = 0; j < k_len; ++j) {
            const bool blocked = !key_mask[static_cast<size_t>(j)] || (causal && j > i);
            if (blocked) v[static_cast<size_t>(i * k_len + j)] = static_cast<S>(-1e9);
        }
    }
    return t;
}

template <class S>
TensorT<S> multi_head_attention(GraphT<S>& g, const ModelConfig& cfg, const ParametersT<S>& params,
                                const std::string& prefix, const TensorT<S>& xq, const TensorT<S>& xkv,
                                const TensorT<S>& mask) {
    const int d = cfg.d_model;
    const int dh = d / cfg.n_heads;
    auto q = g.matmul(xq, params.at(prefix + ".wq"));
    auto k = g.matmul(xkv, params.at(prefix + ".wk"));
    auto v = g.matmul(xkv, params.at(prefix + ".wv"));
    std::vector<TensorT<S>> heads;
    heads.reserve(static_cast<size_t>(cfg.n_heads));
    const S inv_sqrt = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
    for (int h = 0; h < cfg.n_heads; ++h) {
        auto qh = g.slice_cols(q, h * dh, dh);
        auto kh = g.slice_cols(k, h * dh, dh);
        auto vh = g.slice_cols(v, h * dh, dh);
        auto scores = g.scale(g.matmul(qh, g.transpose(kh)), inv_sqrt);
        scores = g.add(scores, mask);
        auto weights = g.softmax(scores, -1);
        heads.push_back(g.matmul(weights, vh));
    }
    auto merged = g.concat_cols(heads);
    return g.matmul(merged, params.at(prefix + ".wo"));
}

template <class S>
TensorT<S> feed_forward(GraphT<S>& g, const ParametersT<S>& params, const std::string& prefix,
                        const TensorT<S>& x) {
    auto h = g.relu(g.add(g.matmul(x, params.at(prefix + ".w1")), params.at(prefix + ".b1")));
    return g.add(g.matmul(h, params.at(prefix + ".w2")), params.at(prefix + ".b2"));
}

template <class S>
TensorT<S> layer_norm_named(GraphT<S>& g, const ParametersT<S>& params, const std::string& prefix,
                            const TensorT<S>& x) {
    return g.layer_norm(x, params.at(prefix + ".g"), params.at(prefix + ".b"));
}

// Two-layer FC projection into the encoder input space.
template <class S>
TensorT<S> fc_project(GraphT<S>& g, const ParametersT<S>& params, const std::string& prefix,
                      const TensorT<S>& x) {
    auto h = g.relu(g.add(g.matmul(x, params.at(prefix + ".w1")), params.at(prefix + ".b1")));
    return g.add(g.matmul(h, params.at(prefix + ".w2")), params.at(prefix + ".b2"));
}

}  // namespace detail

inline std::optional<unsigned> parse_ablation(const std::string& name) {
    if (name == "T") return kInputT;
    if (name == "G") return kInputG;
    if (name == "T+G") return kInputT | kInputG;
    if (name == "T+G+R_GR") return kInputT | kInputG | kInputRGr;
    if (name == "T+G+R_FRCNN") return kInputT | kInputG | kInputRFrcnn;
    if (name == "T+G+R_GR+R_FRCNN") return kAllInputs;
    if (name == "copy") return 0u;
    return std::nullopt;
}

inline const std::vector<std::string>& ablation_names() {
    static const std::vector<std::string> names = {"T",           "G",          "T+G",  "T+G+R_GR",
                                                   "T+G+R_FRCNN", "T+G+R_GR+R_FRCNN", "copy"};
    return names;
}

inline std::string ablation_name(unsigned flags) {
    if (flags == 0) return "copy";
    std::string out;
    if (flags & kInputT) out += "T";
    if (flags & kInputG) out += out.empty() ? "G" : "+G";
    if (flags & kInputRGr) out += out.empty() ? "R_GR" : "+R_GR";
    if (flags & kInputRFrcnn) out += out.empty() ? "R_FRCNN" : "+R_FRCNN";
    return out;
}

inline std::map<std::string, std::vector<int64_t>> parameter_shapes(const ModelConfig& cfg) {
    cfg.validate();
    std::map<std::string, std::vector<int64_t>> shapes;
    const int64_t d = cfg.d_model, h = cfg.proj_hidden, ff = cfg.d_ff;
    shapes["embed"] = {cfg.vocab_size, d};
    shapes["type_embed"] = {4, d};
    const auto fc = [&](const std::string& name, int64_t in_dim) {
        shapes[name + ".w1"] = {in_dim, h};
        shapes[name + ".b1"] = {h};
        shapes[name + ".w2"] = {h, d};
        shapes[name + ".b2"] = {d};
    };
    if (cfg.input_flags & kInputG) fc("fc_g", cfg.feat.g_dim);
    if (cfg.input_flags & kInputRGr) fc("fc_rgr", cfg.feat.rgr_dim);
    if (cfg.input_flags & kInputRFrcnn) fc("fc_rfrcnn", cfg.feat.rfrcnn_dim);
    const auto attn = [&](const std::string& name) {
        shapes[name + ".wq"] = {d, d};
        shapes[name + ".wk"] = {d, d};
        shapes[name + ".wv"] = {d, d};
        shapes[name + ".wo"] = {d, d};
    };
    const auto norm = [&](const std::string& name) {
        shapes[name + ".g"] = {d};
        shapes[name + ".b"] = {d};
    };
    const auto ffn = [&](const std::string& name) {
        shapes[name + ".w1"] = {d, ff};
        shapes[name + ".b1"] = {ff};
        shapes[name + ".w2"] = {ff, d};
        shapes[name + ".b2"] = {d};
    };
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string e = "enc." + std::to_string(l);
        norm(e + ".ln1");
        attn(e + ".attn");
        norm(e + ".ln2");
        ffn(e + ".ffn");
        const std::string dd = "dec." + std::to_string(l);
        norm(dd + ".ln1");
        attn(dd + ".self");
        norm(dd + ".ln2");
        attn(dd + ".cross");
        norm(dd + ".ln3");
        ffn(dd + ".ffn");
    }
    norm("enc.final_ln");
    norm("dec.final_ln");
    return shapes;
}

template <class S>
ParametersT<S> init_parameters(const ModelConfig& cfg, uint64_t seed) {
    const auto shapes = parameter_shapes(cfg);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 0.02);
    ParametersT<S> p;
    // std::map iteration order is name order, so initialization is
    // reproducible for a fixed config and seed.
    for (const auto& [name, shape] : shapes) {
        auto t = TensorT<S>::zeros(shape, /*requires_grad=*/true);
        const bool is_norm_gain = name.size() >= 2 && name.compare(name.size() - 2, 2, ".g") == 0 &&
                                  name.find("ln") != std::string::npos;
        const bool is_bias = name.compare(name.size() - 2, 2, ".b") == 0 ||
                             (name.size() >= 3 && (name.compare(name.size() - 3, 3, ".b1") == 0 ||
                                                   name.compare(name.size() - 3, 3, ".b2") == 0));
        if (is_norm_gain) {
            for (auto& v : t.values()) v = S(1);
        } else if (is_bias) {
            // zeros
        } else {
            for (auto& v : t.values()) v = static_cast<S>(normal(rng));
        }
        p.named.emplace(name, std::move(t));
    }
    return p;
}

template <class S>
EncoderInputT<S> build_encoder_input(GraphT<S>& g, const ModelConfig& cfg, const ParametersT<S>& params,
                                     const ImageFeaturesT<S>& features, const std::vector<int>& guide_ids) {
    cfg.validate();
    std::vector<TensorT<S>> segments;
    std::vector<uint8_t> mask;
    std::vector<int> type_ids;

    const auto type_rows = [&](int type_id, int n) {
        return g.embedding(params.at("type_embed"), std::vector<int>(static_cast<size_t>(n), type_id));
    };

    if (cfg.input_flags & kInputG) {
        if (!features.g.valid()) throw ContractError("encoder input: G enabled but feature missing");
        if (features.g.rank() != 2 || features.g.dim(1) != cfg.feat.g_dim) {
            throw ShapeError("encoder input: G expects [1x" + std::to_string(cfg.feat.g_dim) + "], got " +
                             features.g.shape_str());
        }
        auto proj = detail::fc_project(g, params, "fc_g", features.g);
        segments.push_back(g.add(proj, type_rows(0, 1)));
        mask.push_back(1);
        type_ids.push_back(0);
    }
    const auto region_segment = [&](const TensorT<S>& rows, const char* fc_name, int type_id, int dim) {
        if (!rows.valid()) throw ContractError(std::string("encoder input: ") + fc_name + " enabled but feature missing");
        if (rows.rank() != 2 || rows.dim(0) != cfg.feat.n_regions || rows.dim(1) != dim) {
            throw ShapeError(std::string("encoder input: ") + fc_name + " expects [" +
                             std::to_string(cfg.feat.n_regions) + "x" + std::to_string(dim) + "], got " +
                             rows.shape_str());
        }
        auto proj = detail::fc_project(g, params, fc_name, rows);
        proj = g.add(proj, type_rows(type_id, cfg.feat.n_regions));
        proj = g.add(proj, detail::sinusoidal_positions<S>(cfg.feat.n_regions, cfg.d_model));
        segments.push_back(proj);
        for (int i = 0; i < cfg.feat.n_regions; ++i) {
            mask.push_back(i < features.region_count ? 1 : 0);
            type_ids.push_back(type_id);
        }
    };
    if (cfg.input_flags & kInputRGr) region_segment(features.r_gr, "fc_rgr", 1, cfg.feat.rgr_dim);
    if (cfg.input_flags & kInputRFrcnn) region_segment(features.r_frcnn, "fc_rfrcnn", 2, cfg.feat.rfrcnn_dim);
    if (cfg.input_flags & kInputT) {
        if (guide_ids.empty()) throw ContractError("encoder input: T enabled but guide_ids empty");
        auto emb = g.embedding(params.at("embed"), guide_ids);
        emb = g.add(emb, type_rows(3, static_cast<int>(guide_ids.size())));
        emb = g.add(emb, detail::sinusoidal_positions<S>(static_cast<int>(guide_ids.size()), cfg.d_model));
        segments.push_back(emb);
        for (size_t i = 0; i < guide_ids.size(); ++i) {
            mask.push_back(1);
            type_ids.push_back(3);
        }
    }

    EncoderInputT<S> enc;
    enc.seq = segments.size() == 1 ? segments[0] : g.concat_rows(segments);
    enc.mask = std::move(mask);
    enc.type_ids = std::move(type_ids);
    enc.len = static_cast<int>(enc.seq.dim(0));
    return enc;
}

template <class S>
TensorT<S> encode(GraphT<S>& g, const ModelConfig& cfg, const ParametersT<S>& params,
                  const EncoderInputT<S>& enc_in, std::mt19937* drop_rng = nullptr) {
    const auto drop = [&](const TensorT<S>& t) {
        return (cfg.dropout > 0.0f && drop_rng) ? g.dropout(t, cfg.dropout, *drop_rng) : t;
    };
    auto mask = detail::attention_mask<S>(enc_in.len, enc_in.mask, /*causal=*/false);
    auto x = enc_in.seq;
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string p = "enc." + std::to_string(l);
        auto normed = detail::layer_norm_named(g, params, p + ".ln1", x);
        x = g.add(x, drop(detail::multi_head_attention(g, cfg, params, p + ".attn", normed, normed, mask)));
        auto ff = detail::feed_forward(g, params, p + ".ffn", detail::layer_norm_named(g, params, p + ".ln2", x));
        x = g.add(x, drop(ff));
    }
    return detail::layer_norm_named(g, params, "enc.final_ln", x);
}

template <class S>
TensorT<S> decode_logits(GraphT<S>& g, const ModelConfig& cfg, const ParametersT<S>& params,
                         const TensorT<S>& enc_out, const std::vector<uint8_t>& enc_mask,
                         const std::vector<int>& caption_ids_shifted, std::mt19937* drop_rng = nullptr) {
    if (caption_ids_shifted.empty() || caption_ids_shifted.front() != Vocab::kBos) {
        throw ContractError("decode: caption ids must begin with BOS");
    }
    const int steps = static_cast<int>(caption_ids_shifted.size());
    if (steps > cfg.max_caption_len) {
        throw ContractError("decode: sequence length " + std::to_string(steps) + " exceeds max_caption_len " +
                            std::to_string(cfg.max_caption_len));
    }
    const auto drop = [&](const TensorT<S>& t) {
        return (cfg.dropout > 0.0f && drop_rng) ? g.dropout(t, cfg.dropout, *drop_rng) : t;
    };
    auto x = g.embedding(params.at("embed"), caption_ids_shifted);
    x = g.add(x, detail::sinusoidal_positions<S>(steps, cfg.d_model));

    const std::vector<uint8_t> self_mask(static_cast<size_t>(steps), 1);
    auto causal = detail::attention_mask<S>(steps, self_mask, /*causal=*/true);
    auto cross = detail::attention_mask<S>(steps, enc_mask, /*causal=*/false);

    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string p = "dec." + std::to_string(l);
        auto normed = detail::layer_norm_named(g, params, p + ".ln1", x);
        x = g.add(x, drop(detail::multi_head_attention(g, cfg, params, p + ".self", normed, normed, causal)));
        auto cross_attn = detail::multi_head_attention(g, cfg, params, p + ".cross",
                                                       detail::layer_norm_named(g, params, p + ".ln2", x), enc_out,
                                                       cross);
        x = g.add(x, drop(cross_attn));
        auto ff = detail::feed_forward(g, params, p + ".ffn", detail::layer_norm_named(g, params, p + ".ln3", x));
        x = g.add(x, drop(ff));
    }
    x = detail::layer_norm_named(g, params, "dec.final_ln", x);
    // Output projection tied to the embedding table.
    return g.matmul(x, g.transpose(params.at("embed")));
}

template <class S>
TensorT<S> model_forward(GraphT<S>& g, const ModelConfig& cfg, const ParametersT<S>& params,
                         const EncoderInputT<S>& enc_in, const std::vector<int>& caption_ids_shifted,
                         std::mt19937* drop_rng = nullptr) {
    auto enc_out = encode(g, cfg, params, enc_in, drop_rng);
    return decode_logits(g, cfg, params, enc_out, enc_in.mask, caption_ids_shifted, drop_rng);
}

template <class S>
TensorT<S> model_loss(GraphT<S>& g, const ModelConfig& cfg, const ParametersT<S>& params,
                      const std::vector<EncodedExampleT<S>>& batch, std::mt19937* drop_rng = nullptr) {
    if (batch.empty()) throw ContractError("loss: empty batch");
    std::vector<TensorT<S>> logit_blocks;
    std::vector<int> targets;
    for (const auto& ex : batch) {
        if (ex.caption_ids.empty()) throw ContractError("loss: empty caption");
        std::vector<int> shifted;
        shifted.reserve(ex.caption_ids.size() + 1);
        shifted.push_back(Vocab::kBos);
        shifted.insert(shifted.end(), ex.caption_ids.begin(), ex.caption_ids.end());
        auto enc_in = build_encoder_input(g, cfg, params, *ex.features, ex.guide_ids);
        logit_blocks.push_back(model_forward(g, cfg, params, enc_in, shifted, drop_rng));
        targets.insert(targets.end(), ex.caption_ids.begin(), ex.caption_ids.end());
        targets.push_back(Vocab::kEos);
    }
    auto logits = logit_blocks.size() == 1 ? logit_blocks[0] : g.concat_rows(logit_blocks);
    return g.cross_entropy(logits, targets, Vocab::kPad);
}

}  // namespace gcap
