#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "guidecap/corpus.hpp"

namespace gcap {

namespace {

// Inventories for the synthetic feature world. All single tokens, none of
// them stopwords; relations are span terminators so salience extraction on
// generated captions lands on the "{attribute} {object}" span.
const std::vector<std::string> kObjects = {
    "fox",     "lamp",   "door",   "boat",   "tree",    "house",  "car",     "bird",
    "fish",    "horse",  "bridge", "tower",  "garden",  "river",  "stone",   "cloud",
    "train",   "plane",  "chair",  "table",  "clock",   "mirror", "candle",  "basket",
    "ladder",  "window", "wall",   "roof",   "fence",   "gate",   "barn",    "field",
    "hill",    "lake",   "road",   "path",   "bell",    "drum",   "flute",   "violin",
    "kite",    "ball",   "rope",   "tent",   "flag",    "crown",  "sword",   "shield",
    "map",     "compass","lantern","anchor", "barrel",  "bottle", "bucket",  "camera",
    "engine",  "hammer", "needle", "pencil", "ribbon",  "saddle", "wagon",   "wheel",
};

const std::vector<std::string> kAttributes = {
    "red",  "blue",  "green", "white", "black",  "small",  "large", "old",
    "tall", "bright","dark",  "round", "wooden", "golden", "heavy", "quiet",
};

const std::vector<std::string> kRelations = {
    "over", "under", "near", "behind", "above", "below", "against", "across", "between", "into", "by", "on",
};

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seeded hash of an id expanded into the target dimension, unit norm.
std::vector<float> unit_embed(uint64_t world_seed, uint64_t kind, uint64_t key, int dim) {
    std::mt19937_64 rng(splitmix64(world_seed ^ splitmix64(kind * 0x100000001b3ULL + key)));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<float> v(static_cast<size_t>(dim));
    double norm2 = 0.0;
    for (auto& x : v) {
        const double d = normal(rng);
        x = static_cast<float>(d);
        norm2 += d * d;
    }
    const float inv = static_cast<float>(1.0 / std::sqrt(norm2));
    for (auto& x : v) x *= inv;
    return v;
}

constexpr uint64_t kKindObject = 1;
constexpr uint64_t kKindRegionGr = 2;
constexpr uint64_t kKindRegionFrcnn = 3;
constexpr uint64_t kKindRelation = 4;

int relation_for_pair(uint64_t world_seed, int obj_a, int obj_b, int n_relations) {
    const uint64_t h = splitmix64(world_seed ^ splitmix64(kKindRelation * 0x100000001b3ULL +
                                                          static_cast<uint64_t>(obj_a) * 65537ULL +
                                                          static_cast<uint64_t>(obj_b)));
    return static_cast<int>(h % static_cast<uint64_t>(n_relations));
}

void validate_spec(const SyntheticWorldSpec& spec) {
    if (spec.n_objects < 2 || spec.n_attributes < 2 || spec.n_relations < 2) {
        throw DataError("synthetic world: inventory sizes must be >= 2");
    }
    if (spec.n_objects > static_cast<int>(kObjects.size()) ||
        spec.n_attributes > static_cast<int>(kAttributes.size()) ||
        spec.n_relations > static_cast<int>(kRelations.size())) {
        throw DataError("synthetic world: inventory request exceeds built-in word lists (" +
                        std::to_string(kObjects.size()) + "/" + std::to_string(kAttributes.size()) + "/" +
                        std::to_string(kRelations.size()) + ")");
    }
    if (spec.objects_per_image_min < 2 || spec.objects_per_image_max < spec.objects_per_image_min) {
        throw DataError("synthetic world: objects_per_image range invalid");
    }
    if (spec.objects_per_image_max > spec.n_objects) {
        throw DataError("synthetic world: inventory too small to fill an image (" +
                        std::to_string(spec.n_objects) + " objects, need " +
                        std::to_string(spec.objects_per_image_max) + ")");
    }
    if (spec.objects_per_image_max > spec.dims.n_regions) {
        throw DataError("synthetic world: objects_per_image_max exceeds region rows");
    }
}

}  // namespace

int synth_max_objects() { return static_cast<int>(kObjects.size()); }
int synth_max_attributes() { return static_cast<int>(kAttributes.size()); }
int synth_max_relations() { return static_cast<int>(kRelations.size()); }

Tensor synth_global_feature(const SyntheticWorldSpec& spec, std::span<const int> object_ids) {
    const int d = spec.dims.g_dim;
    std::vector<float> g(static_cast<size_t>(d), 0.0f);
    for (int obj : object_ids) {
        const auto e = unit_embed(spec.rng_seed, kKindObject, static_cast<uint64_t>(obj), d);
        for (int i = 0; i < d; ++i) g[static_cast<size_t>(i)] += e[static_cast<size_t>(i)];
    }
    const float inv = 1.0f / static_cast<float>(object_ids.size());
    for (auto& x : g) x *= inv;
    return Tensor::from({1, d}, std::move(g));
}

std::vector<TrainingTuple> generate_synthetic_corpus(const SyntheticWorldSpec& spec, int n_images,
                                                     int guides_per_image) {
    validate_spec(spec);
    if (n_images < 1) throw DataError("synthetic world: n_images must be >= 1");
    if (guides_per_image < 1) throw DataError("synthetic world: guides_per_image must be >= 1");

    std::mt19937_64 rng(spec.rng_seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_int_distribution<int> pick_count(spec.objects_per_image_min, spec.objects_per_image_max);
    std::uniform_int_distribution<int> pick_attr(0, spec.n_attributes - 1);

    const auto add_noise = [&](Tensor& t) {
        if (spec.feature_noise_sigma <= 0.0f) return;
        for (auto& v : t.values()) v += static_cast<float>(noise(rng)) * spec.feature_noise_sigma;
    };

    std::vector<TrainingTuple> out;
    out.reserve(static_cast<size_t>(n_images) * static_cast<size_t>(guides_per_image));
    std::vector<int> pool(static_cast<size_t>(spec.n_objects));
    for (int i = 0; i < spec.n_objects; ++i) pool[static_cast<size_t>(i)] = i;

    for (int img = 0; img < n_images; ++img) {
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "synth-%06d", img);
        const std::string image_id = idbuf;

        const int k = pick_count(rng);
        // Distinct objects, kept sorted so the relation partner (next object
        // cyclically) is recoverable from the object set alone.
        std::vector<int> objects;
        {
            std::vector<int> shuffled = pool;
            std::shuffle(shuffled.begin(), shuffled.end(), rng);
            objects.assign(shuffled.begin(), shuffled.begin() + k);
            std::sort(objects.begin(), objects.end());
        }
        std::vector<int> attrs(static_cast<size_t>(k));
        for (auto& a : attrs) a = pick_attr(rng);

        ImageFeatures f;
        f.region_count = k;
        f.g = synth_global_feature(spec, objects);
        add_noise(f.g);
        f.r_gr = Tensor::zeros({spec.dims.n_regions, spec.dims.rgr_dim});
        f.r_frcnn = Tensor::zeros({spec.dims.n_regions, spec.dims.rfrcnn_dim});
        for (int i = 0; i < k; ++i) {
            const uint64_t key = static_cast<uint64_t>(objects[static_cast<size_t>(i)]) * 131ULL +
                                 static_cast<uint64_t>(attrs[static_cast<size_t>(i)]);
            const auto egr = unit_embed(spec.rng_seed, kKindRegionGr, key, spec.dims.rgr_dim);
            const auto efr = unit_embed(spec.rng_seed, kKindRegionFrcnn, key, spec.dims.rfrcnn_dim);
            for (int j = 0; j < spec.dims.rgr_dim; ++j) f.r_gr.at(i, j) = egr[static_cast<size_t>(j)];
            for (int j = 0; j < spec.dims.rfrcnn_dim; ++j) f.r_frcnn.at(i, j) = efr[static_cast<size_t>(j)];
        }
        if (spec.feature_noise_sigma > 0.0f) {
            // Valid rows only; padding rows stay exactly zero.
            for (int i = 0; i < k; ++i) {
                for (int j = 0; j < spec.dims.rgr_dim; ++j)
                    f.r_gr.at(i, j) += static_cast<float>(noise(rng)) * spec.feature_noise_sigma;
                for (int j = 0; j < spec.dims.rfrcnn_dim; ++j)
                    f.r_frcnn.at(i, j) += static_cast<float>(noise(rng)) * spec.feature_noise_sigma;
            }
        }

        const auto caption_for = [&](int i) {
            const int partner = (i + 1) % k;
            const int rel = relation_for_pair(spec.rng_seed, objects[static_cast<size_t>(i)],
                                              objects[static_cast<size_t>(partner)], spec.n_relations);
            return "a " + kAttributes[static_cast<size_t>(attrs[static_cast<size_t>(i)])] + " " +
                   kObjects[static_cast<size_t>(objects[static_cast<size_t>(i)])] + " " +
                   kRelations[static_cast<size_t>(rel)] + " the " +
                   kObjects[static_cast<size_t>(objects[static_cast<size_t>(partner)])];
        };

        if (guides_per_image == 1) {
            // CC-style: one tuple whose guide is the extracted salient span.
            std::uniform_int_distribution<int> pick_obj(0, k - 1);
            const int i = pick_obj(rng);
            TrainingTuple t;
            t.image_id = image_id;
            t.features = f;
            t.caption = caption_for(i);
            t.guiding_text = extract_guiding_text(t.caption);
            out.push_back(std::move(t));
        } else {
            // VG-style: object-name guides, cycling through the image's objects.
            for (int gidx = 0; gidx < guides_per_image; ++gidx) {
                const int i = gidx % k;
                TrainingTuple t;
                t.image_id = image_id;
                t.features = f;
                t.caption = caption_for(i);
                t.guiding_text = kObjects[static_cast<size_t>(objects[static_cast<size_t>(i)])];
                out.push_back(std::move(t));
            }
        }
    }
    return out;
}

}  // namespace gcap
