#pragma once

#include "guidecap/tensor.hpp"

namespace gcap {

// Paper-scale defaults; tests shrink these freely, the layout is what matters.
struct FeatureDims {
    int g_dim = 64;
    int n_regions = 16;
    int rgr_dim = 64;
    int rfrcnn_dim = 2048;

    bool operator==(const FeatureDims&) const = default;
};

// One image's precomputed features: a global vector plus two stacks of
// regional rows. Rows at index >= region_count are all-zero padding and are
// masked out of attention downstream.
template <class S>
struct ImageFeaturesT {
    TensorT<S> g;        // [1 x g_dim]
    TensorT<S> r_gr;     // [n_regions x rgr_dim]
    TensorT<S> r_frcnn;  // [n_regions x rfrcnn_dim]
    int region_count = 0;
};

using ImageFeatures = ImageFeaturesT<float>;

}  // namespace gcap
