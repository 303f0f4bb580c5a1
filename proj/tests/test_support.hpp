#pragma once

#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "guidecap/tensor.hpp"

namespace gcap::test {

// Central finite differences against the analytic backward pass. make_loss
// must rebuild a fresh graph from the current parameter values on every call;
// that keeps the oracle independent of the recorded tape it is checking.
struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst;
    int64_t checked = 0;
};

template <class S>
GradCheckResult finite_difference_check(std::vector<std::pair<std::string, TensorT<S>>> params,
                                        const std::function<TensorT<S>(GraphT<S>&)>& make_loss, double eps,
                                        double denom_floor = 1e-8) {
    // Analytic gradients from one recorded tape.
    for (auto& [name, t] : params) t.zero_grad();
    std::vector<std::vector<S>> analytic;
    {
        GraphT<S> g;
        auto loss = make_loss(g);
        g.backward(loss);
        for (auto& [name, t] : params) {
            auto gr = t.grad();
            analytic.emplace_back(gr.begin(), gr.end());
        }
        for (auto& [name, t] : params) t.zero_grad();
    }

    const auto eval = [&]() {
        GraphT<S> g(/*grad_enabled=*/false);
        return static_cast<double>(make_loss(g).item());
    };

    GradCheckResult res;
    for (size_t p = 0; p < params.size(); ++p) {
        auto vals = params[p].second.values();
        for (size_t i = 0; i < vals.size(); ++i) {
            const S keep = vals[i];
            vals[i] = keep + static_cast<S>(eps);
            const double up = eval();
            vals[i] = keep - static_cast<S>(eps);
            const double down = eval();
            vals[i] = keep;
            const double fd = (up - down) / (2.0 * eps);
            const double an = static_cast<double>(analytic[p][i]);
            const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), denom_floor});
            ++res.checked;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst = params[p].first + "[" + std::to_string(i) + "]";
            }
        }
    }
    return res;
}

template <class S>
TensorT<S> random_tensor(std::mt19937& rng, std::vector<int64_t> shape, double scale = 1.0,
                         bool requires_grad = false) {
    std::normal_distribution<double> n(0.0, scale);
    auto t = TensorT<S>::zeros(std::move(shape), requires_grad);
    for (auto& v : t.values()) v = static_cast<S>(n(rng));
    return t;
}

// Unique scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("guidecap_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace gcap::test
