#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "guidecap/common.hpp"

namespace gcap {

// Dense row-major tensor, shared-handle semantics. Values are immutable by
// convention once an op has consumed the tensor; grad is the only buffer
// mutated afterwards (by GraphT::backward and by the optimizer's zeroing).
// S is float in the artifact; tests instantiate double for gradient oracles.
template <class S>
struct TensorStorageT {
    std::vector<int64_t> shape;
    std::vector<S> values;
    std::vector<S> grad;  // empty until gradient first accumulates
    bool requires_grad = false;
};

template <class S>
class TensorT {
public:
    TensorT() = default;

    static TensorT zeros(std::vector<int64_t> shape, bool requires_grad = false) {
        TensorT t;
        t.s_ = std::make_shared<TensorStorageT<S>>();
        t.s_->shape = std::move(shape);
        t.s_->values.assign(static_cast<size_t>(numel_of(t.s_->shape)), S(0));
        t.s_->requires_grad = requires_grad;
        return t;
    }

    static TensorT from(std::vector<int64_t> shape, std::vector<S> values,
                        bool requires_grad = false) {
        if (numel_of(shape) != static_cast<int64_t>(values.size())) {
            throw ShapeError("tensor: " + shape_str(shape) + " does not hold " +
                             std::to_string(values.size()) + " values");
        }
        TensorT t;
        t.s_ = std::make_shared<TensorStorageT<S>>();
        t.s_->shape = std::move(shape);
        t.s_->values = std::move(values);
        t.s_->requires_grad = requires_grad;
        return t;
    }

    static TensorT scalar(S v) { return from({1}, {v}); }

    bool valid() const { return s_ != nullptr; }
    const std::vector<int64_t>& shape() const { return s_->shape; }
    int rank() const { return static_cast<int>(s_->shape.size()); }
    int64_t dim(int i) const { return s_->shape[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(s_->values.size()); }

    std::span<S> values() { return {s_->values.data(), s_->values.size()}; }
    std::span<const S> values() const { return {s_->values.data(), s_->values.size()}; }

    bool requires_grad() const { return s_->requires_grad; }
    bool has_grad() const { return !s_->grad.empty(); }

    // Grad access is const: TensorT is a shared handle and the grad buffer is
    // the one storage field mutated after construction.
    std::span<S> grad() const {
        ensure_grad();
        return {s_->grad.data(), s_->grad.size()};
    }
    std::span<const S> grad_view() const { return {s_->grad.data(), s_->grad.size()}; }

    void ensure_grad() const {
        if (s_->grad.empty()) s_->grad.assign(s_->values.size(), S(0));
    }
    void zero_grad() const {
        if (!s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), S(0));
    }

    S item() const {
        if (numel() != 1) throw ContractError("item: tensor is not scalar, shape " + shape_str(s_->shape));
        return s_->values[0];
    }

    // 2D accessors
    int64_t rows() const { return rank() >= 1 ? s_->shape[0] : 1; }
    int64_t cols() const { return rank() == 2 ? s_->shape[1] : (rank() == 1 ? s_->shape[0] : 1); }
    S at(int64_t i, int64_t j) const { return s_->values[static_cast<size_t>(i * s_->shape[1] + j)]; }
    S& at(int64_t i, int64_t j) { return s_->values[static_cast<size_t>(i * s_->shape[1] + j)]; }

    bool same_storage(const TensorT& other) const { return s_ == other.s_; }

    bool all_finite() const {
        for (S v : s_->values)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    static int64_t numel_of(const std::vector<int64_t>& shape) {
        int64_t n = 1;
        for (int64_t d : shape) n *= d;
        return n;
    }

    static std::string shape_str(const std::vector<int64_t>& shape) {
        std::ostringstream os;
        os << "[";
        for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
        os << "]";
        return os.str();
    }
    std::string shape_str() const { return shape_str(s_->shape); }

private:
    std::shared_ptr<TensorStorageT<S>> s_;
};

using Tensor = TensorT<float>;

// Append-only op tape. Every op validates shapes, computes the forward value
// eagerly and, when grad recording is on, appends a node whose closure
// propagates the output grad into the inputs. backward() walks the tape once
// in reverse append order; nodes whose output never received gradient are
// skipped (their grad buffer was never allocated).
template <class S>
class GraphT {
public:
    explicit GraphT(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    size_t size() const { return nodes_.size(); }
    bool grad_enabled() const { return grad_enabled_; }

    TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
        if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
            throw ShapeError("matmul: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
        }
        const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
        auto out = make_out({m, n}, {a, b});
        mm_nn(a.values().data(), b.values().data(), out.values().data(), m, k, n);
        record("matmul", out, [a, b, out]() mutable {
            auto g = out.grad_view();
            if (a.requires_grad()) mm_nt_acc(g.data(), b.values().data(), a.grad().data(), out.dim(0), out.dim(1), a.dim(1));
            if (b.requires_grad()) mm_tn_acc(a.values().data(), g.data(), b.grad().data(), a.dim(0), a.dim(1), out.dim(1));
        });
        return out;
    }

    TensorT<S> transpose(const TensorT<S>& a) {
        if (a.rank() != 2) throw ShapeError("transpose: rank-2 tensor required, got " + a.shape_str());
        const int64_t m = a.dim(0), n = a.dim(1);
        auto out = make_out({n, m}, {a});
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) out.values()[static_cast<size_t>(j * m + i)] = a.at(i, j);
        record("transpose", out, [a, out]() mutable {
            if (!a.requires_grad()) return;
            auto g = out.grad_view();
            auto ga = a.grad();
            const int64_t m = a.dim(0), n = a.dim(1);
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < n; ++j) ga[static_cast<size_t>(i * n + j)] += g[static_cast<size_t>(j * m + i)];
        });
        return out;
    }

    // add: identical shapes, or b broadcast row-wise (a [m x n], b [n]).
    TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
        const bool same = a.shape() == b.shape();
        const bool row_bcast = a.rank() == 2 && b.rank() == 1 && a.dim(1) == b.dim(0);
        if (!same && !row_bcast) {
            throw ShapeError("add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
        }
        auto out = make_out(a.shape(), {a, b});
        auto ov = out.values();
        auto av = a.values();
        auto bv = b.values();
        if (same) {
            for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
        } else {
            const size_t n = bv.size();
            for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i % n];
        }
        record("add", out, [a, b, out, same]() mutable {
            auto g = out.grad_view();
            if (a.requires_grad()) {
                auto ga = a.grad();
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (b.requires_grad()) {
                auto gb = b.grad();
                if (same) {
                    for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                } else {
                    const size_t n = gb.size();
                    for (size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
                }
            }
        });
        return out;
    }

    TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
        if (a.shape() != b.shape()) {
            throw ShapeError("mul: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
        }
        auto out = make_out(a.shape(), {a, b});
        auto ov = out.values();
        auto av = a.values();
        auto bv = b.values();
        for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
        record("mul", out, [a, b, out]() mutable {
            auto g = out.grad_view();
            if (a.requires_grad()) {
                auto ga = a.grad();
                auto bv2 = b.values();
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
            }
            if (b.requires_grad()) {
                auto gb = b.grad();
                auto av2 = a.values();
                for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
            }
        });
        return out;
    }

    TensorT<S> scale(const TensorT<S>& a, S c) {
        auto out = make_out(a.shape(), {a});
        auto ov = out.values();
        auto av = a.values();
        for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * c;
        record("scale", out, [a, out, c]() mutable {
            if (!a.requires_grad()) return;
            auto g = out.grad_view();
            auto ga = a.grad();
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
        });
        return out;
    }

    TensorT<S> relu(const TensorT<S>& a) {
        auto out = make_out(a.shape(), {a});
        auto ov = out.values();
        auto av = a.values();
        for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] > S(0) ? av[i] : S(0);
        record("relu", out, [a, out]() mutable {
            if (!a.requires_grad()) return;
            auto g = out.grad_view();
            auto ga = a.grad();
            auto av2 = a.values();
            for (size_t i = 0; i < g.size(); ++i)
                if (av2[i] > S(0)) ga[i] += g[i];
        });
        return out;
    }

    // Softmax along `axis` (negative counts from the back). Max-subtracted.
    TensorT<S> softmax(const TensorT<S>& a, int axis = -1) {
        const int r = a.rank();
        if (axis < 0) axis += r;
        if (axis < 0 || axis >= r) {
            throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for " + a.shape_str());
        }
        auto out = make_out(a.shape(), {a});
        const int64_t len = a.dim(axis);
        int64_t inner = 1, outer = 1;
        for (int i = axis + 1; i < r; ++i) inner *= a.dim(i);
        for (int i = 0; i < axis; ++i) outer *= a.dim(i);
        auto av = a.values();
        auto ov = out.values();
        for (int64_t o = 0; o < outer; ++o) {
            for (int64_t in = 0; in < inner; ++in) {
                const int64_t base = o * len * inner + in;
                S mx = av[static_cast<size_t>(base)];
                for (int64_t i = 1; i < len; ++i) mx = std::max(mx, av[static_cast<size_t>(base + i * inner)]);
                double sum = 0.0;
                for (int64_t i = 0; i < len; ++i) {
                    const S e = std::exp(av[static_cast<size_t>(base + i * inner)] - mx);
                    ov[static_cast<size_t>(base + i * inner)] = e;
                    sum += static_cast<double>(e);
                }
                const S inv = static_cast<S>(1.0 / sum);
                for (int64_t i = 0; i < len; ++i) ov[static_cast<size_t>(base + i * inner)] *= inv;
            }
        }
        record("softmax", out, [a, out, len, inner, outer]() mutable {
            if (!a.requires_grad()) return;
            auto g = out.grad_view();
            auto y = out.values();
            auto ga = a.grad();
            for (int64_t o = 0; o < outer; ++o) {
                for (int64_t in = 0; in < inner; ++in) {
                    const int64_t base = o * len * inner + in;
                    double dot = 0.0;
                    for (int64_t i = 0; i < len; ++i) {
                        const size_t ix = static_cast<size_t>(base + i * inner);
                        dot += static_cast<double>(g[ix]) * static_cast<double>(y[ix]);
                    }
                    for (int64_t i = 0; i < len; ++i) {
                        const size_t ix = static_cast<size_t>(base + i * inner);
                        ga[ix] += y[ix] * (g[ix] - static_cast<S>(dot));
                    }
                }
            }
        });
        return out;
    }

    // Normalizes the last dimension to zero mean / unit variance, then applies
    // gain and bias. Epsilon 1e-6 under the square root.
    TensorT<S> layer_norm(const TensorT<S>& x, const TensorT<S>& gain, const TensorT<S>& bias) {
        const int64_t d = x.dim(x.rank() - 1);
        if (gain.rank() != 1 || bias.rank() != 1 || gain.dim(0) != d || bias.dim(0) != d) {
            throw ShapeError("layer_norm: gain/bias must be [" + std::to_string(d) + "], got " +
                             gain.shape_str() + " and " + bias.shape_str());
        }
        const int64_t rows = x.numel() / d;
        auto out = make_out(x.shape(), {x, gain, bias});
        auto xv = x.values();
        auto ov = out.values();
        auto gv = gain.values();
        auto bv = bias.values();
        for (int64_t r = 0; r < rows; ++r) {
            const size_t base = static_cast<size_t>(r * d);
            double mean = 0.0;
            for (int64_t i = 0; i < d; ++i) mean += static_cast<double>(xv[base + static_cast<size_t>(i)]);
            mean /= static_cast<double>(d);
            double var = 0.0;
            for (int64_t i = 0; i < d; ++i) {
                const double c = static_cast<double>(xv[base + static_cast<size_t>(i)]) - mean;
                var += c * c;
            }
            var /= static_cast<double>(d);
            const double inv = 1.0 / std::sqrt(var + 1e-6);
            for (int64_t i = 0; i < d; ++i) {
                const size_t ix = base + static_cast<size_t>(i);
                ov[ix] = static_cast<S>((static_cast<double>(xv[ix]) - mean) * inv) * gv[static_cast<size_t>(i)] +
                         bv[static_cast<size_t>(i)];
            }
        }
        record("layer_norm", out, [x, gain, bias, out, d, rows]() mutable {
            auto g = out.grad_view();
            auto xv2 = x.values();
            auto gv2 = gain.values();
            for (int64_t r = 0; r < rows; ++r) {
                const size_t base = static_cast<size_t>(r * d);
                double mean = 0.0;
                for (int64_t i = 0; i < d; ++i) mean += static_cast<double>(xv2[base + static_cast<size_t>(i)]);
                mean /= static_cast<double>(d);
                double var = 0.0;
                for (int64_t i = 0; i < d; ++i) {
                    const double c = static_cast<double>(xv2[base + static_cast<size_t>(i)]) - mean;
                    var += c * c;
                }
                var /= static_cast<double>(d);
                const double inv = 1.0 / std::sqrt(var + 1e-6);

                if (gain.requires_grad() || bias.requires_grad()) {
                    auto gg = gain.requires_grad() ? gain.grad() : std::span<S>{};
                    auto gb = bias.requires_grad() ? bias.grad() : std::span<S>{};
                    for (int64_t i = 0; i < d; ++i) {
                        const size_t ix = base + static_cast<size_t>(i);
                        const double xhat = (static_cast<double>(xv2[ix]) - mean) * inv;
                        if (!gg.empty()) gg[static_cast<size_t>(i)] += g[ix] * static_cast<S>(xhat);
                        if (!gb.empty()) gb[static_cast<size_t>(i)] += g[ix];
                    }
                }
                if (x.requires_grad()) {
                    double m1 = 0.0, m2 = 0.0;  // mean(dxhat), mean(dxhat*xhat)
                    for (int64_t i = 0; i < d; ++i) {
                        const size_t ix = base + static_cast<size_t>(i);
                        const double xhat = (static_cast<double>(xv2[ix]) - mean) * inv;
                        const double dxhat = static_cast<double>(g[ix]) * static_cast<double>(gv2[static_cast<size_t>(i)]);
                        m1 += dxhat;
                        m2 += dxhat * xhat;
                    }
                    m1 /= static_cast<double>(d);
                    m2 /= static_cast<double>(d);
                    auto gx = x.grad();
                    for (int64_t i = 0; i < d; ++i) {
                        const size_t ix = base + static_cast<size_t>(i);
                        const double xhat = (static_cast<double>(xv2[ix]) - mean) * inv;
                        const double dxhat = static_cast<double>(g[ix]) * static_cast<double>(gv2[static_cast<size_t>(i)]);
                        gx[ix] += static_cast<S>(inv * (dxhat - m1 - xhat * m2));
                    }
                }
            }
        });
        return out;
    }

    TensorT<S> embedding(const TensorT<S>& table, const std::vector<int>& ids) {
        if (table.rank() != 2) throw ShapeError("embedding: table must be rank 2, got " + table.shape_str());
        const int64_t v = table.dim(0), d = table.dim(1);
        for (int id : ids) {
            if (id < 0 || id >= v) {
                throw IndexError("embedding: id " + std::to_string(id) + " out of range [0," + std::to_string(v) + ")");
            }
        }
        const int64_t n = static_cast<int64_t>(ids.size());
        auto out = make_out({n, d}, {table});
        auto tv = table.values();
        auto ov = out.values();
        for (int64_t i = 0; i < n; ++i) {
            std::copy_n(tv.data() + static_cast<size_t>(ids[static_cast<size_t>(i)]) * static_cast<size_t>(d),
                        static_cast<size_t>(d), ov.data() + static_cast<size_t>(i * d));
        }
        record("embedding", out, [table, out, ids, d]() mutable {
            if (!table.requires_grad()) return;
            auto g = out.grad_view();
            auto gt = table.grad();
            for (size_t i = 0; i < ids.size(); ++i) {
                const size_t dst = static_cast<size_t>(ids[i]) * static_cast<size_t>(d);
                const size_t src = i * static_cast<size_t>(d);
                for (int64_t j = 0; j < d; ++j) gt[dst + static_cast<size_t>(j)] += g[src + static_cast<size_t>(j)];
            }
        });
        return out;
    }

    TensorT<S> concat_rows(const std::vector<TensorT<S>>& parts) {
        if (parts.empty()) throw ContractError("concat_rows: empty input");
        const int64_t n = parts[0].dim(1);
        int64_t rows = 0;
        for (const auto& p : parts) {
            if (p.rank() != 2 || p.dim(1) != n) {
                throw ShapeError("concat_rows: column mismatch " + parts[0].shape_str() + " vs " + p.shape_str());
            }
            rows += p.dim(0);
        }
        auto out = make_out({rows, n}, parts);
        auto ov = out.values();
        size_t off = 0;
        for (const auto& p : parts) {
            auto pv = p.values();
            std::copy(pv.begin(), pv.end(), ov.begin() + static_cast<std::ptrdiff_t>(off));
            off += pv.size();
        }
        record("concat_rows", out, [parts, out]() mutable {
            auto g = out.grad_view();
            size_t off2 = 0;
            for (auto& p : parts) {
                const size_t sz = p.values().size();
                if (p.requires_grad()) {
                    auto gp = p.grad();
                    for (size_t i = 0; i < sz; ++i) gp[i] += g[off2 + i];
                }
                off2 += sz;
            }
        });
        return out;
    }

    TensorT<S> slice_rows(const TensorT<S>& a, int64_t begin, int64_t count) {
        if (a.rank() != 2 || begin < 0 || count < 0 || begin + count > a.dim(0)) {
            throw ShapeError("slice_rows: [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                             ") invalid for " + a.shape_str());
        }
        const int64_t n = a.dim(1);
        auto out = make_out({count, n}, {a});
        auto av = a.values();
        std::copy_n(av.data() + static_cast<size_t>(begin * n), static_cast<size_t>(count * n), out.values().data());
        record("slice_rows", out, [a, out, begin, n]() mutable {
            if (!a.requires_grad()) return;
            auto g = out.grad_view();
            auto ga = a.grad();
            const size_t off = static_cast<size_t>(begin * n);
            for (size_t i = 0; i < g.size(); ++i) ga[off + i] += g[i];
        });
        return out;
    }

    TensorT<S> slice_cols(const TensorT<S>& a, int64_t begin, int64_t count) {
        if (a.rank() != 2 || begin < 0 || count < 0 || begin + count > a.dim(1)) {
            throw ShapeError("slice_cols: [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                             ") invalid for " + a.shape_str());
        }
        const int64_t m = a.dim(0), n = a.dim(1);
        auto out = make_out({m, count}, {a});
        auto av = a.values();
        auto ov = out.values();
        for (int64_t i = 0; i < m; ++i) {
            std::copy_n(av.data() + static_cast<size_t>(i * n + begin), static_cast<size_t>(count),
                        ov.data() + static_cast<size_t>(i * count));
        }
        record("slice_cols", out, [a, out, begin, count]() mutable {
            if (!a.requires_grad()) return;
            auto g = out.grad_view();
            auto ga = a.grad();
            const int64_t m = a.dim(0), n = a.dim(1);
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < count; ++j)
                    ga[static_cast<size_t>(i * n + begin + j)] += g[static_cast<size_t>(i * count + j)];
        });
        return out;
    }

    TensorT<S> concat_cols(const std::vector<TensorT<S>>& parts) {
        if (parts.empty()) throw ContractError("concat_cols: empty input");
        const int64_t m = parts[0].dim(0);
        int64_t cols = 0;
        for (const auto& p : parts) {
            if (p.rank() != 2 || p.dim(0) != m) {
                throw ShapeError("concat_cols: row mismatch " + parts[0].shape_str() + " vs " + p.shape_str());
            }
            cols += p.dim(1);
        }
        auto out = make_out({m, cols}, parts);
        auto ov = out.values();
        int64_t off = 0;
        for (const auto& p : parts) {
            const int64_t pc = p.dim(1);
            auto pv = p.values();
            for (int64_t i = 0; i < m; ++i)
                std::copy_n(pv.data() + static_cast<size_t>(i * pc), static_cast<size_t>(pc),
                            ov.data() + static_cast<size_t>(i * cols + off));
            off += pc;
        }
        record("concat_cols", out, [parts, out, m, cols]() mutable {
            auto g = out.grad_view();
            int64_t off2 = 0;
            for (auto& p : parts) {
                const int64_t pc = p.dim(1);
                if (p.requires_grad()) {
                    auto gp = p.grad();
                    for (int64_t i = 0; i < m; ++i)
                        for (int64_t j = 0; j < pc; ++j)
                            gp[static_cast<size_t>(i * pc + j)] += g[static_cast<size_t>(i * cols + off2 + j)];
                }
                off2 += pc;
            }
        });
        return out;
    }

    TensorT<S> sum(const TensorT<S>& a) {
        auto out = make_out({1}, {a});
        double acc = 0.0;
        for (S v : a.values()) acc += static_cast<double>(v);
        out.values()[0] = static_cast<S>(acc);
        record("sum", out, [a, out]() mutable {
            if (!a.requires_grad()) return;
            const S g = out.grad_view()[0];
            auto ga = a.grad();
            for (size_t i = 0; i < ga.size(); ++i) ga[i] += g;
        });
        return out;
    }

    // Mean of -log softmax(logits)[target] over non-pad positions. Pad
    // positions contribute nothing to the value or the gradient.
    TensorT<S> cross_entropy(const TensorT<S>& logits, const std::vector<int>& targets, int pad_id) {
        if (logits.rank() != 2 || logits.dim(0) != static_cast<int64_t>(targets.size())) {
            throw ShapeError("cross_entropy: logits " + logits.shape_str() + " vs " +
                             std::to_string(targets.size()) + " targets");
        }
        const int64_t n = logits.dim(0), v = logits.dim(1);
        int64_t live = 0;
        for (int t : targets) {
            if (t == pad_id) continue;
            if (t < 0 || t >= v) {
                throw IndexError("cross_entropy: target id " + std::to_string(t) + " out of range [0," +
                                 std::to_string(v) + ")");
            }
            ++live;
        }
        auto out = make_out({1}, {logits});
        auto lv = logits.values();
        std::vector<double> lse(static_cast<size_t>(n), 0.0);
        double total = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            if (targets[static_cast<size_t>(i)] == pad_id) continue;
            const size_t base = static_cast<size_t>(i * v);
            S mx = lv[base];
            for (int64_t j = 1; j < v; ++j) mx = std::max(mx, lv[base + static_cast<size_t>(j)]);
            double s = 0.0;
            for (int64_t j = 0; j < v; ++j) s += std::exp(static_cast<double>(lv[base + static_cast<size_t>(j)]) - static_cast<double>(mx));
            lse[static_cast<size_t>(i)] = static_cast<double>(mx) + std::log(s);
            total += lse[static_cast<size_t>(i)] - static_cast<double>(lv[base + static_cast<size_t>(targets[static_cast<size_t>(i)])]);
        }
        out.values()[0] = live > 0 ? static_cast<S>(total / static_cast<double>(live)) : S(0);
        record("cross_entropy", out, [logits, out, targets, pad_id, lse, live]() mutable {
            if (!logits.requires_grad() || live == 0) return;
            const double g = static_cast<double>(out.grad_view()[0]) / static_cast<double>(live);
            const int64_t n2 = logits.dim(0), v2 = logits.dim(1);
            auto lv2 = logits.values();
            auto gl = logits.grad();
            for (int64_t i = 0; i < n2; ++i) {
                const int t = targets[static_cast<size_t>(i)];
                if (t == pad_id) continue;
                const size_t base = static_cast<size_t>(i * v2);
                for (int64_t j = 0; j < v2; ++j) {
                    const double p = std::exp(static_cast<double>(lv2[base + static_cast<size_t>(j)]) - lse[static_cast<size_t>(i)]);
                    gl[base + static_cast<size_t>(j)] += static_cast<S>(g * (p - (j == t ? 1.0 : 0.0)));
                }
            }
        });
        return out;
    }

    // Inverted dropout; identity when rate == 0.
    TensorT<S> dropout(const TensorT<S>& a, double rate, std::mt19937& rng) {
        if (rate <= 0.0) return a;
        if (rate >= 1.0) throw ContractError("dropout: rate must be < 1");
        std::bernoulli_distribution keep(1.0 - rate);
        auto mask = TensorT<S>::zeros(a.shape());
        auto mv = mask.values();
        const S scale = static_cast<S>(1.0 / (1.0 - rate));
        for (size_t i = 0; i < mv.size(); ++i) mv[i] = keep(rng) ? scale : S(0);
        return mul(a, mask);
    }

    void backward(const TensorT<S>& loss) {
        if (loss.numel() != 1) throw ContractError("backward: loss must be scalar, shape " + loss.shape_str());
        TensorT<S> seed = loss;
        seed.grad()[0] += S(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            if (!it->out.has_grad()) continue;  // no gradient reached this node
            if (it->back) it->back();
        }
    }

private:
    struct Node {
        const char* op;
        TensorT<S> out;
        std::function<void()> back;
    };

    TensorT<S> make_out(std::vector<int64_t> shape, const std::vector<TensorT<S>>& inputs) {
        bool rg = false;
        if (grad_enabled_) {
            for (const auto& t : inputs) rg = rg || t.requires_grad();
        }
        return TensorT<S>::zeros(std::move(shape), rg);
    }

    template <class F>
    void record(const char* op, const TensorT<S>& out, F&& back) {
        if (!grad_enabled_ || !out.requires_grad()) return;
        nodes_.push_back(Node{op, out, std::forward<F>(back)});
    }

    // c[m x n] = a[m x k] * b[k x n]
    static void mm_nn(const S* a, const S* b, S* c, int64_t m, int64_t k, int64_t n) {
        for (int64_t i = 0; i < m; ++i) {
            S* ci = c + i * n;
            const S* ai = a + i * k;
            for (int64_t kk = 0; kk < k; ++kk) {
                const S av = ai[kk];
                if (av == S(0)) continue;
                const S* bk = b + kk * n;
                for (int64_t j = 0; j < n; ++j) ci[j] += av * bk[j];
            }
        }
    }
    // c[m x k] += g[m x n] * b[k x n]^T
    static void mm_nt_acc(const S* g, const S* b, S* c, int64_t m, int64_t n, int64_t k) {
        for (int64_t i = 0; i < m; ++i) {
            const S* gi = g + i * n;
            S* ci = c + i * k;
            for (int64_t kk = 0; kk < k; ++kk) {
                const S* bk = b + kk * n;
                S acc = S(0);
                for (int64_t j = 0; j < n; ++j) acc += gi[j] * bk[j];
                ci[kk] += acc;
            }
        }
    }
    // c[k x n] += a[m x k]^T * g[m x n]
    static void mm_tn_acc(const S* a, const S* g, S* c, int64_t m, int64_t k, int64_t n) {
        for (int64_t i = 0; i < m; ++i) {
            const S* ai = a + i * k;
            const S* gi = g + i * n;
            for (int64_t kk = 0; kk < k; ++kk) {
                const S av = ai[kk];
                if (av == S(0)) continue;
                S* ck = c + kk * n;
                for (int64_t j = 0; j < n; ++j) ck[j] += av * gi[j];
            }
        }
    }

    std::vector<Node> nodes_;
    bool grad_enabled_;
};

using Graph = GraphT<float>;

}  // namespace gcap
