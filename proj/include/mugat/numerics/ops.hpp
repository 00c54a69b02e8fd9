#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mugat/numerics/graph.hpp"

// Differentiable operations. Each op computes its value eagerly, appends a node
// and registers the vector-Jacobian product for the backward sweep.

namespace mugat {

/// Boolean attention mask, row-major, true = key position may be attended.
struct AttentionMask {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> allowed;

    AttentionMask() = default;
    AttentionMask(std::size_t r, std::size_t c, bool value = true) : rows(r), cols(c), allowed(r * c, value ? 1 : 0) {}

    bool operator()(std::size_t i, std::size_t j) const { return allowed[i * cols + j] != 0; }
    void set(std::size_t i, std::size_t j, bool v) { allowed[i * cols + j] = v ? 1 : 0; }
    std::size_t allowed_count() const
    {
        return static_cast<std::size_t>(std::count(allowed.begin(), allowed.end(), std::uint8_t{1}));
    }
};

/// Records the shape of every attention score matrix built while it is
/// attached; optionally keeps the weights themselves.
struct AttentionTrace {
    struct Call {
        std::size_t n_heads = 0;
        std::size_t queries = 0;
        std::size_t keys = 0;
        std::vector<Tensor<double>> weights;  // one [queries x keys] per head
        std::size_t score_entries() const { return n_heads * queries * keys; }
    };
    bool keep_weights = false;
    std::vector<Call> calls;
};

enum class GeluForm { exact, tanh };

namespace ops {

namespace detail {

inline void require_rank2(const Shape& s, const char* op)
{
    if (s.size() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(s));
}

template <typename T>
bool any_needs(const Graph<T>& g, std::initializer_list<Var> vars)
{
    for (Var v : vars) {
        if (g.needs_grad(v)) return true;
    }
    return false;
}

}  // namespace detail

template <typename T>
Var matmul(Graph<T>& g, Var a, Var b)
{
    const Tensor<T>& av = g.value(a);
    const Tensor<T>& bv = g.value(b);
    detail::require_rank2(av.shape(), "matmul");
    detail::require_rank2(bv.shape(), "matmul");
    if (av.cols() != bv.rows()) {
        throw ShapeError("matmul: inner dimensions disagree, " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
    }
    Tensor<T> out({av.rows(), bv.cols()});
    as_matrix(out).noalias() = as_matrix(av) * as_matrix(bv);
    ensure_finite(out, "matmul");
    return g.push("matmul", std::move(out), detail::any_needs(g, {a, b}), [a, b, id = g.size()](Graph<T>& gr) {
        auto dc = as_matrix(std::as_const(gr.grad(Var{id})));
        if (gr.needs_grad(a)) as_matrix(gr.grad(a)).noalias() += dc * as_matrix(gr.value(b)).transpose();
        if (gr.needs_grad(b)) as_matrix(gr.grad(b)).noalias() += as_matrix(gr.value(a)).transpose() * dc;
    });
}

/// x[T x in] * w[in x out] (+ bias[out] broadcast over rows).
template <typename T>
Var linear(Graph<T>& g, Var x, Var w, std::optional<Var> bias = std::nullopt)
{
    const Tensor<T>& xv = g.value(x);
    const Tensor<T>& wv = g.value(w);
    detail::require_rank2(xv.shape(), "linear");
    detail::require_rank2(wv.shape(), "linear");
    if (xv.cols() != wv.rows()) {
        throw ShapeError("linear: input " + shape_string(xv.shape()) + " does not match weight " + shape_string(wv.shape()));
    }
    if (bias && g.value(*bias).size() != wv.cols()) {
        throw ShapeError("linear: bias " + shape_string(g.value(*bias).shape()) + " does not match weight " + shape_string(wv.shape()));
    }
    Tensor<T> out({xv.rows(), wv.cols()});
    auto om = as_matrix(out);
    om.noalias() = as_matrix(xv) * as_matrix(wv);
    if (bias) {
        Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bm(g.value(*bias).data(), static_cast<Eigen::Index>(wv.cols()));
        om.rowwise() += bm;
    }
    ensure_finite(out, "linear");
    const bool needs = detail::any_needs(g, {x, w}) || (bias && g.needs_grad(*bias));
    return g.push("linear", std::move(out), needs, [x, w, bias, id = g.size()](Graph<T>& gr) {
        const Var y{id};
        auto dy = as_matrix(std::as_const(gr.grad(y)));
        if (gr.needs_grad(x)) as_matrix(gr.grad(x)).noalias() += dy * as_matrix(gr.value(w)).transpose();
        if (gr.needs_grad(w)) as_matrix(gr.grad(w)).noalias() += as_matrix(gr.value(x)).transpose() * dy;
        if (bias && gr.needs_grad(*bias)) {
            Tensor<T>& db = gr.grad(*bias);
            Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> dbm(db.data(), static_cast<Eigen::Index>(db.size()));
            dbm += dy.colwise().sum();
        }
    });
}

template <typename T>
Var add(Graph<T>& g, Var a, Var b)
{
    const Tensor<T>& av = g.value(a);
    const Tensor<T>& bv = g.value(b);
    if (av.shape() != bv.shape()) {
        throw ShapeError("add: " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
    }
    Tensor<T> out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    ensure_finite(out, "add");
    return g.push("add", std::move(out), detail::any_needs(g, {a, b}), [a, b, id = g.size()](Graph<T>& gr) {
        const Tensor<T>& dy = gr.grad(Var{id});
        for (Var in : {a, b}) {
            if (!gr.needs_grad(in)) continue;
            Tensor<T>& dx = gr.grad(in);
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
        }
    });
}

/// x[T x d] + v[d] broadcast over rows.
template <typename T>
Var add_row(Graph<T>& g, Var x, Var v)
{
    const Tensor<T>& xv = g.value(x);
    const Tensor<T>& vv = g.value(v);
    if (vv.size() != xv.cols()) {
        throw ShapeError("add_row: " + shape_string(xv.shape()) + " + " + shape_string(vv.shape()));
    }
    Tensor<T> out = xv;
    const std::size_t d = xv.cols();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += vv[i % d];
    ensure_finite(out, "add_row");
    return g.push("add_row", std::move(out), detail::any_needs(g, {x, v}), [x, v, d, id = g.size()](Graph<T>& gr) {
        const Tensor<T>& dy = gr.grad(Var{id});
        if (gr.needs_grad(x)) {
            Tensor<T>& dx = gr.grad(x);
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
        }
        if (gr.needs_grad(v)) {
            Tensor<T>& dv = gr.grad(v);
            for (std::size_t i = 0; i < dy.size(); ++i) dv[i % d] += dy[i];
        }
    });
}

template <typename T>
Var scale(Graph<T>& g, Var a, T s)
{
    Tensor<T> out = g.value(a);
    for (auto& x : out.values()) x *= s;
    ensure_finite(out, "scale");
    return g.push("scale", std::move(out), g.needs_grad(a), [a, s, id = g.size()](Graph<T>& gr) {
        const Tensor<T>& dy = gr.grad(Var{id});
        Tensor<T>& dx = gr.grad(a);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += s * dy[i];
    });
}

/// Elementwise product.
template <typename T>
Var mul(Graph<T>& g, Var a, Var b)
{
    const Tensor<T>& av = g.value(a);
    const Tensor<T>& bv = g.value(b);
    if (av.shape() != bv.shape()) {
        throw ShapeError("mul: " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
    }
    Tensor<T> out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    ensure_finite(out, "mul");
    return g.push("mul", std::move(out), detail::any_needs(g, {a, b}), [a, b, id = g.size()](Graph<T>& gr) {
        const Tensor<T>& dy = gr.grad(Var{id});
        if (gr.needs_grad(a)) {
            Tensor<T>& da = gr.grad(a);
            const Tensor<T>& bv2 = gr.value(b);
            for (std::size_t i = 0; i < da.size(); ++i) da[i] += dy[i] * bv2[i];
        }
        if (gr.needs_grad(b)) {
            Tensor<T>& db = gr.grad(b);
            const Tensor<T>& av2 = gr.value(a);
            for (std::size_t i = 0; i < db.size(); ++i) db[i] += dy[i] * av2[i];
        }
    });
}

/// Sum of all entries, as a one-element tensor.
template <typename T>
Var sum(Graph<T>& g, Var a)
{
    T total = 0;
    for (const T x : g.value(a).values()) total += x;
    Tensor<T> out = Tensor<T>::scalar(total);
    ensure_finite(out, "sum");
    return g.push("sum", std::move(out), g.needs_grad(a), [a, id = g.size()](Graph<T>& gr) {
        const T dy = gr.grad(Var{id})[0];
        for (auto& x : gr.grad(a).values()) x += dy;
    });
}

template <typename T>
Var transpose(Graph<T>& g, Var a)
{
    const Tensor<T>& av = g.value(a);
    detail::require_rank2(av.shape(), "transpose");
    Tensor<T> out({av.cols(), av.rows()});
    as_matrix(out) = as_matrix(av).transpose();
    return g.push("transpose", std::move(out), g.needs_grad(a), [a, id = g.size()](Graph<T>& gr) {
        as_matrix(gr.grad(a)) += as_matrix(std::as_const(gr.grad(Var{id}))).transpose();
    });
}

/// Softmax along `axis`, stabilised by subtracting the slice maximum.
template <typename T>
Var softmax(Graph<T>& g, Var x, std::size_t axis)
{
    const Tensor<T>& xv = g.value(x);
    const Shape& s = xv.shape();
    if (axis >= s.size()) {
        throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_string(s));
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t len = s[axis];

    Tensor<T> out(s);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            T mx = -std::numeric_limits<T>::infinity();
            for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, xv[base + k * inner]);
            T z = 0;
            for (std::size_t k = 0; k < len; ++k) {
                const T e = std::exp(xv[base + k * inner] - mx);
                out[base + k * inner] = e;
                z += e;
            }
            for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= z;
        }
    }
    ensure_finite(out, "softmax");
    return g.push("softmax", std::move(out), g.needs_grad(x), [x, outer, inner, len, id = g.size()](Graph<T>& gr) {
        const Tensor<T>& y = gr.value(Var{id});
        const Tensor<T>& dy = gr.grad(Var{id});
        Tensor<T>& dx = gr.grad(x);
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * len * inner + in;
                T dot = 0;
                for (std::size_t k = 0; k < len; ++k) dot += y[base + k * inner] * dy[base + k * inner];
                for (std::size_t k = 0; k < len; ++k) {
                    const std::size_t i = base + k * inner;
                    dx[i] += y[i] * (dy[i] - dot);
                }
            }
        }
    });
}

/// Per-row normalisation to zero mean and unit variance followed by the
/// affine map gain * xhat + bias.
template <typename T>
Var layer_norm(Graph<T>& g, Var x, Var gain, Var bias, T eps = T(1e-5))
{
    if (!(eps > T(0))) throw std::invalid_argument("layer_norm: eps must be positive");
    const Tensor<T>& xv = g.value(x);
    const std::size_t d = xv.cols();
    const std::size_t rows = xv.rows();
    if (g.value(gain).size() != d || g.value(bias).size() != d) {
        throw ShapeError("layer_norm: input " + shape_string(xv.shape()) + " with gain " + shape_string(g.value(gain).shape()) +
                         " and bias " + shape_string(g.value(bias).shape()));
    }
    const Tensor<T>& gv = g.value(gain);
    const Tensor<T>& bv = g.value(bias);
    auto xhat = std::make_shared<Tensor<T>>(xv.shape());
    auto inv_sigma = std::make_shared<std::vector<T>>(rows);
    Tensor<T> out(xv.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* row = xv.data() + r * d;
        T mean = 0;
        for (std::size_t c = 0; c < d; ++c) mean += row[c];
        mean /= static_cast<T>(d);
        T var = 0;
        for (std::size_t c = 0; c < d; ++c) var += (row[c] - mean) * (row[c] - mean);
        var /= static_cast<T>(d);
        const T is = T(1) / std::sqrt(var + eps);
        (*inv_sigma)[r] = is;
        for (std::size_t c = 0; c < d; ++c) {
            const T h = (row[c] - mean) * is;
            (*xhat)[r * d + c] = h;
            out[r * d + c] = h * gv[c] + bv[c];
        }
    }
    ensure_finite(out, "layer_norm");
    const bool needs = detail::any_needs(g, {x, gain, bias});
    return g.push("layer_norm", std::move(out), needs, [x, gain, bias, xhat, inv_sigma, d, rows, id = g.size()](Graph<T>& gr) {
        const Tensor<T>& dy = gr.grad(Var{id});
        const Tensor<T>& gv2 = gr.value(gain);
        if (gr.needs_grad(gain) || gr.needs_grad(bias)) {
            Tensor<T>* dg = gr.needs_grad(gain) ? &gr.grad(gain) : nullptr;
            Tensor<T>* db = gr.needs_grad(bias) ? &gr.grad(bias) : nullptr;
            for (std::size_t i = 0; i < rows * d; ++i) {
                if (dg) (*dg)[i % d] += dy[i] * (*xhat)[i];
                if (db) (*db)[i % d] += dy[i];
            }
        }
        if (!gr.needs_grad(x)) return;
        Tensor<T>& dx = gr.grad(x);
        std::vector<T> dh(d);
        for (std::size_t r = 0; r < rows; ++r) {
            T mean_dh = 0, mean_dh_h = 0;
            for (std::size_t c = 0; c < d; ++c) {
                dh[c] = dy[r * d + c] * gv2[c];
                mean_dh += dh[c];
                mean_dh_h += dh[c] * (*xhat)[r * d + c];
            }
            mean_dh /= static_cast<T>(d);
            mean_dh_h /= static_cast<T>(d);
            const T is = (*inv_sigma)[r];
            for (std::size_t c = 0; c < d; ++c) {
                dx[r * d + c] += is * (dh[c] - mean_dh - (*xhat)[r * d + c] * mean_dh_h);
            }
        }
    });
}

namespace detail {

template <typename T>
T gelu_value(T x, GeluForm form)
{
    if (form == GeluForm::exact) return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
    const T c = std::sqrt(T(2) / std::numbers::pi_v<T>);
    return T(0.5) * x * (T(1) + std::tanh(c * (x + T(0.044715) * x * x * x)));
}

template <typename T>
T gelu_derivative(T x, GeluForm form)
{
    if (form == GeluForm::exact) {
        const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
        const T pdf = std::exp(T(-0.5) * x * x) / std::sqrt(T(2) * std::numbers::pi_v<T>);
        return cdf + x * pdf;
    }
    const T c = std::sqrt(T(2) / std::numbers::pi_v<T>);
    const T u = c * (x + T(0.044715) * x * x * x);
    const T t = std::tanh(u);
    const T du = c * (T(1) + T(3) * T(0.044715) * x * x);
    return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * du;
}

}  // namespace detail

template <typename T>
Var gelu(Graph<T>& g, Var x, GeluForm form = GeluForm::exact)
{
    Tensor<T> out = g.value(x);
    for (auto& v : out.values()) v = detail::gelu_value(v, form);
    ensure_finite(out, "gelu");
    return g.push("gelu", std::move(out), g.needs_grad(x), [x, form, id = g.size()](Graph<T>& gr) {
        const Tensor<T>& dy = gr.grad(Var{id});
        const Tensor<T>& xv = gr.value(x);
        Tensor<T>& dx = gr.grad(x);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * detail::gelu_derivative(xv[i], form);
    });
}

/// Mean negative log-likelihood of `targets` under row-wise softmax of
/// `logits`, skipping positions whose target equals `pad_id`.
template <typename T>
Var cross_entropy_logits(Graph<T>& g, Var logits, const std::vector<int>& targets, int pad_id)
{
    const Tensor<T>& lv = g.value(logits);
    detail::require_rank2(lv.shape(), "cross_entropy_logits");
    const std::size_t rows = lv.rows();
    const std::size_t vocab = lv.cols();
    if (targets.size() != rows) {
        throw ShapeError("cross_entropy_logits: " + std::to_string(targets.size()) + " targets for logits " + shape_string(lv.shape()));
    }
    std::size_t counted = 0;
    for (const int t : targets) {
        if (t == pad_id) continue;
        if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
            throw std::out_of_range("cross_entropy_logits: target " + std::to_string(t) + " outside vocabulary of " + std::to_string(vocab));
        }
        ++counted;
    }
    if (counted == 0) throw std::invalid_argument("cross_entropy_logits: every position is padding");

    auto probs = std::make_shared<Tensor<T>>(lv.shape());
    T total = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        const T* row = lv.data() + r * vocab;
        T mx = *std::max_element(row, row + vocab);
        T z = 0;
        for (std::size_t c = 0; c < vocab; ++c) {
            const T e = std::exp(row[c] - mx);
            (*probs)[r * vocab + c] = e;
            z += e;
        }
        for (std::size_t c = 0; c < vocab; ++c) (*probs)[r * vocab + c] /= z;
        if (targets[r] != pad_id) total += (std::log(z) + mx) - row[targets[r]];
    }
    Tensor<T> out = Tensor<T>::scalar(total / static_cast<T>(counted));
    ensure_finite(out, "cross_entropy_logits");
    return g.push("cross_entropy", std::move(out), g.needs_grad(logits),
                  [logits, probs, targets, pad_id, counted, vocab, id = g.size()](Graph<T>& gr) {
                      const T dy = gr.grad(Var{id})[0] / static_cast<T>(counted);
                      Tensor<T>& dl = gr.grad(logits);
                      for (std::size_t r = 0; r < targets.size(); ++r) {
                          if (targets[r] == pad_id) continue;
                          for (std::size_t c = 0; c < vocab; ++c) dl[r * vocab + c] += dy * (*probs)[r * vocab + c];
                          dl[r * vocab + static_cast<std::size_t>(targets[r])] -= dy;
                      }
                  });
}

/// Stacks matrices with equal column counts on top of each other.
template <typename T>
Var concat_rows(Graph<T>& g, const std::vector<Var>& parts)
{
    if (parts.empty()) throw std::invalid_argument("concat_rows: nothing to concatenate");
    const std::size_t cols = g.value(parts.front()).cols();
    std::size_t rows = 0;
    bool needs = false;
    for (Var p : parts) {
        const Tensor<T>& pv = g.value(p);
        if (pv.cols() != cols) {
            throw ShapeError("concat_rows: " + shape_string(g.value(parts.front()).shape()) + " vs " + shape_string(pv.shape()));
        }
        rows += pv.rows();
        needs = needs || g.needs_grad(p);
    }
    Tensor<T> out({rows, cols});
    std::size_t offset = 0;
    for (Var p : parts) {
        const Tensor<T>& pv = g.value(p);
        std::copy(pv.data(), pv.data() + pv.size(), out.data() + offset);
        offset += pv.size();
    }
    return g.push("concat_rows", std::move(out), needs, [parts, id = g.size()](Graph<T>& gr) {
        const Tensor<T>& dy = gr.grad(Var{id});
        std::size_t off = 0;
        for (Var p : parts) {
            const std::size_t n = gr.value(p).size();
            if (gr.needs_grad(p)) {
                Tensor<T>& dp = gr.grad(p);
                for (std::size_t i = 0; i < n; ++i) dp[i] += dy[off + i];
            }
            off += n;
        }
    });
}

template <typename T>
Var slice_rows(Graph<T>& g, Var x, std::size_t begin, std::size_t count)
{
    const Tensor<T>& xv = g.value(x);
    if (count == 0 || begin + count > xv.rows()) {
        throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) + ") of " +
                         shape_string(xv.shape()));
    }
    const std::size_t cols = xv.cols();
    Tensor<T> out({count, cols});
    std::copy(xv.data() + begin * cols, xv.data() + (begin + count) * cols, out.data());
    return g.push("slice_rows", std::move(out), g.needs_grad(x), [x, begin, cols, id = g.size()](Graph<T>& gr) {
        const Tensor<T>& dy = gr.grad(Var{id});
        Tensor<T>& dx = gr.grad(x);
        for (std::size_t i = 0; i < dy.size(); ++i) dx[begin * cols + i] += dy[i];
    });
}

/// Row lookup: out[i] = table[indices[i]].
template <typename T>
Var gather_rows(Graph<T>& g, Var table, const std::vector<std::size_t>& indices)
{
    const Tensor<T>& tv = g.value(table);
    if (indices.empty()) throw ShapeError("gather_rows: empty index list for table " + shape_string(tv.shape()));
    const std::size_t cols = tv.cols();
    Tensor<T> out({indices.size(), cols});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= tv.rows()) {
            throw std::out_of_range("gather_rows: index " + std::to_string(indices[i]) + " outside table " + shape_string(tv.shape()));
        }
        std::copy(tv.data() + indices[i] * cols, tv.data() + (indices[i] + 1) * cols, out.data() + i * cols);
    }
    return g.push("gather_rows", std::move(out), g.needs_grad(table), [table, indices, cols, id = g.size()](Graph<T>& gr) {
        const Tensor<T>& dy = gr.grad(Var{id});
        Tensor<T>& dt = gr.grad(table);
        for (std::size_t i = 0; i < indices.size(); ++i) {
            for (std::size_t c = 0; c < cols; ++c) dt[indices[i] * cols + c] += dy[i * cols + c];
        }
    });
}

/// Multi-head scaled dot-product attention on already projected inputs:
/// per head h, softmax(Q_h K_h^T / sqrt(d_head)) V_h, heads concatenated.
/// Masked positions get exactly zero weight.
template <typename T>
Var attention(Graph<T>& g, Var q, Var k, Var v, std::size_t n_heads, const AttentionMask* mask = nullptr,
              AttentionTrace* trace = nullptr)
{
    const Tensor<T>& qv = g.value(q);
    const Tensor<T>& kv = g.value(k);
    const Tensor<T>& vv = g.value(v);
    const std::size_t tq = qv.rows(), tk = kv.rows(), d = qv.cols();
    if (kv.cols() != d || vv.cols() != d || vv.rows() != tk) {
        throw ShapeError("attention: q " + shape_string(qv.shape()) + ", k " + shape_string(kv.shape()) + ", v " + shape_string(vv.shape()));
    }
    if (n_heads == 0 || d % n_heads != 0) {
        throw ShapeError("attention: width " + std::to_string(d) + " not divisible into " + std::to_string(n_heads) + " heads");
    }
    if (mask && (mask->rows != tq || mask->cols != tk)) {
        throw ShapeError("attention: mask [" + std::to_string(mask->rows) + "x" + std::to_string(mask->cols) + "] for scores [" +
                         std::to_string(tq) + "x" + std::to_string(tk) + "]");
    }
    if (mask) {
        for (std::size_t i = 0; i < tq; ++i) {
            bool any = false;
            for (std::size_t j = 0; j < tk && !any; ++j) any = (*mask)(i, j);
            if (!any) throw std::invalid_argument("attention: query row " + std::to_string(i) + " is fully masked");
        }
    }
    const std::size_t dh = d / n_heads;
    const T scale_factor = T(1) / std::sqrt(static_cast<T>(dh));
    auto Q = as_matrix(qv);
    auto K = as_matrix(kv);
    auto V = as_matrix(vv);
    auto weights = std::make_shared<std::vector<RowMatrix<T>>>(n_heads);
    Tensor<T> out({tq, d});
    auto O = as_matrix(out);
    const auto H = static_cast<Eigen::Index>(dh);
    for (std::size_t h = 0; h < n_heads; ++h) {
        const auto c0 = static_cast<Eigen::Index>(h * dh);
        RowMatrix<T> s = (Q.middleCols(c0, H) * K.middleCols(c0, H).transpose()) * scale_factor;
        for (Eigen::Index i = 0; i < s.rows(); ++i) {
            T mx = -std::numeric_limits<T>::infinity();
            for (Eigen::Index j = 0; j < s.cols(); ++j) {
                if (!mask || (*mask)(i, j)) mx = std::max(mx, s(i, j));
            }
            T z = 0;
            for (Eigen::Index j = 0; j < s.cols(); ++j) {
                const T e = (!mask || (*mask)(i, j)) ? std::exp(s(i, j) - mx) : T(0);
                s(i, j) = e;
                z += e;
            }
            s.row(i) /= z;
        }
        O.middleCols(c0, H).noalias() = s * V.middleCols(c0, H);
        (*weights)[h] = std::move(s);
    }
    ensure_finite(out, "attention");
    if (trace) {
        AttentionTrace::Call call{n_heads, tq, tk, {}};
        if (trace->keep_weights) {
            for (const auto& w : *weights) {
                Tensor<double> t({tq, tk});
                for (std::size_t i = 0; i < tq * tk; ++i) t[i] = static_cast<double>(w.data()[i]);
                call.weights.push_back(std::move(t));
            }
        }
        trace->calls.push_back(std::move(call));
    }
    const bool needs = detail::any_needs(g, {q, k, v});
    return g.push("attention", std::move(out), needs, [q, k, v, weights, n_heads, dh, scale_factor, id = g.size()](Graph<T>& gr) {
        auto dO = as_matrix(std::as_const(gr.grad(Var{id})));
        auto Qm = as_matrix(gr.value(q));
        auto Km = as_matrix(gr.value(k));
        auto Vm = as_matrix(gr.value(v));
        const bool nq = gr.needs_grad(q), nk = gr.needs_grad(k), nv = gr.needs_grad(v);
        const auto H2 = static_cast<Eigen::Index>(dh);
        for (std::size_t h = 0; h < n_heads; ++h) {
            const auto c0 = static_cast<Eigen::Index>(h * dh);
            const RowMatrix<T>& P = (*weights)[h];
            const auto dOh = dO.middleCols(c0, H2);
            if (nv) as_matrix(gr.grad(v)).middleCols(c0, H2).noalias() += P.transpose() * dOh;
            if (!nq && !nk) continue;
            RowMatrix<T> dP = dOh * Vm.middleCols(c0, H2).transpose();
            const Eigen::Matrix<T, Eigen::Dynamic, 1> rowdot = dP.cwiseProduct(P).rowwise().sum();
            RowMatrix<T> dS = P.cwiseProduct(dP.colwise() - rowdot) * scale_factor;
            if (nq) as_matrix(gr.grad(q)).middleCols(c0, H2).noalias() += dS * Km.middleCols(c0, H2);
            if (nk) as_matrix(gr.grad(k)).middleCols(c0, H2).noalias() += dS.transpose() * Qm.middleCols(c0, H2);
        }
    });
}

}  // namespace ops
}  // namespace mugat
