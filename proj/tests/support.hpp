#pragma once

// Helpers shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <string>

#include "mugat/corpus/render.hpp"
#include "mugat/model/model.hpp"
#include "mugat/numerics/gradients.hpp"
#include "mugat/numerics/ops.hpp"
#include "mugat/numerics/rng.hpp"

namespace mugat::testing {

struct GradCheck {
    double max_rel_error = 0.0;
    std::size_t checked = 0;  // entries large enough for the relative test
    std::string worst;        // "param[index]" of the worst entry
};

/// Central finite differences (step h) against reverse mode for every
/// trainable parameter of `store`. `build` must construct the scalar loss from
/// scratch on the graph it is given. Entries where both derivatives are below
/// `floor` only need to agree within `floor` absolutely.
inline GradCheck check_gradients(ParameterStore<double>& store, const std::function<Var(Graph<double>&)>& build,
                                 double h = 1e-5, double floor = 1e-6)
{
    Graph<double> g;
    const Var loss = build(g);
    const auto analytic = gradients(g, loss, store);
    auto eval = [&] {
        Graph<double> g2(false);
        return g2.value(build(g2))[0];
    };
    GradCheck out;
    for (auto& p : store.all()) {
        if (!p.trainable) continue;
        const auto& a = analytic.at(p.name);
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double keep = p.value[i];
            p.value[i] = keep + h;
            const double up = eval();
            p.value[i] = keep - h;
            const double down = eval();
            p.value[i] = keep;
            const double numeric = (up - down) / (2.0 * h);
            const double scale = std::max(std::abs(numeric), std::abs(a[i]));
            double err = 0.0;
            if (scale > floor) {
                err = std::abs(numeric - a[i]) / scale;
                ++out.checked;
            } else if (std::abs(numeric - a[i]) > floor) {
                err = 1.0;
            }
            if (err > out.max_rel_error) {
                out.max_rel_error = err;
                out.worst = p.name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return out;
}

inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0)
{
    Tensor<double> t(std::move(shape));
    for (auto& v : t.values()) v = scale * (2.0 * uniform_unit(rng) - 1.0);
    return t;
}

/// Random weighting so that every output entry influences the loss.
inline Var weighted_sum(Graph<double>& g, Var x, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    return ops::sum(g, ops::mul(g, x, g.constant(random_tensor(g.value(x).shape(), rng))));
}

struct OpCase {
    std::string name;
    std::vector<Shape> inputs;
    std::function<Var(Graph<double>&, const std::vector<Var>&)> op;
};

/// One case per differentiable operation.
inline std::vector<OpCase> op_cases()
{
    AttentionMask causal(3, 3, false);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j <= i; ++j) causal.set(i, j, true);
    }
    return {
        {"matmul", {{3, 4}, {4, 2}}, [](auto& g, auto& v) { return ops::matmul(g, v[0], v[1]); }},
        {"linear", {{3, 4}, {4, 2}, {2}}, [](auto& g, auto& v) { return ops::linear(g, v[0], v[1], v[2]); }},
        {"add", {{2, 3}, {2, 3}}, [](auto& g, auto& v) { return ops::add(g, v[0], v[1]); }},
        {"add_row", {{3, 4}, {4}}, [](auto& g, auto& v) { return ops::add_row(g, v[0], v[1]); }},
        {"scale", {{2, 3}}, [](auto& g, auto& v) { return ops::scale(g, v[0], -1.7); }},
        {"mul", {{2, 3}, {2, 3}}, [](auto& g, auto& v) { return ops::mul(g, v[0], v[1]); }},
        {"sum", {{2, 3}}, [](auto& g, auto& v) { return ops::sum(g, v[0]); }},
        {"transpose", {{2, 3}}, [](auto& g, auto& v) { return ops::transpose(g, v[0]); }},
        {"softmax_rows", {{3, 4}}, [](auto& g, auto& v) { return ops::softmax(g, v[0], 1); }},
        {"softmax_cols", {{3, 4}}, [](auto& g, auto& v) { return ops::softmax(g, v[0], 0); }},
        {"layer_norm", {{3, 5}, {5}, {5}}, [](auto& g, auto& v) { return ops::layer_norm(g, v[0], v[1], v[2]); }},
        {"gelu_exact", {{3, 4}}, [](auto& g, auto& v) { return ops::gelu(g, v[0], GeluForm::exact); }},
        {"gelu_tanh", {{3, 4}}, [](auto& g, auto& v) { return ops::gelu(g, v[0], GeluForm::tanh); }},
        {"cross_entropy", {{4, 5}}, [](auto& g, auto& v) { return ops::cross_entropy_logits(g, v[0], {1, 0, 4, 2}, 0); }},
        {"concat_rows", {{2, 3}, {1, 3}}, [](auto& g, auto& v) { return ops::concat_rows(g, {v[0], v[1], v[0]}); }},
        {"slice_rows", {{5, 3}}, [](auto& g, auto& v) { return ops::slice_rows(g, v[0], 1, 3); }},
        {"gather_rows", {{4, 3}}, [](auto& g, auto& v) { return ops::gather_rows(g, v[0], {3, 0, 3, 1}); }},
        {"attention", {{3, 4}, {5, 4}, {5, 4}}, [](auto& g, auto& v) { return ops::attention(g, v[0], v[1], v[2], 2); }},
        {"attention_masked", {{3, 4}, {3, 4}, {3, 4}},
         [causal](auto& g, auto& v) { return ops::attention(g, v[0], v[1], v[2], 2, &causal); }},
    };
}

/// Random inputs as parameters, outputs reduced by a random weighting.
inline GradCheck check_op_case(const OpCase& c, std::uint64_t seed)
{
    std::mt19937_64 rng(seed * 7919 + c.name.size());
    ParameterStore<double> store;
    std::vector<ParamId> ids;
    for (std::size_t i = 0; i < c.inputs.size(); ++i) {
        ids.push_back(store.add("in" + std::to_string(i), random_tensor(c.inputs[i], rng), ParamGroup::decoder));
    }
    return check_gradients(store, [&](Graph<double>& g) {
        std::vector<Var> vars;
        for (auto id : ids) vars.push_back(g.param(store[id]));
        const Var out = c.op(g, vars);
        return g.value(out).size() == 1 ? out : weighted_sum(g, out, seed);
    });
}

inline corpus::PageBitmap random_page(std::size_t h, std::size_t w, std::mt19937_64& rng, double ink = 0.2)
{
    auto p = corpus::blank_page(h, w);
    for (auto& px : p.pixels) px = uniform_unit(rng) < ink ? 1 : 0;
    return p;
}

/// d=8, P=4, N=2, L=1, vocab=11.
inline model::ModelConfig tiny_config()
{
    model::ModelConfig c;
    c.image_h = 16;
    c.image_w = 16;
    c.patch = 8;
    c.d = 8;
    c.n_heads = 2;
    c.enc_layers = 1;
    c.dec_layers = 1;
    c.n_latents = 2;
    c.adapter_layers = 1;
    c.ffn_mult = 2;
    c.vocab_size = 11;
    c.max_target_len = 8;
    return c;
}

template <typename T>
void randomize(model::MugatModel<T>& m, std::mt19937_64& rng, double scale)
{
    for (auto& p : m.params_mut().all()) {
        const auto r = random_tensor(p.value.shape(), rng, scale);
        for (std::size_t i = 0; i < r.size(); ++i) p.value[i] = static_cast<T>(r[i]);
    }
}

/// Whole-model check on the tiny config: random weights, a real previous
/// page and a missing next page, so the empty-page path is covered too.
inline GradCheck check_tiny_model(std::uint64_t seed, std::size_t* scalars = nullptr)
{
    const auto cfg = tiny_config();
    std::mt19937_64 rng(seed);
    model::MugatModel<double> m(cfg, seed);
    randomize(m, rng, 0.4);
    const auto prev = random_page(16, 16, rng), curr = random_page(16, 16, rng);
    const model::ContextSample s{{&prev, &curr, nullptr}, {1, 5, 7, 4, 9, 2}};
    if (scalars) *scalars = m.params().scalar_count();
    return check_gradients(m.params_mut(), [&](Graph<double>& g) { return m.sample_loss(g, s); });
}

}  // namespace mugat::testing
