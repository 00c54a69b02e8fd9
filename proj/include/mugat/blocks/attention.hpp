#pragma once

#include <cstddef>
#include <random>
#include <stdexcept>
#include <string>

#include "mugat/numerics/ops.hpp"
#include "mugat/numerics/parameter.hpp"

namespace mugat::blocks {

inline constexpr double kInitStddev = 0.02;

struct AttentionConfig {
    std::size_t d_model = 64;
    std::size_t n_heads = 4;

    std::size_t d_head() const { return d_model / n_heads; }

    void validate() const
    {
        if (d_model == 0 || n_heads == 0) throw std::invalid_argument("attention: d_model and n_heads must be positive");
        if (d_model % n_heads != 0) {
            throw std::invalid_argument("attention: d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                                        std::to_string(n_heads));
        }
    }
};

/// Weight matrix [in x out] drawn from normal(0, 0.02).
template <typename T>
ParamId add_weight(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out, ParamGroup group,
                   std::mt19937_64& rng)
{
    return store.add(name, normal_tensor<T>({in, out}, kInitStddev, rng), group);
}

template <typename T>
ParamId add_zeros(ParameterStore<T>& store, const std::string& name, Shape shape, ParamGroup group)
{
    return store.add(name, Tensor<T>(std::move(shape)), group);
}

struct LayerNormParams {
    ParamId gain;
    ParamId bias;
};

template <typename T>
LayerNormParams add_layer_norm(ParameterStore<T>& store, const std::string& prefix, std::size_t d, ParamGroup group)
{
    Tensor<T> ones({d});
    ones.fill(T(1));
    return {store.add(prefix + ".gain", std::move(ones), group), add_zeros(store, prefix + ".bias", {d}, group)};
}

template <typename T>
Var layer_norm(Graph<T>& g, const ParameterStore<T>& store, const LayerNormParams& p, Var x)
{
    return ops::layer_norm(g, x, g.param(store[p.gain]), g.param(store[p.bias]));
}

struct AttentionParams {
    ParamId wq, bq, wk, bk, wv, bv, wo, bo;
};

template <typename T>
AttentionParams add_attention(ParameterStore<T>& store, const std::string& prefix, const AttentionConfig& cfg,
                              ParamGroup group, std::mt19937_64& rng)
{
    cfg.validate();
    const std::size_t d = cfg.d_model;
    AttentionParams p;
    p.wq = add_weight(store, prefix + ".wq", d, d, group, rng);
    p.bq = add_zeros(store, prefix + ".bq", {d}, group);
    p.wk = add_weight(store, prefix + ".wk", d, d, group, rng);
    p.bk = add_zeros(store, prefix + ".bk", {d}, group);
    p.wv = add_weight(store, prefix + ".wv", d, d, group, rng);
    p.bv = add_zeros(store, prefix + ".bv", {d}, group);
    p.wo = add_weight(store, prefix + ".wo", d, d, group, rng);
    p.bo = add_zeros(store, prefix + ".bo", {d}, group);
    return p;
}

/// Projects queries from `queries` and keys/values from `source`, attends per
/// head and applies the output projection. Rows of `mask` index queries,
/// columns index source rows.
template <typename T>
Var multi_head_attention(Graph<T>& g, const ParameterStore<T>& store, const AttentionParams& p, const AttentionConfig& cfg,
                         Var queries, Var source, const AttentionMask* mask = nullptr, AttentionTrace* trace = nullptr)
{
    cfg.validate();
    if (g.value(queries).cols() != cfg.d_model || g.value(source).cols() != cfg.d_model) {
        throw ShapeError("multi_head_attention: queries " + shape_string(g.value(queries).shape()) + " and source " +
                         shape_string(g.value(source).shape()) + " must have width " + std::to_string(cfg.d_model));
    }
    auto bind = [&](ParamId id) { return g.param(store[id]); };
    const Var q = ops::linear(g, queries, bind(p.wq), bind(p.bq));
    const Var k = ops::linear(g, source, bind(p.wk), bind(p.bk));
    const Var v = ops::linear(g, source, bind(p.wv), bind(p.bv));
    const Var heads = ops::attention(g, q, k, v, cfg.n_heads, mask, trace);
    return ops::linear(g, heads, bind(p.wo), bind(p.bo));
}

/// Lower-triangular mask: query i may see keys j <= i.
inline AttentionMask causal_mask(std::size_t t)
{
    if (t == 0) throw std::invalid_argument("causal_mask: T must be >= 1");
    AttentionMask m(t, t, false);
    for (std::size_t i = 0; i < t; ++i) {
        for (std::size_t j = 0; j <= i; ++j) m.set(i, j, true);
    }
    return m;
}

}  // namespace mugat::blocks
