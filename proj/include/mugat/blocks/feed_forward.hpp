#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "mugat/blocks/attention.hpp"

namespace mugat::blocks {

struct FeedForwardParams {
    ParamId w1, b1, w2, b2;
};

template <typename T>
FeedForwardParams add_feed_forward(ParameterStore<T>& store, const std::string& prefix, std::size_t d, std::size_t hidden_mult,
                                   ParamGroup group, std::mt19937_64& rng)
{
    const std::size_t h = d * hidden_mult;
    FeedForwardParams p;
    p.w1 = add_weight(store, prefix + ".w1", d, h, group, rng);
    p.b1 = add_zeros(store, prefix + ".b1", {h}, group);
    p.w2 = add_weight(store, prefix + ".w2", h, d, group, rng);
    p.b2 = add_zeros(store, prefix + ".b2", {d}, group);
    return p;
}

/// linear -> GELU -> linear, row by row.
template <typename T>
Var feed_forward(Graph<T>& g, const ParameterStore<T>& store, const FeedForwardParams& p, Var x,
                 GeluForm form = GeluForm::exact)
{
    auto bind = [&](ParamId id) { return g.param(store[id]); };
    const Var h = ops::gelu(g, ops::linear(g, x, bind(p.w1), bind(p.b1)), form);
    return ops::linear(g, h, bind(p.w2), bind(p.b2));
}

}  // namespace mugat::blocks
