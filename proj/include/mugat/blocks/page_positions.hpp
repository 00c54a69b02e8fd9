#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "mugat/blocks/attention.hpp"

namespace mugat::blocks {

inline constexpr std::size_t kPageSlots = 3;  // prev, curr, next

/// inter_page: [3 x d], one row per slot. intra_page: [P x d], one row per
/// position inside a page, shared by the three pages.
struct PagePositionalEncodings {
    ParamId inter_page;
    ParamId intra_page;
};

template <typename T>
PagePositionalEncodings add_page_positions_params(ParameterStore<T>& store, const std::string& prefix, std::size_t pages_len,
                                                  std::size_t d, ParamGroup group, std::mt19937_64& rng)
{
    PagePositionalEncodings pe;
    pe.inter_page = store.add(prefix + ".inter_page", normal_tensor<T>({kPageSlots, d}, kInitStddev, rng), group);
    pe.intra_page = store.add(prefix + ".intra_page", normal_tensor<T>({pages_len, d}, kInitStddev, rng), group);
    return pe;
}

/// [prev; curr; next] with inter_page[k] added to every row of page k and
/// intra_page[p] added to row p of every page.
template <typename T>
Var add_page_positions(Graph<T>& g, const ParameterStore<T>& store, const PagePositionalEncodings& pe, Var prev, Var curr,
                       Var next)
{
    const Shape& s = g.value(curr).shape();
    if (g.value(prev).shape() != s || g.value(next).shape() != s || s.size() != 2) {
        throw ShapeError("add_page_positions: prev " + shape_string(g.value(prev).shape()) + ", curr " + shape_string(s) +
                         ", next " + shape_string(g.value(next).shape()));
    }
    const Tensor<T>& inter = store[pe.inter_page].value;
    const Tensor<T>& intra = store[pe.intra_page].value;
    const std::size_t p = s[0];
    if (inter.rows() != kPageSlots || inter.cols() != s[1] || intra.rows() != p || intra.cols() != s[1]) {
        throw ShapeError("add_page_positions: encodings " + shape_string(inter.shape()) + " and " + shape_string(intra.shape()) +
                         " do not fit pages " + shape_string(s));
    }
    std::vector<std::size_t> slot(kPageSlots * p), pos(kPageSlots * p);
    for (std::size_t k = 0; k < kPageSlots; ++k) {
        for (std::size_t i = 0; i < p; ++i) {
            slot[k * p + i] = k;
            pos[k * p + i] = i;
        }
    }
    const Var pages = ops::concat_rows(g, {prev, curr, next});
    const Var enc = ops::add(g, ops::gather_rows(g, g.param(store[pe.inter_page]), slot),
                             ops::gather_rows(g, g.param(store[pe.intra_page]), pos));
    return ops::add(g, pages, enc);
}

}  // namespace mugat::blocks
