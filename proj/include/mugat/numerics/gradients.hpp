#pragma once

#include <map>
#include <string>

#include "mugat/numerics/graph.hpp"

namespace mugat {

/// Runs the backward sweep from `loss` and returns d loss / d p for every
/// trainable parameter in `store` (zeros for parameters the loss never
/// touched). Frozen parameters are omitted.
template <typename T>
std::map<std::string, Tensor<T>> gradients(Graph<T>& g, Var loss, const ParameterStore<T>& store)
{
    g.backward(loss);
    std::map<std::string, Tensor<T>> out;
    for (const auto& p : store.all()) {
        if (p.trainable) out.emplace(p.name, Tensor<T>(p.value.shape()));
    }
    g.for_each_param_grad([&](const Parameter<T>& p, const Tensor<T>& grad) {
        auto it = out.find(p.name);
        if (it == out.end()) return;
        if (!grad.all_finite()) throw NumericError("non-finite gradient for parameter " + p.name);
        it->second = grad;
    });
    return out;
}

}  // namespace mugat
