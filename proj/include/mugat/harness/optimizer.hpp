#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mugat/model/checkpoint.hpp"
#include "mugat/numerics/parameter.hpp"

namespace mugat::harness {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// Adam with decoupled weight decay. One optimiser, one learning rate per
/// parameter group; frozen parameters are never touched.
template <typename T>
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

    std::uint64_t steps() const noexcept { return t_; }

    void step(ParameterStore<T>& store, const std::map<std::string, Tensor<T>>& grads, const std::map<ParamGroup, double>& lr)
    {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (auto& p : store.all()) {
            if (!p.trainable) continue;
            auto lr_it = lr.find(p.group);
            if (lr_it == lr.end()) {
                throw std::invalid_argument("optimizer: no learning rate for trainable group " + std::string(to_string(p.group)));
            }
            auto g_it = grads.find(p.name);
            if (g_it == grads.end()) throw std::invalid_argument("optimizer: no gradient for " + p.name);
            const Tensor<T>& g = g_it->second;
            auto& st = state_[p.name];
            if (st.m.empty()) {
                st.m = Tensor<T>(p.value.shape());
                st.v = Tensor<T>(p.value.shape());
            }
            const T a = static_cast<T>(lr_it->second);
            const T decay = static_cast<T>(1.0 - lr_it->second * cfg_.weight_decay);
            const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
            const T c1 = static_cast<T>(bc1), c2 = static_cast<T>(bc2), eps = static_cast<T>(cfg_.eps);
            for (std::size_t i = 0; i < p.value.size(); ++i) {
                st.m[i] = b1 * st.m[i] + (T(1) - b1) * g[i];
                st.v[i] = b2 * st.v[i] + (T(1) - b2) * g[i] * g[i];
                const T mhat = st.m[i] / c1;
                const T vhat = st.v[i] / c2;
                p.value[i] = p.value[i] * decay - a * mhat / (std::sqrt(vhat) + eps);
            }
            if (!p.value.all_finite()) throw NumericError("non-finite value after update of " + p.name);
        }
    }

    /// Moments as "optim.m.<name>" / "optim.v.<name>" tensors.
    void append_state(std::vector<model::NamedTensor>& out) const
    {
        for (const auto& [name, st] : state_) {
            out.push_back(model::NamedTensor::from("optim.m." + name, st.m));
            out.push_back(model::NamedTensor::from("optim.v." + name, st.v));
        }
    }

    void load_state(const model::Checkpoint& ckpt, std::uint64_t steps)
    {
        state_.clear();
        t_ = steps;
        const std::string pm = "optim.m.", pv = "optim.v.";
        for (const auto& t : ckpt.tensors) {
            if (t.name.rfind(pm, 0) == 0) state_[t.name.substr(pm.size())].m = t.to_tensor<T>();
            if (t.name.rfind(pv, 0) == 0) state_[t.name.substr(pv.size())].v = t.to_tensor<T>();
        }
        for (const auto& [name, st] : state_) {
            if (st.m.empty() || st.v.empty() || st.m.shape() != st.v.shape()) {
                throw model::CheckpointError("incomplete optimizer state for " + name);
            }
        }
    }

private:
    struct Moments {
        Tensor<T> m, v;
    };
    AdamWConfig cfg_;
    std::uint64_t t_ = 0;
    std::map<std::string, Moments> state_;
};

/// FNV-1a over the raw bytes of every parameter in `group`, in store order.
template <typename T>
std::uint64_t group_hash(const ParameterStore<T>& store, ParamGroup group)
{
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&](const void* data, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& p : store.all()) {
        if (p.group != group) continue;
        mix(p.name.data(), p.name.size());
        mix(p.value.data(), p.value.size() * sizeof(T));
    }
    return h;
}

}  // namespace mugat::harness
