#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mugat/numerics/rng.hpp"
#include "mugat/numerics/tensor.hpp"

namespace mugat {

/// Which part of the model owns a parameter. Training regimes switch groups on
/// and off wholesale.
enum class ParamGroup : std::uint8_t { encoder, adapter, decoder };

inline std::string_view to_string(ParamGroup g)
{
    switch (g) {
    case ParamGroup::encoder: return "encoder";
    case ParamGroup::adapter: return "adapter";
    case ParamGroup::decoder: return "decoder";
    }
    return "?";
}

template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    ParamGroup group = ParamGroup::decoder;
    bool trainable = true;
};

/// Index of a parameter inside its store. Stable across copies of the store.
struct ParamId {
    std::size_t index = 0;
};

/// Ordered, name-unique collection of parameters. Copying the store copies
/// every tensor, so a model built on it is a plain value.
template <typename T>
class ParameterStore {
public:
    ParamId add(std::string name, Tensor<T> value, ParamGroup group)
    {
        if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
        index_.emplace(name, params_.size());
        params_.push_back(Parameter<T>{std::move(name), std::move(value), group, true});
        return ParamId{params_.size() - 1};
    }

    Parameter<T>& operator[](ParamId id) { return params_.at(id.index); }
    const Parameter<T>& operator[](ParamId id) const { return params_.at(id.index); }

    const Parameter<T>* find(const std::string& name) const
    {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : &params_[it->second];
    }
    Parameter<T>* find(const std::string& name)
    {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : &params_[it->second];
    }

    std::vector<Parameter<T>>& all() noexcept { return params_; }
    const std::vector<Parameter<T>>& all() const noexcept { return params_; }
    std::size_t size() const noexcept { return params_.size(); }

    std::size_t scalar_count() const
    {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.value.size();
        return n;
    }

    void set_trainable(ParamGroup group, bool trainable)
    {
        for (auto& p : params_) {
            if (p.group == group) p.trainable = trainable;
        }
    }

private:
    std::vector<Parameter<T>> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
Tensor<T> normal_tensor(Shape shape, double stddev, std::mt19937_64& rng)
{
    Tensor<T> t(std::move(shape));
    for (auto& v : t.values()) v = static_cast<T>(stddev * standard_normal(rng));
    return t;
}

}  // namespace mugat
