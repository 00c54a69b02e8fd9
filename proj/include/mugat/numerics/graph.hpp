#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "mugat/numerics/parameter.hpp"
#include "mugat/numerics/tensor.hpp"

namespace mugat {

/// Handle to a node of a Graph.
struct Var {
    std::size_t id = 0;
};

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<RowMatrix<T>> as_matrix(Tensor<T>& t)
{
    return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

template <typename T>
Eigen::Map<const RowMatrix<T>> as_matrix(const Tensor<T>& t)
{
    return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

template <typename T>
void ensure_finite(const Tensor<T>& t, const char* op)
{
    if (!t.all_finite()) {
        throw NumericError(std::string("non-finite value produced by ") + op + " " + shape_string(t.shape()));
    }
}

/// Reverse-mode tape. Nodes are appended in evaluation order, so reverse
/// creation order is a valid topological order for the backward sweep.
/// A graph is built for one loss and thrown away; it is not thread-safe but
/// independent graphs over the same parameters can run concurrently.
template <typename T>
class Graph {
public:
    using Backward = std::function<void(Graph&)>;

    Graph() = default;
    /// With `record` false no node needs a gradient: parameters bind as
    /// constants and no backward closures are kept.
    explicit Graph(bool record) : record_(record) {}

    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool needs_grad = false;
        Backward backward;
        const Parameter<T>* param = nullptr;
        const char* op = "";
    };

    Var constant(Tensor<T> value)
    {
        ensure_finite(value, "constant");
        return push("constant", std::move(value), false, nullptr);
    }

    /// Binds a parameter as a leaf. Binding the same parameter twice returns
    /// the same node, so its gradient accumulates in one place.
    Var param(const Parameter<T>& p)
    {
        auto it = bound_.find(&p);
        if (it != bound_.end()) return it->second;
        Var v = push("param", p.value, record_ && p.trainable, nullptr);
        nodes_[v.id].param = &p;
        bound_.emplace(&p, v);
        return v;
    }

    Var push(const char* op, Tensor<T> value, bool needs_grad, Backward backward)
    {
        Node n;
        n.value = std::move(value);
        n.needs_grad = needs_grad;
        n.backward = needs_grad ? std::move(backward) : Backward{};
        n.op = op;
        nodes_.push_back(std::move(n));
        return Var{nodes_.size() - 1};
    }

    const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
    bool needs_grad(Var v) const { return nodes_.at(v.id).needs_grad; }
    bool has_grad(Var v) const { return !nodes_.at(v.id).grad.empty(); }

    /// Gradient buffer of a node, allocated as zeros on first touch.
    Tensor<T>& grad(Var v)
    {
        Node& n = nodes_.at(v.id);
        if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
        return n.grad;
    }

    void backward(Var loss)
    {
        if (value(loss).size() != 1) {
            throw ShapeError("backward needs a scalar loss, got " + shape_string(value(loss).shape()));
        }
        grad(loss)[0] = T(1);
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.needs_grad || n.grad.empty() || !n.backward) continue;
            n.backward(*this);
        }
    }

    /// Visits every bound trainable parameter with its gradient (zeros when
    /// the loss did not reach it).
    template <typename F>
    void for_each_param_grad(F&& f)
    {
        for (auto& [param, var] : bound_) {
            if (!param->trainable) continue;
            f(*param, grad(var));
        }
    }

    std::size_t size() const noexcept { return nodes_.size(); }
    bool recording() const noexcept { return record_; }
    const Node& node(Var v) const { return nodes_.at(v.id); }

private:
    std::vector<Node> nodes_;
    std::unordered_map<const Parameter<T>*, Var> bound_;
    bool record_ = true;
};

}  // namespace mugat
