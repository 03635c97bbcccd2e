#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "umsn/core/tensor.hpp"

namespace umsn::ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of the reverse-mode tape. Nodes are created in program order;
/// the creation id gives a valid topological order for backward.
struct Node {
    Tensor value;
    Tensor grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::uint64_t id = 0;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backprop;  // reads this->grad, accumulates into parents

    void accumulate(const Tensor& g);
    Tensor& grad_buffer();
};

/// Value-semantics handle to a graph node.
class Var {
public:
    Var() = default;

    static Var leaf(Tensor value, bool requires_grad);
    static Var constant(Tensor value) { return leaf(std::move(value), false); }

    bool defined() const { return static_cast<bool>(n_); }
    const Tensor& value() const { return n_->value; }
    Tensor& value() { return n_->value; }
    const Tensor& grad() const { return n_->grad; }
    bool requires_grad() const { return n_ && n_->requires_grad; }
    bool has_grad() const { return n_ && !n_->grad.empty(); }
    void zero_grad() { n_->grad = Tensor(); }

    /// Runs reverse accumulation from this (scalar) node with seed gradient 1.
    void backward() const;

    NodePtr node() const { return n_; }
    explicit Var(NodePtr n) : n_(std::move(n)) {}

    /// Overwrites the stored value in place (optimizer updates on leaves).
    void set_value(Tensor v) { n_->value = std::move(v); }

private:
    NodePtr n_;
};

NodePtr make_node(Tensor value, std::vector<NodePtr> parents, std::function<void(Node&)> backprop);

}  // namespace umsn::ad
