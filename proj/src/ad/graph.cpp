#include "umsn/ad/graph.hpp"

#include <algorithm>
#include <unordered_set>

namespace umsn::ad {

namespace {
std::atomic<std::uint64_t> g_next_id{1};
}

void Node::accumulate(const Tensor& g) {
    if (grad.empty()) grad = Tensor(value.shape());
    const real* src = g.data();
    real* dst = grad.data();
    const std::int64_t n = grad.size();
    for (std::int64_t i = 0; i < n; ++i) dst[i] += src[i];
}

Tensor& Node::grad_buffer() {
    if (grad.empty()) grad = Tensor(value.shape());
    return grad;
}

NodePtr make_node(Tensor value, std::vector<NodePtr> parents, std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    bool needs = false;
    for (const auto& p : parents) needs = needs || (p && p->requires_grad);
    n->requires_grad = needs;
    if (needs) {
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    return n;
}

Var Var::leaf(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
}

void Var::backward() const {
    require(n_ != nullptr, "backward on empty Var");
    require(n_->value.size() == 1, "backward requires a scalar root");
    if (!n_->requires_grad) return;

    // Collect the reachable subgraph; ids increase along creation order, so a
    // descending-id sweep is a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{n_.get()};
    seen.insert(n_.get());
    while (!stack.empty()) {
        Node* cur = stack.back();
        stack.pop_back();
        order.push_back(cur);
        for (const auto& p : cur->parents) {
            if (p && p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->id > b->id; });

    n_->grad = Tensor(n_->value.shape(), 1.0);
    for (Node* node : order) {
        if (node->backprop && !node->grad.empty()) node->backprop(*node);
    }
}

}  // namespace umsn::ad
