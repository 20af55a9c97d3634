#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "dnadiff/tensor.hpp"

namespace dnadiff::nn {

// Reverse-mode tape node. Every op returns a fresh node holding its value,
// the parent nodes, and a closure that scatters the node's gradient back
// into the parents. Graphs are rebuilt per batch.
template <typename S>
struct Node {
    Tensor<S> value;
    Tensor<S> grad;  // allocated lazily on first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    Tensor<S>& g() {
        if (grad.data.empty()) grad = Tensor<S>::zeros(value.shape);
        return grad;
    }
};

template <typename S>
using Var = std::shared_ptr<Node<S>>;

template <typename S>
Var<S> make_var(Tensor<S> value, bool requires_grad = false) {
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

template <typename S>
Var<S> constant(Tensor<S> value) {
    return make_var(std::move(value), false);
}

template <typename S>
Var<S> make_op_node(Tensor<S> value, std::vector<Var<S>> parents, std::function<void(Node<S>&)> backprop) {
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(value);
    bool needs = false;
    for (const auto& p : parents) needs = needs || p->requires_grad;
    n->requires_grad = needs;
    if (needs) {
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    return n;
}

// Backpropagate from a scalar root. Topological order via iterative DFS so
// deep graphs (per-step sampling chains are not differentiated, but training
// graphs over many layers are) cannot overflow the stack.
template <typename S>
void backward(const Var<S>& root) {
    if (root->value.numel() != 1) throw ShapeError("backward: root must be a scalar");
    std::vector<Node<S>*> order;
    std::unordered_set<Node<S>*> seen;
    struct Frame {
        Node<S>* node;
        size_t next_parent;
    };
    std::vector<Frame> stack;
    if (root->requires_grad) {
        stack.push_back({root.get(), 0});
        seen.insert(root.get());
    }
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            Node<S>* p = f.node->parents[f.next_parent++].get();
            if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }
    root->g()[0] = S(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<S>* n = *it;
        if (n->backprop) n->backprop(*n);
    }
}

}  // namespace dnadiff::nn
