#include "lungcrct/autograd.hpp"

#include <unordered_set>

#include "lungcrct/errors.hpp"

namespace lungcrct {

Tensor& Node::grad_buffer() {
    if (grad.empty()) grad = Tensor(value.shape(), 0.0);
    return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

Tensor Var::grad() const {
    if (node_->has_grad()) return node_->grad;
    return Tensor(node_->value.shape(), 0.0);
}

void Var::zero_grad() { node_->grad = Tensor(); }

Var detach(const Var& v) { return constant(v.value()); }

Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    for (const auto& in : inputs) {
        node->requires_grad = node->requires_grad || in.requires_grad();
        node->inputs.push_back(in.node());
    }
    if (node->requires_grad) node->backward_fn = std::move(fn);
    else node->inputs.clear();
    return Var(std::move(node));
}

void backward(const Var& root) {
    if (root.size() != 1)
        throw ShapeError("backward: root must be scalar, got " + shape_str(root.shape()));
    if (!root.requires_grad()) return;

    // Iterative post-order DFS gives a topological order of the subgraph.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.node()->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward_fn && node->has_grad()) node->backward_fn(*node);
    }
}

}  // namespace lungcrct
