#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "lungcrct/tensor.hpp"

namespace lungcrct {

/// One value in a define-by-run graph. Interior nodes own the closure that
/// pushes their gradient into their inputs.
struct Node {
    Tensor value;
    Tensor grad;  // allocated on first accumulation
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward_fn;
    bool requires_grad = false;

    /// Gradient buffer, zero-initialised to the value's shape on first use.
    Tensor& grad_buffer();
    bool has_grad() const { return !grad.empty(); }
};

/// Shared handle to a graph node. Copying a Var aliases the same node.
class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    std::size_t size() const { return node_->value.size(); }
    bool requires_grad() const { return node_->requires_grad; }

    /// Accumulated gradient, or a zero tensor if nothing reached this node.
    Tensor grad() const;
    void zero_grad();

    const std::shared_ptr<Node>& node() const { return node_; }
    bool valid() const { return static_cast<bool>(node_); }

private:
    std::shared_ptr<Node> node_;
};

inline Var parameter(Tensor value) { return Var(std::move(value), true); }
inline Var constant(Tensor value) { return Var(std::move(value), false); }

/// Leaf carrying a copy of v's value with no route back into v's graph.
Var detach(const Var& v);

/// Builds a result node. `fn` runs during backward only when some input
/// requires a gradient.
Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> fn);

/// Reverse-mode sweep from a scalar root. Gradients accumulate into every
/// reachable node that requires one; each node is visited once.
void backward(const Var& root);

}  // namespace lungcrct
