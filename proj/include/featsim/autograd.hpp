#pragma once

// Tape-free reverse-mode differentiation. Every op returns a Var whose node
// keeps its inputs alive and a closure that pushes the node's gradient into
// them. backward() walks the reachable graph in reverse topological order.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "featsim/tensor.hpp"

namespace featsim {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// Propagates `grad_out` (the node's accumulated gradient) into parents.
using BackwardFn = std::function<void(const Tensor& grad_out, std::span<const NodePtr> parents)>;

struct Node {
    Tensor value;
    Tensor grad;  // empty until first accumulation
    bool requires_grad = false;
    bool is_leaf = true;
    std::uint64_t id = 0;
    std::vector<NodePtr> parents;
    BackwardFn backward_fn;

    /// Gradient buffer for accumulation, allocated as zeros on first use.
    Tensor& grad_buffer();
};

/// Gradient accumulator of a parent, or nullptr when it does not take gradients.
Tensor* grad_sink(const NodePtr& parent);

class Var {
public:
    Var() = default;
    explicit Var(NodePtr node) : node_(std::move(node)) {}

    const Tensor& value() const { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    std::size_t numel() const { return node_->value.numel(); }
    bool requires_grad() const { return node_->requires_grad; }
    /// Gradient after backward(); zeros if none reached this node.
    Tensor grad() const;

    const NodePtr& node() const { return node_; }
    explicit operator bool() const { return static_cast<bool>(node_); }

private:
    NodePtr node_;
};

/// Wraps a tensor as a graph input that never receives gradients.
Var constant(Tensor value);
/// Graph input that accumulates gradients (used by gradient checks).
Var leaf(Tensor value);

/// Builds an op result. When no input requires gradients (or grad mode is
/// off) the closure and parent links are dropped.
Var make_result(Tensor value, std::vector<Var> inputs, BackwardFn fn);

/// Backpropagates from a single-element loss. Leaf gradients accumulate
/// across calls; intermediate gradients are recomputed each call.
void backward(const Var& loss);

bool grad_enabled();

/// Disables graph recording for the current thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// A named trainable tensor. Copies are deep: the copy gets its own value,
/// a zeroed gradient and a fresh id.
class Parameter {
public:
    Parameter() = default;
    Parameter(std::string name, Tensor value);
    Parameter(const Parameter& other);
    Parameter& operator=(const Parameter& other);
    Parameter(Parameter&&) noexcept = default;
    Parameter& operator=(Parameter&&) noexcept = default;

    const std::string& name() const { return name_; }
    std::uint64_t id() const { return node_->id; }
    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    Tensor& mutable_grad() { return node_->grad; }

    /// Frozen parameters act as constants in any graph built from them.
    void set_trainable(bool trainable) { node_->requires_grad = trainable; }
    bool trainable() const { return node_->requires_grad; }

    void zero_grad();
    Var var() const { return Var(node_); }

private:
    std::string name_;
    NodePtr node_;
};

std::uint64_t next_node_id();

}  // namespace featsim
