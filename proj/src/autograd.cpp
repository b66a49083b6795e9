#include "featsim/autograd.hpp"

#include <atomic>
#include <unordered_set>

#include "featsim/error.hpp"

namespace featsim {

namespace {
thread_local bool t_grad_enabled = true;
std::atomic<std::uint64_t> g_next_id{1};
}  // namespace

std::uint64_t next_node_id() { return g_next_id.fetch_add(1, std::memory_order_relaxed); }

Tensor& Node::grad_buffer() {
    if (grad.numel() != value.numel()) grad = Tensor::zeros(value.shape());
    return grad;
}

Tensor* grad_sink(const NodePtr& parent) {
    if (!parent->requires_grad) return nullptr;
    return &parent->grad_buffer();
}

Tensor Var::grad() const {
    if (node_->grad.numel() == node_->value.numel()) return node_->grad;
    return Tensor::zeros(node_->value.shape());
}

Var constant(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->id = next_node_id();
    return Var(std::move(n));
}

Var leaf(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    n->id = next_node_id();
    return Var(std::move(n));
}

Var make_result(Tensor value, std::vector<Var> inputs, BackwardFn fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->id = next_node_id();
    n->is_leaf = false;
    bool needs = false;
    if (t_grad_enabled)
        for (const auto& in : inputs) needs = needs || in.requires_grad();
    if (needs) {
        n->requires_grad = true;
        n->parents.reserve(inputs.size());
        for (auto& in : inputs) n->parents.push_back(in.node());
        n->backward_fn = std::move(fn);
    }
    return Var(std::move(n));
}

void backward(const Var& loss) {
    FEATSIM_REQUIRE(static_cast<bool>(loss), "backward on an empty Var");
    FEATSIM_REQUIRE(loss.numel() == 1, "backward requires a single-element loss, got shape " + shape_to_string(loss.shape()));
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS gives a topological order (inputs first).
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (Node* n : order)
        if (!n->is_leaf) n->grad = Tensor::zeros(n->value.shape());
    loss.node()->grad_buffer()[0] += 1.0f;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn(n->grad, n->parents);
    }
    // Release intermediate buffers; leaves keep their accumulated gradients.
    for (Node* n : order)
        if (!n->is_leaf && n != loss.node().get()) n->grad = Tensor();
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Parameter::Parameter(std::string name, Tensor value) : name_(std::move(name)), node_(std::make_shared<Node>()) {
    node_->grad = Tensor::zeros(value.shape());
    node_->value = std::move(value);
    node_->requires_grad = true;
    node_->id = next_node_id();
}

Parameter::Parameter(const Parameter& other) : name_(other.name_) {
    if (!other.node_) return;
    node_ = std::make_shared<Node>();
    node_->value = other.node_->value;
    node_->grad = Tensor::zeros(other.node_->value.shape());
    node_->requires_grad = other.node_->requires_grad;
    node_->id = next_node_id();
}

Parameter& Parameter::operator=(const Parameter& other) {
    if (this != &other) *this = Parameter(other);
    return *this;
}

void Parameter::zero_grad() { node_->grad_buffer().fill(0.0f); }

}  // namespace featsim
