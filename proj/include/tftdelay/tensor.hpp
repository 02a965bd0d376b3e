#pragma once

// Dense double-precision tensors with a reverse-mode differentiation graph.
//
// Every op that consumes a tensor with requires_grad=true records a node
// holding its inputs and a local gradient rule. Node creation order is a
// topological order of the computation, so backward() simply walks the
// reachable nodes in reverse creation order. The graph is released after
// backward() unless retain_graph is requested.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace tftdelay {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

inline std::size_t numel_of(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(Node&)>;

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until something is accumulated
    bool requires_grad = false;
    bool is_leaf = true;
    std::uint64_t seq = 0;
    std::vector<NodePtr> inputs;
    BackwardFn backward;

    // Accumulation buffer for this node, or nullptr when it takes no gradient.
    double* grad_sink() {
        if (!requires_grad) return nullptr;
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad.data();
    }
};

inline std::uint64_t next_seq() {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
}

inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode(); }

// Disables graph recording for its lifetime (inference, optimizer updates).
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
    ~NoGradGuard() { detail::grad_mode() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

class Tensor {
public:
    Tensor() = default;

    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
        : node_(std::make_shared<detail::Node>()) {
        if (numel_of(shape) != values.size()) {
            throw ShapeError("tensor shape " + to_string(shape) + " holds " +
                             std::to_string(numel_of(shape)) + " values, got " +
                             std::to_string(values.size()));
        }
        node_->shape = std::move(shape);
        node_->value = std::move(values);
        node_->requires_grad = requires_grad;
        node_->seq = detail::next_seq();
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        const auto n = numel_of(shape);
        return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
    }

    static Tensor full(Shape shape, double v, bool requires_grad = false) {
        const auto n = numel_of(shape);
        return Tensor(std::move(shape), std::vector<double>(n, v), requires_grad);
    }

    static Tensor scalar(double v, bool requires_grad = false) {
        return Tensor(Shape{}, {v}, requires_grad);
    }

    static Tensor from_vector(std::vector<double> v, bool requires_grad = false) {
        Shape s{v.size()};
        return Tensor(std::move(s), std::move(v), requires_grad);
    }

    // Result of a recorded op. Records inputs and the gradient rule only when
    // grad mode is on and some input requires a gradient.
    static Tensor from_op(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs,
                          detail::BackwardFn backward) {
        Tensor out(std::move(shape), std::move(values));
        if (!grad_enabled()) return out;
        const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                       [](const Tensor& t) { return t.requires_grad(); });
        if (!needs) return out;
        out.node_->requires_grad = true;
        out.node_->is_leaf = false;
        out.node_->inputs.reserve(inputs.size());
        for (const auto& t : inputs) out.node_->inputs.push_back(t.node_);
        out.node_->backward = std::move(backward);
        return out;
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->value.size(); }

    std::size_t dim(int axis) const {
        return node_->shape.at(normalize_axis(axis));
    }

    std::size_t normalize_axis(int axis) const {
        const int r = static_cast<int>(rank());
        const int a = axis < 0 ? axis + r : axis;
        if (a < 0 || a >= r) {
            throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                             to_string(shape()));
        }
        return static_cast<std::size_t>(a);
    }

    std::span<const double> values() const { return node_->value; }
    // Direct write access for initialization and optimizer updates on leaves.
    std::span<double> mutable_values() { return node_->value; }

    double at(std::size_t i) const { return node_->value.at(i); }

    double item() const {
        if (numel() != 1) {
            throw ShapeError("item() on tensor of shape " + to_string(shape()));
        }
        return node_->value[0];
    }

    bool requires_grad() const { return node_ && node_->requires_grad; }
    bool is_leaf() const { return node_->is_leaf; }

    void set_requires_grad(bool on) {
        node_->requires_grad = on;
        if (!on) node_->grad.clear();
    }

    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const double> grad() const { return node_->grad; }
    std::span<double> mutable_grad() { return node_->grad; }
    void zero_grad() { node_->grad.clear(); }

    // Copy of the values with no graph attached.
    Tensor detach() const { return Tensor(shape(), node_->value); }

    const detail::NodePtr& node() const { return node_; }

private:
    detail::NodePtr node_;
};

// Recorded operations reachable from a root, in creation (topological) order.
class Graph {
public:
    static Graph collect(const Tensor& root) {
        Graph g;
        if (!root.defined()) return g;
        std::unordered_set<const detail::Node*> seen;
        std::vector<detail::NodePtr> stack{root.node()};
        while (!stack.empty()) {
            auto n = std::move(stack.back());
            stack.pop_back();
            if (!n->backward || !seen.insert(n.get()).second) continue;
            for (const auto& in : n->inputs) {
                if (in->requires_grad) stack.push_back(in);
            }
            g.nodes_.push_back(std::move(n));
        }
        std::sort(g.nodes_.begin(), g.nodes_.end(),
                  [](const detail::NodePtr& a, const detail::NodePtr& b) { return a->seq < b->seq; });
        return g;
    }

    std::span<const detail::NodePtr> nodes() const { return nodes_; }

private:
    std::vector<detail::NodePtr> nodes_;
};

// Accumulates d(loss)/d(leaf) into every requires_grad leaf reachable from
// loss. Leaf gradients accumulate across calls until zero_grad().
inline void backward(const Tensor& loss, bool retain_graph = false) {
    if (loss.numel() != 1) {
        throw ShapeError("backward() needs a scalar loss, got shape " + to_string(loss.shape()));
    }
    if (!loss.requires_grad()) return;
    const Graph graph = Graph::collect(loss);
    loss.node()->grad_sink()[0] += 1.0;
    const auto nodes = graph.nodes();
    for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
        detail::Node& n = **it;
        if (!n.grad.empty()) n.backward(n);
    }
    for (const auto& n : nodes) {
        n->grad.clear();
        n->grad.shrink_to_fit();
        if (!retain_graph) {
            n->backward = nullptr;
            n->inputs.clear();
        }
    }
}

}  // namespace tftdelay
