#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace sggec {

struct TensorError : std::runtime_error {
    explicit TensorError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {
inline std::atomic<std::uint64_t>& node_counter() {
    static std::atomic<std::uint64_t> counter{0};
    return counter;
}
inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

// RAII switch that disables graph recording on the current thread.
class NoGradGuard {
public:
    NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

inline std::string shape_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

template <typename T>
struct TensorNode {
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::uint64_t id = 0;
    std::vector<std::shared_ptr<TensorNode<T>>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(TensorNode<T>&)> backprop;

    void ensure_grad() {
        if (grad.empty()) {
            grad.assign(value.size(), T(0));
        }
    }
};

// Value-semantics handle onto a node of the differentiation graph.
// Node ids increase in creation order, so descending id is a valid
// reverse-topological order for the backward sweep.
template <typename T>
class TensorT {
public:
    using Scalar = T;

    TensorT() = default;

    static TensorT zeros(std::vector<int> shape) {
        return filled(std::move(shape), T(0));
    }

    static TensorT filled(std::vector<int> shape, T value) {
        TensorT t;
        t.node_ = fresh_node(std::move(shape));
        t.node_->value.assign(t.numel_from_shape(t.node_->shape), value);
        return t;
    }

    static TensorT from_data(std::vector<int> shape, std::vector<T> data) {
        TensorT t;
        t.node_ = fresh_node(std::move(shape));
        const std::size_t n = t.numel_from_shape(t.node_->shape);
        if (data.size() != n) {
            throw TensorError("tensor data size " + std::to_string(data.size()) +
                              " does not match shape " + shape_string(t.node_->shape));
        }
        t.node_->value = std::move(data);
        return t;
    }

    static TensorT scalar(T value) { return from_data({1}, {value}); }

    bool defined() const { return node_ != nullptr; }

    const std::vector<int>& shape() const { return node_->shape; }

    std::size_t numel() const { return node_->value.size(); }

    int rows() const {
        check_rank(2, "rows()");
        return node_->shape[0];
    }

    int cols() const {
        check_rank(2, "cols()");
        return node_->shape[1];
    }

    int dim(std::size_t i) const { return node_->shape.at(i); }

    std::vector<T>& data() { return node_->value; }
    const std::vector<T>& data() const { return node_->value; }

    T item() const {
        if (numel() != 1) {
            throw TensorError("item() requires a scalar tensor, shape is " +
                              shape_string(node_->shape));
        }
        return node_->value[0];
    }

    std::vector<T>& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    const std::vector<T>& grad() const {
        node_->ensure_grad();
        return node_->grad;
    }
    bool has_grad() const { return !node_->grad.empty(); }

    void set_requires_grad(bool v) { node_->requires_grad = v; }
    bool requires_grad() const { return node_ && node_->requires_grad; }

    void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }

    std::shared_ptr<TensorNode<T>> node() const { return node_; }

    // Registers `out` as the result of an op over `inputs`. The backward
    // callback only gets wired when recording is on and some input needs it.
    static void record(TensorT& out, std::initializer_list<const TensorT*> inputs,
                       std::function<void(TensorNode<T>&)> backprop) {
        bool needs = false;
        for (const TensorT* in : inputs) {
            if (in->defined() && in->node_->requires_grad) {
                needs = true;
                break;
            }
        }
        if (!needs || !grad_enabled()) {
            return;
        }
        out.node_->requires_grad = true;
        out.node_->parents.reserve(inputs.size());
        for (const TensorT* in : inputs) {
            out.node_->parents.push_back(in->node_);
        }
        out.node_->backprop = std::move(backprop);
    }

private:
    static std::shared_ptr<TensorNode<T>> fresh_node(std::vector<int> shape) {
        for (int d : shape) {
            if (d <= 0) {
                throw TensorError("tensor dimensions must be positive, got " +
                                  shape_string(shape));
            }
        }
        auto node = std::make_shared<TensorNode<T>>();
        node->shape = std::move(shape);
        node->id = detail::node_counter().fetch_add(1, std::memory_order_relaxed) + 1;
        return node;
    }

    std::size_t numel_from_shape(const std::vector<int>& shape) const {
        std::size_t n = 1;
        for (int d : shape) n *= static_cast<std::size_t>(d);
        return n;
    }

    void check_rank(std::size_t rank, const char* what) const {
        if (node_->shape.size() != rank) {
            throw TensorError(std::string(what) + " on tensor of shape " +
                              shape_string(node_->shape));
        }
    }

    std::shared_ptr<TensorNode<T>> node_;
};

// Reverse-mode sweep from a scalar loss. Grads accumulate, so callers that
// want fresh gradients must zero them first.
template <typename T>
void backward(const TensorT<T>& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw TensorError("backward() requires a scalar loss tensor");
    }
    auto root = loss.node();
    if (!root->requires_grad) {
        throw TensorError("backward() called on a tensor with no recorded graph");
    }

    // collect reachable nodes
    std::vector<std::shared_ptr<TensorNode<T>>> order;
    std::unordered_set<const TensorNode<T>*> seen;
    std::vector<std::shared_ptr<TensorNode<T>>> stack{root};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto node = stack.back();
        stack.pop_back();
        order.push_back(node);
        for (auto& parent : node->parents) {
            if (parent->requires_grad && seen.insert(parent.get()).second) {
                stack.push_back(parent);
            }
        }
    }
    std::sort(order.begin(), order.end(),
              [](const auto& a, const auto& b) { return a->id > b->id; });

    root->ensure_grad();
    root->grad[0] += T(1);
    for (auto& node : order) {
        if (node->backprop) {
            node->ensure_grad();
            node->backprop(*node);
        }
    }
}

using Tensor = TensorT<float>;

}  // namespace sggec
