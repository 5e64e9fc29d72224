// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensor with a define-by-run tape for reverse-mode
// differentiation. A Tensor is a cheap handle; copies share storage. Values
// are never modified after an op produces them, only the grad slot is. The
// exception is leaf parameters, which optimizers update in place between
// iterations.
#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "swgan/error.hpp"

namespace swgan {

inline std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

namespace detail {

template <class T>
struct TensorImpl;

template <class T>
using ImplPtr = std::shared_ptr<TensorImpl<T>>;

// One recorded operation. `backward` reads the output's grad and accumulates
// into the grads of `inputs` that require it.
template <class T>
struct GradNode {
    const char* name = "";
    std::vector<ImplPtr<T>> inputs;
    std::function<void(const TensorImpl<T>& out)> backward;
};

template <class T>
struct TensorImpl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::shared_ptr<GradNode<T>> producer;

    std::vector<T>& ensure_grad() {
        if (!has_grad) {
            grad.assign(data.size(), T(0));
            has_grad = true;
        }
        return grad;
    }
};

inline thread_local bool grad_enabled = true;

}  // namespace detail

// Disables tape recording for the current thread while alive.
class NoGradGuard {
public:
    NoGradGuard() noexcept : previous_(detail::grad_enabled) { detail::grad_enabled = false; }
    ~NoGradGuard() { detail::grad_enabled = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

inline bool grad_mode_enabled() noexcept { return detail::grad_enabled; }

template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false)
        : impl_(std::make_shared<detail::TensorImpl<T>>()) {
        impl_->data.assign(shape_numel(shape), fill);
        impl_->shape = std::move(shape);
        impl_->requires_grad = requires_grad;
    }

    Tensor(Shape shape, std::vector<T> data, bool requires_grad = false)
        : impl_(std::make_shared<detail::TensorImpl<T>>()) {
        if (shape_numel(shape) != data.size()) {
            throw ShapeError("tensor shape " + to_string(shape) + " holds " +
                             std::to_string(shape_numel(shape)) + " elements but " +
                             std::to_string(data.size()) + " values were given");
        }
        impl_->shape = std::move(shape);
        impl_->data = std::move(data);
        impl_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), T(1)); }
    static Tensor full(Shape shape, T value) { return Tensor(std::move(shape), value); }
    static Tensor scalar(T value) { return Tensor(Shape{1}, value); }
    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape(), T(0)); }

    bool defined() const noexcept { return static_cast<bool>(impl_); }

    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
    std::size_t numel() const { return impl_->data.size(); }

    std::span<const T> data() const { return impl_->data; }
    // Writable view. Only meant for leaves (parameters, inputs being filled).
    std::span<T> mutable_data() { return impl_->data; }
    T at(std::size_t i) const { return impl_->data.at(i); }

    T item() const {
        if (numel() != 1) {
            throw ShapeError("item() needs a single-element tensor, got " + to_string(shape()));
        }
        return impl_->data[0];
    }

    bool requires_grad() const { return impl_->requires_grad; }

    Tensor& set_requires_grad(bool value) {
        if (!is_leaf()) {
            throw ValueError("requires_grad can only be changed on leaf tensors");
        }
        impl_->requires_grad = value;
        return *this;
    }

    bool is_leaf() const { return !impl_->producer; }

    bool has_grad() const { return impl_->has_grad; }
    std::span<const T> grad() const {
        if (!impl_->has_grad) {
            throw ValueError("tensor has no gradient");
        }
        return impl_->grad;
    }
    std::span<T> mutable_grad() { return impl_->ensure_grad(); }
    void clear_grad() {
        impl_->grad.clear();
        impl_->has_grad = false;
    }

    // Fresh leaf holding a copy of the values; never requires grad.
    Tensor detach() const { return Tensor(shape(), impl_->data); }

    // Same storage reinterpreted is not supported; this copies.
    Tensor clone() const { return Tensor(shape(), impl_->data, requires_grad() && is_leaf()); }

    const char* producer_name() const { return impl_->producer ? impl_->producer->name : "leaf"; }

    bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }

    // Reverse sweep from this scalar. Leaf grads accumulate across calls;
    // interior grads are reset on every call.
    void backward() const;

    const detail::ImplPtr<T>& impl() const noexcept { return impl_; }

    // Builds the result of an op, attaching `backward` when any input is
    // being tracked.
    static Tensor make_result(Shape shape, std::vector<T> data, const char* name,
                              std::vector<Tensor> inputs,
                              std::function<void(const detail::TensorImpl<T>&)> backward) {
        Tensor out(std::move(shape), std::move(data));
        if (!detail::grad_enabled) {
            return out;
        }
        const bool track = std::any_of(inputs.begin(), inputs.end(),
                                       [](const Tensor& t) { return t.requires_grad(); });
        if (!track) {
            return out;
        }
        auto node = std::make_shared<detail::GradNode<T>>();
        node->name = name;
        node->inputs.reserve(inputs.size());
        for (auto& in : inputs) {
            node->inputs.push_back(in.impl_);
        }
        node->backward = std::move(backward);
        out.impl_->producer = std::move(node);
        out.impl_->requires_grad = true;
        return out;
    }

private:
    detail::ImplPtr<T> impl_;
};

template <class T>
void Tensor<T>::backward() const {
    for (auto d : shape()) {
        if (d != 1) {
            throw ShapeError("backward() needs a scalar loss (all dims 1), got " + to_string(shape()));
        }
    }
    if (!requires_grad()) {
        throw ValueError("backward() called on a tensor that does not require grad");
    }

    // Iterative post-order DFS; reverse of it is a valid topological order.
    std::vector<detail::TensorImpl<T>*> order;
    std::unordered_set<const detail::TensorImpl<T>*> visited;
    std::vector<std::pair<detail::TensorImpl<T>*, std::size_t>> stack;
    stack.emplace_back(impl_.get(), 0);
    visited.insert(impl_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        const auto* producer = node->producer.get();
        if (producer && next < producer->inputs.size()) {
            auto* child = producer->inputs[next++].get();
            if (child->requires_grad && !visited.count(child)) {
                visited.insert(child);
                stack.emplace_back(child, 0);
            }
            continue;
        }
        order.push_back(node);
        stack.pop_back();
    }

    for (auto* node : order) {
        if (node->producer) {
            node->grad.assign(node->data.size(), T(0));
            node->has_grad = true;
        }
    }
    impl_->ensure_grad()[0] += T(1);

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        auto* node = *it;
        if (node->producer) {
            node->producer->backward(*node);
        }
    }
}

}  // namespace swgan
