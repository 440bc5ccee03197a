// SPDX-License-Identifier: Apache-2.0
#include "tsasan/tensor.hpp"

#include <algorithm>
#include <unordered_set>

namespace tsasan {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

std::string shape_str(const std::vector<long>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += " x ";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

long shape_numel(const std::vector<long>& s) {
    long n = 1;
    for (long d : s) {
        if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(s));
        n *= d;
    }
    return n;
}

Tensor Tensor::zeros(std::vector<long> shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<long> shape, double v, bool requires_grad) {
    long n = shape_numel(shape);
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->value.assign(static_cast<size_t>(n), v);
    node->requires_grad = requires_grad;
    return wrap(std::move(node));
}

Tensor Tensor::from_data(std::vector<long> shape, std::vector<double> data, bool requires_grad) {
    long n = shape_numel(shape);
    if (static_cast<size_t>(n) != data.size()) {
        throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
    }
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    node->requires_grad = requires_grad;
    return wrap(std::move(node));
}

Tensor Tensor::uniform(std::vector<long> shape, double lo, double hi, Rng& rng,
                       bool requires_grad) {
    long n = shape_numel(shape);
    std::vector<double> data(static_cast<size_t>(n));
    for (auto& v : data) v = rng.uniform(lo, hi);
    return from_data(std::move(shape), std::move(data), requires_grad);
}

const std::vector<double>& Tensor::grad() const {
    node_->ensure_grad();
    return node_->grad;
}

std::vector<double>& Tensor::grad() {
    node_->ensure_grad();
    return node_->grad;
}

void Tensor::set_requires_grad(bool rg) { node_->requires_grad = rg; }

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() requires a scalar, got shape " + shape_str(shape()));
    return node_->value[0];
}

void Tensor::zero_grad() {
    node_->grad.assign(node_->value.size(), 0.0);
}

Tensor Tensor::detach(bool requires_grad) const {
    return from_data(node_->shape, node_->value, requires_grad);
}

namespace {

// Iterative post-order over the tape; recursion depth would otherwise scale
// with the GRU unroll length.
std::vector<TensorNode*> topo_order(TensorNode* root) {
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            TensorNode* p = node->parents[idx].get();
            ++idx;
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;  // parents before children
}

}  // namespace

void Tensor::backward() const {
    if (numel() != 1) {
        throw ShapeError("backward() starts from a scalar, got shape " + shape_str(shape()));
    }
    if (!node_->requires_grad) {
        throw TrainingError("backward() called on a tensor that does not require gradients");
    }
    auto order = topo_order(node_.get());
    for (TensorNode* n : order) n->ensure_grad();
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

Tensor make_op_tensor(std::vector<long> shape, std::vector<double> value,
                      std::vector<Tensor> parents,
                      std::function<void(TensorNode&)> backward_fn) {
    long n = shape_numel(shape);
    if (static_cast<size_t>(n) != value.size()) {
        throw ShapeError("op produced " + std::to_string(value.size()) +
                         " values for shape " + shape_str(shape));
    }
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    bool track = false;
    if (g_grad_enabled) {
        for (const auto& p : parents) {
            if (p.requires_grad()) {
                track = true;
                break;
            }
        }
    }
    if (track) {
        node->requires_grad = true;
        node->parents.reserve(parents.size());
        for (auto& p : parents) node->parents.push_back(p.node());
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor::wrap(std::move(node));
}

}  // namespace tsasan
