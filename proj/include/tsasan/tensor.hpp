// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tsasan/common.hpp"

namespace tsasan {

// Reverse-mode autodiff over dense f64 arrays. Each operation records one
// tape node holding the whole output array, so the tape stays short even for
// large batches; backward functions work on contiguous buffers.

struct TensorNode {
    std::vector<long> shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated lazily, same length as value
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;

    size_t numel() const { return value.size(); }

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

std::string shape_str(const std::vector<long>& s);
long shape_numel(const std::vector<long>& s);

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<long> shape, bool requires_grad = false);
    static Tensor full(std::vector<long> shape, double v, bool requires_grad = false);
    static Tensor from_data(std::vector<long> shape, std::vector<double> data,
                            bool requires_grad = false);
    static Tensor uniform(std::vector<long> shape, double lo, double hi, Rng& rng,
                          bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<long>& shape() const { return node_->shape; }
    long dim(size_t i) const { return node_->shape[i]; }
    size_t rank() const { return node_->shape.size(); }
    size_t numel() const { return node_->numel(); }

    const std::vector<double>& value() const { return node_->value; }
    std::vector<double>& value() { return node_->value; }
    const std::vector<double>& grad() const;
    std::vector<double>& grad();
    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool rg);

    double item() const;

    // Zero this tensor's gradient buffer (leaves only; intermediates are
    // rebuilt every forward pass).
    void zero_grad();

    // Reverse pass from a scalar. Accumulates into the grads of every
    // requires_grad node reachable through the tape.
    void backward() const;

    // Leaf copy of the values, detached from any tape history.
    Tensor detach(bool requires_grad = false) const;

    bool all_finite() const { return tsasan::all_finite(node_->value); }

    const std::shared_ptr<TensorNode>& node() const { return node_; }
    static Tensor wrap(std::shared_ptr<TensorNode> n) {
        Tensor t;
        t.node_ = std::move(n);
        return t;
    }

private:
    std::shared_ptr<TensorNode> node_;
};

// Tape recording can be suspended (evaluation passes do not need graphs).
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// Shared by every op implementation: builds the output node and attaches the
// backward closure only when recording is on and some parent needs grads.
Tensor make_op_tensor(std::vector<long> shape, std::vector<double> value,
                      std::vector<Tensor> parents,
                      std::function<void(TensorNode&)> backward_fn);

}  // namespace tsasan
