// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vapi/rng.hpp"

namespace vapi {

// Dense f64 tensor in row-major order, doubling as a node in a dynamically
// built reverse-mode graph. Copies share storage; values are treated as
// immutable once produced by an operation (leaves may be mutated between
// steps by optimizers and finite-difference probes).
class Tensor {
public:
    struct Node {
        std::vector<int> shape;
        std::vector<double> value;
        std::vector<double> grad;  // allocated on first accumulation
        bool requires_grad = false;
        std::vector<std::shared_ptr<Node>> parents;
        std::function<void(Node&)> backward;
        int64_t numel = 0;
    };

    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double fill, bool requires_grad = false);
    static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                            bool requires_grad = false);
    static Tensor scalar(double v);
    static Tensor randn(std::vector<int> shape, double stddev, SeededRng& rng,
                        bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(node_->shape.size()); }
    int64_t numel() const { return node_->numel; }

    const std::vector<double>& data() const { return node_->value; }
    std::vector<double>& mutable_data() { return node_->value; }
    double item() const;
    double at(int i) const { return node_->value[static_cast<size_t>(i)]; }
    double at(int i, int j) const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    // Gradient accumulated by the last backward pass; zeros if none reached
    // this tensor.
    std::vector<double> grad() const;
    bool has_grad() const { return !node_->grad.empty(); }
    void zero_grad() { node_->grad.clear(); }

    // Reverse-mode sweep from a scalar root. Gradients accumulate into every
    // reachable tensor with requires_grad set.
    void backward() const;

    // Value-sharing view detached from the graph.
    Tensor detach() const;

    std::shared_ptr<Node> node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
    std::shared_ptr<Node> node_;

    friend Tensor make_op(std::vector<int> shape, std::vector<double> value,
                          std::vector<Tensor> parents,
                          std::function<void(Tensor::Node&)> backward);
};

// Thread-local switch: when off, ops produce value-only tensors (no graph).
bool grad_mode_enabled();
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

using TokenSeq = std::vector<int>;

// ---- elementwise / scalar ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor exp_(const Tensor& a);
Tensor log_(const Tensor& a);
Tensor tanh_(const Tensor& a);
Tensor sigmoid_(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor minimum(const Tensor& a, const Tensor& b);

// Forward takes `hard`'s values verbatim; backward passes gradients to
// `soft` unchanged (straight-through).
Tensor straight_through(const Tensor& hard, const Tensor& soft);

// ---- matrix / shape ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor slice_rows(const Tensor& a, int start, int count);
Tensor slice_cols(const Tensor& a, int start, int count);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor gather_rows(const Tensor& table, const TokenSeq& indices);
Tensor reshape(const Tensor& a, std::vector<int> shape);
Tensor pick_per_row(const Tensor& a, const TokenSeq& cols);
Tensor add_rowvec(const Tensor& a, const Tensor& v);

// ---- reductions / losses ----
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_sq(const Tensor& a);
Tensor mse(const Tensor& a, const Tensor& b);

// ---- normalization / attention ----
Tensor layer_norm_rows(const Tensor& a, const Tensor& gain, const Tensor& bias,
                       double eps = 1e-5);
// Row-wise softmax of logits / temperature, max-subtracted.
Tensor softmax(const Tensor& logits, double temperature = 1.0);
Tensor log_softmax(const Tensor& logits);

// ---- image ops (single channel) ----
// img: {H,W} -> {N, patch*patch}, patches in raster order.
Tensor extract_patches(const Tensor& img, int patch);
// inverse of extract_patches: {N, patch*patch} -> {H,W}.
Tensor assemble_patches(const Tensor& patches, int patch, int image_size);
// img: {H,W}, filters: {F,3,3} constant -> {F,H,W}, zero padding.
Tensor conv3x3_same(const Tensor& img, const Tensor& filters);

// ---- sampling / spec'd numkernel ops ----
// Inverse-CDF draw over a probability row; probs must sum to 1 within 1e-9.
int categorical_sample(const Tensor& probs, SeededRng& rng);
int categorical_sample(const std::vector<double>& probs, SeededRng& rng);

// Mean over positions of -log softmax(logits_t)[target_t]; logits {N,K}.
Tensor cross_entropy_seq(const Tensor& logits, const TokenSeq& targets);

int argmax_lowest(const std::vector<double>& v);
bool all_finite(const std::vector<double>& v);

}  // namespace vapi
