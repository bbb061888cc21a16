#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "microcount/rng.hpp"

namespace microcount::nn {

using Shape = std::vector<int>;

size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// One node of the reverse-mode graph. Values are 32-bit floats; reduction
// accumulators are 64-bit. Gradients are allocated lazily and accumulate
// additively across backward() calls for leaf nodes.
struct Node {
    Shape shape;
    std::vector<float> value;
    std::vector<float> grad;
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    size_t numel() const { return value.size(); }
    std::vector<float>& ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.f);
        return grad;
    }
};

// Value-semantics handle onto a shared graph node.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, float fill);
    static Tensor from_data(Shape shape, std::vector<float> values);
    static Tensor scalar(float v) { return from_data({1}, {v}); }
    // Leaf with requires_grad set; the unit the optimizer updates.
    static Tensor param(Shape shape, std::vector<float> values);
    static Tensor param_zeros(Shape shape);
    static Tensor param_full(Shape shape, float fill);
    // Truncated normal (2 sigma) initialization, the transformer default.
    static Tensor param_trunc_normal(Shape shape, Rng& rng, double stddev = 0.02);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    size_t numel() const { return node_->numel(); }
    bool requires_grad() const { return node_->requires_grad; }

    std::vector<float>& data() { return node_->value; }
    const std::vector<float>& data() const { return node_->value; }
    std::vector<float>& grad() { return node_->ensure_grad(); }
    void zero_grad() { node_->grad.assign(node_->value.size(), 0.f); }

    float item() const;

    std::shared_ptr<Node> node() const { return node_; }

  private:
    std::shared_ptr<Node> node_;
};

// While a guard is alive, ops build value-only nodes: no parents are
// retained and no backward closures are created.
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool previous_;
};
bool grad_enabled();

// Reverse-mode sweep from a scalar loss. Interior gradients are recomputed
// per call; leaf gradients accumulate additively until zeroed.
void backward(const Tensor& loss);

// ---- elementwise / shape ----
Tensor add(const Tensor& a, const Tensor& b);
// p's shape must be a trailing suffix of x's shape (bias-style broadcast).
Tensor add_broadcast(const Tensor& x, const Tensor& p);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, float c);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, int start, int len);
// (B, N, H*dh) -> (B, H, N, dh) and back.
Tensor split_heads(const Tensor& x, int heads);
Tensor merge_heads(const Tensor& x);
// Repeats a tensor across a new leading batch axis; gradient sums over it.
Tensor tile_batch(const Tensor& p, int batch);
// x has a leading (B, H, ...) layout; t is one learnable scalar per head.
Tensor mul_head_scale(const Tensor& x, const Tensor& t);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);               // (m,k)x(k,n)
Tensor bmm(const Tensor& a, const Tensor& b);                  // (B,n,k)x(B,k,m)
Tensor bmm_nt(const Tensor& a, const Tensor& b);               // (B,n,k)x(B,m,k)^T
Tensor bmm_tn(const Tensor& a, const Tensor& b);               // (B,k,m)^T x(B,k,n)
// Folds all leading axes of x: (..., in) x (in, out) + bias(out).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias = Tensor());

// ---- reductions / normalization ----
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor mean_axis(const Tensor& x, int axis);
Tensor softmax_lastdim(const Tensor& x);
// Divides each row by its sum (rows whose |sum| < eps divide by eps,
// keeping the sign). Leaves already-normalized rows untouched.
Tensor normalize_sum_lastdim(const Tensor& x, float eps = 1e-8f);
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& shift, float eps = 1e-5f);
Tensor l2_normalize(const Tensor& x, int axis, float eps = 1e-12f);

// Non-overlapping patch gather: (B,C,H,W) -> (B, (H/p)*(W/p), C*p*p),
// patches in row-major order, each flattened channel-major.
Tensor extract_patches(const Tensor& x, int patch);

// ---- convolutional ----
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int padding);
// w has shape (C, kh, kw): one filter per input channel.
Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int padding);
Tensor maxpool2d(const Tensor& x, int kernel, int stride, int padding = 0);
Tensor groupnorm(const Tensor& x, int groups, const Tensor& gain, const Tensor& shift,
                 float eps = 1e-5f);

// ---- gradient verification ----
struct GradCheckResult {
    double max_rel_error = 0.0;
    size_t coords_checked = 0;
    std::string worst_tensor;
    bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

// Compares reverse-mode gradients of a scalar-valued function against
// central finite differences (base step 1e-3, scaled by coordinate
// magnitude). Relative error uses denominator max(1, |analytic|, |numeric|)
// so the 32-bit forward noise floor stays well under the tolerance.
GradCheckResult grad_check(
    const std::function<Tensor(const std::vector<Tensor>&)>& fn, std::vector<Tensor> inputs,
    const std::vector<std::string>& names = {}, double step = 1e-3,
    size_t max_coords_per_tensor = 0, uint64_t seed = 0);

}  // namespace microcount::nn
