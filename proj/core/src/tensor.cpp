#include "microcount/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace microcount::nn {

size_t shape_numel(const Shape& shape) {
    size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("non-positive dimension in shape " + shape_str(shape));
        n *= static_cast<size_t>(d);
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ')';
    return os.str();
}

namespace {

thread_local bool g_grad_enabled = true;
// Finite-difference probes accumulate matmuls in 64-bit so the probe noise
// stays far below the gradient tolerance; the production path keeps the
// fast 32-bit kernels.
thread_local bool g_precise_accum = false;

struct PreciseAccumGuard {
    bool previous;
    PreciseAccumGuard() : previous(g_precise_accum) { g_precise_accum = true; }
    ~PreciseAccumGuard() { g_precise_accum = previous; }
};

std::shared_ptr<Node> make_leaf(Shape shape, std::vector<float> values, bool requires_grad) {
    size_t n = shape_numel(shape);
    if (values.size() != n)
        throw std::invalid_argument("value count does not match shape " + shape_str(shape));
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return node;
}

bool any_requires_grad(const std::vector<Tensor>& parents) {
    for (const auto& p : parents)
        if (p.defined() && p.requires_grad()) return true;
    return false;
}

// Central op constructor: prunes the graph when gradients are off or no
// parent needs them.
Tensor make_op(const char* op, Shape shape, std::vector<float> value,
               std::vector<Tensor> parents, std::function<void(Node&)> backprop) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->op = op;
    if (g_grad_enabled && any_requires_grad(parents)) {
        node->requires_grad = true;
        node->parents.reserve(parents.size());
        for (const auto& p : parents) node->parents.push_back(p.node());
        node->backprop = std::move(backprop);
    }
    return Tensor(std::move(node));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
}

// Flattens a shape into (outer, axis_len, inner) around one axis.
struct AxisSplit {
    size_t outer = 1, len = 1, inner = 1;
};
AxisSplit split_axis(const Shape& shape, int axis) {
    if (axis < 0 || axis >= static_cast<int>(shape.size()))
        throw std::invalid_argument("axis out of range for shape " + shape_str(shape));
    AxisSplit s;
    for (int i = 0; i < axis; ++i) s.outer *= static_cast<size_t>(shape[i]);
    s.len = static_cast<size_t>(shape[axis]);
    for (size_t i = axis + 1; i < shape.size(); ++i) s.inner *= static_cast<size_t>(shape[i]);
    return s;
}

// ---- raw gemm kernels; per-element accumulation order is fixed ----

// C (M,N) (+)= A (M,K) * B (K,N)
void gemm_nn(size_t M, size_t N, size_t K, const float* A, const float* B, float* C,
             bool accumulate) {
    if (g_precise_accum) {
        std::vector<double> row(N);
        for (size_t i = 0; i < M; ++i) {
            const float* a_row = A + i * K;
            float* c_row = C + i * N;
            for (size_t j = 0; j < N; ++j) row[j] = accumulate ? c_row[j] : 0.0;
            for (size_t k = 0; k < K; ++k) {
                const double a = a_row[k];
                const float* b_row = B + k * N;
                for (size_t j = 0; j < N; ++j) row[j] += a * b_row[j];
            }
            for (size_t j = 0; j < N; ++j) c_row[j] = static_cast<float>(row[j]);
        }
        return;
    }
    if (!accumulate) std::memset(C, 0, M * N * sizeof(float));
    for (size_t i = 0; i < M; ++i) {
        const float* a_row = A + i * K;
        float* c_row = C + i * N;
        for (size_t k = 0; k < K; ++k) {
            const float a = a_row[k];
            if (a == 0.f) continue;
            const float* b_row = B + k * N;
            for (size_t j = 0; j < N; ++j) c_row[j] += a * b_row[j];
        }
    }
}

// C (M,N) (+)= A (M,K) * B (N,K)^T
void gemm_nt(size_t M, size_t N, size_t K, const float* A, const float* B, float* C,
             bool accumulate) {
    if (g_precise_accum) {
        for (size_t i = 0; i < M; ++i) {
            const float* a_row = A + i * K;
            float* c_row = C + i * N;
            for (size_t j = 0; j < N; ++j) {
                const float* b_row = B + j * K;
                double acc = accumulate ? c_row[j] : 0.0;
                for (size_t k = 0; k < K; ++k)
                    acc += static_cast<double>(a_row[k]) * b_row[k];
                c_row[j] = static_cast<float>(acc);
            }
        }
        return;
    }
    for (size_t i = 0; i < M; ++i) {
        const float* a_row = A + i * K;
        float* c_row = C + i * N;
        for (size_t j = 0; j < N; ++j) {
            const float* b_row = B + j * K;
            float acc = 0.f;
            for (size_t k = 0; k < K; ++k) acc += a_row[k] * b_row[k];
            c_row[j] = accumulate ? c_row[j] + acc : acc;
        }
    }
}

// C (M,N) (+)= A (K,M)^T * B (K,N)
void gemm_tn(size_t M, size_t N, size_t K, const float* A, const float* B, float* C,
             bool accumulate) {
    if (g_precise_accum) {
        for (size_t i = 0; i < M; ++i) {
            float* c_row = C + i * N;
            for (size_t j = 0; j < N; ++j) {
                double acc = accumulate ? c_row[j] : 0.0;
                for (size_t k = 0; k < K; ++k)
                    acc += static_cast<double>(A[k * M + i]) * B[k * N + j];
                c_row[j] = static_cast<float>(acc);
            }
        }
        return;
    }
    if (!accumulate) std::memset(C, 0, M * N * sizeof(float));
    for (size_t k = 0; k < K; ++k) {
        const float* a_row = A + k * M;
        const float* b_row = B + k * N;
        for (size_t i = 0; i < M; ++i) {
            const float a = a_row[i];
            if (a == 0.f) continue;
            float* c_row = C + i * N;
            for (size_t j = 0; j < N; ++j) c_row[j] += a * b_row[j];
        }
    }
}

}  // namespace

Tensor Tensor::zeros(Shape shape) {
    size_t n = shape_numel(shape);
    return Tensor(make_leaf(std::move(shape), std::vector<float>(n, 0.f), false));
}

Tensor Tensor::full(Shape shape, float fill) {
    size_t n = shape_numel(shape);
    return Tensor(make_leaf(std::move(shape), std::vector<float>(n, fill), false));
}

Tensor Tensor::from_data(Shape shape, std::vector<float> values) {
    return Tensor(make_leaf(std::move(shape), std::move(values), false));
}

Tensor Tensor::param(Shape shape, std::vector<float> values) {
    return Tensor(make_leaf(std::move(shape), std::move(values), true));
}

Tensor Tensor::param_zeros(Shape shape) {
    size_t n = shape_numel(shape);
    return Tensor(make_leaf(std::move(shape), std::vector<float>(n, 0.f), true));
}

Tensor Tensor::param_full(Shape shape, float fill) {
    size_t n = shape_numel(shape);
    return Tensor(make_leaf(std::move(shape), std::vector<float>(n, fill), true));
}

Tensor Tensor::param_trunc_normal(Shape shape, Rng& rng, double stddev) {
    size_t n = shape_numel(shape);
    std::vector<float> v(n);
    for (float& x : v) x = static_cast<float>(rng.truncated_normal(0.0, stddev));
    return Tensor(make_leaf(std::move(shape), std::move(v), true));
}

float Tensor::item() const {
    if (numel() != 1) throw std::invalid_argument("item(): tensor is not scalar");
    return node_->value[0];
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

void backward(const Tensor& loss) {
    if (loss.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
    Node* root = loss.node().get();
    if (!root->requires_grad) return;

    // Iterative post-order DFS; `topo` ends up children-before-parents.
    std::vector<Node*> topo;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* parent = node->parents[idx++].get();
            if (parent->requires_grad && visited.insert(parent).second)
                stack.emplace_back(parent, 0);
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }

    // Interior gradients are scratch space per sweep; leaves accumulate.
    for (Node* node : topo) {
        if (!node->parents.empty() || node == root) node->ensure_grad();
        if (!node->parents.empty()) std::fill(node->grad.begin(), node->grad.end(), 0.f);
    }
    root->ensure_grad()[0] += 1.f;

    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* node = *it;
        if (node->backprop) node->backprop(*node);
    }
}

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<float> v(a.numel());
    const auto& av = a.data();
    const auto& bv = b.data();
    for (size_t i = 0; i < v.size(); ++i) v[i] = av[i] + bv[i];
    return make_op("add", a.shape(), std::move(v), {a, b}, [](Node& n) {
        for (int p = 0; p < 2; ++p) {
            Node& parent = *n.parents[p];
            if (!parent.requires_grad) continue;
            auto& g = parent.ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
    });
}

Tensor add_broadcast(const Tensor& x, const Tensor& p) {
    const Shape& xs = x.shape();
    const Shape& ps = p.shape();
    if (ps.size() > xs.size() ||
        !std::equal(ps.rbegin(), ps.rend(), xs.rbegin()))
        throw std::invalid_argument("add_broadcast: " + shape_str(ps) +
                                    " is not a suffix of " + shape_str(xs));
    const size_t span = p.numel();
    const size_t repeats = x.numel() / span;
    std::vector<float> v(x.numel());
    const auto& xv = x.data();
    const auto& pv = p.data();
    for (size_t r = 0; r < repeats; ++r)
        for (size_t i = 0; i < span; ++i) v[r * span + i] = xv[r * span + i] + pv[i];
    return make_op("add_broadcast", xs, std::move(v), {x, p}, [span, repeats](Node& n) {
        Node& xp = *n.parents[0];
        Node& pp = *n.parents[1];
        if (xp.requires_grad) {
            auto& g = xp.ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (pp.requires_grad) {
            auto& g = pp.ensure_grad();
            for (size_t r = 0; r < repeats; ++r)
                for (size_t i = 0; i < span; ++i) g[i] += n.grad[r * span + i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    std::vector<float> v(a.numel());
    const auto& av = a.data();
    const auto& bv = b.data();
    for (size_t i = 0; i < v.size(); ++i) v[i] = av[i] - bv[i];
    return make_op("sub", a.shape(), std::move(v), {a, b}, [](Node& n) {
        Node& ap = *n.parents[0];
        Node& bp = *n.parents[1];
        if (ap.requires_grad) {
            auto& g = ap.ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (bp.requires_grad) {
            auto& g = bp.ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<float> v(a.numel());
    const auto& av = a.data();
    const auto& bv = b.data();
    for (size_t i = 0; i < v.size(); ++i) v[i] = av[i] * bv[i];
    return make_op("mul", a.shape(), std::move(v), {a, b}, [](Node& n) {
        Node& ap = *n.parents[0];
        Node& bp = *n.parents[1];
        if (ap.requires_grad) {
            auto& g = ap.ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * bp.value[i];
        }
        if (bp.requires_grad) {
            auto& g = bp.ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * ap.value[i];
        }
    });
}

Tensor neg(const Tensor& x) { return scale(x, -1.f); }

Tensor scale(const Tensor& x, float c) {
    std::vector<float> v(x.numel());
    const auto& xv = x.data();
    for (size_t i = 0; i < v.size(); ++i) v[i] = c * xv[i];
    return make_op("scale", x.shape(), std::move(v), {x}, [c](Node& n) {
        auto& g = n.parents[0]->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) g[i] += c * n.grad[i];
    });
}

Tensor relu(const Tensor& x) {
    std::vector<float> v(x.numel());
    const auto& xv = x.data();
    for (size_t i = 0; i < v.size(); ++i) v[i] = xv[i] > 0.f ? xv[i] : 0.f;
    return make_op("relu", x.shape(), std::move(v), {x}, [](Node& n) {
        Node& p = *n.parents[0];
        auto& g = p.ensure_grad();
        for (size_t i = 0; i < g.size(); ++i)
            if (p.value[i] > 0.f) g[i] += n.grad[i];
    });
}

Tensor gelu(const Tensor& x) {
    constexpr float kInvSqrt2 = 0.70710678118654752f;
    std::vector<float> v(x.numel());
    const auto& xv = x.data();
    for (size_t i = 0; i < v.size(); ++i)
        v[i] = 0.5f * xv[i] * (1.f + std::erf(xv[i] * kInvSqrt2));
    return make_op("gelu", x.shape(), std::move(v), {x}, [](Node& n) {
        constexpr float kInvSqrt2Pi = 0.39894228040143268f;
        Node& p = *n.parents[0];
        auto& g = p.ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) {
            const float xi = p.value[i];
            const float cdf = 0.5f * (1.f + std::erf(xi * 0.70710678118654752f));
            const float pdf = kInvSqrt2Pi * std::exp(-0.5f * xi * xi);
            g[i] += n.grad[i] * (cdf + xi * pdf);
        }
    });
}

Tensor abs(const Tensor& x) {
    std::vector<float> v(x.numel());
    const auto& xv = x.data();
    for (size_t i = 0; i < v.size(); ++i) v[i] = std::fabs(xv[i]);
    return make_op("abs", x.shape(), std::move(v), {x}, [](Node& n) {
        Node& p = *n.parents[0];
        auto& g = p.ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) {
            if (p.value[i] > 0.f)
                g[i] += n.grad[i];
            else if (p.value[i] < 0.f)
                g[i] -= n.grad[i];
        }
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw std::invalid_argument("reshape: element count mismatch " + shape_str(x.shape()) +
                                    " -> " + shape_str(shape));
    std::vector<float> v = x.data();
    return make_op("reshape", std::move(shape), std::move(v), {x}, [](Node& n) {
        auto& g = n.parents[0]->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    Shape out_shape = parts[0].shape();
    AxisSplit s0 = split_axis(out_shape, axis);
    size_t total_len = 0;
    for (const auto& p : parts) {
        Shape ps = p.shape();
        if (ps.size() != out_shape.size())
            throw std::invalid_argument("concat: rank mismatch");
        for (size_t i = 0; i < ps.size(); ++i)
            if (static_cast<int>(i) != axis && ps[i] != out_shape[i])
                throw std::invalid_argument("concat: shape mismatch off the concat axis");
        total_len += static_cast<size_t>(ps[axis]);
    }
    out_shape[axis] = static_cast<int>(total_len);

    std::vector<float> v(shape_numel(out_shape));
    std::vector<size_t> lens;
    size_t offset = 0;
    for (const auto& p : parts) {
        AxisSplit sp = split_axis(p.shape(), axis);
        lens.push_back(sp.len);
        const auto& pv = p.data();
        for (size_t o = 0; o < sp.outer; ++o) {
            const float* src = pv.data() + o * sp.len * sp.inner;
            float* dst = v.data() + (o * total_len + offset) * s0.inner;
            std::memcpy(dst, src, sp.len * sp.inner * sizeof(float));
        }
        offset += sp.len;
    }

    size_t outer = s0.outer, inner = s0.inner;
    return make_op("concat", out_shape, std::move(v), parts,
                   [lens, outer, inner, total_len](Node& n) {
                       size_t off = 0;
                       for (size_t p = 0; p < n.parents.size(); ++p) {
                           Node& parent = *n.parents[p];
                           size_t len = lens[p];
                           if (parent.requires_grad) {
                               auto& g = parent.ensure_grad();
                               for (size_t o = 0; o < outer; ++o) {
                                   const float* src = n.grad.data() + (o * total_len + off) * inner;
                                   float* dst = g.data() + o * len * inner;
                                   for (size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
                               }
                           }
                           off += len;
                       }
                   });
}

Tensor slice(const Tensor& x, int axis, int start, int len) {
    AxisSplit s = split_axis(x.shape(), axis);
    if (start < 0 || len <= 0 || static_cast<size_t>(start + len) > s.len)
        throw std::invalid_argument("slice: range out of bounds");
    Shape out_shape = x.shape();
    out_shape[axis] = len;
    std::vector<float> v(shape_numel(out_shape));
    const auto& xv = x.data();
    for (size_t o = 0; o < s.outer; ++o)
        std::memcpy(v.data() + o * len * s.inner,
                    xv.data() + (o * s.len + start) * s.inner,
                    static_cast<size_t>(len) * s.inner * sizeof(float));
    return make_op("slice", out_shape, std::move(v), {x}, [s, start, len](Node& n) {
        auto& g = n.parents[0]->ensure_grad();
        for (size_t o = 0; o < s.outer; ++o) {
            const float* src = n.grad.data() + o * len * s.inner;
            float* dst = g.data() + (o * s.len + start) * s.inner;
            for (size_t i = 0; i < static_cast<size_t>(len) * s.inner; ++i) dst[i] += src[i];
        }
    });
}

Tensor split_heads(const Tensor& x, int heads) {
    if (x.rank() != 3) throw std::invalid_argument("split_heads: expected (B, N, D)");
    const int B = x.dim(0), N = x.dim(1), D = x.dim(2);
    if (D % heads != 0) throw std::invalid_argument("split_heads: D not divisible by heads");
    const int dh = D / heads;
    std::vector<float> v(x.numel());
    const auto& xv = x.data();
    for (int b = 0; b < B; ++b)
        for (int h = 0; h < heads; ++h)
            for (int n = 0; n < N; ++n) {
                const float* src = xv.data() + ((static_cast<size_t>(b) * N + n) * D) + h * dh;
                float* dst = v.data() + (((static_cast<size_t>(b) * heads + h) * N + n) * dh);
                std::memcpy(dst, src, static_cast<size_t>(dh) * sizeof(float));
            }
    return make_op("split_heads", {B, heads, N, dh}, std::move(v), {x},
                   [B, N, D, heads, dh](Node& n0) {
                       auto& g = n0.parents[0]->ensure_grad();
                       for (int b = 0; b < B; ++b)
                           for (int h = 0; h < heads; ++h)
                               for (int n = 0; n < N; ++n) {
                                   const float* src =
                                       n0.grad.data() +
                                       (((static_cast<size_t>(b) * heads + h) * N + n) * dh);
                                   float* dst =
                                       g.data() + ((static_cast<size_t>(b) * N + n) * D) + h * dh;
                                   for (int d = 0; d < dh; ++d) dst[d] += src[d];
                               }
                   });
}

Tensor merge_heads(const Tensor& x) {
    if (x.rank() != 4) throw std::invalid_argument("merge_heads: expected (B, H, N, dh)");
    const int B = x.dim(0), H = x.dim(1), N = x.dim(2), dh = x.dim(3);
    const int D = H * dh;
    std::vector<float> v(x.numel());
    const auto& xv = x.data();
    for (int b = 0; b < B; ++b)
        for (int h = 0; h < H; ++h)
            for (int n = 0; n < N; ++n) {
                const float* src = xv.data() + (((static_cast<size_t>(b) * H + h) * N + n) * dh);
                float* dst = v.data() + ((static_cast<size_t>(b) * N + n) * D) + h * dh;
                std::memcpy(dst, src, static_cast<size_t>(dh) * sizeof(float));
            }
    return make_op("merge_heads", {B, N, D}, std::move(v), {x}, [B, H, N, dh, D](Node& n0) {
        auto& g = n0.parents[0]->ensure_grad();
        for (int b = 0; b < B; ++b)
            for (int h = 0; h < H; ++h)
                for (int n = 0; n < N; ++n) {
                    const float* src = n0.grad.data() + ((static_cast<size_t>(b) * N + n) * D) + h * dh;
                    float* dst = g.data() + (((static_cast<size_t>(b) * H + h) * N + n) * dh);
                    for (int d = 0; d < dh; ++d) dst[d] += src[d];
                }
    });
}

Tensor tile_batch(const Tensor& p, int batch) {
    if (batch <= 0) throw std::invalid_argument("tile_batch: batch must be positive");
    Shape out_shape;
    out_shape.push_back(batch);
    for (int d : p.shape()) out_shape.push_back(d);
    const size_t span = p.numel();
    std::vector<float> v(span * static_cast<size_t>(batch));
    for (int b = 0; b < batch; ++b)
        std::memcpy(v.data() + static_cast<size_t>(b) * span, p.data().data(), span * sizeof(float));
    return make_op("tile_batch", out_shape, std::move(v), {p}, [batch, span](Node& n) {
        auto& g = n.parents[0]->ensure_grad();
        for (int b = 0; b < batch; ++b) {
            const float* src = n.grad.data() + static_cast<size_t>(b) * span;
            for (size_t i = 0; i < span; ++i) g[i] += src[i];
        }
    });
}

Tensor mul_head_scale(const Tensor& x, const Tensor& t) {
    if (x.rank() < 2 || t.rank() != 1 || x.dim(1) != t.dim(0))
        throw std::invalid_argument("mul_head_scale: expected x (B,H,...) and t (H)");
    const size_t B = static_cast<size_t>(x.dim(0));
    const size_t H = static_cast<size_t>(x.dim(1));
    const size_t inner = x.numel() / (B * H);
    std::vector<float> v(x.numel());
    const auto& xv = x.data();
    const auto& tv = t.data();
    for (size_t b = 0; b < B; ++b)
        for (size_t h = 0; h < H; ++h) {
            const float th = tv[h];
            const size_t base = (b * H + h) * inner;
            for (size_t i = 0; i < inner; ++i) v[base + i] = th * xv[base + i];
        }
    return make_op("mul_head_scale", x.shape(), std::move(v), {x, t}, [B, H, inner](Node& n) {
        Node& xp = *n.parents[0];
        Node& tp = *n.parents[1];
        if (xp.requires_grad) {
            auto& g = xp.ensure_grad();
            for (size_t b = 0; b < B; ++b)
                for (size_t h = 0; h < H; ++h) {
                    const float th = tp.value[h];
                    const size_t base = (b * H + h) * inner;
                    for (size_t i = 0; i < inner; ++i) g[base + i] += th * n.grad[base + i];
                }
        }
        if (tp.requires_grad) {
            auto& g = tp.ensure_grad();
            for (size_t b = 0; b < B; ++b)
                for (size_t h = 0; h < H; ++h) {
                    const size_t base = (b * H + h) * inner;
                    double acc = 0.0;
                    for (size_t i = 0; i < inner; ++i)
                        acc += static_cast<double>(n.grad[base + i]) * xp.value[base + i];
                    g[h] += static_cast<float>(acc);
                }
        }
    });
}

// ---- linear algebra ----

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) +
                                    " x " + shape_str(b.shape()));
    const size_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
    std::vector<float> v(M * N);
    gemm_nn(M, N, K, a.data().data(), b.data().data(), v.data(), false);
    return make_op("matmul", {static_cast<int>(M), static_cast<int>(N)}, std::move(v), {a, b},
                   [M, N, K](Node& n) {
                       Node& ap = *n.parents[0];
                       Node& bp = *n.parents[1];
                       if (ap.requires_grad)
                           gemm_nt(M, K, N, n.grad.data(), bp.value.data(),
                                   ap.ensure_grad().data(), true);
                       if (bp.requires_grad)
                           gemm_tn(K, N, M, ap.value.data(), n.grad.data(),
                                   bp.ensure_grad().data(), true);
                   });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
        throw std::invalid_argument("bmm: incompatible shapes " + shape_str(a.shape()) + " x " +
                                    shape_str(b.shape()));
    const size_t B = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(2);
    std::vector<float> v(B * M * N);
    for (size_t i = 0; i < B; ++i)
        gemm_nn(M, N, K, a.data().data() + i * M * K, b.data().data() + i * K * N,
                v.data() + i * M * N, false);
    return make_op("bmm", {static_cast<int>(B), static_cast<int>(M), static_cast<int>(N)},
                   std::move(v), {a, b}, [B, M, N, K](Node& n) {
                       Node& ap = *n.parents[0];
                       Node& bp = *n.parents[1];
                       if (ap.requires_grad) {
                           auto& g = ap.ensure_grad();
                           for (size_t i = 0; i < B; ++i)
                               gemm_nt(M, K, N, n.grad.data() + i * M * N,
                                       bp.value.data() + i * K * N, g.data() + i * M * K, true);
                       }
                       if (bp.requires_grad) {
                           auto& g = bp.ensure_grad();
                           for (size_t i = 0; i < B; ++i)
                               gemm_tn(K, N, M, ap.value.data() + i * M * K,
                                       n.grad.data() + i * M * N, g.data() + i * K * N, true);
                       }
                   });
}

Tensor bmm_nt(const Tensor& a, const Tensor& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2))
        throw std::invalid_argument("bmm_nt: incompatible shapes " + shape_str(a.shape()) +
                                    " x " + shape_str(b.shape()));
    const size_t B = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(1);
    std::vector<float> v(B * M * N);
    for (size_t i = 0; i < B; ++i)
        gemm_nt(M, N, K, a.data().data() + i * M * K, b.data().data() + i * N * K,
                v.data() + i * M * N, false);
    return make_op("bmm_nt", {static_cast<int>(B), static_cast<int>(M), static_cast<int>(N)},
                   std::move(v), {a, b}, [B, M, N, K](Node& n) {
                       Node& ap = *n.parents[0];
                       Node& bp = *n.parents[1];
                       if (ap.requires_grad) {
                           auto& g = ap.ensure_grad();
                           for (size_t i = 0; i < B; ++i)
                               gemm_nn(M, K, N, n.grad.data() + i * M * N,
                                       bp.value.data() + i * N * K, g.data() + i * M * K, true);
                       }
                       if (bp.requires_grad) {
                           auto& g = bp.ensure_grad();
                           for (size_t i = 0; i < B; ++i)
                               gemm_tn(N, K, M, n.grad.data() + i * M * N,
                                       ap.value.data() + i * M * K, g.data() + i * N * K, true);
                       }
                   });
}

Tensor bmm_tn(const Tensor& a, const Tensor& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(1) != b.dim(1))
        throw std::invalid_argument("bmm_tn: incompatible shapes " + shape_str(a.shape()) +
                                    " x " + shape_str(b.shape()));
    const size_t B = a.dim(0), K = a.dim(1), M = a.dim(2), N = b.dim(2);
    std::vector<float> v(B * M * N);
    for (size_t i = 0; i < B; ++i)
        gemm_tn(M, N, K, a.data().data() + i * K * M, b.data().data() + i * K * N,
                v.data() + i * M * N, false);
    return make_op("bmm_tn", {static_cast<int>(B), static_cast<int>(M), static_cast<int>(N)},
                   std::move(v), {a, b}, [B, M, N, K](Node& n) {
                       Node& ap = *n.parents[0];
                       Node& bp = *n.parents[1];
                       if (ap.requires_grad) {
                           // dA (K,M) = B (K,N) * dC^T (N,M)
                           auto& g = ap.ensure_grad();
                           for (size_t i = 0; i < B; ++i)
                               gemm_nt(K, M, N, bp.value.data() + i * K * N,
                                       n.grad.data() + i * M * N, g.data() + i * K * M, true);
                       }
                       if (bp.requires_grad) {
                           // dB (K,N) = A (K,M) * dC (M,N)
                           auto& g = bp.ensure_grad();
                           for (size_t i = 0; i < B; ++i)
                               gemm_nn(K, N, M, ap.value.data() + i * K * M,
                                       n.grad.data() + i * M * N, g.data() + i * K * N, true);
                       }
                   });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
    if (x.rank() < 2 || w.rank() != 2)
        throw std::invalid_argument("linear: expected x rank >= 2 and w (in, out)");
    const int in = x.dim(x.rank() - 1);
    if (in != w.dim(0))
        throw std::invalid_argument("linear: inner dimension mismatch " + shape_str(x.shape()) +
                                    " x " + shape_str(w.shape()));
    const size_t out = static_cast<size_t>(w.dim(1));
    const size_t rows = x.numel() / static_cast<size_t>(in);
    if (bias.defined() && (bias.rank() != 1 || static_cast<size_t>(bias.dim(0)) != out))
        throw std::invalid_argument("linear: bias shape mismatch");

    std::vector<float> v(rows * out);
    gemm_nn(rows, out, static_cast<size_t>(in), x.data().data(), w.data().data(), v.data(), false);
    if (bias.defined()) {
        const auto& bv = bias.data();
        for (size_t r = 0; r < rows; ++r)
            for (size_t j = 0; j < out; ++j) v[r * out + j] += bv[j];
    }
    Shape out_shape = x.shape();
    out_shape.back() = static_cast<int>(out);

    std::vector<Tensor> parents{x, w};
    if (bias.defined()) parents.push_back(bias);
    const size_t K = static_cast<size_t>(in);
    return make_op("linear", std::move(out_shape), std::move(v), std::move(parents),
                   [rows, out, K](Node& n) {
                       Node& xp = *n.parents[0];
                       Node& wp = *n.parents[1];
                       if (xp.requires_grad)
                           gemm_nt(rows, K, out, n.grad.data(), wp.value.data(),
                                   xp.ensure_grad().data(), true);
                       if (wp.requires_grad)
                           gemm_tn(K, out, rows, xp.value.data(), n.grad.data(),
                                   wp.ensure_grad().data(), true);
                       if (n.parents.size() == 3 && n.parents[2]->requires_grad) {
                           auto& g = n.parents[2]->ensure_grad();
                           for (size_t r = 0; r < rows; ++r)
                               for (size_t j = 0; j < out; ++j) g[j] += n.grad[r * out + j];
                       }
                   });
}

// ---- reductions / normalization ----

Tensor sum_all(const Tensor& x) {
    double acc = 0.0;
    for (float v : x.data()) acc += v;
    return make_op("sum_all", {1}, {static_cast<float>(acc)}, {x}, [](Node& n) {
        auto& g = n.parents[0]->ensure_grad();
        const float gy = n.grad[0];
        for (float& gi : g) gi += gy;
    });
}

Tensor mean_all(const Tensor& x) {
    double acc = 0.0;
    for (float v : x.data()) acc += v;
    const size_t count = x.numel();
    return make_op("mean_all", {1}, {static_cast<float>(acc / static_cast<double>(count))}, {x},
                   [count](Node& n) {
                       auto& g = n.parents[0]->ensure_grad();
                       const float gy = n.grad[0] / static_cast<float>(count);
                       for (float& gi : g) gi += gy;
                   });
}

Tensor mean_axis(const Tensor& x, int axis) {
    AxisSplit s = split_axis(x.shape(), axis);
    Shape out_shape;
    for (int i = 0; i < x.rank(); ++i)
        if (i != axis) out_shape.push_back(x.dim(i));
    if (out_shape.empty()) out_shape.push_back(1);

    std::vector<float> v(s.outer * s.inner, 0.f);
    const auto& xv = x.data();
    for (size_t o = 0; o < s.outer; ++o)
        for (size_t i = 0; i < s.inner; ++i) {
            double acc = 0.0;
            for (size_t k = 0; k < s.len; ++k) acc += xv[(o * s.len + k) * s.inner + i];
            v[o * s.inner + i] = static_cast<float>(acc / static_cast<double>(s.len));
        }
    return make_op("mean_axis", std::move(out_shape), std::move(v), {x}, [s](Node& n) {
        auto& g = n.parents[0]->ensure_grad();
        const float inv = 1.f / static_cast<float>(s.len);
        for (size_t o = 0; o < s.outer; ++o)
            for (size_t i = 0; i < s.inner; ++i) {
                const float gy = n.grad[o * s.inner + i] * inv;
                for (size_t k = 0; k < s.len; ++k) g[(o * s.len + k) * s.inner + i] += gy;
            }
    });
}

Tensor softmax_lastdim(const Tensor& x) {
    const size_t D = static_cast<size_t>(x.dim(x.rank() - 1));
    const size_t rows = x.numel() / D;
    std::vector<float> v(x.numel());
    const auto& xv = x.data();
    for (size_t r = 0; r < rows; ++r) {
        const float* row = xv.data() + r * D;
        float* out = v.data() + r * D;
        float mx = row[0];
        for (size_t j = 1; j < D; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (size_t j = 0; j < D; ++j) {
            out[j] = std::exp(row[j] - mx);
            sum += out[j];
        }
        const float inv = static_cast<float>(1.0 / sum);
        for (size_t j = 0; j < D; ++j) out[j] *= inv;
    }
    return make_op("softmax", x.shape(), std::move(v), {x}, [rows, D](Node& n) {
        auto& g = n.parents[0]->ensure_grad();
        for (size_t r = 0; r < rows; ++r) {
            const float* y = n.value.data() + r * D;
            const float* gy = n.grad.data() + r * D;
            double dot = 0.0;
            for (size_t j = 0; j < D; ++j) dot += static_cast<double>(gy[j]) * y[j];
            const float d = static_cast<float>(dot);
            float* gx = g.data() + r * D;
            for (size_t j = 0; j < D; ++j) gx[j] += y[j] * (gy[j] - d);
        }
    });
}

Tensor normalize_sum_lastdim(const Tensor& x, float eps) {
    const size_t D = static_cast<size_t>(x.dim(x.rank() - 1));
    const size_t rows = x.numel() / D;
    std::vector<float> v(x.numel());
    auto inv_sum = std::make_shared<std::vector<float>>(rows);
    const auto& xv = x.data();
    for (size_t r = 0; r < rows; ++r) {
        double sum = 0.0;
        for (size_t j = 0; j < D; ++j) sum += xv[r * D + j];
        double denom = sum;
        if (std::fabs(denom) < eps) denom = denom >= 0.0 ? eps : -eps;
        const float inv = static_cast<float>(1.0 / denom);
        (*inv_sum)[r] = inv;
        for (size_t j = 0; j < D; ++j) v[r * D + j] = xv[r * D + j] * inv;
    }
    return make_op("normalize_sum", x.shape(), std::move(v), {x}, [rows, D, inv_sum](Node& n) {
        auto& g = n.parents[0]->ensure_grad();
        for (size_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (size_t j = 0; j < D; ++j)
                dot += static_cast<double>(n.grad[r * D + j]) * n.value[r * D + j];
            const float d = static_cast<float>(dot);
            const float inv = (*inv_sum)[r];
            for (size_t j = 0; j < D; ++j) g[r * D + j] += inv * (n.grad[r * D + j] - d);
        }
    });
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& shift, float eps) {
    const int D = x.dim(x.rank() - 1);
    if (gain.rank() != 1 || gain.dim(0) != D || shift.rank() != 1 || shift.dim(0) != D)
        throw std::invalid_argument("layernorm: affine parameter shape mismatch");
    const size_t rows = x.numel() / static_cast<size_t>(D);
    const size_t Du = static_cast<size_t>(D);

    std::vector<float> v(x.numel());
    // Normalized activations and inverse stddevs are reused by backward.
    auto xhat = std::make_shared<std::vector<float>>(x.numel());
    auto inv_std = std::make_shared<std::vector<float>>(rows);
    const auto& xv = x.data();
    const auto& gv = gain.data();
    const auto& sv = shift.data();
    for (size_t r = 0; r < rows; ++r) {
        const float* row = xv.data() + r * Du;
        double mean = 0.0;
        for (size_t j = 0; j < Du; ++j) mean += row[j];
        mean /= static_cast<double>(Du);
        double var = 0.0;
        for (size_t j = 0; j < Du; ++j) {
            const double d = row[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(Du);
        const float is = static_cast<float>(1.0 / std::sqrt(var + eps));
        (*inv_std)[r] = is;
        for (size_t j = 0; j < Du; ++j) {
            const float xh = (row[j] - static_cast<float>(mean)) * is;
            (*xhat)[r * Du + j] = xh;
            v[r * Du + j] = gv[j] * xh + sv[j];
        }
    }
    return make_op("layernorm", x.shape(), std::move(v), {x, gain, shift},
                   [rows, Du, xhat, inv_std](Node& n) {
                       Node& xp = *n.parents[0];
                       Node& gp = *n.parents[1];
                       Node& sp = *n.parents[2];
                       for (size_t r = 0; r < rows; ++r) {
                           const float* gy = n.grad.data() + r * Du;
                           const float* xh = xhat->data() + r * Du;
                           if (xp.requires_grad) {
                               auto& gx = xp.ensure_grad();
                               // dxhat = gy * gain; dx = (dxhat - mean(dxhat)
                               //         - xhat * mean(dxhat*xhat)) * inv_std
                               double m1 = 0.0, m2 = 0.0;
                               for (size_t j = 0; j < Du; ++j) {
                                   const double dxh = static_cast<double>(gy[j]) * gp.value[j];
                                   m1 += dxh;
                                   m2 += dxh * xh[j];
                               }
                               m1 /= static_cast<double>(Du);
                               m2 /= static_cast<double>(Du);
                               const float is = (*inv_std)[r];
                               for (size_t j = 0; j < Du; ++j) {
                                   const float dxh = gy[j] * gp.value[j];
                                   gx[r * Du + j] += is * (dxh - static_cast<float>(m1) -
                                                           xh[j] * static_cast<float>(m2));
                               }
                           }
                           if (gp.requires_grad) {
                               auto& gg = gp.ensure_grad();
                               for (size_t j = 0; j < Du; ++j) gg[j] += gy[j] * xh[j];
                           }
                           if (sp.requires_grad) {
                               auto& gs = sp.ensure_grad();
                               for (size_t j = 0; j < Du; ++j) gs[j] += gy[j];
                           }
                       }
                   });
}

Tensor l2_normalize(const Tensor& x, int axis, float eps) {
    AxisSplit s = split_axis(x.shape(), axis);
    std::vector<float> v(x.numel());
    auto inv_norm = std::make_shared<std::vector<float>>(s.outer * s.inner);
    const auto& xv = x.data();
    for (size_t o = 0; o < s.outer; ++o)
        for (size_t i = 0; i < s.inner; ++i) {
            double sq = 0.0;
            for (size_t k = 0; k < s.len; ++k) {
                const float xk = xv[(o * s.len + k) * s.inner + i];
                sq += static_cast<double>(xk) * xk;
            }
            const float in = static_cast<float>(1.0 / std::sqrt(sq + eps));
            (*inv_norm)[o * s.inner + i] = in;
            for (size_t k = 0; k < s.len; ++k) {
                const size_t idx = (o * s.len + k) * s.inner + i;
                v[idx] = xv[idx] * in;
            }
        }
    return make_op("l2_normalize", x.shape(), std::move(v), {x}, [s, inv_norm](Node& n) {
        auto& g = n.parents[0]->ensure_grad();
        for (size_t o = 0; o < s.outer; ++o)
            for (size_t i = 0; i < s.inner; ++i) {
                double dot = 0.0;
                for (size_t k = 0; k < s.len; ++k) {
                    const size_t idx = (o * s.len + k) * s.inner + i;
                    dot += static_cast<double>(n.grad[idx]) * n.value[idx];
                }
                const float d = static_cast<float>(dot);
                const float in = (*inv_norm)[o * s.inner + i];
                for (size_t k = 0; k < s.len; ++k) {
                    const size_t idx = (o * s.len + k) * s.inner + i;
                    g[idx] += in * (n.grad[idx] - n.value[idx] * d);
                }
            }
    });
}

Tensor extract_patches(const Tensor& x, int patch) {
    if (x.rank() != 4) throw std::invalid_argument("extract_patches: expected (B,C,H,W)");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (patch <= 0 || H % patch != 0 || W % patch != 0)
        throw std::invalid_argument("extract_patches: image size not divisible by patch size");
    const int gh = H / patch, gw = W / patch;
    const int N = gh * gw;
    const int D = C * patch * patch;
    std::vector<float> v(static_cast<size_t>(B) * N * D);
    const auto& xv = x.data();
    for (int b = 0; b < B; ++b)
        for (int gy = 0; gy < gh; ++gy)
            for (int gx = 0; gx < gw; ++gx) {
                float* dst = v.data() + ((static_cast<size_t>(b) * N + gy * gw + gx) * D);
                int col = 0;
                for (int c = 0; c < C; ++c)
                    for (int py = 0; py < patch; ++py) {
                        const float* src = xv.data() +
                                           ((static_cast<size_t>(b) * C + c) * H +
                                            static_cast<size_t>(gy) * patch + py) *
                                               W +
                                           static_cast<size_t>(gx) * patch;
                        for (int px = 0; px < patch; ++px) dst[col++] = src[px];
                    }
            }
    return make_op("extract_patches", {B, N, D}, std::move(v), {x},
                   [B, C, H, W, patch, gh, gw, N, D](Node& n) {
                       auto& g = n.parents[0]->ensure_grad();
                       for (int b = 0; b < B; ++b)
                           for (int gy = 0; gy < gh; ++gy)
                               for (int gx = 0; gx < gw; ++gx) {
                                   const float* src =
                                       n.grad.data() + ((static_cast<size_t>(b) * N + gy * gw + gx) * D);
                                   int col = 0;
                                   for (int c = 0; c < C; ++c)
                                       for (int py = 0; py < patch; ++py) {
                                           float* dst = g.data() +
                                                        ((static_cast<size_t>(b) * C + c) * H +
                                                         static_cast<size_t>(gy) * patch + py) *
                                                            W +
                                                        static_cast<size_t>(gx) * patch;
                                           for (int px = 0; px < patch; ++px) dst[px] += src[col++];
                                       }
                               }
                   });
}

// ---- convolutional ----

namespace {

struct ConvDims {
    int B, C, H, W, OC, KH, KW, OH, OW;
};

ConvDims conv_dims(const Tensor& x, int oc, int kh, int kw, int stride, int padding,
                   const char* op) {
    if (x.rank() != 4) throw std::invalid_argument(std::string(op) + ": expected x (B,C,H,W)");
    ConvDims d;
    d.B = x.dim(0);
    d.C = x.dim(1);
    d.H = x.dim(2);
    d.W = x.dim(3);
    d.OC = oc;
    d.KH = kh;
    d.KW = kw;
    d.OH = (d.H + 2 * padding - kh) / stride + 1;
    d.OW = (d.W + 2 * padding - kw) / stride + 1;
    if (d.H + 2 * padding < kh || d.W + 2 * padding < kw)
        throw std::invalid_argument(std::string(op) + ": kernel larger than padded input");
    return d;
}

// (C,H,W) plane -> rows (OH*OW, C*KH*KW)
void im2col(const float* x, const ConvDims& d, int stride, int padding, float* cols) {
    const int CKK = d.C * d.KH * d.KW;
    for (int oy = 0; oy < d.OH; ++oy)
        for (int ox = 0; ox < d.OW; ++ox) {
            float* row = cols + (static_cast<size_t>(oy) * d.OW + ox) * CKK;
            int col = 0;
            for (int c = 0; c < d.C; ++c) {
                const float* plane = x + static_cast<size_t>(c) * d.H * d.W;
                for (int ky = 0; ky < d.KH; ++ky) {
                    const int y = oy * stride + ky - padding;
                    for (int kx = 0; kx < d.KW; ++kx, ++col) {
                        const int xx = ox * stride + kx - padding;
                        row[col] = (y >= 0 && y < d.H && xx >= 0 && xx < d.W)
                                       ? plane[static_cast<size_t>(y) * d.W + xx]
                                       : 0.f;
                    }
                }
            }
        }
}

// Scatter-add of column gradients back onto the input plane.
void col2im_add(const float* cols, const ConvDims& d, int stride, int padding, float* gx) {
    const int CKK = d.C * d.KH * d.KW;
    for (int oy = 0; oy < d.OH; ++oy)
        for (int ox = 0; ox < d.OW; ++ox) {
            const float* row = cols + (static_cast<size_t>(oy) * d.OW + ox) * CKK;
            int col = 0;
            for (int c = 0; c < d.C; ++c) {
                float* plane = gx + static_cast<size_t>(c) * d.H * d.W;
                for (int ky = 0; ky < d.KH; ++ky) {
                    const int y = oy * stride + ky - padding;
                    for (int kx = 0; kx < d.KW; ++kx, ++col) {
                        const int xx = ox * stride + kx - padding;
                        if (y >= 0 && y < d.H && xx >= 0 && xx < d.W)
                            plane[static_cast<size_t>(y) * d.W + xx] += row[col];
                    }
                }
            }
        }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int padding) {
    if (w.rank() != 4) throw std::invalid_argument("conv2d: expected w (OC,C,KH,KW)");
    ConvDims d = conv_dims(x, w.dim(0), w.dim(2), w.dim(3), stride, padding, "conv2d");
    if (w.dim(1) != d.C) throw std::invalid_argument("conv2d: channel count mismatch");
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != d.OC))
        throw std::invalid_argument("conv2d: bias shape mismatch");

    const size_t CKK = static_cast<size_t>(d.C) * d.KH * d.KW;
    const size_t spatial = static_cast<size_t>(d.OH) * d.OW;
    std::vector<float> v(static_cast<size_t>(d.B) * d.OC * spatial);
    std::vector<float> cols(spatial * CKK);
    std::vector<float> rows_out(spatial * static_cast<size_t>(d.OC));
    const auto& xv = x.data();
    const auto& wv = w.data();
    for (int b = 0; b < d.B; ++b) {
        im2col(xv.data() + static_cast<size_t>(b) * d.C * d.H * d.W, d, stride, padding,
               cols.data());
        gemm_nt(spatial, static_cast<size_t>(d.OC), CKK, cols.data(), wv.data(), rows_out.data(),
                false);
        // (OH*OW, OC) -> (OC, OH, OW)
        for (size_t p = 0; p < spatial; ++p)
            for (int o = 0; o < d.OC; ++o)
                v[(static_cast<size_t>(b) * d.OC + o) * spatial + p] = rows_out[p * d.OC + o];
    }
    if (bias.defined()) {
        const auto& bv = bias.data();
        for (int b = 0; b < d.B; ++b)
            for (int o = 0; o < d.OC; ++o) {
                float* plane = v.data() + (static_cast<size_t>(b) * d.OC + o) * spatial;
                for (size_t p = 0; p < spatial; ++p) plane[p] += bv[o];
            }
    }

    std::vector<Tensor> parents{x, w};
    if (bias.defined()) parents.push_back(bias);
    return make_op(
        "conv2d", {d.B, d.OC, d.OH, d.OW}, std::move(v), std::move(parents),
        [d, stride, padding, CKK, spatial](Node& n) {
            Node& xp = *n.parents[0];
            Node& wp = *n.parents[1];
            std::vector<float> cols(spatial * CKK);
            std::vector<float> dy_rows(spatial * static_cast<size_t>(d.OC));
            std::vector<float> dcols(spatial * CKK);
            for (int b = 0; b < d.B; ++b) {
                const float* gy = n.grad.data() + static_cast<size_t>(b) * d.OC * spatial;
                for (size_t p = 0; p < spatial; ++p)
                    for (int o = 0; o < d.OC; ++o) dy_rows[p * d.OC + o] = gy[o * spatial + p];
                if (wp.requires_grad || xp.requires_grad)
                    im2col(xp.value.data() + static_cast<size_t>(b) * d.C * d.H * d.W, d, stride,
                           padding, cols.data());
                if (wp.requires_grad)
                    gemm_tn(static_cast<size_t>(d.OC), CKK, spatial, dy_rows.data(), cols.data(),
                            wp.ensure_grad().data(), true);
                if (xp.requires_grad) {
                    gemm_nn(spatial, CKK, static_cast<size_t>(d.OC), dy_rows.data(),
                            wp.value.data(), dcols.data(), false);
                    col2im_add(dcols.data(), d, stride, padding,
                               xp.ensure_grad().data() + static_cast<size_t>(b) * d.C * d.H * d.W);
                }
                if (n.parents.size() == 3 && n.parents[2]->requires_grad) {
                    auto& gb = n.parents[2]->ensure_grad();
                    for (int o = 0; o < d.OC; ++o) {
                        double acc = 0.0;
                        for (size_t p = 0; p < spatial; ++p) acc += gy[o * spatial + p];
                        gb[o] += static_cast<float>(acc);
                    }
                }
            }
        });
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int padding) {
    if (w.rank() != 3) throw std::invalid_argument("depthwise_conv2d: expected w (C,KH,KW)");
    ConvDims d = conv_dims(x, x.dim(1), w.dim(1), w.dim(2), 1, padding, "depthwise_conv2d");
    if (w.dim(0) != d.C) throw std::invalid_argument("depthwise_conv2d: channel count mismatch");
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != d.C))
        throw std::invalid_argument("depthwise_conv2d: bias shape mismatch");

    const size_t plane_in = static_cast<size_t>(d.H) * d.W;
    const size_t plane_out = static_cast<size_t>(d.OH) * d.OW;
    std::vector<float> v(static_cast<size_t>(d.B) * d.C * plane_out, 0.f);
    const auto& xv = x.data();
    const auto& wv = w.data();
    for (int b = 0; b < d.B; ++b)
        for (int c = 0; c < d.C; ++c) {
            const float* in = xv.data() + (static_cast<size_t>(b) * d.C + c) * plane_in;
            const float* ker = wv.data() + static_cast<size_t>(c) * d.KH * d.KW;
            float* out = v.data() + (static_cast<size_t>(b) * d.C + c) * plane_out;
            const float bc = bias.defined() ? bias.data()[c] : 0.f;
            for (int oy = 0; oy < d.OH; ++oy)
                for (int ox = 0; ox < d.OW; ++ox) {
                    float acc = bc;
                    for (int ky = 0; ky < d.KH; ++ky) {
                        const int y = oy + ky - padding;
                        if (y < 0 || y >= d.H) continue;
                        for (int kx = 0; kx < d.KW; ++kx) {
                            const int xx = ox + kx - padding;
                            if (xx < 0 || xx >= d.W) continue;
                            acc += ker[ky * d.KW + kx] * in[static_cast<size_t>(y) * d.W + xx];
                        }
                    }
                    out[static_cast<size_t>(oy) * d.OW + ox] = acc;
                }
        }

    std::vector<Tensor> parents{x, w};
    if (bias.defined()) parents.push_back(bias);
    return make_op(
        "depthwise_conv2d", {d.B, d.C, d.OH, d.OW}, std::move(v), std::move(parents),
        [d, padding, plane_in, plane_out](Node& n) {
            Node& xp = *n.parents[0];
            Node& wp = *n.parents[1];
            for (int b = 0; b < d.B; ++b)
                for (int c = 0; c < d.C; ++c) {
                    const float* gy = n.grad.data() + (static_cast<size_t>(b) * d.C + c) * plane_out;
                    const float* in = xp.value.data() + (static_cast<size_t>(b) * d.C + c) * plane_in;
                    for (int oy = 0; oy < d.OH; ++oy)
                        for (int ox = 0; ox < d.OW; ++ox) {
                            const float g = gy[static_cast<size_t>(oy) * d.OW + ox];
                            if (g == 0.f) continue;
                            for (int ky = 0; ky < d.KH; ++ky) {
                                const int y = oy + ky - padding;
                                if (y < 0 || y >= d.H) continue;
                                for (int kx = 0; kx < d.KW; ++kx) {
                                    const int xx = ox + kx - padding;
                                    if (xx < 0 || xx >= d.W) continue;
                                    const size_t xi = static_cast<size_t>(y) * d.W + xx;
                                    const size_t wi = static_cast<size_t>(c) * d.KH * d.KW +
                                                      static_cast<size_t>(ky) * d.KW + kx;
                                    if (xp.requires_grad)
                                        xp.ensure_grad()[(static_cast<size_t>(b) * d.C + c) * plane_in + xi] +=
                                            g * wp.value[wi];
                                    if (wp.requires_grad) wp.ensure_grad()[wi] += g * in[xi];
                                }
                            }
                        }
                    if (n.parents.size() == 3 && n.parents[2]->requires_grad) {
                        double acc = 0.0;
                        for (size_t p = 0; p < plane_out; ++p) acc += gy[p];
                        n.parents[2]->ensure_grad()[c] += static_cast<float>(acc);
                    }
                }
        });
}

Tensor maxpool2d(const Tensor& x, int kernel, int stride, int padding) {
    ConvDims d = conv_dims(x, x.dim(1), kernel, kernel, stride, padding, "maxpool2d");
    const size_t plane_in = static_cast<size_t>(d.H) * d.W;
    const size_t plane_out = static_cast<size_t>(d.OH) * d.OW;
    std::vector<float> v(static_cast<size_t>(d.B) * d.C * plane_out);
    auto argmax = std::make_shared<std::vector<int32_t>>(v.size());
    const auto& xv = x.data();
    for (int b = 0; b < d.B; ++b)
        for (int c = 0; c < d.C; ++c) {
            const float* in = xv.data() + (static_cast<size_t>(b) * d.C + c) * plane_in;
            const size_t out_base = (static_cast<size_t>(b) * d.C + c) * plane_out;
            for (int oy = 0; oy < d.OH; ++oy)
                for (int ox = 0; ox < d.OW; ++ox) {
                    float best = -std::numeric_limits<float>::infinity();
                    int best_idx = -1;
                    for (int ky = 0; ky < kernel; ++ky) {
                        const int y = oy * stride + ky - padding;
                        if (y < 0 || y >= d.H) continue;
                        for (int kx = 0; kx < kernel; ++kx) {
                            const int xx = ox * stride + kx - padding;
                            if (xx < 0 || xx >= d.W) continue;
                            const float val = in[static_cast<size_t>(y) * d.W + xx];
                            if (val > best) {
                                best = val;
                                best_idx = y * d.W + xx;
                            }
                        }
                    }
                    const size_t oi = out_base + static_cast<size_t>(oy) * d.OW + ox;
                    v[oi] = best;
                    (*argmax)[oi] = best_idx;
                }
        }
    return make_op("maxpool2d", {d.B, d.C, d.OH, d.OW}, std::move(v), {x},
                   [d, plane_in, plane_out, argmax](Node& n) {
                       auto& g = n.parents[0]->ensure_grad();
                       for (int b = 0; b < d.B; ++b)
                           for (int c = 0; c < d.C; ++c) {
                               const size_t out_base = (static_cast<size_t>(b) * d.C + c) * plane_out;
                               const size_t in_base = (static_cast<size_t>(b) * d.C + c) * plane_in;
                               for (size_t p = 0; p < plane_out; ++p) {
                                   const int idx = (*argmax)[out_base + p];
                                   if (idx >= 0) g[in_base + idx] += n.grad[out_base + p];
                               }
                           }
                   });
}

Tensor groupnorm(const Tensor& x, int groups, const Tensor& gain, const Tensor& shift, float eps) {
    if (x.rank() != 4) throw std::invalid_argument("groupnorm: expected x (B,C,H,W)");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (C % groups != 0) throw std::invalid_argument("groupnorm: C not divisible by groups");
    if (gain.rank() != 1 || gain.dim(0) != C || shift.rank() != 1 || shift.dim(0) != C)
        throw std::invalid_argument("groupnorm: affine parameter shape mismatch");
    const int cpg = C / groups;
    const size_t plane = static_cast<size_t>(H) * W;
    const size_t gsize = static_cast<size_t>(cpg) * plane;

    std::vector<float> v(x.numel());
    auto xhat = std::make_shared<std::vector<float>>(x.numel());
    auto inv_std = std::make_shared<std::vector<float>>(static_cast<size_t>(B) * groups);
    const auto& xv = x.data();
    const auto& gv = gain.data();
    const auto& sv = shift.data();
    for (int b = 0; b < B; ++b)
        for (int g = 0; g < groups; ++g) {
            const size_t base = (static_cast<size_t>(b) * C + static_cast<size_t>(g) * cpg) * plane;
            double mean = 0.0;
            for (size_t i = 0; i < gsize; ++i) mean += xv[base + i];
            mean /= static_cast<double>(gsize);
            double var = 0.0;
            for (size_t i = 0; i < gsize; ++i) {
                const double dd = xv[base + i] - mean;
                var += dd * dd;
            }
            var /= static_cast<double>(gsize);
            const float is = static_cast<float>(1.0 / std::sqrt(var + eps));
            (*inv_std)[static_cast<size_t>(b) * groups + g] = is;
            for (int c = 0; c < cpg; ++c) {
                const int ch = g * cpg + c;
                for (size_t p = 0; p < plane; ++p) {
                    const size_t idx = base + static_cast<size_t>(c) * plane + p;
                    const float xh = (xv[idx] - static_cast<float>(mean)) * is;
                    (*xhat)[idx] = xh;
                    v[idx] = gv[ch] * xh + sv[ch];
                }
            }
        }
    return make_op(
        "groupnorm", x.shape(), std::move(v), {x, gain, shift},
        [B, C, groups, cpg, plane, gsize, xhat, inv_std](Node& n) {
            Node& xp = *n.parents[0];
            Node& gp = *n.parents[1];
            Node& sp = *n.parents[2];
            for (int b = 0; b < B; ++b)
                for (int g = 0; g < groups; ++g) {
                    const size_t base =
                        (static_cast<size_t>(b) * C + static_cast<size_t>(g) * cpg) * plane;
                    if (xp.requires_grad) {
                        auto& gx = xp.ensure_grad();
                        double m1 = 0.0, m2 = 0.0;
                        for (int c = 0; c < cpg; ++c) {
                            const float gamma = gp.value[g * cpg + c];
                            for (size_t p = 0; p < plane; ++p) {
                                const size_t idx = base + static_cast<size_t>(c) * plane + p;
                                const double dxh = static_cast<double>(n.grad[idx]) * gamma;
                                m1 += dxh;
                                m2 += dxh * (*xhat)[idx];
                            }
                        }
                        m1 /= static_cast<double>(gsize);
                        m2 /= static_cast<double>(gsize);
                        const float is = (*inv_std)[static_cast<size_t>(b) * groups + g];
                        for (int c = 0; c < cpg; ++c) {
                            const float gamma = gp.value[g * cpg + c];
                            for (size_t p = 0; p < plane; ++p) {
                                const size_t idx = base + static_cast<size_t>(c) * plane + p;
                                const float dxh = n.grad[idx] * gamma;
                                gx[idx] += is * (dxh - static_cast<float>(m1) -
                                                 (*xhat)[idx] * static_cast<float>(m2));
                            }
                        }
                    }
                    if (gp.requires_grad || sp.requires_grad) {
                        for (int c = 0; c < cpg; ++c) {
                            const int ch = g * cpg + c;
                            double dg = 0.0, ds = 0.0;
                            for (size_t p = 0; p < plane; ++p) {
                                const size_t idx = base + static_cast<size_t>(c) * plane + p;
                                dg += static_cast<double>(n.grad[idx]) * (*xhat)[idx];
                                ds += n.grad[idx];
                            }
                            if (gp.requires_grad)
                                gp.ensure_grad()[ch] += static_cast<float>(dg);
                            if (sp.requires_grad)
                                sp.ensure_grad()[ch] += static_cast<float>(ds);
                        }
                    }
                }
        });
}

// ---- gradient verification ----

GradCheckResult grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                           std::vector<Tensor> inputs, const std::vector<std::string>& names,
                           double step, size_t max_coords_per_tensor, uint64_t seed) {
    for (auto& t : inputs) t.node()->requires_grad = true;

    Tensor out = fn(inputs);
    if (out.numel() != 1) throw std::invalid_argument("grad_check: function must be scalar-valued");
    for (auto& t : inputs) t.zero_grad();
    backward(out);

    std::vector<std::vector<float>> analytic;
    analytic.reserve(inputs.size());
    for (auto& t : inputs) analytic.push_back(t.grad());

    auto eval = [&]() -> double {
        NoGradGuard guard;
        PreciseAccumGuard precise;
        return static_cast<double>(fn(inputs).item());
    };

    GradCheckResult result;
    Rng rng(seed);
    for (size_t ti = 0; ti < inputs.size(); ++ti) {
        auto& values = inputs[ti].data();
        std::vector<size_t> coords;
        if (max_coords_per_tensor == 0 || values.size() <= max_coords_per_tensor) {
            coords.resize(values.size());
            for (size_t i = 0; i < values.size(); ++i) coords[i] = i;
        } else {
            for (size_t i = 0; i < max_coords_per_tensor; ++i)
                coords.push_back(static_cast<size_t>(
                    rng.uniform_int(0, static_cast<int64_t>(values.size()) - 1)));
        }
        for (size_t ci : coords) {
            const float original = values[ci];
            const double ad = analytic[ti][ci];
            auto probe = [&](double h) {
                values[ci] = static_cast<float>(original + h);
                const double f_plus = eval();
                values[ci] = static_cast<float>(original - h);
                const double f_minus = eval();
                values[ci] = original;
                const double numeric = (f_plus - f_minus) / (2.0 * h);
                return std::fabs(ad - numeric) /
                       std::max({1.0, std::fabs(ad), std::fabs(numeric)});
            };
            const double h = step * std::max(1.0, std::fabs(static_cast<double>(original)));
            double rel = probe(h);
            // A marginal mismatch at one step is usually truncation/rounding
            // noise; a wrong gradient rule stays wrong at every step.
            if (rel > 5e-4) rel = std::min({rel, probe(3.0 * h), probe(h / 3.0)});
            ++result.coords_checked;
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst_tensor = ti < names.size() ? names[ti] : "input" + std::to_string(ti);
            }
        }
    }
    return result;
}

}  // namespace microcount::nn
