// SPDX-License-Identifier: Apache-2.0
#include "vapi/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace vapi {

namespace {

thread_local bool g_grad_enabled = true;

int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d < 0) throw std::runtime_error("shape mismatch");
        n *= d;
    }
    return n;
}

void check_same_shape(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw std::runtime_error("shape mismatch");
}

void check_2d(const Tensor& a) {
    if (a.ndim() != 2) throw std::runtime_error("shape mismatch");
}

std::vector<double>& grad_buf(Tensor::Node& n) {
    if (n.grad.empty()) n.grad.assign(static_cast<size_t>(n.numel), 0.0);
    return n.grad;
}

}  // namespace

bool grad_mode_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor make_op(std::vector<int> shape, std::vector<double> value,
               std::vector<Tensor> parents,
               std::function<void(Tensor::Node&)> backward) {
    auto n = std::make_shared<Tensor::Node>();
    n->numel = shape_numel(shape);
    if (static_cast<int64_t>(value.size()) != n->numel)
        throw std::runtime_error("shape mismatch");
    n->shape = std::move(shape);
    n->value = std::move(value);
    if (g_grad_enabled) {
        bool needs_grad = false;
        for (const Tensor& p : parents) needs_grad = needs_grad || p.requires_grad();
        if (needs_grad) {
            n->requires_grad = true;
            n->parents.reserve(parents.size());
            for (const Tensor& p : parents) n->parents.push_back(p.node());
            n->backward = std::move(backward);
        }
    }
    return Tensor(std::move(n));
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double fill, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->numel = shape_numel(shape);
    n->shape = std::move(shape);
    n->value.assign(static_cast<size_t>(n->numel), fill);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data,
                         bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->numel = shape_numel(shape);
    if (static_cast<int64_t>(data.size()) != n->numel)
        throw std::runtime_error("shape mismatch");
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v) { return from_data({}, {v}); }

Tensor Tensor::randn(std::vector<int> shape, double stddev, SeededRng& rng,
                     bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->numel = shape_numel(shape);
    n->shape = std::move(shape);
    n->value.resize(static_cast<size_t>(n->numel));
    for (double& x : n->value) x = stddev * rng.next_gaussian();
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

double Tensor::item() const {
    if (node_->numel != 1) throw std::runtime_error("shape mismatch");
    return node_->value[0];
}

double Tensor::at(int i, int j) const {
    const int cols = node_->shape[1];
    return node_->value[static_cast<size_t>(i) * cols + j];
}

std::vector<double> Tensor::grad() const {
    if (node_->grad.empty())
        return std::vector<double>(static_cast<size_t>(node_->numel), 0.0);
    return node_->grad;
}

Tensor Tensor::detach() const {
    auto n = std::make_shared<Node>();
    n->shape = node_->shape;
    n->value = node_->value;
    n->numel = node_->numel;
    n->requires_grad = false;
    return Tensor(std::move(n));
}

void Tensor::backward() const {
    if (node_->numel != 1) throw std::runtime_error("backward requires scalar root");
    // Iterative topological order over parents.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            Node* p = n->parents[idx++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    grad_buf(*node_)[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && !n->grad.empty()) n->backward(*n);
    }
}

// ---------------------------------------------------------------- elementwise

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b);
    std::vector<double> out(a.data());
    const auto& bv = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](Tensor::Node& n) {
        for (int k = 0; k < 2; ++k) {
            auto& p = *n.parents[static_cast<size_t>(k)];
            if (!p.requires_grad) continue;
            auto& g = grad_buf(p);
            for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b);
    std::vector<double> out(a.data());
    const auto& bv = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](Tensor::Node& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) {
            auto& g = grad_buf(pa);
            for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (pb.requires_grad) {
            auto& g = grad_buf(pb);
            for (size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b);
    std::vector<double> out(a.data());
    const auto& bv = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](Tensor::Node& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) {
            auto& g = grad_buf(pa);
            for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            auto& g = grad_buf(pb);
            for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pa.value[i];
        }
    });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.data());
    for (double& x : out) x *= c;
    return make_op(a.shape(), std::move(out), {a}, [c](Tensor::Node& n) {
        auto& p = *n.parents[0];
        auto& g = grad_buf(p);
        for (size_t i = 0; i < g.size(); ++i) g[i] += c * n.grad[i];
    });
}

Tensor add_scalar(const Tensor& a, double c) {
    std::vector<double> out(a.data());
    for (double& x : out) x += c;
    return make_op(a.shape(), std::move(out), {a}, [](Tensor::Node& n) {
        auto& g = grad_buf(*n.parents[0]);
        for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
}

Tensor exp_(const Tensor& a) {
    std::vector<double> out(a.data());
    for (double& x : out) x = std::exp(x);
    return make_op(a.shape(), std::move(out), {a}, [](Tensor::Node& n) {
        auto& g = grad_buf(*n.parents[0]);
        for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * n.value[i];
    });
}

Tensor log_(const Tensor& a) {
    std::vector<double> out(a.data());
    for (double& x : out) x = std::log(x);
    return make_op(a.shape(), std::move(out), {a}, [](Tensor::Node& n) {
        auto& p = *n.parents[0];
        auto& g = grad_buf(p);
        for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] / p.value[i];
    });
}

Tensor tanh_(const Tensor& a) {
    std::vector<double> out(a.data());
    for (double& x : out) x = std::tanh(x);
    return make_op(a.shape(), std::move(out), {a}, [](Tensor::Node& n) {
        auto& g = grad_buf(*n.parents[0]);
        for (size_t i = 0; i < g.size(); ++i)
            g[i] += n.grad[i] * (1.0 - n.value[i] * n.value[i]);
    });
}

Tensor sigmoid_(const Tensor& a) {
    std::vector<double> out(a.data());
    for (double& x : out) x = 1.0 / (1.0 + std::exp(-x));
    return make_op(a.shape(), std::move(out), {a}, [](Tensor::Node& n) {
        auto& g = grad_buf(*n.parents[0]);
        for (size_t i = 0; i < g.size(); ++i)
            g[i] += n.grad[i] * n.value[i] * (1.0 - n.value[i]);
    });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    std::vector<double> out(a.data());
    for (double& x : out) x = std::min(hi, std::max(lo, x));
    return make_op(a.shape(), std::move(out), {a}, [lo, hi](Tensor::Node& n) {
        auto& p = *n.parents[0];
        auto& g = grad_buf(p);
        for (size_t i = 0; i < g.size(); ++i)
            if (p.value[i] > lo && p.value[i] < hi) g[i] += n.grad[i];
    });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b);
    std::vector<double> out(a.data());
    const auto& bv = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::min(out[i], bv[i]);
    return make_op(a.shape(), std::move(out), {a, b}, [](Tensor::Node& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        for (size_t i = 0; i < n.grad.size(); ++i) {
            // ties route to the first argument
            if (pa.value[i] <= pb.value[i]) {
                if (pa.requires_grad) grad_buf(pa)[i] += n.grad[i];
            } else if (pb.requires_grad) {
                grad_buf(pb)[i] += n.grad[i];
            }
        }
    });
}

Tensor straight_through(const Tensor& hard, const Tensor& soft) {
    check_same_shape(hard, soft);
    std::vector<double> out(hard.data());
    return make_op(hard.shape(), std::move(out), {soft}, [](Tensor::Node& n) {
        auto& g = grad_buf(*n.parents[0]);
        for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
}

// ------------------------------------------------------------ matrix / shape

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_2d(a);
    check_2d(b);
    const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2) throw std::runtime_error("shape mismatch");
    std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
    const auto& av = a.data();
    const auto& bv = b.data();
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const double aip = av[static_cast<size_t>(i) * k + p];
            const double* brow = &bv[static_cast<size_t>(p) * n];
            double* orow = &out[static_cast<size_t>(i) * n];
            for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
    return make_op({m, n}, std::move(out), {a, b}, [m, k, n](Tensor::Node& nd) {
        auto& pa = *nd.parents[0];
        auto& pb = *nd.parents[1];
        if (pa.requires_grad) {
            auto& ga = grad_buf(pa);  // dA = G * B^T
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    const double g = nd.grad[static_cast<size_t>(i) * n + j];
                    if (g == 0.0) continue;
                    const double* brow2 = &pb.value[0];
                    for (int p = 0; p < k; ++p)
                        ga[static_cast<size_t>(i) * k + p] +=
                            g * brow2[static_cast<size_t>(p) * n + j];
                }
        }
        if (pb.requires_grad) {
            auto& gb = grad_buf(pb);  // dB = A^T * G
            for (int i = 0; i < m; ++i)
                for (int p = 0; p < k; ++p) {
                    const double av2 = pa.value[static_cast<size_t>(i) * k + p];
                    if (av2 == 0.0) continue;
                    const double* grow = &nd.grad[static_cast<size_t>(i) * n];
                    double* gbrow = &gb[static_cast<size_t>(p) * n];
                    for (int j = 0; j < n; ++j) gbrow[j] += av2 * grow[j];
                }
        }
    });
}

Tensor transpose(const Tensor& a) {
    check_2d(a);
    const int m = a.dim(0), n = a.dim(1);
    std::vector<double> out(static_cast<size_t>(m) * n);
    const auto& av = a.data();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out[static_cast<size_t>(j) * m + i] = av[static_cast<size_t>(i) * n + j];
    return make_op({n, m}, std::move(out), {a}, [m, n](Tensor::Node& nd) {
        auto& g = grad_buf(*nd.parents[0]);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                g[static_cast<size_t>(i) * n + j] +=
                    nd.grad[static_cast<size_t>(j) * m + i];
    });
}

Tensor slice_rows(const Tensor& a, int start, int count) {
    check_2d(a);
    const int m = a.dim(0), n = a.dim(1);
    if (start < 0 || count < 0 || start + count > m)
        throw std::runtime_error("shape mismatch");
    std::vector<double> out(a.data().begin() + static_cast<int64_t>(start) * n,
                            a.data().begin() + static_cast<int64_t>(start + count) * n);
    return make_op({count, n}, std::move(out), {a}, [start, n](Tensor::Node& nd) {
        auto& g = grad_buf(*nd.parents[0]);
        const size_t off = static_cast<size_t>(start) * n;
        for (size_t i = 0; i < nd.grad.size(); ++i) g[off + i] += nd.grad[i];
    });
}

Tensor slice_cols(const Tensor& a, int start, int count) {
    check_2d(a);
    const int m = a.dim(0), n = a.dim(1);
    if (start < 0 || count < 0 || start + count > n)
        throw std::runtime_error("shape mismatch");
    std::vector<double> out(static_cast<size_t>(m) * count);
    const auto& av = a.data();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < count; ++j)
            out[static_cast<size_t>(i) * count + j] =
                av[static_cast<size_t>(i) * n + start + j];
    return make_op({m, count}, std::move(out), {a},
                   [m, n, start, count](Tensor::Node& nd) {
        auto& g = grad_buf(*nd.parents[0]);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < count; ++j)
                g[static_cast<size_t>(i) * n + start + j] +=
                    nd.grad[static_cast<size_t>(i) * count + j];
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::runtime_error("shape mismatch");
    const int m = parts[0].dim(0);
    int total = 0;
    for (const Tensor& p : parts) {
        check_2d(p);
        if (p.dim(0) != m) throw std::runtime_error("shape mismatch");
        total += p.dim(1);
    }
    std::vector<double> out(static_cast<size_t>(m) * total);
    std::vector<int> widths;
    int off = 0;
    for (const Tensor& p : parts) {
        const int w = p.dim(1);
        widths.push_back(w);
        const auto& pv = p.data();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j)
                out[static_cast<size_t>(i) * total + off + j] =
                    pv[static_cast<size_t>(i) * w + j];
        off += w;
    }
    return make_op({m, total}, std::move(out), parts,
                   [m, total, widths](Tensor::Node& nd) {
        int o = 0;
        for (size_t k = 0; k < nd.parents.size(); ++k) {
            auto& p = *nd.parents[k];
            const int w = widths[k];
            if (p.requires_grad) {
                auto& g = grad_buf(p);
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < w; ++j)
                        g[static_cast<size_t>(i) * w + j] +=
                            nd.grad[static_cast<size_t>(i) * total + o + j];
            }
            o += w;
        }
    });
}

Tensor gather_rows(const Tensor& table, const TokenSeq& indices) {
    check_2d(table);
    const int rows = table.dim(0), cols = table.dim(1);
    std::vector<double> out;
    out.reserve(indices.size() * static_cast<size_t>(cols));
    for (int idx : indices) {
        if (idx < 0 || idx >= rows) throw std::runtime_error("token out of vocabulary");
        const auto& tv = table.data();
        out.insert(out.end(), tv.begin() + static_cast<int64_t>(idx) * cols,
                   tv.begin() + static_cast<int64_t>(idx + 1) * cols);
    }
    TokenSeq idx_copy = indices;
    return make_op({static_cast<int>(indices.size()), cols}, std::move(out),
                   {table}, [idx_copy, cols](Tensor::Node& nd) {
        auto& g = grad_buf(*nd.parents[0]);
        for (size_t i = 0; i < idx_copy.size(); ++i) {
            const size_t src = i * static_cast<size_t>(cols);
            const size_t dst = static_cast<size_t>(idx_copy[i]) * cols;
            for (int j = 0; j < cols; ++j) g[dst + j] += nd.grad[src + j];
        }
    });
}

Tensor reshape(const Tensor& a, std::vector<int> shape) {
    if (shape_numel(shape) != a.numel()) throw std::runtime_error("shape mismatch");
    std::vector<double> out(a.data());
    return make_op(std::move(shape), std::move(out), {a}, [](Tensor::Node& nd) {
        auto& g = grad_buf(*nd.parents[0]);
        for (size_t i = 0; i < g.size(); ++i) g[i] += nd.grad[i];
    });
}

Tensor pick_per_row(const Tensor& a, const TokenSeq& cols) {
    check_2d(a);
    const int m = a.dim(0), n = a.dim(1);
    if (static_cast<int>(cols.size()) != m) throw std::runtime_error("shape mismatch");
    std::vector<double> out(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) {
        if (cols[static_cast<size_t>(i)] < 0 || cols[static_cast<size_t>(i)] >= n)
            throw std::runtime_error("token out of vocabulary");
        out[static_cast<size_t>(i)] = a.at(i, cols[static_cast<size_t>(i)]);
    }
    TokenSeq cols_copy = cols;
    return make_op({m}, std::move(out), {a}, [cols_copy, n](Tensor::Node& nd) {
        auto& g = grad_buf(*nd.parents[0]);
        for (size_t i = 0; i < cols_copy.size(); ++i)
            g[i * static_cast<size_t>(n) + cols_copy[i]] += nd.grad[i];
    });
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
    check_2d(a);
    const int m = a.dim(0), n = a.dim(1);
    if (v.numel() != n) throw std::runtime_error("shape mismatch");
    std::vector<double> out(a.data());
    const auto& vv = v.data();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[static_cast<size_t>(i) * n + j] += vv[static_cast<size_t>(j)];
    return make_op({m, n}, std::move(out), {a, v}, [m, n](Tensor::Node& nd) {
        auto& pa = *nd.parents[0];
        auto& pv = *nd.parents[1];
        if (pa.requires_grad) {
            auto& g = grad_buf(pa);
            for (size_t i = 0; i < g.size(); ++i) g[i] += nd.grad[i];
        }
        if (pv.requires_grad) {
            auto& g = grad_buf(pv);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    g[static_cast<size_t>(j)] += nd.grad[static_cast<size_t>(i) * n + j];
        }
    });
}

// -------------------------------------------------------------- reductions

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double x : a.data()) s += x;
    return make_op({}, {s}, {a}, [](Tensor::Node& nd) {
        auto& g = grad_buf(*nd.parents[0]);
        for (double& x : g) x += nd.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    const double inv = 1.0 / static_cast<double>(a.numel());
    double s = 0.0;
    for (double x : a.data()) s += x;
    return make_op({}, {s * inv}, {a}, [inv](Tensor::Node& nd) {
        auto& g = grad_buf(*nd.parents[0]);
        for (double& x : g) x += inv * nd.grad[0];
    });
}

Tensor sum_sq(const Tensor& a) {
    double s = 0.0;
    for (double x : a.data()) s += x * x;
    return make_op({}, {s}, {a}, [](Tensor::Node& nd) {
        auto& p = *nd.parents[0];
        auto& g = grad_buf(p);
        for (size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * p.value[i] * nd.grad[0];
    });
}

Tensor mse(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b);
    return scale(sum_sq(sub(a, b)), 1.0 / static_cast<double>(a.numel()));
}

// ---------------------------------------------------- normalization / softmax

Tensor layer_norm_rows(const Tensor& a, const Tensor& gain, const Tensor& bias,
                       double eps) {
    check_2d(a);
    const int m = a.dim(0), n = a.dim(1);
    if (gain.numel() != n || bias.numel() != n)
        throw std::runtime_error("shape mismatch");
    std::vector<double> out(static_cast<size_t>(m) * n);
    std::vector<double> xhat(static_cast<size_t>(m) * n);
    std::vector<double> istd(static_cast<size_t>(m));
    const auto& av = a.data();
    const auto& gv = gain.data();
    const auto& bv = bias.data();
    for (int i = 0; i < m; ++i) {
        const double* row = &av[static_cast<size_t>(i) * n];
        double mu = 0.0;
        for (int j = 0; j < n; ++j) mu += row[j];
        mu /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= n;
        const double is = 1.0 / std::sqrt(var + eps);
        istd[static_cast<size_t>(i)] = is;
        for (int j = 0; j < n; ++j) {
            const double xh = (row[j] - mu) * is;
            xhat[static_cast<size_t>(i) * n + j] = xh;
            out[static_cast<size_t>(i) * n + j] = gv[static_cast<size_t>(j)] * xh + bv[static_cast<size_t>(j)];
        }
    }
    return make_op({m, n}, std::move(out), {a, gain, bias},
                   [m, n, xhat, istd](Tensor::Node& nd) {
        auto& pa = *nd.parents[0];
        auto& pg = *nd.parents[1];
        auto& pb = *nd.parents[2];
        const auto& gv = pg.value;
        for (int i = 0; i < m; ++i) {
            const double* grow = &nd.grad[static_cast<size_t>(i) * n];
            const double* xrow = &xhat[static_cast<size_t>(i) * n];
            if (pg.requires_grad) {
                auto& gg = grad_buf(pg);
                for (int j = 0; j < n; ++j) gg[static_cast<size_t>(j)] += grow[j] * xrow[j];
            }
            if (pb.requires_grad) {
                auto& gb = grad_buf(pb);
                for (int j = 0; j < n; ++j) gb[static_cast<size_t>(j)] += grow[j];
            }
            if (pa.requires_grad) {
                auto& ga = grad_buf(pa);
                double sum_gy = 0.0, sum_gyx = 0.0;
                for (int j = 0; j < n; ++j) {
                    const double gy = grow[j] * gv[static_cast<size_t>(j)];
                    sum_gy += gy;
                    sum_gyx += gy * xrow[j];
                }
                const double is = istd[static_cast<size_t>(i)];
                for (int j = 0; j < n; ++j) {
                    const double gy = grow[j] * gv[static_cast<size_t>(j)];
                    ga[static_cast<size_t>(i) * n + j] +=
                        is * (gy - (sum_gy + xrow[j] * sum_gyx) / n);
                }
            }
        }
    });
}

Tensor softmax(const Tensor& logits, double temperature) {
    if (temperature <= 0.0) throw std::runtime_error("temperature must be positive");
    if (!all_finite(logits.data())) throw std::runtime_error("non-finite input");
    const bool is_vec = logits.ndim() == 1;
    const int m = is_vec ? 1 : logits.dim(0);
    const int n = is_vec ? logits.dim(0) : logits.dim(1);
    std::vector<double> out(static_cast<size_t>(m) * n);
    const auto& lv = logits.data();
    const double invt = 1.0 / temperature;
    for (int i = 0; i < m; ++i) {
        const double* row = &lv[static_cast<size_t>(i) * n];
        double mx = row[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        double* orow = &out[static_cast<size_t>(i) * n];
        for (int j = 0; j < n; ++j) {
            orow[j] = std::exp((row[j] - mx) * invt);
            z += orow[j];
        }
        const double iz = 1.0 / z;
        for (int j = 0; j < n; ++j) orow[j] *= iz;
    }
    return make_op(logits.shape(), std::move(out), {logits},
                   [m, n, invt](Tensor::Node& nd) {
        auto& g = grad_buf(*nd.parents[0]);
        for (int i = 0; i < m; ++i) {
            const double* p = &nd.value[static_cast<size_t>(i) * n];
            const double* gr = &nd.grad[static_cast<size_t>(i) * n];
            double dot = 0.0;
            for (int j = 0; j < n; ++j) dot += p[j] * gr[j];
            for (int j = 0; j < n; ++j)
                g[static_cast<size_t>(i) * n + j] += invt * p[j] * (gr[j] - dot);
        }
    });
}

Tensor log_softmax(const Tensor& logits) {
    if (!all_finite(logits.data())) throw std::runtime_error("non-finite input");
    const bool is_vec = logits.ndim() == 1;
    const int m = is_vec ? 1 : logits.dim(0);
    const int n = is_vec ? logits.dim(0) : logits.dim(1);
    std::vector<double> out(static_cast<size_t>(m) * n);
    const auto& lv = logits.data();
    for (int i = 0; i < m; ++i) {
        const double* row = &lv[static_cast<size_t>(i) * n];
        double mx = row[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int j = 0; j < n; ++j) z += std::exp(row[j] - mx);
        const double lz = mx + std::log(z);
        for (int j = 0; j < n; ++j) out[static_cast<size_t>(i) * n + j] = row[j] - lz;
    }
    return make_op(logits.shape(), std::move(out), {logits},
                   [m, n](Tensor::Node& nd) {
        auto& g = grad_buf(*nd.parents[0]);
        for (int i = 0; i < m; ++i) {
            const double* ls = &nd.value[static_cast<size_t>(i) * n];
            const double* gr = &nd.grad[static_cast<size_t>(i) * n];
            double gsum = 0.0;
            for (int j = 0; j < n; ++j) gsum += gr[j];
            for (int j = 0; j < n; ++j)
                g[static_cast<size_t>(i) * n + j] += gr[j] - std::exp(ls[j]) * gsum;
        }
    });
}

// ------------------------------------------------------------------ image ops

Tensor extract_patches(const Tensor& img, int patch) {
    check_2d(img);
    const int h = img.dim(0), w = img.dim(1);
    if (h != w || h % patch != 0) throw std::runtime_error("shape mismatch");
    const int grid = h / patch;
    const int pd = patch * patch;
    std::vector<double> out(static_cast<size_t>(grid) * grid * pd);
    const auto& iv = img.data();
    for (int gy = 0; gy < grid; ++gy)
        for (int gx = 0; gx < grid; ++gx) {
            const size_t base = (static_cast<size_t>(gy) * grid + gx) * pd;
            for (int py = 0; py < patch; ++py)
                for (int px = 0; px < patch; ++px)
                    out[base + static_cast<size_t>(py) * patch + px] =
                        iv[static_cast<size_t>(gy * patch + py) * w + gx * patch + px];
        }
    return make_op({grid * grid, pd}, std::move(out), {img},
                   [patch, grid, w, pd](Tensor::Node& nd) {
        auto& g = grad_buf(*nd.parents[0]);
        for (int gy = 0; gy < grid; ++gy)
            for (int gx = 0; gx < grid; ++gx) {
                const size_t base = (static_cast<size_t>(gy) * grid + gx) * pd;
                for (int py = 0; py < patch; ++py)
                    for (int px = 0; px < patch; ++px)
                        g[static_cast<size_t>(gy * patch + py) * w + gx * patch + px] +=
                            nd.grad[base + static_cast<size_t>(py) * patch + px];
            }
    });
}

Tensor assemble_patches(const Tensor& patches, int patch, int image_size) {
    check_2d(patches);
    const int grid = image_size / patch;
    const int pd = patch * patch;
    if (patches.dim(0) != grid * grid || patches.dim(1) != pd ||
        grid * patch != image_size)
        throw std::runtime_error("shape mismatch");
    std::vector<double> out(static_cast<size_t>(image_size) * image_size);
    const auto& pv = patches.data();
    for (int gy = 0; gy < grid; ++gy)
        for (int gx = 0; gx < grid; ++gx) {
            const size_t base = (static_cast<size_t>(gy) * grid + gx) * pd;
            for (int py = 0; py < patch; ++py)
                for (int px = 0; px < patch; ++px)
                    out[static_cast<size_t>(gy * patch + py) * image_size +
                        gx * patch + px] = pv[base + static_cast<size_t>(py) * patch + px];
        }
    return make_op({image_size, image_size}, std::move(out), {patches},
                   [patch, grid, image_size, pd](Tensor::Node& nd) {
        auto& g = grad_buf(*nd.parents[0]);
        for (int gy = 0; gy < grid; ++gy)
            for (int gx = 0; gx < grid; ++gx) {
                const size_t base = (static_cast<size_t>(gy) * grid + gx) * pd;
                for (int py = 0; py < patch; ++py)
                    for (int px = 0; px < patch; ++px)
                        g[base + static_cast<size_t>(py) * patch + px] +=
                            nd.grad[static_cast<size_t>(gy * patch + py) * image_size +
                                    gx * patch + px];
            }
    });
}

Tensor conv3x3_same(const Tensor& img, const Tensor& filters) {
    check_2d(img);
    if (filters.ndim() != 3 || filters.dim(1) != 3 || filters.dim(2) != 3)
        throw std::runtime_error("shape mismatch");
    const int h = img.dim(0), w = img.dim(1), f = filters.dim(0);
    std::vector<double> out(static_cast<size_t>(f) * h * w, 0.0);
    const auto& iv = img.data();
    const auto& fv = filters.data();
    for (int c = 0; c < f; ++c) {
        const double* ker = &fv[static_cast<size_t>(c) * 9];
        double* omap = &out[static_cast<size_t>(c) * h * w];
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int yy = y + dy, xx = x + dx;
                        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                        acc += ker[static_cast<size_t>(dy + 1) * 3 + (dx + 1)] *
                               iv[static_cast<size_t>(yy) * w + xx];
                    }
                omap[static_cast<size_t>(y) * w + x] = acc;
            }
    }
    Tensor filt_const = filters.requires_grad() ? filters.detach() : filters;
    std::vector<double> ker_copy = filt_const.data();
    return make_op({f, h, w}, std::move(out), {img},
                   [h, w, f, ker_copy](Tensor::Node& nd) {
        auto& g = grad_buf(*nd.parents[0]);
        for (int c = 0; c < f; ++c) {
            const double* ker = &ker_copy[static_cast<size_t>(c) * 9];
            const double* gmap = &nd.grad[static_cast<size_t>(c) * h * w];
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const double gv = gmap[static_cast<size_t>(y) * w + x];
                    if (gv == 0.0) continue;
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            const int yy = y + dy, xx = x + dx;
                            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                            g[static_cast<size_t>(yy) * w + xx] +=
                                gv * ker[static_cast<size_t>(dy + 1) * 3 + (dx + 1)];
                        }
                }
        }
    });
}

// ------------------------------------------------------------------ sampling

int categorical_sample(const std::vector<double>& probs, SeededRng& rng) {
    double total = 0.0;
    for (double p : probs) {
        if (p < 0.0 || !std::isfinite(p)) throw std::runtime_error("unnormalized distribution");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::runtime_error("unnormalized distribution");
    const double u = rng.next_double();
    double cum = 0.0;
    int last_positive = 0;
    for (size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] > 0.0) last_positive = static_cast<int>(i);
        cum += probs[i];
        if (u < cum) return static_cast<int>(i);
    }
    return last_positive;
}

int categorical_sample(const Tensor& probs, SeededRng& rng) {
    return categorical_sample(probs.data(), rng);
}

Tensor cross_entropy_seq(const Tensor& logits, const TokenSeq& targets) {
    check_2d(logits);
    if (logits.dim(0) != static_cast<int>(targets.size()))
        throw std::runtime_error("shape mismatch");
    for (int t : targets)
        if (t < 0 || t >= logits.dim(1)) throw std::runtime_error("token out of vocabulary");
    return neg(mean(pick_per_row(log_softmax(logits), targets)));
}

int argmax_lowest(const std::vector<double>& v) {
    int best = 0;
    for (size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[static_cast<size_t>(best)]) best = static_cast<int>(i);
    return best;
}

bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace vapi
