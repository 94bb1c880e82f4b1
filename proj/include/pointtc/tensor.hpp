#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace pointtc {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until the backward pass touches it
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    std::vector<double>& grad_buffer() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

using NodePtr = std::shared_ptr<Node>;

}  // namespace detail

/// Dense row-major tensor of doubles with an optional reverse-mode tape.
///
/// A Tensor is a cheap handle: copies share the same node. Operations that
/// receive at least one operand with requires_grad() record a backward
/// closure; calling backward() on a scalar result walks the recorded graph
/// once in reverse topological order and accumulates into every reachable
/// leaf's gradient slot.
class Tensor {
public:
    Tensor() = default;

    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
        if (shape_numel(shape) != values.size()) {
            throw DimensionError("tensor: " + std::to_string(values.size()) +
                                 " values do not fill shape " + shape_string(shape));
        }
        auto node = std::make_shared<detail::Node>();
        node->shape = std::move(shape);
        node->value = std::move(values);
        node->requires_grad = requires_grad;
        return Tensor(std::move(node));
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        const auto n = shape_numel(shape);
        return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
    }

    static Tensor full(Shape shape, double v) {
        const auto n = shape_numel(shape);
        return from(std::move(shape), std::vector<double>(n, v));
    }

    static Tensor scalar(double v, bool requires_grad = false) { return from({}, {v}, requires_grad); }

    bool defined() const noexcept { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t numel() const { return node_->value.size(); }
    bool requires_grad() const noexcept { return node_ && node_->requires_grad; }

    std::span<const double> values() const { return node_->value; }
    /// Direct write access. Only meaningful for leaves (parameters, inputs).
    std::span<double> mutable_values() { return node_->value; }
    std::span<const double> grad() const { return node_->grad; }
    std::span<double> mutable_grad() { return node_->grad_buffer(); }
    bool has_grad() const noexcept { return node_ && !node_->grad.empty(); }

    double item() const {
        if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
        return node_->value[0];
    }
    double operator[](std::size_t i) const { return node_->value[i]; }
    double at(std::size_t row, std::size_t col) const { return node_->value[row * dim(1) + col]; }

    void zero_grad() {
        if (node_) node_->grad.clear();
    }

    /// Reverse-mode sweep from this scalar. Gradients accumulate into leaves;
    /// call zero_grad() on parameters between steps.
    void backward() const {
        if (numel() != 1) {
            throw ContractError("backward() needs a scalar loss, got shape " + shape_string(shape()));
        }
        if (!node_->requires_grad) return;

        std::vector<detail::Node*> order;
        std::unordered_set<detail::Node*> visited;
        std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
        visited.insert(node_.get());
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->parents.size()) {
                detail::Node* parent = node->parents[next++].get();
                if (parent->requires_grad && visited.insert(parent).second) stack.push_back({parent, 0});
            } else {
                order.push_back(node);
                stack.pop_back();
            }
        }

        node_->grad_buffer()[0] += 1.0;
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            detail::Node* node = *it;
            if (node->backward && !node->grad.empty()) node->backward(*node);
        }
    }

    /// Same values, cut from the graph.
    Tensor detach() const { return from(shape(), node_->value, false); }

    const detail::NodePtr& node() const noexcept { return node_; }

private:
    explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}
    detail::NodePtr node_;

    friend Tensor make_result(Shape, std::vector<double>, std::initializer_list<Tensor>,
                              std::function<void(detail::Node&)>);
};

/// Builds an op result. The backward closure is only attached when one of the
/// inputs carries a gradient; closures read node.grad and accumulate into the
/// parents they captured.
inline Tensor make_result(Shape shape, std::vector<double> values, std::initializer_list<Tensor> inputs,
                          std::function<void(detail::Node&)> backward) {
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    for (const auto& t : inputs) {
        if (t.requires_grad()) {
            node->requires_grad = true;
            break;
        }
    }
    if (node->requires_grad) {
        for (const auto& t : inputs) node->parents.push_back(t.node());
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
}

inline void require_rank(const Tensor& a, std::size_t rank, const char* op) {
    if (a.rank() != rank) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                             shape_string(a.shape()));
    }
}

// Splits a shape around `axis` into (outer, extent, inner) strides.
struct AxisSplit {
    std::size_t outer = 1, extent = 1, inner = 1;
};

inline AxisSplit split_axis(const Shape& shape, std::size_t axis) {
    if (axis >= shape.size()) {
        throw ArgumentError("axis " + std::to_string(axis) + " out of range for " + shape_string(shape));
    }
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

inline Shape drop_axis(const Shape& shape, std::size_t axis) {
    Shape out;
    for (std::size_t i = 0; i < shape.size(); ++i)
        if (i != axis) out.push_back(shape[i]);
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    auto* pa = a.node().get();
    auto* pb = b.node().get();
    return make_result(a.shape(), std::move(out), {a, b}, [pa, pb](detail::Node& self) {
        for (auto* p : {pa, pb}) {
            if (!p->requires_grad) continue;
            auto& g = p->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    auto* pa = a.node().get();
    auto* pb = b.node().get();
    return make_result(a.shape(), std::move(out), {a, b}, [pa, pb](detail::Node& self) {
        if (pa->requires_grad) {
            auto& g = pa->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pb->requires_grad) {
            auto& g = pb->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    auto* pa = a.node().get();
    auto* pb = b.node().get();
    return make_result(a.shape(), std::move(out), {a, b}, [pa, pb](detail::Node& self) {
        if (pa->requires_grad) {
            auto& g = pa->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->value[i];
        }
        if (pb->requires_grad) {
            auto& g = pb->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->value[i];
        }
    });
}

inline Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
    auto* pa = a.node().get();
    return make_result(a.shape(), std::move(out), {a}, [pa, factor](detail::Node& self) {
        auto& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
    });
}

inline Tensor add_scalar(const Tensor& a, double offset) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + offset;
    auto* pa = a.node().get();
    return make_result(a.shape(), std::move(out), {a}, [pa](detail::Node& self) {
        auto& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

inline Tensor reciprocal(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (a[i] == 0.0) throw DomainError("reciprocal of zero");
        out[i] = 1.0 / a[i];
    }
    auto* pa = a.node().get();
    return make_result(a.shape(), std::move(out), {a}, [pa](detail::Node& self) {
        auto& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i] * self.value[i] * self.value[i];
    });
}

inline Tensor relu(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
    auto* pa = a.node().get();
    return make_result(a.shape(), std::move(out), {a}, [pa](detail::Node& self) {
        auto& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (pa->value[i] > 0.0) g[i] += self.grad[i];
    });
}

inline Tensor tanh(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a[i]);
    auto* pa = a.node().get();
    return make_result(a.shape(), std::move(out), {a}, [pa](detail::Node& self) {
        auto& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (1.0 - self.value[i] * self.value[i]);
    });
}

/// Multiplies row r of a 2-D tensor by column[r]; column has shape [rows, 1].
inline Tensor mul_rows(const Tensor& a, const Tensor& column) {
    detail::require_rank(a, 2, "mul_rows");
    if (column.numel() != a.dim(0)) {
        throw DimensionError("mul_rows: column of " + std::to_string(column.numel()) + " for " +
                             shape_string(a.shape()));
    }
    const std::size_t rows = a.dim(0), cols = a.dim(1);
    std::vector<double> out(a.numel());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = a[r * cols + c] * column[r];
    auto* pa = a.node().get();
    auto* pc = column.node().get();
    return make_result(a.shape(), std::move(out), {a, column}, [pa, pc, rows, cols](detail::Node& self) {
        if (pa->requires_grad) {
            auto& g = pa->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[r * cols + c] * pc->value[r];
        }
        if (pc->requires_grad) {
            auto& g = pc->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) g[r] += self.grad[r * cols + c] * pa->value[r * cols + c];
        }
    });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    detail::require_rank(a, 2, "matmul");
    detail::require_rank(b, 2, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw DimensionError("matmul: inner dimensions " + shape_string(a.shape()) + " x " +
                             shape_string(b.shape()));
    }
    std::vector<double> out(m * n, 0.0);
    const auto av = a.values();
    const auto bv = b.values();
    for (std::size_t i = 0; i < m; ++i) {
        double* row = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double s = av[i * k + p];
            if (s == 0.0) continue;
            const double* brow = bv.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += s * brow[j];
        }
    }
    auto* pa = a.node().get();
    auto* pb = b.node().get();
    return make_result({m, n}, std::move(out), {a, b}, [pa, pb, m, k, n](detail::Node& self) {
        const double* g = self.grad.data();
        if (pa->requires_grad) {
            auto& ga = pa->grad_buffer();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double* brow = pb->value.data() + p * n;
                    const double* grow = g + i * n;
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    ga[i * k + p] += acc;
                }
        }
        if (pb->requires_grad) {
            auto& gb = pb->grad_buffer();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double s = pa->value[i * k + p];
                    if (s == 0.0) continue;
                    double* gbrow = gb.data() + p * n;
                    const double* grow = g + i * n;
                    for (std::size_t j = 0; j < n; ++j) gbrow[j] += s * grow[j];
                }
        }
    });
}

/// x[m, in] * w[in, out] + b[out], bias broadcast over rows.
inline Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
    detail::require_rank(x, 2, "linear");
    detail::require_rank(w, 2, "linear");
    if (x.dim(1) != w.dim(0)) {
        throw DimensionError("linear: input width " + std::to_string(x.dim(1)) + " vs weight " +
                             shape_string(w.shape()));
    }
    if (b.numel() != w.dim(1)) {
        throw DimensionError("linear: bias " + shape_string(b.shape()) + " vs weight " + shape_string(w.shape()));
    }
    const std::size_t m = x.dim(0), out_w = w.dim(1);
    Tensor prod = matmul(x, w);
    std::vector<double> out(prod.values().begin(), prod.values().end());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < out_w; ++j) out[i * out_w + j] += b[j];
    auto* pp = prod.node().get();
    auto* pbias = b.node().get();
    return make_result({m, out_w}, std::move(out), {prod, b}, [pp, pbias, m, out_w](detail::Node& self) {
        if (pp->requires_grad) {
            auto& g = pp->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pbias->requires_grad) {
            auto& g = pbias->grad_buffer();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < out_w; ++j) g[j] += self.grad[i * out_w + j];
        }
    });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    auto* pa = a.node().get();
    return make_result({}, {s}, {a}, [pa](detail::Node& self) {
        auto& g = pa->grad_buffer();
        for (auto& gi : g) gi += self.grad[0];
    });
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

/// Sum along one axis; the axis is removed from the result shape.
inline Tensor sum_axis(const Tensor& a, std::size_t axis) {
    const auto s = detail::split_axis(a.shape(), axis);
    std::vector<double> out(s.outer * s.inner, 0.0);
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t e = 0; e < s.extent; ++e)
            for (std::size_t i = 0; i < s.inner; ++i)
                out[o * s.inner + i] += a[(o * s.extent + e) * s.inner + i];
    auto* pa = a.node().get();
    return make_result(detail::drop_axis(a.shape(), axis), std::move(out), {a}, [pa, s](detail::Node& self) {
        auto& g = pa->grad_buffer();
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t e = 0; e < s.extent; ++e)
                for (std::size_t i = 0; i < s.inner; ++i)
                    g[(o * s.extent + e) * s.inner + i] += self.grad[o * s.inner + i];
    });
}

/// Per-slice maximum along `axis` (removed from the shape). The backward pass
/// routes each slice's gradient to its argmax; ties go to the lowest index.
inline Tensor max_pool(const Tensor& a, std::size_t axis) {
    const auto s = detail::split_axis(a.shape(), axis);
    if (s.extent == 0) throw DimensionError("max_pool over an empty axis");
    std::vector<double> out(s.outer * s.inner);
    std::vector<std::size_t> arg(out.size());
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.inner; ++i) {
            std::size_t best = (o * s.extent) * s.inner + i;
            for (std::size_t e = 1; e < s.extent; ++e) {
                const std::size_t idx = (o * s.extent + e) * s.inner + i;
                if (a[idx] > a[best]) best = idx;
            }
            out[o * s.inner + i] = a[best];
            arg[o * s.inner + i] = best;
        }
    auto* pa = a.node().get();
    return make_result(detail::drop_axis(a.shape(), axis), std::move(out), {a},
                       [pa, arg = std::move(arg)](detail::Node& self) {
                           auto& g = pa->grad_buffer();
                           for (std::size_t j = 0; j < arg.size(); ++j) g[arg[j]] += self.grad[j];
                       });
}

/// Temperature softmax along `axis`: exp(x/T) / sum exp(x/T).
inline Tensor softmax(const Tensor& a, std::size_t axis, double temperature = 1.0) {
    if (!(temperature > 0.0)) throw DomainError("softmax: temperature must be positive");
    const auto s = detail::split_axis(a.shape(), axis);
    std::vector<double> out(a.numel());
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.inner; ++i) {
            const auto at = [&](std::size_t e) { return (o * s.extent + e) * s.inner + i; };
            double hi = a[at(0)];
            for (std::size_t e = 1; e < s.extent; ++e) hi = std::max(hi, a[at(e)]);
            double z = 0.0;
            for (std::size_t e = 0; e < s.extent; ++e) {
                out[at(e)] = std::exp((a[at(e)] - hi) / temperature);
                z += out[at(e)];
            }
            for (std::size_t e = 0; e < s.extent; ++e) out[at(e)] /= z;
        }
    auto* pa = a.node().get();
    return make_result(a.shape(), std::move(out), {a}, [pa, s, temperature](detail::Node& self) {
        auto& g = pa->grad_buffer();
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t i = 0; i < s.inner; ++i) {
                const auto at = [&](std::size_t e) { return (o * s.extent + e) * s.inner + i; };
                double dot = 0.0;
                for (std::size_t e = 0; e < s.extent; ++e) dot += self.grad[at(e)] * self.value[at(e)];
                for (std::size_t e = 0; e < s.extent; ++e)
                    g[at(e)] += self.value[at(e)] * (self.grad[at(e)] - dot) / temperature;
            }
    });
}

// ---------------------------------------------------------------------------
// Layout
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw DimensionError("reshape " + shape_string(a.shape()) + " -> " + shape_string(shape));
    }
    auto* pa = a.node().get();
    return make_result(std::move(shape), std::vector<double>(a.values().begin(), a.values().end()), {a},
                       [pa](detail::Node& self) {
                           auto& g = pa->grad_buffer();
                           for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                       });
}

/// Row gather on a 2-D tensor; repeated indices accumulate in backward.
inline Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
    detail::require_rank(a, 2, "gather_rows");
    const std::size_t cols = a.dim(1), n = a.dim(0);
    std::vector<double> out(rows.size() * cols);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] >= n) throw ArgumentError("gather_rows: index out of range");
        std::copy_n(a.values().data() + rows[r] * cols, cols, out.data() + r * cols);
    }
    auto* pa = a.node().get();
    return make_result({rows.size(), cols}, std::move(out), {a},
                       [pa, idx = std::vector<std::size_t>(rows.begin(), rows.end()), cols](detail::Node& self) {
                           auto& g = pa->grad_buffer();
                           for (std::size_t r = 0; r < idx.size(); ++r)
                               for (std::size_t c = 0; c < cols; ++c) g[idx[r] * cols + c] += self.grad[r * cols + c];
                       });
}

inline Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
    detail::require_rank(a, 2, "slice_rows");
    if (begin > end || end > a.dim(0)) throw ArgumentError("slice_rows: bad range");
    const std::size_t cols = a.dim(1);
    std::vector<double> out(a.values().begin() + static_cast<std::ptrdiff_t>(begin * cols),
                            a.values().begin() + static_cast<std::ptrdiff_t>(end * cols));
    auto* pa = a.node().get();
    return make_result({end - begin, cols}, std::move(out), {a}, [pa, begin, cols](detail::Node& self) {
        auto& g = pa->grad_buffer();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * cols + i] += self.grad[i];
    });
}

inline Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
    detail::require_rank(a, 2, "slice_cols");
    if (begin > end || end > a.dim(1)) throw ArgumentError("slice_cols: bad range");
    const std::size_t rows = a.dim(0), cols = a.dim(1), w = end - begin;
    std::vector<double> out(rows * w);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < w; ++c) out[r * w + c] = a[r * cols + begin + c];
    auto* pa = a.node().get();
    return make_result({rows, w}, std::move(out), {a}, [pa, rows, cols, begin, w](detail::Node& self) {
        auto& g = pa->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < w; ++c) g[r * cols + begin + c] += self.grad[r * w + c];
    });
}

inline Tensor concat_rows(std::span<const Tensor> parts) {
    if (parts.empty()) throw ArgumentError("concat_rows: nothing to concatenate");
    const std::size_t cols = parts.front().dim(1);
    std::size_t rows = 0;
    bool any_grad = false;
    for (const auto& p : parts) {
        detail::require_rank(p, 2, "concat_rows");
        if (p.dim(1) != cols) throw DimensionError("concat_rows: column mismatch");
        rows += p.dim(0);
        any_grad = any_grad || p.requires_grad();
    }
    std::vector<double> out;
    out.reserve(rows * cols);
    for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());

    auto result = make_result({rows, cols}, std::move(out), {}, {});
    if (any_grad) {
        auto& node = *result.node();
        node.requires_grad = true;
        std::vector<detail::Node*> raw;
        for (const auto& p : parts) {
            node.parents.push_back(p.node());
            raw.push_back(p.node().get());
        }
        node.backward = [raw](detail::Node& self) {
            std::size_t offset = 0;
            for (auto* p : raw) {
                if (p->requires_grad) {
                    auto& g = p->grad_buffer();
                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[offset + i];
                }
                offset += p->value.size();
            }
        };
    }
    return result;
}

inline Tensor concat_cols(std::span<const Tensor> parts) {
    if (parts.empty()) throw ArgumentError("concat_cols: nothing to concatenate");
    const std::size_t rows = parts.front().dim(0);
    std::size_t cols = 0;
    bool any_grad = false;
    for (const auto& p : parts) {
        detail::require_rank(p, 2, "concat_cols");
        if (p.dim(0) != rows) throw DimensionError("concat_cols: row mismatch");
        cols += p.dim(1);
        any_grad = any_grad || p.requires_grad();
    }
    std::vector<double> out(rows * cols);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t w = p.dim(1);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < w; ++c) out[r * cols + offset + c] = p[r * w + c];
        offset += w;
    }

    auto result = make_result({rows, cols}, std::move(out), {}, {});
    if (any_grad) {
        auto& node = *result.node();
        node.requires_grad = true;
        std::vector<detail::Node*> raw;
        for (const auto& p : parts) {
            node.parents.push_back(p.node());
            raw.push_back(p.node().get());
        }
        node.backward = [raw, rows, cols](detail::Node& self) {
            std::size_t off = 0;
            for (auto* p : raw) {
                const std::size_t w = p->shape[1];
                if (p->requires_grad) {
                    auto& g = p->grad_buffer();
                    for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < w; ++c) g[r * w + c] += self.grad[r * cols + off + c];
                }
                off += w;
            }
        };
    }
    return result;
}

inline Tensor concat_rows(std::initializer_list<Tensor> parts) {
    return concat_rows(std::span<const Tensor>(parts.begin(), parts.size()));
}
inline Tensor concat_cols(std::initializer_list<Tensor> parts) {
    return concat_cols(std::span<const Tensor>(parts.begin(), parts.size()));
}

/// Forward value is `forward_values` exactly; the gradient flows to
/// `surrogate` unchanged. This is detach(forward - surrogate) + surrogate
/// without the rounding that the explicit sum would introduce.
inline Tensor straight_through(std::vector<double> forward_values, const Tensor& surrogate) {
    if (forward_values.size() != surrogate.numel()) throw DimensionError("straight_through: size mismatch");
    auto* ps = surrogate.node().get();
    return make_result(surrogate.shape(), std::move(forward_values), {surrogate}, [ps](detail::Node& self) {
        auto& g = ps->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

}  // namespace pointtc
