#include "tinyrec/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace tinyrec {

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

namespace detail {

namespace {
thread_local bool g_grad_mode = true;
}

bool grad_mode_enabled() { return g_grad_mode; }
void set_grad_mode(bool enabled) { g_grad_mode = enabled; }

}  // namespace detail

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

NodePtr make_node(Shape shape, std::vector<double> value) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    return n;
}

bool tracking(std::initializer_list<const Tensor*> inputs) {
    if (!detail::grad_mode_enabled()) return false;
    for (const Tensor* t : inputs)
        if (t->node()->requires_grad) return true;
    return false;
}

void require_defined(const Tensor& t, const char* op) {
    if (!t.defined()) throw std::invalid_argument(std::string(op) + ": undefined tensor");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
}

void require_finite(std::span<const double> vals, const char* op) {
    for (double v : vals)
        if (!std::isfinite(v)) throw std::domain_error(std::string(op) + ": non-finite value");
}

// axis split for strided walks: index = (o * len + a) * inner + i
struct AxisSplit {
    int64_t outer, len, inner;
};

AxisSplit split_axis(const Shape& shape, int axis, const char* op) {
    if (axis < 0 || axis >= static_cast<int>(shape.size()))
        throw std::invalid_argument(std::string(op) + ": axis out of range");
    AxisSplit s{1, shape[static_cast<size_t>(axis)], 1};
    for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<size_t>(i)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < shape.size(); ++i)
        s.inner *= shape[i];
    return s;
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// log-softmax of one lane, max-subtracted
void log_softmax_lane(const double* x, int64_t len, int64_t stride, double* out) {
    double mx = x[0];
    for (int64_t i = 1; i < len; ++i) mx = std::max(mx, x[i * stride]);
    double sum = 0.0;
    for (int64_t i = 0; i < len; ++i) sum += std::exp(x[i * stride] - mx);
    const double lse = std::log(sum) + mx;
    for (int64_t i = 0; i < len; ++i) out[i] = x[i * stride] - lse;
}

}  // namespace

// ===================== Tensor basics =====================

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto n = make_node(std::move(shape), {});
    n->value.assign(static_cast<size_t>(shape_numel(n->shape)), 0.0);
    Tensor t(std::move(n));
    if (requires_grad) t.set_requires_grad(true);
    return t;
}

Tensor Tensor::full(Shape shape, double fill) {
    auto n = make_node(std::move(shape), {});
    n->value.assign(static_cast<size_t>(shape_numel(n->shape)), fill);
    return Tensor(std::move(n));
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
        throw std::invalid_argument("Tensor::from: data length does not match shape " + shape_str(shape));
    Tensor t(make_node(std::move(shape), std::move(data)));
    if (requires_grad) t.set_requires_grad(true);
    return t;
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

Tensor Tensor::randn(Shape shape, RandomSource& rng, double stddev, bool requires_grad) {
    std::vector<double> data(static_cast<size_t>(shape_numel(shape)));
    for (double& v : data) v = rng.normal(0.0, stddev);
    return from(std::move(shape), std::move(data), requires_grad);
}

double Tensor::item() const {
    if (size() != 1) throw std::invalid_argument("item: tensor is not scalar, shape " + shape_str(shape()));
    return node_->value[0];
}

void Tensor::set_requires_grad(bool on) {
    if (on && node_->backprop)
        throw std::invalid_argument("set_requires_grad: only leaf tensors can become parameters");
    node_->requires_grad = on;
    if (on) node_->ensure_grad();
}

void Tensor::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

// ===================== elementwise ops =====================

namespace {

template <class Fwd, class Bwd>
Tensor binary_same_shape(const Tensor& a, const Tensor& b, const char* op, Fwd fwd, Bwd bwd) {
    require_defined(a, op);
    require_defined(b, op);
    require_same_shape(a, b, op);
    const auto& av = a.node()->value;
    const auto& bv = b.node()->value;
    std::vector<double> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i]);
    auto rn = make_node(a.shape(), std::move(out));
    if (tracking({&a, &b})) {
        rn->requires_grad = true;
        rn->parents = {a.node(), b.node()};
        Node* self = rn.get();
        NodePtr an = a.node(), bn = b.node();
        rn->backprop = [self, an, bn, bwd]() { bwd(*self, *an, *bn); };
    }
    return Tensor(std::move(rn));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_same_shape(
        a, b, "add", [](double x, double y) { return x + y; },
        [](Node& self, Node& an, Node& bn) {
            if (an.requires_grad) {
                an.ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) an.grad[i] += self.grad[i];
            }
            if (bn.requires_grad) {
                bn.ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) bn.grad[i] += self.grad[i];
            }
        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_same_shape(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](Node& self, Node& an, Node& bn) {
            if (an.requires_grad) {
                an.ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) an.grad[i] += self.grad[i];
            }
            if (bn.requires_grad) {
                bn.ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) bn.grad[i] -= self.grad[i];
            }
        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_same_shape(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](Node& self, Node& an, Node& bn) {
            if (an.requires_grad) {
                an.ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) an.grad[i] += self.grad[i] * bn.value[i];
            }
            if (bn.requires_grad) {
                bn.ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) bn.grad[i] += self.grad[i] * an.value[i];
            }
        });
}

namespace {

template <class Fwd, class Bwd>
Tensor unary_op(const Tensor& a, const char* op, Fwd fwd, Bwd bwd) {
    require_defined(a, op);
    const auto& av = a.node()->value;
    std::vector<double> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
    auto rn = make_node(a.shape(), std::move(out));
    if (tracking({&a})) {
        rn->requires_grad = true;
        rn->parents = {a.node()};
        Node* self = rn.get();
        NodePtr an = a.node();
        rn->backprop = [self, an, bwd]() {
            an->ensure_grad();
            for (size_t i = 0; i < self->grad.size(); ++i)
                an->grad[i] += self->grad[i] * bwd(an->value[i], self->value[i]);
        };
    }
    return Tensor(std::move(rn));
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

}  // namespace

Tensor scale(const Tensor& a, double c) {
    return unary_op(
        a, "scale", [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Tensor tanh(const Tensor& a) {
    return unary_op(
        a, "tanh", [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

Tensor gelu(const Tensor& a) {
    return unary_op(
        a, "gelu", [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
        [](double x, double) {
            const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
            return cdf + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
        });
}

Tensor softplus(const Tensor& a) {
    return unary_op(
        a, "softplus",
        [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
        [](double x, double) { return sigmoid(x); });
}

Tensor scale_by(const Tensor& a, const Tensor& s) {
    require_defined(a, "scale_by");
    require_defined(s, "scale_by");
    if (s.size() != 1) throw std::invalid_argument("scale_by: scale must be a scalar tensor");
    const double c = s.node()->value[0];
    const auto& av = a.node()->value;
    std::vector<double> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = c * av[i];
    auto rn = make_node(a.shape(), std::move(out));
    if (tracking({&a, &s})) {
        rn->requires_grad = true;
        rn->parents = {a.node(), s.node()};
        Node* self = rn.get();
        NodePtr an = a.node(), sn = s.node();
        rn->backprop = [self, an, sn]() {
            const double c = sn->value[0];
            if (an->requires_grad) {
                an->ensure_grad();
                for (size_t i = 0; i < self->grad.size(); ++i) an->grad[i] += c * self->grad[i];
            }
            if (sn->requires_grad) {
                sn->ensure_grad();
                double acc = 0.0;
                for (size_t i = 0; i < self->grad.size(); ++i) acc += self->grad[i] * an->value[i];
                sn->grad[0] += acc;
            }
        };
    }
    return Tensor(std::move(rn));
}

// ===================== linear algebra =====================

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_defined(a, "matmul");
    require_defined(b, "matmul");
    if (a.rank() != 2 || b.rank() != 2)
        throw std::invalid_argument("matmul: expects 2-d tensors");
    const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        throw std::invalid_argument("matmul: inner dims mismatch " + shape_str(a.shape()) + " x " +
                                    shape_str(b.shape()));
    const double* A = a.node()->value.data();
    const double* B = b.node()->value.data();
    std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
    double* C = out.data();
    for (int i = 0; i < m; ++i) {
        const double* arow = A + static_cast<size_t>(i) * k;
        double* crow = C + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = B + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    auto rn = make_node({m, n}, std::move(out));
    if (tracking({&a, &b})) {
        rn->requires_grad = true;
        rn->parents = {a.node(), b.node()};
        Node* self = rn.get();
        NodePtr an = a.node(), bn = b.node();
        rn->backprop = [self, an, bn, m, k, n]() {
            const double* G = self->grad.data();
            if (an->requires_grad) {
                an->ensure_grad();
                const double* B = bn->value.data();
                double* GA = an->grad.data();
                for (int i = 0; i < m; ++i) {
                    const double* grow = G + static_cast<size_t>(i) * n;
                    double* garow = GA + static_cast<size_t>(i) * k;
                    for (int p = 0; p < k; ++p) {
                        const double* brow = B + static_cast<size_t>(p) * n;
                        double acc = 0.0;
                        for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        garow[p] += acc;
                    }
                }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                const double* A = an->value.data();
                double* GB = bn->grad.data();
                for (int i = 0; i < m; ++i) {
                    const double* arow = A + static_cast<size_t>(i) * k;
                    const double* grow = G + static_cast<size_t>(i) * n;
                    for (int p = 0; p < k; ++p) {
                        const double av = arow[p];
                        double* gbrow = GB + static_cast<size_t>(p) * n;
                        for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                    }
                }
            }
        };
    }
    return Tensor(std::move(rn));
}

Tensor transpose(const Tensor& a) {
    require_defined(a, "transpose");
    if (a.rank() != 2) throw std::invalid_argument("transpose: expects a 2-d tensor");
    const int m = a.dim(0), n = a.dim(1);
    const auto& av = a.node()->value;
    std::vector<double> out(av.size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out[static_cast<size_t>(j) * m + i] = av[static_cast<size_t>(i) * n + j];
    auto rn = make_node({n, m}, std::move(out));
    if (tracking({&a})) {
        rn->requires_grad = true;
        rn->parents = {a.node()};
        Node* self = rn.get();
        NodePtr an = a.node();
        rn->backprop = [self, an, m, n]() {
            an->ensure_grad();
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < m; ++i)
                    an->grad[static_cast<size_t>(i) * n + j] +=
                        self->grad[static_cast<size_t>(j) * m + i];
        };
    }
    return Tensor(std::move(rn));
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
    require_defined(x, "add_bias");
    require_defined(b, "add_bias");
    if (x.rank() != 2 || b.rank() != 1 || x.dim(1) != b.dim(0))
        throw std::invalid_argument("add_bias: want [m,n] + [n], got " + shape_str(x.shape()) +
                                    " + " + shape_str(b.shape()));
    const int m = x.dim(0), n = x.dim(1);
    const auto& xv = x.node()->value;
    const auto& bv = b.node()->value;
    std::vector<double> out(xv.size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out[static_cast<size_t>(i) * n + j] = xv[static_cast<size_t>(i) * n + j] + bv[static_cast<size_t>(j)];
    auto rn = make_node({m, n}, std::move(out));
    if (tracking({&x, &b})) {
        rn->requires_grad = true;
        rn->parents = {x.node(), b.node()};
        Node* self = rn.get();
        NodePtr xn = x.node(), bn = b.node();
        rn->backprop = [self, xn, bn, m, n]() {
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (size_t i = 0; i < self->grad.size(); ++i) xn->grad[i] += self->grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j)
                        bn->grad[static_cast<size_t>(j)] += self->grad[static_cast<size_t>(i) * n + j];
            }
        };
    }
    return Tensor(std::move(rn));
}

Tensor dot(const Tensor& a, const Tensor& b) {
    require_defined(a, "dot");
    require_defined(b, "dot");
    if (a.rank() != 1 || b.rank() != 1 || a.dim(0) != b.dim(0))
        throw std::invalid_argument("dot: want equal-length 1-d tensors, got " +
                                    shape_str(a.shape()) + " . " + shape_str(b.shape()));
    const auto& av = a.node()->value;
    const auto& bv = b.node()->value;
    double acc = 0.0;
    for (size_t i = 0; i < av.size(); ++i) acc += av[i] * bv[i];
    auto rn = make_node({1}, {acc});
    if (tracking({&a, &b})) {
        rn->requires_grad = true;
        rn->parents = {a.node(), b.node()};
        Node* self = rn.get();
        NodePtr an = a.node(), bn = b.node();
        rn->backprop = [self, an, bn]() {
            const double g = self->grad[0];
            if (an->requires_grad) {
                an->ensure_grad();
                for (size_t i = 0; i < an->value.size(); ++i) an->grad[i] += g * bn->value[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (size_t i = 0; i < bn->value.size(); ++i) bn->grad[i] += g * an->value[i];
            }
        };
    }
    return Tensor(std::move(rn));
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    for (const Tensor& p : parts) require_defined(p, "concat");
    const Shape& base = parts[0].shape();
    int total = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != static_cast<int>(base.size()))
            throw std::invalid_argument("concat: rank mismatch");
        for (int d = 0; d < p.rank(); ++d)
            if (d != axis && p.dim(d) != base[static_cast<size_t>(d)])
                throw std::invalid_argument("concat: non-axis dims must match");
        total += p.dim(axis);
    }
    Shape out_shape = base;
    out_shape[static_cast<size_t>(axis)] = total;
    const AxisSplit sp = split_axis(out_shape, axis, "concat");
    std::vector<double> out(static_cast<size_t>(shape_numel(out_shape)));
    int64_t offset = 0;  // along axis
    for (const Tensor& p : parts) {
        const int64_t plen = p.dim(axis);
        const auto& pv = p.node()->value;
        for (int64_t o = 0; o < sp.outer; ++o) {
            const double* src = pv.data() + o * plen * sp.inner;
            double* dst = out.data() + (o * sp.len + offset) * sp.inner;
            std::copy(src, src + plen * sp.inner, dst);
        }
        offset += plen;
    }
    auto rn = make_node(out_shape, std::move(out));
    bool any = false;
    if (detail::grad_mode_enabled())
        for (const Tensor& p : parts)
            if (p.requires_grad()) any = true;
    if (any) {
        rn->requires_grad = true;
        for (const Tensor& p : parts) rn->parents.push_back(p.node());
        Node* self = rn.get();
        std::vector<NodePtr> pnodes = rn->parents;
        rn->backprop = [self, pnodes, sp, axis]() {
            int64_t offset = 0;
            for (const NodePtr& pn : pnodes) {
                const int64_t plen = pn->shape[static_cast<size_t>(axis)];
                if (pn->requires_grad) {
                    pn->ensure_grad();
                    for (int64_t o = 0; o < sp.outer; ++o) {
                        const double* src = self->grad.data() + (o * sp.len + offset) * sp.inner;
                        double* dst = pn->grad.data() + o * plen * sp.inner;
                        for (int64_t i = 0; i < plen * sp.inner; ++i) dst[i] += src[i];
                    }
                }
                offset += plen;
            }
        };
    }
    return Tensor(std::move(rn));
}

Tensor slice(const Tensor& a, int axis, int start, int len) {
    require_defined(a, "slice");
    const AxisSplit sp = split_axis(a.shape(), axis, "slice");
    if (start < 0 || len <= 0 || start + len > sp.len)
        throw std::invalid_argument("slice: range out of bounds");
    Shape out_shape = a.shape();
    out_shape[static_cast<size_t>(axis)] = len;
    std::vector<double> out(static_cast<size_t>(sp.outer * len * sp.inner));
    const auto& av = a.node()->value;
    for (int64_t o = 0; o < sp.outer; ++o) {
        const double* src = av.data() + (o * sp.len + start) * sp.inner;
        std::copy(src, src + static_cast<int64_t>(len) * sp.inner,
                  out.data() + o * len * sp.inner);
    }
    auto rn = make_node(std::move(out_shape), std::move(out));
    if (tracking({&a})) {
        rn->requires_grad = true;
        rn->parents = {a.node()};
        Node* self = rn.get();
        NodePtr an = a.node();
        rn->backprop = [self, an, sp, start, len]() {
            an->ensure_grad();
            for (int64_t o = 0; o < sp.outer; ++o) {
                const double* src = self->grad.data() + o * len * sp.inner;
                double* dst = an->grad.data() + (o * sp.len + start) * sp.inner;
                for (int64_t i = 0; i < static_cast<int64_t>(len) * sp.inner; ++i) dst[i] += src[i];
            }
        };
    }
    return Tensor(std::move(rn));
}

Tensor reshape(const Tensor& a, Shape shape) {
    require_defined(a, "reshape");
    if (shape_numel(shape) != a.size())
        throw std::invalid_argument("reshape: element count mismatch " + shape_str(a.shape()) +
                                    " -> " + shape_str(shape));
    auto rn = make_node(std::move(shape), a.node()->value);
    if (tracking({&a})) {
        rn->requires_grad = true;
        rn->parents = {a.node()};
        Node* self = rn.get();
        NodePtr an = a.node();
        rn->backprop = [self, an]() {
            an->ensure_grad();
            for (size_t i = 0; i < self->grad.size(); ++i) an->grad[i] += self->grad[i];
        };
    }
    return Tensor(std::move(rn));
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw std::invalid_argument("stack_rows: no inputs");
    const int n = rows[0].dim(0);
    std::vector<Tensor> reshaped;
    reshaped.reserve(rows.size());
    for (const Tensor& r : rows) {
        if (r.rank() != 1 || r.dim(0) != n)
            throw std::invalid_argument("stack_rows: rows must be equal-length 1-d tensors");
        reshaped.push_back(reshape(r, {1, n}));
    }
    return concat(reshaped, 0);
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
    require_defined(table, "embedding");
    if (table.rank() != 2) throw std::invalid_argument("embedding: table must be 2-d");
    const int vocab = table.dim(0), d = table.dim(1);
    for (int id : ids)
        if (id < 0 || id >= vocab)
            throw std::out_of_range("embedding: token id " + std::to_string(id) +
                                    " outside vocab of size " + std::to_string(vocab));
    const int len = static_cast<int>(ids.size());
    std::vector<double> out(static_cast<size_t>(len) * d);
    const auto& tv = table.node()->value;
    for (int i = 0; i < len; ++i)
        std::copy(tv.data() + static_cast<size_t>(ids[static_cast<size_t>(i)]) * d,
                  tv.data() + static_cast<size_t>(ids[static_cast<size_t>(i)] + 1) * d,
                  out.data() + static_cast<size_t>(i) * d);
    auto rn = make_node({len, d}, std::move(out));
    if (tracking({&table})) {
        rn->requires_grad = true;
        rn->parents = {table.node()};
        Node* self = rn.get();
        NodePtr tn = table.node();
        std::vector<int> saved_ids(ids.begin(), ids.end());
        rn->backprop = [self, tn, saved_ids, d]() {
            tn->ensure_grad();
            for (size_t i = 0; i < saved_ids.size(); ++i) {
                double* dst = tn->grad.data() + static_cast<size_t>(saved_ids[i]) * d;
                const double* src = self->grad.data() + i * static_cast<size_t>(d);
                for (int j = 0; j < d; ++j) dst[j] += src[j];
            }
        };
    }
    return Tensor(std::move(rn));
}

// ===================== reductions / losses =====================

Tensor sum(const Tensor& a) {
    require_defined(a, "sum");
    double acc = 0.0;
    for (double v : a.node()->value) acc += v;
    auto rn = make_node({1}, {acc});
    if (tracking({&a})) {
        rn->requires_grad = true;
        rn->parents = {a.node()};
        Node* self = rn.get();
        NodePtr an = a.node();
        rn->backprop = [self, an]() {
            an->ensure_grad();
            const double g = self->grad[0];
            for (double& gv : an->grad) gv += g;
        };
    }
    return Tensor(std::move(rn));
}

Tensor mean(const Tensor& a) {
    require_defined(a, "mean");
    const auto n = static_cast<double>(a.size());
    return scale(sum(a), 1.0 / n);
}

Tensor softmax(const Tensor& a, int axis) {
    require_defined(a, "softmax");
    require_finite(a.node()->value, "softmax");
    const AxisSplit sp = split_axis(a.shape(), axis, "softmax");
    const auto& av = a.node()->value;
    std::vector<double> out(av.size());
    for (int64_t o = 0; o < sp.outer; ++o) {
        for (int64_t in = 0; in < sp.inner; ++in) {
            const double* x = av.data() + o * sp.len * sp.inner + in;
            double* y = out.data() + o * sp.len * sp.inner + in;
            double mx = x[0];
            for (int64_t i = 1; i < sp.len; ++i) mx = std::max(mx, x[i * sp.inner]);
            double s = 0.0;
            for (int64_t i = 0; i < sp.len; ++i) {
                const double e = std::exp(x[i * sp.inner] - mx);
                y[i * sp.inner] = e;
                s += e;
            }
            const double inv = 1.0 / s;
            for (int64_t i = 0; i < sp.len; ++i) y[i * sp.inner] *= inv;
        }
    }
    auto rn = make_node(a.shape(), std::move(out));
    if (tracking({&a})) {
        rn->requires_grad = true;
        rn->parents = {a.node()};
        Node* self = rn.get();
        NodePtr an = a.node();
        rn->backprop = [self, an, sp]() {
            an->ensure_grad();
            for (int64_t o = 0; o < sp.outer; ++o) {
                for (int64_t in = 0; in < sp.inner; ++in) {
                    const int64_t base = o * sp.len * sp.inner + in;
                    const double* p = self->value.data() + base;
                    const double* g = self->grad.data() + base;
                    double* gx = an->grad.data() + base;
                    double dotgp = 0.0;
                    for (int64_t i = 0; i < sp.len; ++i)
                        dotgp += g[i * sp.inner] * p[i * sp.inner];
                    for (int64_t i = 0; i < sp.len; ++i)
                        gx[i * sp.inner] += p[i * sp.inner] * (g[i * sp.inner] - dotgp);
                }
            }
        };
    }
    return Tensor(std::move(rn));
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    require_defined(x, "layer_norm");
    if (x.rank() != 2) throw std::invalid_argument("layer_norm: expects a 2-d tensor");
    const int m = x.dim(0), n = x.dim(1);
    if (gain.rank() != 1 || gain.dim(0) != n || bias.rank() != 1 || bias.dim(0) != n)
        throw std::invalid_argument("layer_norm: gain/bias must be [n]");
    const auto& xv = x.node()->value;
    const auto& gv = gain.node()->value;
    const auto& bv = bias.node()->value;
    std::vector<double> out(xv.size());
    auto xhat = std::make_shared<std::vector<double>>(xv.size());
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) {
        const double* row = xv.data() + static_cast<size_t>(i) * n;
        double mu = 0.0;
        for (int j = 0; j < n; ++j) mu += row[j];
        mu /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= n;
        const double inv = 1.0 / std::sqrt(var + eps);
        (*inv_std)[static_cast<size_t>(i)] = inv;
        for (int j = 0; j < n; ++j) {
            const double xh = (row[j] - mu) * inv;
            (*xhat)[static_cast<size_t>(i) * n + j] = xh;
            out[static_cast<size_t>(i) * n + j] = xh * gv[static_cast<size_t>(j)] + bv[static_cast<size_t>(j)];
        }
    }
    auto rn = make_node(x.shape(), std::move(out));
    if (tracking({&x, &gain, &bias})) {
        rn->requires_grad = true;
        rn->parents = {x.node(), gain.node(), bias.node()};
        Node* self = rn.get();
        NodePtr xn = x.node(), gn = gain.node(), bn = bias.node();
        rn->backprop = [self, xn, gn, bn, xhat, inv_std, m, n]() {
            for (int i = 0; i < m; ++i) {
                const double* gy = self->grad.data() + static_cast<size_t>(i) * n;
                const double* xh = xhat->data() + static_cast<size_t>(i) * n;
                if (gn->requires_grad) {
                    gn->ensure_grad();
                    for (int j = 0; j < n; ++j) gn->grad[static_cast<size_t>(j)] += gy[j] * xh[j];
                }
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    for (int j = 0; j < n; ++j) bn->grad[static_cast<size_t>(j)] += gy[j];
                }
                if (xn->requires_grad) {
                    xn->ensure_grad();
                    const double inv = (*inv_std)[static_cast<size_t>(i)];
                    double m1 = 0.0, m2 = 0.0;
                    for (int j = 0; j < n; ++j) {
                        const double dxh = gy[j] * gn->value[static_cast<size_t>(j)];
                        m1 += dxh;
                        m2 += dxh * xh[j];
                    }
                    m1 /= n;
                    m2 /= n;
                    double* gx = xn->grad.data() + static_cast<size_t>(i) * n;
                    for (int j = 0; j < n; ++j) {
                        const double dxh = gy[j] * gn->value[static_cast<size_t>(j)];
                        gx[j] += inv * (dxh - m1 - xh[j] * m2);
                    }
                }
            }
        };
    }
    return Tensor(std::move(rn));
}

Tensor cross_entropy(const Tensor& target_dist, const Tensor& logits) {
    require_defined(target_dist, "cross_entropy");
    require_defined(logits, "cross_entropy");
    require_same_shape(target_dist, logits, "cross_entropy");
    if (target_dist.rank() > 2)
        throw std::invalid_argument("cross_entropy: expects [C] or [B,C]");
    const int rows = target_dist.rank() == 2 ? target_dist.dim(0) : 1;
    const int cols = target_dist.rank() == 2 ? target_dist.dim(1) : target_dist.dim(0);
    const auto& tv = target_dist.node()->value;
    const auto& lv = logits.node()->value;
    for (size_t i = 0; i < tv.size(); ++i)
        if (!(tv[i] >= 0.0))
            throw std::invalid_argument("cross_entropy: target has negative or NaN entries");
    auto lsm = std::make_shared<std::vector<double>>(lv.size());
    double loss = 0.0;
    for (int r = 0; r < rows; ++r) {
        const double* trow = tv.data() + static_cast<size_t>(r) * cols;
        double tsum = 0.0;
        for (int j = 0; j < cols; ++j) tsum += trow[j];
        if (std::abs(tsum - 1.0) > 1e-6)
            throw std::invalid_argument("cross_entropy: target rows must sum to 1");
        log_softmax_lane(lv.data() + static_cast<size_t>(r) * cols, cols, 1,
                         lsm->data() + static_cast<size_t>(r) * cols);
        for (int j = 0; j < cols; ++j)
            loss -= trow[j] * (*lsm)[static_cast<size_t>(r) * cols + j];
    }
    loss /= rows;
    if (!std::isfinite(loss)) throw std::domain_error("cross_entropy: non-finite loss");
    auto rn = make_node({1}, {loss});
    if (tracking({&target_dist, &logits})) {
        rn->requires_grad = true;
        rn->parents = {target_dist.node(), logits.node()};
        Node* self = rn.get();
        NodePtr tn = target_dist.node(), ln = logits.node();
        rn->backprop = [self, tn, ln, lsm, rows, cols]() {
            const double coef = self->grad[0] / rows;
            if (ln->requires_grad) {
                ln->ensure_grad();
                for (int r = 0; r < rows; ++r) {
                    const double* trow = tn->value.data() + static_cast<size_t>(r) * cols;
                    double tsum = 0.0;
                    for (int j = 0; j < cols; ++j) tsum += trow[j];
                    double* grow = ln->grad.data() + static_cast<size_t>(r) * cols;
                    const double* lrow = lsm->data() + static_cast<size_t>(r) * cols;
                    for (int j = 0; j < cols; ++j)
                        grow[j] += coef * (std::exp(lrow[j]) * tsum - trow[j]);
                }
            }
            if (tn->requires_grad) {
                tn->ensure_grad();
                for (size_t i = 0; i < tn->grad.size(); ++i) tn->grad[i] -= coef * (*lsm)[i];
            }
        };
    }
    return Tensor(std::move(rn));
}

Tensor mse(const Tensor& a, const Tensor& b) {
    require_defined(a, "mse");
    require_defined(b, "mse");
    require_same_shape(a, b, "mse");
    const auto& av = a.node()->value;
    const auto& bv = b.node()->value;
    const auto n = static_cast<double>(av.size());
    double acc = 0.0;
    for (size_t i = 0; i < av.size(); ++i) {
        const double d = av[i] - bv[i];
        acc += d * d;
    }
    auto rn = make_node({1}, {acc / n});
    if (tracking({&a, &b})) {
        rn->requires_grad = true;
        rn->parents = {a.node(), b.node()};
        Node* self = rn.get();
        NodePtr an = a.node(), bn = b.node();
        rn->backprop = [self, an, bn, n]() {
            const double g = self->grad[0];
            if (an->requires_grad) {
                an->ensure_grad();
                for (size_t i = 0; i < an->value.size(); ++i)
                    an->grad[i] += g * 2.0 * (an->value[i] - bn->value[i]) / n;
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (size_t i = 0; i < bn->value.size(); ++i)
                    bn->grad[i] -= g * 2.0 * (an->value[i] - bn->value[i]) / n;
            }
        };
    }
    return Tensor(std::move(rn));
}

Tensor detach(const Tensor& a) {
    require_defined(a, "detach");
    return Tensor(make_node(a.shape(), a.node()->value));
}

// ===================== backward =====================

void backward(const Tensor& loss) {
    require_defined(loss, "backward");
    auto root = loss.node();
    if (loss.size() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss.shape()));
    if (!root->requires_grad)
        throw std::invalid_argument("backward: loss is not connected to any parameter");
    if (root->backward_ran)
        throw std::runtime_error("backward: already ran on this graph");

    // Iterative DFS post-order: parents land before children, so the reverse
    // walk visits each node exactly once after all of its consumers.
    std::vector<Node*> topo;
    std::unordered_map<Node*, char> state;  // 0 unseen, 1 open, 2 done
    std::vector<Node*> stack{root.get()};
    while (!stack.empty()) {
        Node* n = stack.back();
        char& s = state[n];
        if (s == 0) {
            s = 1;
            for (const auto& p : n->parents)
                if (p && p->requires_grad && state[p.get()] == 0) stack.push_back(p.get());
        } else {
            stack.pop_back();
            if (s == 1) {
                s = 2;
                topo.push_back(n);
            }
        }
    }

    root->ensure_grad();
    root->grad[0] = 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && !n->grad.empty()) n->backprop();
    }
    root->backward_ran = true;
}

// ===================== Adam =====================

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg) : cfg_(cfg), params_(std::move(params)) {
    for (const Tensor& p : params_)
        if (!p.defined() || !p.requires_grad())
            throw std::invalid_argument("Adam: all parameters must require grad");
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
        m_[i].assign(static_cast<size_t>(params_[i].size()), 0.0);
        v_[i].assign(static_cast<size_t>(params_[i].size()), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t pi = 0; pi < params_.size(); ++pi) {
        auto node = params_[pi].node();
        node->ensure_grad();
        double* p = node->value.data();
        const double* g = node->grad.data();
        double* m = m_[pi].data();
        double* v = v_[pi].data();
        const size_t n = node->value.size();
        for (size_t i = 0; i < n; ++i)
            if (!std::isfinite(g[i]))
                throw std::runtime_error("adam_step: non-finite gradient");
        for (size_t i = 0; i < n; ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

void Adam::zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
}

}  // namespace tinyrec
