#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tinyrec/rng.hpp"

namespace tinyrec {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated lazily; same length as value once present
    bool requires_grad = false;
    bool backward_ran = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backprop;  // pulls this->grad, accumulates into parents

    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
    }
};

// Thread-local switch: when disabled, ops run forward-only and record no graph.
bool grad_mode_enabled();
void set_grad_mode(bool enabled);

}  // namespace detail

// RAII guard that disables graph recording on the current thread.
class NoGradGuard {
public:
    NoGradGuard() : prev_(detail::grad_mode_enabled()) { detail::set_grad_mode(false); }
    ~NoGradGuard() { detail::set_grad_mode(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// Dense f64 tensor with reverse-mode autodiff. Value-semantic handle to a
// shared node; ops build a DAG that backward() walks in reverse topological
// order. Graphs live for one forward pass and are freed with their tensors.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double fill);
    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double v);
    static Tensor randn(Shape shape, RandomSource& rng, double stddev = 1.0, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int dim(int axis) const { return node_->shape[static_cast<size_t>(axis)]; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    int64_t size() const { return static_cast<int64_t>(node_->value.size()); }

    std::span<const double> values() const { return node_->value; }
    std::span<double> values_mut() { return node_->value; }
    // Zero gradient of matching shape if nothing was ever accumulated.
    std::span<const double> grad() const {
        node_->ensure_grad();
        return node_->grad;
    }
    double item() const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on);
    void zero_grad();

    std::shared_ptr<detail::Node> node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor scale_by(const Tensor& a, const Tensor& s);  // s is a scalar tensor; grads flow to both
Tensor tanh(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor softplus(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// ---- linear algebra / shaping ----
Tensor matmul(const Tensor& a, const Tensor& b);        // [m,k]x[k,n] -> [m,n]
Tensor transpose(const Tensor& a);                      // 2-d only
Tensor add_bias(const Tensor& x, const Tensor& b);      // [m,n] + [n], row-wise
Tensor dot(const Tensor& a, const Tensor& b);           // 1-d, -> scalar
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int start, int len);
Tensor reshape(const Tensor& a, Shape shape);
Tensor stack_rows(const std::vector<Tensor>& rows);     // k tensors [n] -> [k,n]
Tensor embedding(const Tensor& table, std::span<const int> ids);  // [V,d] gather -> [len,d]

// ---- reductions / losses ----
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor softmax(const Tensor& a, int axis);  // max-subtracted; rejects non-finite input
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
// -sum(target * log_softmax(logits)) averaged over rows; grads reach both sides.
Tensor cross_entropy(const Tensor& target_dist, const Tensor& logits);
Tensor mse(const Tensor& a, const Tensor& b);

// New leaf sharing the same values, cut off from the graph.
Tensor detach(const Tensor& a);

// Reverse-mode sweep from a scalar loss. Visits each node once; gradients
// accumulate additively across fan-out. A second call on the same graph throws.
void backward(const Tensor& loss);

// ---- optimizer ----
struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    Adam(std::vector<Tensor> params, AdamConfig cfg);

    void step();       // bias-corrected update; throws on non-finite gradients
    void zero_grad();
    int64_t steps() const { return t_; }
    double lr() const { return cfg_.lr; }
    void set_lr(double lr) { cfg_.lr = lr; }

private:
    AdamConfig cfg_;
    int64_t t_ = 0;
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

}  // namespace tinyrec
