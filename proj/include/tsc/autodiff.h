#pragma once

// Minimal reverse-mode differentiation over dense row-major float64 tensors.
//
// A Tape records every op as it is evaluated; Tape::backward walks the record
// in reverse. Parameters live in a ParamStore and are bound to a tape by name,
// so gradients from any number of forward passes accumulate into one store.
//
// Sums run in a fixed index order. The two reductions over the attention key
// axis (softmax normaliser and the weighted sum of values) sort their terms
// first, which makes self-attention exactly permutation-equivariant.

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace tsc::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape &shape);
std::string shape_string(const Shape &shape);

struct Tensor {
    Shape shape;
    std::vector<double> values;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), values(numel(shape), 0.0) {}
    Tensor(Shape s, std::vector<double> v);

    std::size_t size() const { return values.size(); }
    double &operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }

    bool operator==(const Tensor &) const = default;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Named parameters plus their gradient accumulators and Adam moments.
// Iteration order is insertion order.
class ParamStore {
public:
    struct Slot {
        std::string name;
        Tensor value;
        std::vector<double> grad;
        std::vector<double> m;
        std::vector<double> v;
    };

    Tensor &add(const std::string &name, Tensor init);
    bool contains(const std::string &name) const { return index_.count(name) != 0; }
    Tensor &value(const std::string &name);
    const Tensor &value(const std::string &name) const;
    std::vector<double> &grad(const std::string &name);
    const std::vector<double> &grad(const std::string &name) const;

    const std::vector<Slot> &slots() const { return slots_; }
    std::vector<Slot> &slots() { return slots_; }
    std::size_t adam_steps() const { return adam_steps_; }
    std::size_t parameter_count() const;

    void zero_grad();
    // Hard copy of parameter values (names and shapes must match).
    void copy_values_from(const ParamStore &other);
    bool same_values(const ParamStore &other) const;

    friend void adam_step(ParamStore &store, const AdamConfig &config);

private:
    Slot &slot(const std::string &name);
    const Slot &slot(const std::string &name) const;

    std::vector<Slot> slots_;
    std::unordered_map<std::string, std::size_t> index_;
    std::size_t adam_steps_ = 0;
};

// One bias-corrected Adam update using the accumulated gradients.
void adam_step(ParamStore &store, const AdamConfig &config);

struct Var {
    std::size_t id = 0;
};

class Tape {
public:
    Var constant(Tensor value);
    // Differentiable leaf owned by the tape (gradient readable via grad()).
    Var variable(Tensor value);
    // Binds a store parameter; backward() adds its gradient into the store.
    Var param(ParamStore &store, const std::string &name);

    const Tensor &value(Var v) const { return nodes_.at(v.id).value; }
    const Shape &shape(Var v) const { return nodes_.at(v.id).value.shape; }
    // Gradient of the last backward() output with respect to v (zeros if v did
    // not contribute).
    const std::vector<double> &grad(Var v) const;
    bool needs_grad(Var v) const { return nodes_.at(v.id).needs_grad; }
    std::size_t size() const { return nodes_.size(); }

    // `output` must hold exactly one element.
    void backward(Var output);

    // Op plumbing. `backprop` receives the tape and the op's own output node;
    // it reads grad(self) and accumulates into the inputs through grad_ref().
    using Backprop = std::function<void(Tape &, Var self)>;
    Var record(Tensor value, bool needs_grad, Backprop backprop);
    std::vector<double> &grad_ref(Var v);

private:
    struct Node {
        Tensor value;
        std::vector<double> grad;
        bool needs_grad = false;
        Backprop backprop;
        std::vector<double> *param_grad = nullptr;
    };
    std::vector<Node> nodes_;
    std::vector<double> empty_grad_;
};

// ---- primitive ops -------------------------------------------------------

// x[..., n] * w[n, m] -> [..., m]
Var matmul(Tape &t, Var x, Var w);
// x[..., m] + b[m]
Var add_bias(Tape &t, Var x, Var b);
Var relu(Tape &t, Var x);
Var add(Tape &t, Var a, Var b);
Var hadamard(Tape &t, Var a, Var b);
Var scale(Tape &t, Var x, double factor);
Var concat_last(Tape &t, Var a, Var b);
Var slice_last(Tape &t, Var x, std::size_t offset, std::size_t length);
Var reshape(Tape &t, Var x, Shape shape);
// m[P, L] applied across x[B, L, E] -> [B, P, E]
Var mix(Tape &t, Var m, Var x);
// q[B, P, K] . k[B, R, K]^T -> [B, P, R]
Var scores(Tape &t, Var q, Var k);
// Softmax over the last axis.
Var softmax_last(Tape &t, Var x);
// w[B, P, R] applied to v[B, R, K] -> [B, P, K]
Var attend(Tape &t, Var w, Var v);
// Mean of (pred - target)^2 over entries where mask != 0. Shape [1].
Var mse_loss(Tape &t, Var pred, const Tensor &target, const Tensor &mask);

// ---- layers --------------------------------------------------------------

enum class Activation { none, relu };

// Affine map x * w + b with optional rectifier.
Var dense(Tape &t, Var x, Var w, Var b, Activation act = Activation::none);
// Learned affine embedding of scalar (or one-hot) features: x[..., F] * w[F, E] + b[E].
Var embed(Tape &t, Var x, Var w, Var b);

struct AttentionParams {
    Var wq, bq, wk, bk, wv, bv, wo, bo; // each w: [D, D], b: [D]
};

// Scaled dot-product self-attention over axis 1 of x[B, P, D] with `heads`
// heads (D % heads == 0, else std::invalid_argument). If `weights_out` is
// given it receives the per-head attention matrices [B, P, P].
Var multi_head_self_attention(Tape &t, Var x, const AttentionParams &p, std::size_t heads,
                              std::vector<Tensor> *weights_out = nullptr);

} // namespace tsc::ad
