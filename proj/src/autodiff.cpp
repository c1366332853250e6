#include "tsc/autodiff.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>

namespace tsc::ad {

std::size_t numel(const Shape &shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape &shape) {
    std::string s = "(";
    for (std::size_t k = 0; k < shape.size(); ++k)
        s += (k ? ", " : "") + std::to_string(shape[k]);
    return s + ")";
}

Tensor::Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    if (values.size() != numel(shape))
        throw std::invalid_argument("tensor of shape " + shape_string(shape) + " given " +
                                    std::to_string(values.size()) + " values");
}

// ---- ParamStore ----------------------------------------------------------

Tensor &ParamStore::add(const std::string &name, Tensor init) {
    if (index_.count(name))
        throw std::invalid_argument("duplicate parameter '" + name + "'");
    const std::size_t n = init.size();
    index_.emplace(name, slots_.size());
    slots_.push_back(Slot{name, std::move(init), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0),
                          std::vector<double>(n, 0.0)});
    return slots_.back().value;
}

ParamStore::Slot &ParamStore::slot(const std::string &name) {
    auto it = index_.find(name);
    if (it == index_.end())
        throw std::out_of_range("unknown parameter '" + name + "'");
    return slots_[it->second];
}

const ParamStore::Slot &ParamStore::slot(const std::string &name) const {
    auto it = index_.find(name);
    if (it == index_.end())
        throw std::out_of_range("unknown parameter '" + name + "'");
    return slots_[it->second];
}

Tensor &ParamStore::value(const std::string &name) { return slot(name).value; }
const Tensor &ParamStore::value(const std::string &name) const { return slot(name).value; }
std::vector<double> &ParamStore::grad(const std::string &name) { return slot(name).grad; }
const std::vector<double> &ParamStore::grad(const std::string &name) const { return slot(name).grad; }

std::size_t ParamStore::parameter_count() const {
    std::size_t n = 0;
    for (const auto &s : slots_)
        n += s.value.size();
    return n;
}

void ParamStore::zero_grad() {
    for (auto &s : slots_)
        std::fill(s.grad.begin(), s.grad.end(), 0.0);
}

void ParamStore::copy_values_from(const ParamStore &other) {
    if (other.slots_.size() != slots_.size())
        throw std::invalid_argument("copy_values_from: parameter sets differ");
    for (std::size_t k = 0; k < slots_.size(); ++k) {
        if (slots_[k].name != other.slots_[k].name || slots_[k].value.shape != other.slots_[k].value.shape)
            throw std::invalid_argument("copy_values_from: parameter '" + slots_[k].name + "' differs");
        slots_[k].value.values = other.slots_[k].value.values;
    }
}

bool ParamStore::same_values(const ParamStore &other) const {
    if (other.slots_.size() != slots_.size())
        return false;
    for (std::size_t k = 0; k < slots_.size(); ++k)
        if (slots_[k].name != other.slots_[k].name || !(slots_[k].value == other.slots_[k].value))
            return false;
    return true;
}

void adam_step(ParamStore &store, const AdamConfig &c) {
    ++store.adam_steps_;
    const double t = static_cast<double>(store.adam_steps_);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);
    for (auto &s : store.slots_) {
        for (std::size_t i = 0; i < s.value.size(); ++i) {
            const double g = s.grad[i];
            s.m[i] = c.beta1 * s.m[i] + (1.0 - c.beta1) * g;
            s.v[i] = c.beta2 * s.v[i] + (1.0 - c.beta2) * g * g;
            const double m_hat = s.m[i] / correction1;
            const double v_hat = s.v[i] / correction2;
            s.value.values[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
        }
    }
}

// ---- Tape ----------------------------------------------------------------

Var Tape::record(Tensor value, bool needs_grad, Backprop backprop) {
    nodes_.push_back(Node{std::move(value), {}, needs_grad, needs_grad ? std::move(backprop) : Backprop{}, nullptr});
    return Var{nodes_.size() - 1};
}

Var Tape::constant(Tensor value) { return record(std::move(value), false, {}); }

Var Tape::variable(Tensor value) { return record(std::move(value), true, {}); }

Var Tape::param(ParamStore &store, const std::string &name) {
    Var v = record(store.value(name), true, {});
    nodes_[v.id].param_grad = &store.grad(name);
    return v;
}

const std::vector<double> &Tape::grad(Var v) const {
    const Node &n = nodes_.at(v.id);
    return n.grad;
}

std::vector<double> &Tape::grad_ref(Var v) { return nodes_.at(v.id).grad; }

void Tape::backward(Var output) {
    if (nodes_.at(output.id).value.size() != 1)
        throw std::invalid_argument("backward needs a scalar output, got shape " +
                                    shape_string(nodes_[output.id].value.shape));
    for (auto &n : nodes_)
        n.grad.assign(n.value.size(), 0.0);
    nodes_[output.id].grad[0] = 1.0;
    for (std::size_t k = output.id + 1; k-- > 0;) {
        Node &n = nodes_[k];
        if (n.needs_grad && n.backprop)
            n.backprop(*this, Var{k});
    }
    for (auto &n : nodes_)
        if (n.param_grad)
            for (std::size_t i = 0; i < n.grad.size(); ++i)
                (*n.param_grad)[i] += n.grad[i];
}

// ---- ops -----------------------------------------------------------------

namespace {

void require(bool ok, const std::string &what) {
    if (!ok)
        throw std::invalid_argument(what);
}

double canonical_sum(std::span<double> terms) {
    std::sort(terms.begin(), terms.end());
    double s = 0.0;
    for (double x : terms)
        s += x;
    return s;
}

} // namespace

Var matmul(Tape &t, Var x, Var w) {
    const Shape &xs = t.shape(x), &ws = t.shape(w);
    require(ws.size() == 2 && !xs.empty() && xs.back() == ws[0],
            "matmul: shapes " + shape_string(xs) + " x " + shape_string(ws));
    const std::size_t n = ws[0], m = ws[1], rows = t.value(x).size() / n;
    Shape out_shape = xs;
    out_shape.back() = m;
    Tensor out(out_shape);
    const auto &X = t.value(x).values, &W = t.value(w).values;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < n; ++k) {
            const double a = X[r * n + k];
            for (std::size_t j = 0; j < m; ++j)
                out.values[r * m + j] += a * W[k * m + j];
        }
    return t.record(std::move(out), t.needs_grad(x) || t.needs_grad(w), [x, w, n, m, rows](Tape &tp, Var self) {
        const auto &G = tp.grad(self);
        const auto &X = tp.value(x).values, &W = tp.value(w).values;
        if (tp.needs_grad(x)) {
            auto &GX = tp.grad_ref(x);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t k = 0; k < n; ++k) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < m; ++j)
                        s += G[r * m + j] * W[k * m + j];
                    GX[r * n + k] += s;
                }
        }
        if (tp.needs_grad(w)) {
            auto &GW = tp.grad_ref(w);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t k = 0; k < n; ++k) {
                    const double a = X[r * n + k];
                    for (std::size_t j = 0; j < m; ++j)
                        GW[k * m + j] += a * G[r * m + j];
                }
        }
    });
}

Var add_bias(Tape &t, Var x, Var b) {
    const Shape &xs = t.shape(x), &bs = t.shape(b);
    require(bs.size() == 1 && !xs.empty() && xs.back() == bs[0],
            "add_bias: shapes " + shape_string(xs) + " + " + shape_string(bs));
    const std::size_t m = bs[0];
    Tensor out = t.value(x);
    const auto &B = t.value(b).values;
    for (std::size_t i = 0; i < out.size(); ++i)
        out.values[i] += B[i % m];
    return t.record(std::move(out), t.needs_grad(x) || t.needs_grad(b), [x, b, m](Tape &tp, Var self) {
        const auto &G = tp.grad(self);
        if (tp.needs_grad(x)) {
            auto &GX = tp.grad_ref(x);
            for (std::size_t i = 0; i < G.size(); ++i)
                GX[i] += G[i];
        }
        if (tp.needs_grad(b)) {
            auto &GB = tp.grad_ref(b);
            for (std::size_t i = 0; i < G.size(); ++i)
                GB[i % m] += G[i];
        }
    });
}

Var relu(Tape &t, Var x) {
    Tensor out = t.value(x);
    for (double &v : out.values)
        v = v > 0.0 ? v : 0.0;
    return t.record(std::move(out), t.needs_grad(x), [x](Tape &tp, Var self) {
        const auto &G = tp.grad(self);
        const auto &X = tp.value(x).values;
        auto &GX = tp.grad_ref(x);
        for (std::size_t i = 0; i < G.size(); ++i)
            if (X[i] > 0.0)
                GX[i] += G[i];
    });
}

Var add(Tape &t, Var a, Var b) {
    require(t.shape(a) == t.shape(b), "add: shapes " + shape_string(t.shape(a)) + " + " + shape_string(t.shape(b)));
    Tensor out = t.value(a);
    const auto &B = t.value(b).values;
    for (std::size_t i = 0; i < out.size(); ++i)
        out.values[i] += B[i];
    return t.record(std::move(out), t.needs_grad(a) || t.needs_grad(b), [a, b](Tape &tp, Var self) {
        const auto &G = tp.grad(self);
        for (Var v : {a, b})
            if (tp.needs_grad(v)) {
                auto &GV = tp.grad_ref(v);
                for (std::size_t i = 0; i < G.size(); ++i)
                    GV[i] += G[i];
            }
    });
}

Var hadamard(Tape &t, Var a, Var b) {
    require(t.shape(a) == t.shape(b),
            "hadamard: shapes " + shape_string(t.shape(a)) + " * " + shape_string(t.shape(b)));
    Tensor out = t.value(a);
    const auto &B = t.value(b).values;
    for (std::size_t i = 0; i < out.size(); ++i)
        out.values[i] *= B[i];
    return t.record(std::move(out), t.needs_grad(a) || t.needs_grad(b), [a, b](Tape &tp, Var self) {
        const auto &G = tp.grad(self);
        const auto &A = tp.value(a).values, &B = tp.value(b).values;
        if (tp.needs_grad(a)) {
            auto &GA = tp.grad_ref(a);
            for (std::size_t i = 0; i < G.size(); ++i)
                GA[i] += G[i] * B[i];
        }
        if (tp.needs_grad(b)) {
            auto &GB = tp.grad_ref(b);
            for (std::size_t i = 0; i < G.size(); ++i)
                GB[i] += G[i] * A[i];
        }
    });
}

Var scale(Tape &t, Var x, double factor) {
    Tensor out = t.value(x);
    for (double &v : out.values)
        v *= factor;
    return t.record(std::move(out), t.needs_grad(x), [x, factor](Tape &tp, Var self) {
        const auto &G = tp.grad(self);
        auto &GX = tp.grad_ref(x);
        for (std::size_t i = 0; i < G.size(); ++i)
            GX[i] += G[i] * factor;
    });
}

Var concat_last(Tape &t, Var a, Var b) {
    const Shape &as = t.shape(a), &bs = t.shape(b);
    require(!as.empty() && as.size() == bs.size() && std::equal(as.begin(), as.end() - 1, bs.begin()),
            "concat_last: shapes " + shape_string(as) + " | " + shape_string(bs));
    const std::size_t na = as.back(), nb = bs.back(), rows = t.value(a).size() / std::max<std::size_t>(na, 1);
    Shape out_shape = as;
    out_shape.back() = na + nb;
    Tensor out(out_shape);
    const auto &A = t.value(a).values, &B = t.value(b).values;
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(A.begin() + r * na, na, out.values.begin() + r * (na + nb));
        std::copy_n(B.begin() + r * nb, nb, out.values.begin() + r * (na + nb) + na);
    }
    return t.record(std::move(out), t.needs_grad(a) || t.needs_grad(b), [a, b, na, nb, rows](Tape &tp, Var self) {
        const auto &G = tp.grad(self);
        if (tp.needs_grad(a)) {
            auto &GA = tp.grad_ref(a);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < na; ++j)
                    GA[r * na + j] += G[r * (na + nb) + j];
        }
        if (tp.needs_grad(b)) {
            auto &GB = tp.grad_ref(b);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < nb; ++j)
                    GB[r * nb + j] += G[r * (na + nb) + na + j];
        }
    });
}

Var slice_last(Tape &t, Var x, std::size_t offset, std::size_t length) {
    const Shape &xs = t.shape(x);
    require(!xs.empty() && offset + length <= xs.back(),
            "slice_last: [" + std::to_string(offset) + ", +" + std::to_string(length) + ") of " + shape_string(xs));
    const std::size_t n = xs.back(), rows = t.value(x).size() / n;
    Shape out_shape = xs;
    out_shape.back() = length;
    Tensor out(out_shape);
    const auto &X = t.value(x).values;
    for (std::size_t r = 0; r < rows; ++r)
        std::copy_n(X.begin() + r * n + offset, length, out.values.begin() + r * length);
    return t.record(std::move(out), t.needs_grad(x), [x, n, rows, offset, length](Tape &tp, Var self) {
        const auto &G = tp.grad(self);
        auto &GX = tp.grad_ref(x);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < length; ++j)
                GX[r * n + offset + j] += G[r * length + j];
    });
}

Var reshape(Tape &t, Var x, Shape shape) {
    require(numel(shape) == t.value(x).size(),
            "reshape: " + shape_string(t.shape(x)) + " -> " + shape_string(shape));
    Tensor out(std::move(shape), t.value(x).values);
    return t.record(std::move(out), t.needs_grad(x), [x](Tape &tp, Var self) {
        const auto &G = tp.grad(self);
        auto &GX = tp.grad_ref(x);
        for (std::size_t i = 0; i < G.size(); ++i)
            GX[i] += G[i];
    });
}

Var mix(Tape &t, Var m, Var x) {
    const Shape &ms = t.shape(m), &xs = t.shape(x);
    require(ms.size() == 2 && xs.size() == 3 && ms[1] == xs[1],
            "mix: shapes " + shape_string(ms) + " x " + shape_string(xs));
    const std::size_t P = ms[0], L = ms[1], B = xs[0], E = xs[2];
    Tensor out({B, P, E});
    const auto &M = t.value(m).values, &X = t.value(x).values;
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t p = 0; p < P; ++p)
            for (std::size_t l = 0; l < L; ++l) {
                const double w = M[p * L + l];
                if (w == 0.0)
                    continue;
                for (std::size_t e = 0; e < E; ++e)
                    out.values[(b * P + p) * E + e] += w * X[(b * L + l) * E + e];
            }
    return t.record(std::move(out), t.needs_grad(m) || t.needs_grad(x), [m, x, P, L, B, E](Tape &tp, Var self) {
        const auto &G = tp.grad(self);
        const auto &M = tp.value(m).values, &X = tp.value(x).values;
        if (tp.needs_grad(m)) {
            auto &GM = tp.grad_ref(m);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t p = 0; p < P; ++p)
                    for (std::size_t l = 0; l < L; ++l) {
                        double s = 0.0;
                        for (std::size_t e = 0; e < E; ++e)
                            s += G[(b * P + p) * E + e] * X[(b * L + l) * E + e];
                        GM[p * L + l] += s;
                    }
        }
        if (tp.needs_grad(x)) {
            auto &GX = tp.grad_ref(x);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t p = 0; p < P; ++p)
                    for (std::size_t l = 0; l < L; ++l) {
                        const double w = M[p * L + l];
                        for (std::size_t e = 0; e < E; ++e)
                            GX[(b * L + l) * E + e] += w * G[(b * P + p) * E + e];
                    }
        }
    });
}

Var scores(Tape &t, Var q, Var k) {
    const Shape &qs = t.shape(q), &ks = t.shape(k);
    require(qs.size() == 3 && ks.size() == 3 && qs[0] == ks[0] && qs[2] == ks[2],
            "scores: shapes " + shape_string(qs) + " . " + shape_string(ks));
    const std::size_t B = qs[0], P = qs[1], R = ks[1], K = qs[2];
    Tensor out({B, P, R});
    const auto &Q = t.value(q).values, &Kv = t.value(k).values;
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t p = 0; p < P; ++p)
            for (std::size_t r = 0; r < R; ++r) {
                double s = 0.0;
                for (std::size_t j = 0; j < K; ++j)
                    s += Q[(b * P + p) * K + j] * Kv[(b * R + r) * K + j];
                out.values[(b * P + p) * R + r] = s;
            }
    return t.record(std::move(out), t.needs_grad(q) || t.needs_grad(k), [q, k, B, P, R, K](Tape &tp, Var self) {
        const auto &G = tp.grad(self);
        const auto &Q = tp.value(q).values, &Kv = tp.value(k).values;
        if (tp.needs_grad(q)) {
            auto &GQ = tp.grad_ref(q);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t p = 0; p < P; ++p)
                    for (std::size_t r = 0; r < R; ++r) {
                        const double g = G[(b * P + p) * R + r];
                        for (std::size_t j = 0; j < K; ++j)
                            GQ[(b * P + p) * K + j] += g * Kv[(b * R + r) * K + j];
                    }
        }
        if (tp.needs_grad(k)) {
            auto &GK = tp.grad_ref(k);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t p = 0; p < P; ++p)
                    for (std::size_t r = 0; r < R; ++r) {
                        const double g = G[(b * P + p) * R + r];
                        for (std::size_t j = 0; j < K; ++j)
                            GK[(b * R + r) * K + j] += g * Q[(b * P + p) * K + j];
                    }
        }
    });
}

Var softmax_last(Tape &t, Var x) {
    const Shape &xs = t.shape(x);
    require(!xs.empty() && xs.back() > 0, "softmax_last: empty last axis");
    const std::size_t n = xs.back(), rows = t.value(x).size() / n;
    Tensor out = t.value(x);
    std::vector<double> terms(n);
    for (std::size_t r = 0; r < rows; ++r) {
        double *row = out.values.data() + r * n;
        const double mx = *std::max_element(row, row + n);
        for (std::size_t j = 0; j < n; ++j)
            row[j] = std::exp(row[j] - mx);
        std::copy_n(row, n, terms.begin());
        const double z = canonical_sum(terms);
        for (std::size_t j = 0; j < n; ++j)
            row[j] /= z;
    }
    return t.record(std::move(out), t.needs_grad(x), [x, n, rows](Tape &tp, Var self) {
        const auto &G = tp.grad(self);
        const auto &Y = tp.value(self).values;
        auto &GX = tp.grad_ref(x);
        for (std::size_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                dot += Y[r * n + j] * G[r * n + j];
            for (std::size_t j = 0; j < n; ++j)
                GX[r * n + j] += Y[r * n + j] * (G[r * n + j] - dot);
        }
    });
}

Var attend(Tape &t, Var w, Var v) {
    const Shape &ws = t.shape(w), &vs = t.shape(v);
    require(ws.size() == 3 && vs.size() == 3 && ws[0] == vs[0] && ws[2] == vs[1],
            "attend: shapes " + shape_string(ws) + " x " + shape_string(vs));
    const std::size_t B = ws[0], P = ws[1], R = ws[2], K = vs[2];
    Tensor out({B, P, K});
    const auto &W = t.value(w).values, &V = t.value(v).values;
    std::vector<double> terms(R);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t p = 0; p < P; ++p)
            for (std::size_t j = 0; j < K; ++j) {
                for (std::size_t r = 0; r < R; ++r)
                    terms[r] = W[(b * P + p) * R + r] * V[(b * R + r) * K + j];
                out.values[(b * P + p) * K + j] = canonical_sum(terms);
            }
    return t.record(std::move(out), t.needs_grad(w) || t.needs_grad(v), [w, v, B, P, R, K](Tape &tp, Var self) {
        const auto &G = tp.grad(self);
        const auto &W = tp.value(w).values, &V = tp.value(v).values;
        if (tp.needs_grad(w)) {
            auto &GW = tp.grad_ref(w);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t p = 0; p < P; ++p)
                    for (std::size_t r = 0; r < R; ++r) {
                        double s = 0.0;
                        for (std::size_t j = 0; j < K; ++j)
                            s += G[(b * P + p) * K + j] * V[(b * R + r) * K + j];
                        GW[(b * P + p) * R + r] += s;
                    }
        }
        if (tp.needs_grad(v)) {
            auto &GV = tp.grad_ref(v);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t p = 0; p < P; ++p)
                    for (std::size_t r = 0; r < R; ++r) {
                        const double a = W[(b * P + p) * R + r];
                        for (std::size_t j = 0; j < K; ++j)
                            GV[(b * R + r) * K + j] += a * G[(b * P + p) * K + j];
                    }
        }
    });
}

Var mse_loss(Tape &t, Var pred, const Tensor &target, const Tensor &mask) {
    const Shape &ps = t.shape(pred);
    require(ps == target.shape && ps == mask.shape, "mse_loss: shapes " + shape_string(ps) + ", " +
                                                        shape_string(target.shape) + ", " + shape_string(mask.shape));
    const auto &P = t.value(pred).values;
    double count = 0.0, total = 0.0;
    for (std::size_t i = 0; i < P.size(); ++i)
        if (mask[i] != 0.0) {
            const double d = P[i] - target[i];
            total += d * d;
            count += 1.0;
        }
    require(count > 0.0, "mse_loss: mask selects no entries");
    Tensor out({1}, {total / count});
    return t.record(std::move(out), t.needs_grad(pred), [pred, target, mask, count](Tape &tp, Var self) {
        const double g = tp.grad(self)[0];
        const auto &P = tp.value(pred).values;
        auto &GP = tp.grad_ref(pred);
        for (std::size_t i = 0; i < P.size(); ++i)
            if (mask[i] != 0.0)
                GP[i] += g * 2.0 * (P[i] - target[i]) / count;
    });
}

// ---- layers --------------------------------------------------------------

Var dense(Tape &t, Var x, Var w, Var b, Activation act) {
    Var y = add_bias(t, matmul(t, x, w), b);
    return act == Activation::relu ? relu(t, y) : y;
}

Var embed(Tape &t, Var x, Var w, Var b) { return add_bias(t, matmul(t, x, w), b); }

Var multi_head_self_attention(Tape &t, Var x, const AttentionParams &p, std::size_t heads,
                              std::vector<Tensor> *weights_out) {
    const Shape &xs = t.shape(x);
    if (xs.size() != 3)
        throw std::invalid_argument("multi_head_self_attention: expected [B, P, D], got " + shape_string(xs));
    const std::size_t D = xs[2];
    if (heads == 0 || D % heads != 0)
        throw std::invalid_argument("multi_head_self_attention: dims " + std::to_string(D) +
                                    " not divisible by heads " + std::to_string(heads));
    const std::size_t dh = D / heads;
    Var q = dense(t, x, p.wq, p.bq);
    Var k = dense(t, x, p.wk, p.bk);
    Var v = dense(t, x, p.wv, p.bv);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::optional<Var> merged;
    if (weights_out)
        weights_out->clear();
    for (std::size_t h = 0; h < heads; ++h) {
        Var qh = slice_last(t, q, h * dh, dh);
        Var kh = slice_last(t, k, h * dh, dh);
        Var vh = slice_last(t, v, h * dh, dh);
        Var w = softmax_last(t, scale(t, scores(t, qh, kh), inv_sqrt));
        if (weights_out)
            weights_out->push_back(t.value(w));
        Var oh = attend(t, w, vh);
        merged = merged ? concat_last(t, *merged, oh) : oh;
    }
    return dense(t, *merged, p.wo, p.bo);
}

} // namespace tsc::ad
