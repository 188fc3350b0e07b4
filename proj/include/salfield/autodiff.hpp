#pragma once

// Define-by-run reverse-mode differentiation over dense tensors.
//
// A Graph is a tape: every op appends a node whose inputs precede it, so a
// single reverse sweep over node ids visits consumers before producers.
// Graphs are rebuilt for every batch and are confined to one thread.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "salfield/tensor.hpp"

namespace salfield::ad {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

enum class Op : std::uint8_t {
    Leaf,
    Affine,
    Relu,
    Tanh,
    Sigmoid,
    Log,
    Neg,
    Abs,
    MulScalar,
    Add,
    Sub,
    Mul,
    ClampStopGrad,
    MaxOverSegments,
    ConcatColumns,
    ConcatRows,
    RepeatRows,
    Column,
    ScaleRows,
    ScaleGradRows,
    Sum,
    Mean,
    SumSquares,
    BinaryCrossEntropy,
    SoftmaxCrossEntropy,
};

/// Handle to a node of a Graph.
struct Var {
    std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
    bool valid() const noexcept { return id != std::numeric_limits<std::uint32_t>::max(); }
};

template <class T>
class Graph {
public:
    using BackwardFn = std::function<void(Graph&, std::uint32_t)>;

    struct Node {
        Op op = Op::Leaf;
        std::vector<std::uint32_t> inputs;
        Tensor<T> value;
        Tensor<T> grad;
        bool requires_grad = false;
        bool is_parameter = false;
        BackwardFn backward;
    };

    /// Leaf that never receives gradient.
    Var constant(Tensor<T> value) { return push_leaf(std::move(value), false); }

    /// Leaf whose gradient is accumulated by backward().
    Var variable(Tensor<T> value) { return push_leaf(std::move(value), true); }

    const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
    Op op(Var v) const { return nodes_.at(v.id).op; }
    const std::vector<std::uint32_t>& inputs(Var v) const { return nodes_.at(v.id).inputs; }
    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Gradient of the last backward() loss wrt `v`; zeros when `v` was not on the loss path.
    const Tensor<T>& grad(Var v) {
        Node& n = nodes_.at(v.id);
        if (n.grad.size() != n.value.size()) n.grad = Tensor<T>(n.value.shape());
        return n.grad;
    }

    /// Reverse sweep from a scalar loss.
    void backward(Var loss) {
        Node& l = nodes_.at(loss.id);
        if (l.value.size() != 1)
            throw ShapeError("backward requires a scalar loss, got " + shape_str(l.value.shape()));
        for (auto& n : nodes_) n.grad = Tensor<T>();
        l.grad = Tensor<T>(l.value.shape());
        l.grad[0] = T(1);
        for (std::uint32_t id = loss.id + 1; id-- > 0;) {
            Node& n = nodes_[id];
            if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
            n.backward(*this, id);
        }
    }

    // ---- used by op implementations ----

    Var push(Op op, std::vector<std::uint32_t> inputs, Tensor<T> value, BackwardFn backward) {
        Node n;
        n.op = op;
        n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                      [&](std::uint32_t i) { return nodes_[i].requires_grad; });
        n.inputs = std::move(inputs);
        n.value = std::move(value);
        if (n.requires_grad) n.backward = std::move(backward);
        nodes_.push_back(std::move(n));
        return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
    }

    const Node& node(std::uint32_t id) const { return nodes_[id]; }

    /// Gradient accumulator of an input, or nullptr if that input takes no gradient.
    Tensor<T>* grad_sink(std::uint32_t id) {
        Node& n = nodes_[id];
        if (!n.requires_grad) return nullptr;
        if (n.grad.size() != n.value.size()) n.grad = Tensor<T>(n.value.shape());
        return &n.grad;
    }

private:
    Var push_leaf(Tensor<T> value, bool requires_grad) {
        Node n;
        n.value = std::move(value);
        n.requires_grad = requires_grad;
        n.is_parameter = requires_grad;
        nodes_.push_back(std::move(n));
        return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
    }

    std::vector<Node> nodes_;
};

namespace detail {

template <class T>
void require_matrix(const Tensor<T>& t, const char* what) {
    if (t.rank() != 2) throw ShapeError(std::string(what) + ": expected a matrix, got " + shape_str(t.shape()));
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

template <class T, class Fwd, class Deriv>
Var unary(Graph<T>& g, Var x, Op op, Fwd fwd, Deriv deriv) {
    const Tensor<T>& xv = g.value(x);
    Tensor<T> out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
    // deriv(x, y) is dy/dx evaluated from the input and the output value.
    return g.push(op, {x.id}, std::move(out), [deriv](Graph<T>& gr, std::uint32_t self) {
        const auto& n = gr.node(self);
        Tensor<T>* gx = gr.grad_sink(n.inputs[0]);
        if (!gx) return;
        const Tensor<T>& xin = gr.node(n.inputs[0]).value;
        for (std::size_t i = 0; i < xin.size(); ++i) (*gx)[i] += n.grad[i] * deriv(xin[i], n.value[i]);
    });
}

}  // namespace detail

/// out[n,o] = sum_i x[n,i] W[i,o] + b[o]
template <class T>
Var affine(Graph<T>& g, Var x, Var w, Var b) {
    const Tensor<T>& xv = g.value(x);
    const Tensor<T>& wv = g.value(w);
    const Tensor<T>& bv = g.value(b);
    detail::require_matrix(xv, "affine x");
    detail::require_matrix(wv, "affine W");
    if (xv.cols() != wv.rows() || bv.size() != wv.cols())
        throw ShapeError("affine: " + shape_str(xv.shape()) + " * " + shape_str(wv.shape()) + " + " +
                         shape_str(bv.shape()));
    const auto n = xv.rows(), in = xv.cols(), outc = wv.cols();
    Tensor<T> out = Tensor<T>::matrix(n, outc);
    MatMap<T> o(out.data(), n, outc);
    o.noalias() = ConstMatMap<T>(xv.data(), n, in) * ConstMatMap<T>(wv.data(), in, outc);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < outc; ++c) o(r, c) += bv[c];
    return g.push(Op::Affine, {x.id, w.id, b.id}, std::move(out), [](Graph<T>& gr, std::uint32_t self) {
        const auto& nd = gr.node(self);
        const Tensor<T>& xv = gr.node(nd.inputs[0]).value;
        const Tensor<T>& wv = gr.node(nd.inputs[1]).value;
        const auto n = xv.rows(), in = xv.cols(), outc = wv.cols();
        ConstMatMap<T> go(nd.grad.data(), n, outc);
        if (Tensor<T>* gx = gr.grad_sink(nd.inputs[0]))
            MatMap<T>(gx->data(), n, in).noalias() += go * ConstMatMap<T>(wv.data(), in, outc).transpose();
        if (Tensor<T>* gw = gr.grad_sink(nd.inputs[1]))
            MatMap<T>(gw->data(), in, outc).noalias() += ConstMatMap<T>(xv.data(), n, in).transpose() * go;
        if (Tensor<T>* gb = gr.grad_sink(nd.inputs[2])) {
            for (std::size_t c = 0; c < outc; ++c) {
                double s = 0.0;
                for (std::size_t r = 0; r < n; ++r) s += go(r, c);
                (*gb)[c] += static_cast<T>(s);
            }
        }
    });
}

template <class T>
Var relu(Graph<T>& g, Var x) {
    return detail::unary(g, x, Op::Relu, [](T v) { return v > T(0) ? v : T(0); },
                         [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Var tanh(Graph<T>& g, Var x) {
    return detail::unary(g, x, Op::Tanh, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Var sigmoid(Graph<T>& g, Var x) {
    return detail::unary(
        g, x, Op::Sigmoid,
        [](T v) {
            // Split by sign so exp never overflows.
            if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
            const T e = std::exp(v);
            return e / (T(1) + e);
        },
        [](T, T y) { return y * (T(1) - y); });
}

/// Natural log; throws std::domain_error on a non-positive entry.
template <class T>
Var log(Graph<T>& g, Var x) {
    for (T v : g.value(x).values())
        if (!(v > T(0))) throw std::domain_error("log of non-positive value " + std::to_string(v));
    return detail::unary(g, x, Op::Log, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <class T>
Var neg(Graph<T>& g, Var x) {
    return detail::unary(g, x, Op::Neg, [](T v) { return -v; }, [](T, T) { return T(-1); });
}

/// |x| with subgradient 0 at 0.
template <class T>
Var abs(Graph<T>& g, Var x) {
    return detail::unary(g, x, Op::Abs, [](T v) { return std::abs(v); },
                         [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <class T>
Var mul_scalar(Graph<T>& g, Var x, T c) {
    return detail::unary(g, x, Op::MulScalar, [c](T v) { return v * c; }, [c](T, T) { return c; });
}

/// Clamp to [-delta, delta]; gradient passes only where |x| < delta.
template <class T>
Var clamp_stopgrad(Graph<T>& g, Var x, T delta) {
    if (!(delta > T(0))) throw std::invalid_argument("clamp_stopgrad: delta must be positive");
    return detail::unary(
        g, x, Op::ClampStopGrad, [delta](T v) { return std::min(delta, std::max(-delta, v)); },
        [delta](T v, T) { return std::abs(v) < delta ? T(1) : T(0); });
}

namespace detail {

template <class T, class Fwd, class DA, class DB>
Var binary(Graph<T>& g, Var a, Var b, Op op, const char* what, Fwd fwd, DA da, DB db) {
    const Tensor<T>& av = g.value(a);
    const Tensor<T>& bv = g.value(b);
    require_same_shape(av, bv, what);
    Tensor<T> out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i]);
    return g.push(op, {a.id, b.id}, std::move(out), [da, db](Graph<T>& gr, std::uint32_t self) {
        const auto& n = gr.node(self);
        const Tensor<T>& x = gr.node(n.inputs[0]).value;
        const Tensor<T>& y = gr.node(n.inputs[1]).value;
        if (Tensor<T>* ga = gr.grad_sink(n.inputs[0]))
            for (std::size_t i = 0; i < x.size(); ++i) (*ga)[i] += n.grad[i] * da(x[i], y[i]);
        if (Tensor<T>* gb = gr.grad_sink(n.inputs[1]))
            for (std::size_t i = 0; i < x.size(); ++i) (*gb)[i] += n.grad[i] * db(x[i], y[i]);
    });
}

}  // namespace detail

template <class T>
Var add(Graph<T>& g, Var a, Var b) {
    return detail::binary(
        g, a, b, Op::Add, "add", [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
        [](T, T) { return T(1); });
}

template <class T>
Var sub(Graph<T>& g, Var a, Var b) {
    return detail::binary(
        g, a, b, Op::Sub, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
        [](T, T) { return T(-1); });
}

/// Elementwise product.
template <class T>
Var mul(Graph<T>& g, Var a, Var b) {
    return detail::binary(
        g, a, b, Op::Mul, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; },
        [](T x, T) { return x; });
}

/// Column-wise maximum over consecutive row segments of length `segment`.
/// Gradient is routed to the argmax row of each (segment, column), lowest row on ties.
template <class T>
Var max_over_segments(Graph<T>& g, Var x, std::size_t segment) {
    const Tensor<T>& xv = g.value(x);
    detail::require_matrix(xv, "max_over_segments");
    const std::size_t n = xv.rows(), c = xv.cols();
    if (n == 0 || segment == 0) throw ShapeError("max pooling over an empty point axis");
    if (n % segment != 0)
        throw ShapeError("max_over_segments: " + std::to_string(n) + " rows not divisible by " +
                         std::to_string(segment));
    const std::size_t groups = n / segment;
    Tensor<T> out = Tensor<T>::matrix(groups, c);
    std::vector<std::uint32_t> arg(groups * c);
    for (std::size_t s = 0; s < groups; ++s) {
        for (std::size_t j = 0; j < c; ++j) {
            std::size_t best = s * segment;
            for (std::size_t r = best + 1; r < (s + 1) * segment; ++r)
                if (xv.at(r, j) > xv.at(best, j)) best = r;
            arg[s * c + j] = static_cast<std::uint32_t>(best);
            out.at(s, j) = xv.at(best, j);
        }
    }
    return g.push(Op::MaxOverSegments, {x.id}, std::move(out),
                  [arg = std::move(arg), c](Graph<T>& gr, std::uint32_t self) {
                      const auto& n = gr.node(self);
                      Tensor<T>* gx = gr.grad_sink(n.inputs[0]);
                      if (!gx) return;
                      for (std::size_t k = 0; k < arg.size(); ++k) (*gx)[arg[k] * c + k % c] += n.grad[k];
                  });
}

/// Column-wise maximum over all rows; a 1 x C result.
template <class T>
Var max_over_points(Graph<T>& g, Var x) {
    const Tensor<T>& xv = g.value(x);
    detail::require_matrix(xv, "max_over_points");
    return max_over_segments(g, x, xv.rows());
}

template <class T>
Var concat_columns(Graph<T>& g, Var a, Var b) {
    const Tensor<T>& av = g.value(a);
    const Tensor<T>& bv = g.value(b);
    detail::require_matrix(av, "concat_columns");
    detail::require_matrix(bv, "concat_columns");
    if (av.rows() != bv.rows())
        throw ShapeError("concat_columns: row counts " + std::to_string(av.rows()) + " vs " +
                         std::to_string(bv.rows()));
    const std::size_t n = av.rows(), ca = av.cols(), cb = bv.cols();
    Tensor<T> out = Tensor<T>::matrix(n, ca + cb);
    for (std::size_t r = 0; r < n; ++r) {
        std::copy_n(av.data() + r * ca, ca, out.data() + r * (ca + cb));
        std::copy_n(bv.data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
    }
    return g.push(Op::ConcatColumns, {a.id, b.id}, std::move(out), [n, ca, cb](Graph<T>& gr, std::uint32_t self) {
        const auto& nd = gr.node(self);
        Tensor<T>* ga = gr.grad_sink(nd.inputs[0]);
        Tensor<T>* gb = gr.grad_sink(nd.inputs[1]);
        for (std::size_t r = 0; r < n; ++r) {
            const T* src = nd.grad.data() + r * (ca + cb);
            if (ga)
                for (std::size_t j = 0; j < ca; ++j) (*ga)[r * ca + j] += src[j];
            if (gb)
                for (std::size_t j = 0; j < cb; ++j) (*gb)[r * cb + j] += src[ca + j];
        }
    });
}

/// Stacks matrices with equal column counts.
template <class T>
Var concat_rows(Graph<T>& g, std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const std::size_t c = g.value(parts[0]).cols();
    std::size_t n = 0;
    std::vector<std::uint32_t> ids;
    for (Var p : parts) {
        detail::require_matrix(g.value(p), "concat_rows");
        if (g.value(p).cols() != c) throw ShapeError("concat_rows: column count mismatch");
        n += g.value(p).rows();
        ids.push_back(p.id);
    }
    Tensor<T> out = Tensor<T>::matrix(n, c);
    std::size_t off = 0;
    for (Var p : parts) {
        const auto& v = g.value(p);
        std::copy(v.values().begin(), v.values().end(), out.data() + off);
        off += v.size();
    }
    return g.push(Op::ConcatRows, std::move(ids), std::move(out), [](Graph<T>& gr, std::uint32_t self) {
        const auto& nd = gr.node(self);
        std::size_t off = 0;
        for (std::uint32_t in : nd.inputs) {
            const std::size_t len = gr.node(in).value.size();
            if (Tensor<T>* gi = gr.grad_sink(in))
                for (std::size_t k = 0; k < len; ++k) (*gi)[k] += nd.grad[off + k];
            off += len;
        }
    });
}

/// Duplicates a single row `n` times.
template <class T>
Var repeat_rows(Graph<T>& g, Var x, std::size_t n) {
    const Tensor<T>& xv = g.value(x);
    if (xv.rows() != 1) throw ShapeError("repeat_rows: expected a single row, got " + shape_str(xv.shape()));
    const std::size_t c = xv.cols();
    Tensor<T> out = Tensor<T>::matrix(n, c);
    for (std::size_t r = 0; r < n; ++r) std::copy_n(xv.data(), c, out.data() + r * c);
    return g.push(Op::RepeatRows, {x.id}, std::move(out), [n, c](Graph<T>& gr, std::uint32_t self) {
        const auto& nd = gr.node(self);
        Tensor<T>* gx = gr.grad_sink(nd.inputs[0]);
        if (!gx) return;
        for (std::size_t j = 0; j < c; ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < n; ++r) s += nd.grad[r * c + j];
            (*gx)[j] += static_cast<T>(s);
        }
    });
}

/// Column `j` as an N x 1 matrix.
template <class T>
Var column(Graph<T>& g, Var x, std::size_t j) {
    const Tensor<T>& xv = g.value(x);
    detail::require_matrix(xv, "column");
    if (j >= xv.cols()) throw ShapeError("column index out of range");
    const std::size_t n = xv.rows(), c = xv.cols();
    Tensor<T> out = Tensor<T>::matrix(n, 1);
    for (std::size_t r = 0; r < n; ++r) out[r] = xv.at(r, j);
    return g.push(Op::Column, {x.id}, std::move(out), [j, n, c](Graph<T>& gr, std::uint32_t self) {
        const auto& nd = gr.node(self);
        if (Tensor<T>* gx = gr.grad_sink(nd.inputs[0]))
            for (std::size_t r = 0; r < n; ++r) (*gx)[r * c + j] += nd.grad[r];
    });
}

/// out[n,c] = x[n,c] * s[n]; differentiable in both arguments.
template <class T>
Var scale_rows(Graph<T>& g, Var x, Var s) {
    const Tensor<T>& xv = g.value(x);
    const Tensor<T>& sv = g.value(s);
    detail::require_matrix(xv, "scale_rows");
    if (sv.size() != xv.rows())
        throw ShapeError("scale_rows: " + std::to_string(sv.size()) + " scales for " + std::to_string(xv.rows()) +
                         " rows");
    const std::size_t n = xv.rows(), c = xv.cols();
    Tensor<T> out(xv.shape());
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t k = 0; k < c; ++k) out[r * c + k] = xv[r * c + k] * sv[r];
    return g.push(Op::ScaleRows, {x.id, s.id}, std::move(out), [n, c](Graph<T>& gr, std::uint32_t self) {
        const auto& nd = gr.node(self);
        const Tensor<T>& xv = gr.node(nd.inputs[0]).value;
        const Tensor<T>& sv = gr.node(nd.inputs[1]).value;
        if (Tensor<T>* gx = gr.grad_sink(nd.inputs[0]))
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t k = 0; k < c; ++k) (*gx)[r * c + k] += nd.grad[r * c + k] * sv[r];
        if (Tensor<T>* gs = gr.grad_sink(nd.inputs[1]))
            for (std::size_t r = 0; r < n; ++r) {
                double acc = 0.0;
                for (std::size_t k = 0; k < c; ++k) acc += double(nd.grad[r * c + k]) * xv[r * c + k];
                (*gs)[r] += static_cast<T>(acc);
            }
    });
}

/// Identity forward; backward multiplies row r of the incoming gradient by weights[r].
template <class T>
Var scale_grad_rows(Graph<T>& g, Var x, std::vector<T> weights) {
    const Tensor<T>& xv = g.value(x);
    detail::require_matrix(xv, "scale_grad_rows");
    if (weights.size() != xv.rows())
        throw ShapeError("scale_grad_rows: " + std::to_string(weights.size()) + " weights for " +
                         std::to_string(xv.rows()) + " rows");
    const std::size_t c = xv.cols();
    return g.push(Op::ScaleGradRows, {x.id}, xv, [w = std::move(weights), c](Graph<T>& gr, std::uint32_t self) {
        const auto& nd = gr.node(self);
        if (Tensor<T>* gx = gr.grad_sink(nd.inputs[0]))
            for (std::size_t r = 0; r < w.size(); ++r)
                for (std::size_t k = 0; k < c; ++k) (*gx)[r * c + k] += w[r] * nd.grad[r * c + k];
    });
}

/// Copy of x that takes no part in backward.
template <class T>
Var detach(Graph<T>& g, Var x) {
    return g.constant(g.value(x));
}

template <class T>
Var sum(Graph<T>& g, Var x) {
    double s = 0.0;
    for (T v : g.value(x).values()) s += v;
    return g.push(Op::Sum, {x.id}, Tensor<T>::scalar(static_cast<T>(s)), [](Graph<T>& gr, std::uint32_t self) {
        const auto& nd = gr.node(self);
        if (Tensor<T>* gx = gr.grad_sink(nd.inputs[0]))
            for (auto& v : gx->values()) v += nd.grad[0];
    });
}

template <class T>
Var mean(Graph<T>& g, Var x) {
    const std::size_t n = g.value(x).size();
    if (n == 0) throw ShapeError("mean of an empty tensor");
    double s = 0.0;
    for (T v : g.value(x).values()) s += v;
    return g.push(Op::Mean, {x.id}, Tensor<T>::scalar(static_cast<T>(s / double(n))),
                  [n](Graph<T>& gr, std::uint32_t self) {
                      const auto& nd = gr.node(self);
                      if (Tensor<T>* gx = gr.grad_sink(nd.inputs[0])) {
                          const T d = static_cast<T>(double(nd.grad[0]) / double(n));
                          for (auto& v : gx->values()) v += d;
                      }
                  });
}

/// Squared L2 norm of all entries.
template <class T>
Var sum_squares(Graph<T>& g, Var x) {
    double s = 0.0;
    for (T v : g.value(x).values()) s += double(v) * v;
    return g.push(Op::SumSquares, {x.id}, Tensor<T>::scalar(static_cast<T>(s)), [](Graph<T>& gr, std::uint32_t self) {
        const auto& nd = gr.node(self);
        const Tensor<T>& xv = gr.node(nd.inputs[0]).value;
        if (Tensor<T>* gx = gr.grad_sink(nd.inputs[0]))
            for (std::size_t i = 0; i < xv.size(); ++i) (*gx)[i] += T(2) * xv[i] * nd.grad[0];
    });
}

inline constexpr double kProbClip = 1e-7;

/// Mean binary cross-entropy of probabilities l (N x 1) against 0/1 targets.
/// Probabilities are clipped to [1e-7, 1 - 1e-7] before the log; clipped entries pass no gradient.
template <class T>
Var binary_cross_entropy(Graph<T>& g, Var l, std::vector<T> targets) {
    const Tensor<T>& lv = g.value(l);
    if (lv.size() != targets.size() || targets.empty())
        throw ShapeError("binary_cross_entropy: " + std::to_string(lv.size()) + " scores for " +
                         std::to_string(targets.size()) + " targets");
    double s = 0.0;
    for (std::size_t i = 0; i < lv.size(); ++i) {
        const double p = std::clamp(double(lv[i]), kProbClip, 1.0 - kProbClip);
        s += -double(targets[i]) * std::log(p) - (1.0 - targets[i]) * std::log(1.0 - p);
    }
    const std::size_t n = targets.size();
    return g.push(Op::BinaryCrossEntropy, {l.id}, Tensor<T>::scalar(static_cast<T>(s / double(n))),
                  [t = std::move(targets), n](Graph<T>& gr, std::uint32_t self) {
                      const auto& nd = gr.node(self);
                      const Tensor<T>& lv = gr.node(nd.inputs[0]).value;
                      Tensor<T>* gl = gr.grad_sink(nd.inputs[0]);
                      if (!gl) return;
                      for (std::size_t i = 0; i < n; ++i) {
                          const double p = lv[i];
                          if (p <= kProbClip || p >= 1.0 - kProbClip) continue;
                          const double d = (-double(t[i]) / p + (1.0 - t[i]) / (1.0 - p)) / double(n);
                          (*gl)[i] += static_cast<T>(d * nd.grad[0]);
                      }
                  });
}

/// Mean softmax cross-entropy of logits (N x C) against class indices.
template <class T>
Var softmax_cross_entropy(Graph<T>& g, Var logits, std::vector<int> labels) {
    const Tensor<T>& z = g.value(logits);
    detail::require_matrix(z, "softmax_cross_entropy");
    const std::size_t n = z.rows(), c = z.cols();
    if (labels.size() != n || n == 0) throw ShapeError("softmax_cross_entropy: label count mismatch");
    std::vector<double> prob(n * c);
    double loss = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        if (labels[r] < 0 || std::size_t(labels[r]) >= c) throw std::out_of_range("class label out of range");
        double mx = z.at(r, 0);
        for (std::size_t k = 1; k < c; ++k) mx = std::max(mx, double(z.at(r, k)));
        double den = 0.0;
        for (std::size_t k = 0; k < c; ++k) den += std::exp(double(z.at(r, k)) - mx);
        for (std::size_t k = 0; k < c; ++k) prob[r * c + k] = std::exp(double(z.at(r, k)) - mx) / den;
        loss += -(double(z.at(r, labels[r])) - mx - std::log(den));
    }
    return g.push(Op::SoftmaxCrossEntropy, {logits.id}, Tensor<T>::scalar(static_cast<T>(loss / double(n))),
                  [prob = std::move(prob), lab = std::move(labels), n, c](Graph<T>& gr, std::uint32_t self) {
                      const auto& nd = gr.node(self);
                      Tensor<T>* gz = gr.grad_sink(nd.inputs[0]);
                      if (!gz) return;
                      const double scale = double(nd.grad[0]) / double(n);
                      for (std::size_t r = 0; r < n; ++r)
                          for (std::size_t k = 0; k < c; ++k) {
                              const double d = prob[r * c + k] - (std::size_t(lab[r]) == k ? 1.0 : 0.0);
                              (*gz)[r * c + k] += static_cast<T>(d * scale);
                          }
                  });
}

}  // namespace salfield::ad
