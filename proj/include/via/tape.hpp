#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "via/tensor.hpp"

namespace via {

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Dynamically recorded reverse-mode tape. Nodes are appended in execution
// order, so parents always precede children and one reverse sweep visits
// every node exactly once. A tape is confined to one thread.
template <typename S>
class Tape {
  public:
    Var input(Tensor<S> value) { return push(std::move(value), {}, nullptr, false); }

    Var param(Tensor<S> value) { return push(std::move(value), {}, nullptr, true); }

    const Tensor<S>& value(Var v) const { return node(v.id).value; }

    // Gradient of the last backward() target w.r.t. this node. Zero-filled
    // for nodes the loss does not depend on.
    const Tensor<S>& grad(Var v) {
        Node& n = node(v.id);
        if (n.grad.data.empty()) n.grad = Tensor<S>::zeros(n.value.shape);
        return n.grad;
    }

    bool requires_grad(int id) const { return node(id).requires_grad; }

    void backward(Var loss) {
        Node& root = node(loss.id);
        if (root.value.size() != 1)
            throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(root.value.shape));
        root.grad = Tensor<S>::full(root.value.shape, S(1));
        for (int id = loss.id; id >= 0; --id) {
            Node& n = nodes_[static_cast<std::size_t>(id)];
            if (n.grad.data.empty() || !n.backward) continue;
            n.backward(*this, id);
        }
    }

    std::size_t node_count() const { return nodes_.size(); }

    // --- used by op implementations ---

    Tensor<S>& grad_slot(int id) {
        Node& n = node(id);
        if (n.grad.data.empty()) n.grad = Tensor<S>::zeros(n.value.shape);
        return n.grad;
    }

    using BackFn = std::function<void(Tape&, int)>;

    Var push(Tensor<S> value, std::vector<int> parents, BackFn back, bool force_grad = false) {
        bool req = force_grad;
        for (int p : parents) req = req || node(p).requires_grad;
        Node n;
        n.value = std::move(value);
        if (!n.value.all_finite())
            throw std::runtime_error("non-finite value produced on tape (node " +
                                     std::to_string(nodes_.size()) + ")");
        n.parents = std::move(parents);
        n.backward = req ? std::move(back) : nullptr;
        n.requires_grad = req;
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    const Tensor<S>& val(int id) const { return node(id).value; }
    const std::vector<int>& parents(int id) const { return node(id).parents; }

  private:
    struct Node {
        Tensor<S> value;
        Tensor<S> grad;  // empty until touched by backward
        std::vector<int> parents;
        BackFn backward;
        bool requires_grad = false;
    };

    Node& node(int id) {
        if (id < 0 || id >= static_cast<int>(nodes_.size()))
            throw std::out_of_range("tape node id " + std::to_string(id));
        return nodes_[static_cast<std::size_t>(id)];
    }
    const Node& node(int id) const { return const_cast<Tape*>(this)->node(id); }

    std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Elementwise and scalar ops
// ---------------------------------------------------------------------------

template <typename S>
Var add(Tape<S>& t, Var a, Var b) {
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    require_same_shape(av, bv, "add");
    Tensor<S> out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += bv.data[i];
    return t.push(std::move(out), {a.id, b.id}, [](Tape<S>& t, int self) {
        const auto& g = t.grad_slot(self);
        for (int k = 0; k < 2; ++k) {
            const int p = t.parents(self)[static_cast<std::size_t>(k)];
            if (!t.requires_grad(p)) continue;
            auto& gp = t.grad_slot(p);
            for (std::size_t i = 0; i < g.size(); ++i) gp.data[i] += g.data[i];
        }
    });
}

template <typename S>
Var sub(Tape<S>& t, Var a, Var b) {
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    require_same_shape(av, bv, "sub");
    Tensor<S> out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= bv.data[i];
    return t.push(std::move(out), {a.id, b.id}, [](Tape<S>& t, int self) {
        const auto& g = t.grad_slot(self);
        const int pa = t.parents(self)[0], pb = t.parents(self)[1];
        if (t.requires_grad(pa)) {
            auto& ga = t.grad_slot(pa);
            for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
        }
        if (t.requires_grad(pb)) {
            auto& gb = t.grad_slot(pb);
            for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] -= g.data[i];
        }
    });
}

template <typename S>
Var mul(Tape<S>& t, Var a, Var b) {
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    require_same_shape(av, bv, "mul");
    Tensor<S> out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= bv.data[i];
    return t.push(std::move(out), {a.id, b.id}, [](Tape<S>& t, int self) {
        const auto& g = t.grad_slot(self);
        const int pa = t.parents(self)[0], pb = t.parents(self)[1];
        const auto& av = t.val(pa);
        const auto& bv = t.val(pb);
        if (t.requires_grad(pa)) {
            auto& ga = t.grad_slot(pa);
            for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * bv.data[i];
        }
        if (t.requires_grad(pb)) {
            auto& gb = t.grad_slot(pb);
            for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i] * av.data[i];
        }
    });
}

template <typename S>
Var div(Tape<S>& t, Var a, Var b) {
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    require_same_shape(av, bv, "div");
    Tensor<S> out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] /= bv.data[i];
    return t.push(std::move(out), {a.id, b.id}, [](Tape<S>& t, int self) {
        const auto& g = t.grad_slot(self);
        const int pa = t.parents(self)[0], pb = t.parents(self)[1];
        const auto& av = t.val(pa);
        const auto& bv = t.val(pb);
        if (t.requires_grad(pa)) {
            auto& ga = t.grad_slot(pa);
            for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] / bv.data[i];
        }
        if (t.requires_grad(pb)) {
            auto& gb = t.grad_slot(pb);
            for (std::size_t i = 0; i < g.size(); ++i)
                gb.data[i] -= g.data[i] * av.data[i] / (bv.data[i] * bv.data[i]);
        }
    });
}

template <typename S>
Var scale(Tape<S>& t, Var a, S c) {
    Tensor<S> out = t.value(a);
    for (auto& v : out.data) v *= c;
    return t.push(std::move(out), {a.id}, [c](Tape<S>& t, int self) {
        const auto& g = t.grad_slot(self);
        const int p = t.parents(self)[0];
        if (!t.requires_grad(p)) return;
        auto& gp = t.grad_slot(p);
        for (std::size_t i = 0; i < g.size(); ++i) gp.data[i] += c * g.data[i];
    });
}

template <typename S>
Var neg(Tape<S>& t, Var a) {
    return scale(t, a, S(-1));
}

template <typename S>
Var add_const(Tape<S>& t, Var a, S c) {
    Tensor<S> out = t.value(a);
    for (auto& v : out.data) v += c;
    return t.push(std::move(out), {a.id}, [](Tape<S>& t, int self) {
        const auto& g = t.grad_slot(self);
        const int p = t.parents(self)[0];
        if (!t.requires_grad(p)) return;
        auto& gp = t.grad_slot(p);
        for (std::size_t i = 0; i < g.size(); ++i) gp.data[i] += g.data[i];
    });
}

template <typename S>
Var relu(Tape<S>& t, Var a) {
    Tensor<S> out = t.value(a);
    for (auto& v : out.data) v = v > S(0) ? v : S(0);
    return t.push(std::move(out), {a.id}, [](Tape<S>& t, int self) {
        const auto& g = t.grad_slot(self);
        const int p = t.parents(self)[0];
        if (!t.requires_grad(p)) return;
        const auto& x = t.val(p);
        auto& gp = t.grad_slot(p);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x.data[i] > S(0)) gp.data[i] += g.data[i];
    });
}

// max(0, x) on a scalar; same kernel as relu, named for loss code.
template <typename S>
Var hinge(Tape<S>& t, Var a) {
    if (t.value(a).size() != 1)
        throw std::invalid_argument("hinge: expected scalar, got " + shape_str(t.value(a).shape));
    return relu(t, a);
}

template <typename S>
Var reshape(Tape<S>& t, Var a, Shape s) {
    const auto& av = t.value(a);
    if (numel(s) != av.size())
        throw std::invalid_argument("reshape: cannot view " + shape_str(av.shape) + " as " + shape_str(s));
    Tensor<S> out(std::move(s), av.data);
    return t.push(std::move(out), {a.id}, [](Tape<S>& t, int self) {
        const auto& g = t.grad_slot(self);
        const int p = t.parents(self)[0];
        if (!t.requires_grad(p)) return;
        auto& gp = t.grad_slot(p);
        for (std::size_t i = 0; i < g.size(); ++i) gp.data[i] += g.data[i];
    });
}

// ---------------------------------------------------------------------------
// Reductions, norms, dot
// ---------------------------------------------------------------------------

template <typename S>
Var sum_all(Tape<S>& t, Var a) {
    const auto& av = t.value(a);
    S acc = 0;
    for (S v : av.data) acc += v;
    return t.push(Tensor<S>::scalar(acc), {a.id}, [](Tape<S>& t, int self) {
        const S g = t.grad_slot(self).data[0];
        const int p = t.parents(self)[0];
        if (!t.requires_grad(p)) return;
        auto& gp = t.grad_slot(p);
        for (auto& v : gp.data) v += g;
    });
}

template <typename S>
Var mean_all(Tape<S>& t, Var a) {
    const auto& av = t.value(a);
    S acc = 0;
    for (S v : av.data) acc += v;
    const S inv = S(1) / static_cast<S>(av.size());
    return t.push(Tensor<S>::scalar(acc * inv), {a.id}, [inv](Tape<S>& t, int self) {
        const S g = t.grad_slot(self).data[0] * inv;
        const int p = t.parents(self)[0];
        if (!t.requires_grad(p)) return;
        auto& gp = t.grad_slot(p);
        for (auto& v : gp.data) v += g;
    });
}

namespace detail {
// Decompose a shape around `axis` into (outer, n, inner) strides.
inline void axis_split(const Shape& s, int axis, std::size_t& outer, std::size_t& n, std::size_t& inner) {
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        throw std::invalid_argument("reduction axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    outer = 1;
    inner = 1;
    for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(s[i]);
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i)
        inner *= static_cast<std::size_t>(s[i]);
    n = static_cast<std::size_t>(s[static_cast<std::size_t>(axis)]);
}
}  // namespace detail

template <typename S>
Var sum_axis(Tape<S>& t, Var a, int axis, bool mean = false) {
    const auto& av = t.value(a);
    std::size_t outer, n, inner;
    detail::axis_split(av.shape, axis, outer, n, inner);
    Shape out_shape = av.shape;
    out_shape.erase(out_shape.begin() + axis);
    Tensor<S> out = Tensor<S>::zeros(out_shape);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t k = 0; k < n; ++k) {
            const S* src = av.data.data() + (o * n + k) * inner;
            S* dst = out.data.data() + o * inner;
            for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
        }
    const S w = mean ? S(1) / static_cast<S>(n) : S(1);
    if (mean)
        for (auto& v : out.data) v *= w;
    return t.push(std::move(out), {a.id}, [outer, n, inner, w](Tape<S>& t, int self) {
        const auto& g = t.grad_slot(self);
        const int p = t.parents(self)[0];
        if (!t.requires_grad(p)) return;
        auto& gp = t.grad_slot(p);
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t k = 0; k < n; ++k) {
                S* dst = gp.data.data() + (o * n + k) * inner;
                const S* src = g.data.data() + o * inner;
                for (std::size_t i = 0; i < inner; ++i) dst[i] += w * src[i];
            }
    });
}

template <typename S>
Var mean_axis(Tape<S>& t, Var a, int axis) {
    return sum_axis(t, a, axis, true);
}

template <typename S>
Var dot(Tape<S>& t, Var a, Var b) {
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    require_same_shape(av, bv, "dot");
    S acc = 0;
    for (std::size_t i = 0; i < av.size(); ++i) acc += av.data[i] * bv.data[i];
    return t.push(Tensor<S>::scalar(acc), {a.id, b.id}, [](Tape<S>& t, int self) {
        const S g = t.grad_slot(self).data[0];
        const int pa = t.parents(self)[0], pb = t.parents(self)[1];
        const auto& av = t.val(pa);
        const auto& bv = t.val(pb);
        if (t.requires_grad(pa)) {
            auto& ga = t.grad_slot(pa);
            for (std::size_t i = 0; i < ga.size(); ++i) ga.data[i] += g * bv.data[i];
        }
        if (t.requires_grad(pb)) {
            auto& gb = t.grad_slot(pb);
            for (std::size_t i = 0; i < gb.size(); ++i) gb.data[i] += g * av.data[i];
        }
    });
}

// Frobenius norm of any tensor; Euclidean norm for vectors. Subgradient 0
// at the origin.
template <typename S>
Var frob_norm(Tape<S>& t, Var a) {
    const auto& av = t.value(a);
    S acc = 0;
    for (S v : av.data) acc += v * v;
    const S nrm = std::sqrt(acc);
    return t.push(Tensor<S>::scalar(nrm), {a.id}, [nrm](Tape<S>& t, int self) {
        const S g = t.grad_slot(self).data[0];
        const int p = t.parents(self)[0];
        if (!t.requires_grad(p) || nrm == S(0)) return;
        const auto& x = t.val(p);
        auto& gp = t.grad_slot(p);
        const S inv = g / nrm;
        for (std::size_t i = 0; i < gp.size(); ++i) gp.data[i] += inv * x.data[i];
    });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <typename S>
Var matmul(Tape<S>& t, Var a, Var b) {
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    if (av.rank() != 2 || bv.rank() != 2 || av.shape[1] != bv.shape[0])
        throw std::invalid_argument("matmul: incompatible shapes " + shape_str(av.shape) + " x " +
                                    shape_str(bv.shape));
    const int M = av.shape[0], K = av.shape[1], N = bv.shape[1];
    Tensor<S> out = Tensor<S>::zeros({M, N});
    for (int i = 0; i < M; ++i)
        for (int k = 0; k < K; ++k) {
            const S c = av.data[static_cast<std::size_t>(i * K + k)];
            const S* brow = bv.data.data() + static_cast<std::size_t>(k) * N;
            S* orow = out.data.data() + static_cast<std::size_t>(i) * N;
            for (int j = 0; j < N; ++j) orow[j] += c * brow[j];
        }
    return t.push(std::move(out), {a.id, b.id}, [M, K, N](Tape<S>& t, int self) {
        const auto& g = t.grad_slot(self);
        const int pa = t.parents(self)[0], pb = t.parents(self)[1];
        const auto& av = t.val(pa);
        const auto& bv = t.val(pb);
        if (t.requires_grad(pa)) {
            auto& ga = t.grad_slot(pa);
            for (int i = 0; i < M; ++i)
                for (int k = 0; k < K; ++k) {
                    const S* grow = g.data.data() + static_cast<std::size_t>(i) * N;
                    const S* brow = bv.data.data() + static_cast<std::size_t>(k) * N;
                    S acc = 0;
                    for (int j = 0; j < N; ++j) acc += grow[j] * brow[j];
                    ga.data[static_cast<std::size_t>(i * K + k)] += acc;
                }
        }
        if (t.requires_grad(pb)) {
            auto& gb = t.grad_slot(pb);
            for (int i = 0; i < M; ++i)
                for (int k = 0; k < K; ++k) {
                    const S c = av.data[static_cast<std::size_t>(i * K + k)];
                    const S* grow = g.data.data() + static_cast<std::size_t>(i) * N;
                    S* brow = gb.data.data() + static_cast<std::size_t>(k) * N;
                    for (int j = 0; j < N; ++j) brow[j] += c * grow[j];
                }
        }
    });
}

template <typename S>
Var transpose2d(Tape<S>& t, Var a) {
    const auto& av = t.value(a);
    if (av.rank() != 2) throw std::invalid_argument("transpose2d: expected rank 2, got " + shape_str(av.shape));
    const int M = av.shape[0], N = av.shape[1];
    Tensor<S> out = Tensor<S>::zeros({N, M});
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < N; ++j)
            out.data[static_cast<std::size_t>(j * M + i)] = av.data[static_cast<std::size_t>(i * N + j)];
    return t.push(std::move(out), {a.id}, [M, N](Tape<S>& t, int self) {
        const auto& g = t.grad_slot(self);
        const int p = t.parents(self)[0];
        if (!t.requires_grad(p)) return;
        auto& gp = t.grad_slot(p);
        for (int i = 0; i < M; ++i)
            for (int j = 0; j < N; ++j)
                gp.data[static_cast<std::size_t>(i * N + j)] += g.data[static_cast<std::size_t>(j * M + i)];
    });
}

// Adds b over the last axis of x: out[..., c] = x[..., c] + b[c].
// Explicit op rather than broadcasting.
template <typename S>
Var bias_add(Tape<S>& t, Var x, Var b) {
    const auto& xv = t.value(x);
    const auto& bv = t.value(b);
    if (bv.rank() != 1 || xv.rank() < 1 || xv.shape.back() != bv.shape[0])
        throw std::invalid_argument("bias_add: last axis of " + shape_str(xv.shape) + " must match " +
                                    shape_str(bv.shape));
    const std::size_t C = static_cast<std::size_t>(bv.shape[0]);
    const std::size_t rows = xv.size() / C;
    Tensor<S> out = xv;
    for (std::size_t r = 0; r < rows; ++r) {
        S* row = out.data.data() + r * C;
        for (std::size_t c = 0; c < C; ++c) row[c] += bv.data[c];
    }
    return t.push(std::move(out), {x.id, b.id}, [C, rows](Tape<S>& t, int self) {
        const auto& g = t.grad_slot(self);
        const int px = t.parents(self)[0], pb = t.parents(self)[1];
        if (t.requires_grad(px)) {
            auto& gx = t.grad_slot(px);
            for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += g.data[i];
        }
        if (t.requires_grad(pb)) {
            auto& gb = t.grad_slot(pb);
            for (std::size_t r = 0; r < rows; ++r) {
                const S* row = g.data.data() + r * C;
                for (std::size_t c = 0; c < C; ++c) gb.data[c] += row[c];
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Convolutions and temporal ops
// ---------------------------------------------------------------------------

// 2D convolution over one sequence x[T,V,Ci] with kernel w[kt,ks,Ci,Co],
// "same" zero padding on both axes (odd kernels), temporal stride st.
// Output [ (T + 2*pt - kt)/st + 1, V, Co ].
template <typename S>
Var conv2d(Tape<S>& t, Var x, Var w, int stride_t) {
    const auto& xv = t.value(x);
    const auto& wv = t.value(w);
    if (xv.rank() != 3 || wv.rank() != 4)
        throw std::invalid_argument("conv2d: expected x rank 3 and w rank 4, got " + shape_str(xv.shape) +
                                    " and " + shape_str(wv.shape));
    if (xv.shape[2] != wv.shape[2])
        throw std::invalid_argument("conv2d: channel mismatch " + shape_str(xv.shape) + " vs " +
                                    shape_str(wv.shape));
    const int T = xv.shape[0], V = xv.shape[1], Ci = xv.shape[2];
    const int kt = wv.shape[0], ks = wv.shape[1], Co = wv.shape[3];
    if (kt % 2 == 0 || ks % 2 == 0)
        throw std::invalid_argument("conv2d: kernels must be odd for same padding, got " + shape_str(wv.shape));
    if (stride_t < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
    const int pt = (kt - 1) / 2, pv = (ks - 1) / 2;
    const int To = (T + 2 * pt - kt) / stride_t + 1;

    Tensor<S> out = Tensor<S>::zeros({To, V, Co});
    for (int to = 0; to < To; ++to)
        for (int vo = 0; vo < V; ++vo) {
            S* orow = out.data.data() + (static_cast<std::size_t>(to) * V + vo) * Co;
            for (int dt = 0; dt < kt; ++dt) {
                const int ti = to * stride_t + dt - pt;
                if (ti < 0 || ti >= T) continue;
                for (int ds = 0; ds < ks; ++ds) {
                    const int vi = vo + ds - pv;
                    if (vi < 0 || vi >= V) continue;
                    const S* xrow = xv.data.data() + (static_cast<std::size_t>(ti) * V + vi) * Ci;
                    const S* wmat = wv.data.data() + (static_cast<std::size_t>(dt) * ks + ds) * Ci * Co;
                    for (int ci = 0; ci < Ci; ++ci) {
                        const S c = xrow[ci];
                        const S* wrow = wmat + static_cast<std::size_t>(ci) * Co;
                        for (int co = 0; co < Co; ++co) orow[co] += c * wrow[co];
                    }
                }
            }
        }
    auto back = [T, V, Ci, kt, ks, Co, pt, pv, To, stride_t](Tape<S>& t, int self) {
        const auto& g = t.grad_slot(self);
        const int px = t.parents(self)[0], pw = t.parents(self)[1];
        const auto& xv = t.val(px);
        const auto& wv = t.val(pw);
        const bool need_x = t.requires_grad(px);
        const bool need_w = t.requires_grad(pw);
        Tensor<S>* gx = need_x ? &t.grad_slot(px) : nullptr;
        Tensor<S>* gw = need_w ? &t.grad_slot(pw) : nullptr;
        for (int to = 0; to < To; ++to)
            for (int vo = 0; vo < V; ++vo) {
                const S* grow = g.data.data() + (static_cast<std::size_t>(to) * V + vo) * Co;
                for (int dt = 0; dt < kt; ++dt) {
                    const int ti = to * stride_t + dt - pt;
                    if (ti < 0 || ti >= T) continue;
                    for (int ds = 0; ds < ks; ++ds) {
                        const int vi = vo + ds - pv;
                        if (vi < 0 || vi >= V) continue;
                        const std::size_t xoff = (static_cast<std::size_t>(ti) * V + vi) * Ci;
                        const std::size_t woff = (static_cast<std::size_t>(dt) * ks + ds) * Ci * Co;
                        for (int ci = 0; ci < Ci; ++ci) {
                            const S* wrow = wv.data.data() + woff + static_cast<std::size_t>(ci) * Co;
                            if (need_x) {
                                S acc = 0;
                                for (int co = 0; co < Co; ++co) acc += grow[co] * wrow[co];
                                gx->data[xoff + static_cast<std::size_t>(ci)] += acc;
                            }
                            if (need_w) {
                                const S c = xv.data[xoff + static_cast<std::size_t>(ci)];
                                S* gwrow = gw->data.data() + woff + static_cast<std::size_t>(ci) * Co;
                                for (int co = 0; co < Co; ++co) gwrow[co] += c * grow[co];
                            }
                        }
                    }
                }
            }
    };
    return t.push(std::move(out), {x.id, w.id}, back);
}

// 1D temporal convolution x[T,Ci] * w[k,Ci,Co], stride 1, same padding.
template <typename S>
Var conv1d(Tape<S>& t, Var x, Var w) {
    const auto& xv = t.value(x);
    const auto& wv = t.value(w);
    if (xv.rank() != 2 || wv.rank() != 3 || xv.shape[1] != wv.shape[1])
        throw std::invalid_argument("conv1d: incompatible shapes " + shape_str(xv.shape) + " and " +
                                    shape_str(wv.shape));
    const int T = xv.shape[0], Ci = xv.shape[1];
    const int k = wv.shape[0], Co = wv.shape[2];
    if (k % 2 == 0) throw std::invalid_argument("conv1d: kernel must be odd for same padding");
    const int p = (k - 1) / 2;
    Tensor<S> out = Tensor<S>::zeros({T, Co});
    for (int to = 0; to < T; ++to) {
        S* orow = out.data.data() + static_cast<std::size_t>(to) * Co;
        for (int dt = 0; dt < k; ++dt) {
            const int ti = to + dt - p;
            if (ti < 0 || ti >= T) continue;
            const S* xrow = xv.data.data() + static_cast<std::size_t>(ti) * Ci;
            const S* wmat = wv.data.data() + static_cast<std::size_t>(dt) * Ci * Co;
            for (int ci = 0; ci < Ci; ++ci) {
                const S c = xrow[ci];
                const S* wrow = wmat + static_cast<std::size_t>(ci) * Co;
                for (int co = 0; co < Co; ++co) orow[co] += c * wrow[co];
            }
        }
    }
    auto back = [T, Ci, k, Co, p](Tape<S>& t, int self) {
        const auto& g = t.grad_slot(self);
        const int px = t.parents(self)[0], pw = t.parents(self)[1];
        const auto& xv = t.val(px);
        const auto& wv = t.val(pw);
        const bool need_x = t.requires_grad(px);
        const bool need_w = t.requires_grad(pw);
        Tensor<S>* gx = need_x ? &t.grad_slot(px) : nullptr;
        Tensor<S>* gw = need_w ? &t.grad_slot(pw) : nullptr;
        for (int to = 0; to < T; ++to) {
            const S* grow = g.data.data() + static_cast<std::size_t>(to) * Co;
            for (int dt = 0; dt < k; ++dt) {
                const int ti = to + dt - p;
                if (ti < 0 || ti >= T) continue;
                const std::size_t xoff = static_cast<std::size_t>(ti) * Ci;
                const std::size_t woff = static_cast<std::size_t>(dt) * Ci * Co;
                for (int ci = 0; ci < Ci; ++ci) {
                    const S* wrow = wv.data.data() + woff + static_cast<std::size_t>(ci) * Co;
                    if (need_x) {
                        S acc = 0;
                        for (int co = 0; co < Co; ++co) acc += grow[co] * wrow[co];
                        gx->data[xoff + static_cast<std::size_t>(ci)] += acc;
                    }
                    if (need_w) {
                        const S c = xv.data[xoff + static_cast<std::size_t>(ci)];
                        S* gwrow = gw->data.data() + woff + static_cast<std::size_t>(ci) * Co;
                        for (int co = 0; co < Co; ++co) gwrow[co] += c * grow[co];
                    }
                }
            }
        }
    };
    return t.push(std::move(out), {x.id, w.id}, back);
}

// Feature mixing along the joint axis: out[t,v,c] = sum_u m[v,u] * x[t,u,c].
template <typename S>
Var joint_mix(Tape<S>& t, Var x, Var m) {
    const auto& xv = t.value(x);
    const auto& mv = t.value(m);
    if (xv.rank() != 3 || mv.rank() != 2 || mv.shape[0] != mv.shape[1] || mv.shape[0] != xv.shape[1])
        throw std::invalid_argument("joint_mix: incompatible shapes " + shape_str(xv.shape) + " and " +
                                    shape_str(mv.shape));
    const int T = xv.shape[0], V = xv.shape[1], C = xv.shape[2];
    Tensor<S> out = Tensor<S>::zeros({T, V, C});
    for (int ti = 0; ti < T; ++ti)
        for (int v = 0; v < V; ++v) {
            S* orow = out.data.data() + (static_cast<std::size_t>(ti) * V + v) * C;
            const S* mrow = mv.data.data() + static_cast<std::size_t>(v) * V;
            for (int u = 0; u < V; ++u) {
                const S c = mrow[u];
                const S* xrow = xv.data.data() + (static_cast<std::size_t>(ti) * V + u) * C;
                for (int i = 0; i < C; ++i) orow[i] += c * xrow[i];
            }
        }
    auto back = [T, V, C](Tape<S>& t, int self) {
        const auto& g = t.grad_slot(self);
        const int px = t.parents(self)[0], pm = t.parents(self)[1];
        const auto& xv = t.val(px);
        const auto& mv = t.val(pm);
        const bool need_x = t.requires_grad(px);
        const bool need_m = t.requires_grad(pm);
        Tensor<S>* gx = need_x ? &t.grad_slot(px) : nullptr;
        Tensor<S>* gm = need_m ? &t.grad_slot(pm) : nullptr;
        for (int ti = 0; ti < T; ++ti)
            for (int v = 0; v < V; ++v) {
                const S* grow = g.data.data() + (static_cast<std::size_t>(ti) * V + v) * C;
                for (int u = 0; u < V; ++u) {
                    const S* xrow = xv.data.data() + (static_cast<std::size_t>(ti) * V + u) * C;
                    if (need_x) {
                        const S c = mv.data[static_cast<std::size_t>(v) * V + u];
                        S* gxrow = gx->data.data() + (static_cast<std::size_t>(ti) * V + u) * C;
                        for (int i = 0; i < C; ++i) gxrow[i] += c * grow[i];
                    }
                    if (need_m) {
                        S acc = 0;
                        for (int i = 0; i < C; ++i) acc += xrow[i] * grow[i];
                        gm->data[static_cast<std::size_t>(v) * V + u] += acc;
                    }
                }
            }
    };
    return t.push(std::move(out), {x.id, m.id}, back);
}

// Nearest-neighbor x2 upsample along axis 0.
template <typename S>
Var upsample2(Tape<S>& t, Var x) {
    const auto& xv = t.value(x);
    if (xv.rank() < 1) throw std::invalid_argument("upsample2: scalar input");
    const std::size_t T = static_cast<std::size_t>(xv.shape[0]);
    const std::size_t row = xv.size() / T;
    Shape os = xv.shape;
    os[0] *= 2;
    Tensor<S> out = Tensor<S>::zeros(os);
    for (std::size_t ti = 0; ti < T; ++ti) {
        const S* src = xv.data.data() + ti * row;
        std::copy(src, src + row, out.data.data() + (2 * ti) * row);
        std::copy(src, src + row, out.data.data() + (2 * ti + 1) * row);
    }
    return t.push(std::move(out), {x.id}, [T, row](Tape<S>& t, int self) {
        const auto& g = t.grad_slot(self);
        const int p = t.parents(self)[0];
        if (!t.requires_grad(p)) return;
        auto& gp = t.grad_slot(p);
        for (std::size_t ti = 0; ti < T; ++ti) {
            S* dst = gp.data.data() + ti * row;
            const S* a = g.data.data() + (2 * ti) * row;
            const S* b = g.data.data() + (2 * ti + 1) * row;
            for (std::size_t i = 0; i < row; ++i) dst[i] += a[i] + b[i];
        }
    });
}

// Frame-to-frame differences along axis 0: out[t] = x[t+1] - x[t].
template <typename S>
Var time_diff(Tape<S>& t, Var x) {
    const auto& xv = t.value(x);
    if (xv.rank() < 1 || xv.shape[0] < 2)
        throw std::invalid_argument("time_diff: need at least 2 steps along axis 0, got " + shape_str(xv.shape));
    const std::size_t T = static_cast<std::size_t>(xv.shape[0]);
    const std::size_t row = xv.size() / T;
    Shape os = xv.shape;
    os[0] -= 1;
    Tensor<S> out = Tensor<S>::zeros(os);
    for (std::size_t ti = 0; ti + 1 < T; ++ti)
        for (std::size_t i = 0; i < row; ++i)
            out.data[ti * row + i] = xv.data[(ti + 1) * row + i] - xv.data[ti * row + i];
    return t.push(std::move(out), {x.id}, [T, row](Tape<S>& t, int self) {
        const auto& g = t.grad_slot(self);
        const int p = t.parents(self)[0];
        if (!t.requires_grad(p)) return;
        auto& gp = t.grad_slot(p);
        for (std::size_t ti = 0; ti + 1 < T; ++ti)
            for (std::size_t i = 0; i < row; ++i) {
                const S gv = g.data[ti * row + i];
                gp.data[(ti + 1) * row + i] += gv;
                gp.data[ti * row + i] -= gv;
            }
    });
}

// Softmax cross-entropy against an integer label, stable log-sum-exp.
template <typename S>
Var cross_entropy_logits(Tape<S>& t, Var logits, int label) {
    const auto& xv = t.value(logits);
    if (xv.rank() != 1)
        throw std::invalid_argument("cross_entropy_logits: expected rank-1 logits, got " + shape_str(xv.shape));
    const int C = xv.shape[0];
    if (label < 0 || label >= C)
        throw std::invalid_argument("cross_entropy_logits: label " + std::to_string(label) +
                                    " outside [0," + std::to_string(C) + ")");
    S m = xv.data[0];
    for (S v : xv.data) m = std::max(m, v);
    S sum = 0;
    for (S v : xv.data) sum += std::exp(v - m);
    const S loss = m + std::log(sum) - xv.data[static_cast<std::size_t>(label)];
    return t.push(Tensor<S>::scalar(loss), {logits.id}, [label, m, sum](Tape<S>& t, int self) {
        const S g = t.grad_slot(self).data[0];
        const int p = t.parents(self)[0];
        if (!t.requires_grad(p)) return;
        const auto& x = t.val(p);
        auto& gp = t.grad_slot(p);
        for (std::size_t i = 0; i < gp.size(); ++i) {
            const S soft = std::exp(x.data[i] - m) / sum;
            gp.data[i] += g * (soft - (static_cast<int>(i) == label ? S(1) : S(0)));
        }
    });
}

// Rescale so the Frobenius norm equals target_norm. Anchors the scale of a
// representation; an all-zero input passes through unchanged.
template <typename S>
Var normalize_frob(Tape<S>& t, Var x, S target_norm) {
    const auto& xv = t.value(x);
    S n2 = 0;
    for (S v : xv.data) n2 += v * v;
    const S n = std::sqrt(n2);
    if (n < S(1e-12)) {
        Tensor<S> out = xv;
        return t.push(std::move(out), {x.id}, [](Tape<S>& t, int self) {
            const auto& g = t.grad_slot(self);
            const int p = t.parents(self)[0];
            if (!t.requires_grad(p)) return;
            auto& gp = t.grad_slot(p);
            for (std::size_t i = 0; i < g.size(); ++i) gp.data[i] += g.data[i];
        });
    }
    const S c = target_norm / n;
    Tensor<S> out = xv;
    for (auto& v : out.data) v *= c;
    return t.push(std::move(out), {x.id}, [c, n](Tape<S>& t, int self) {
        const auto& g = t.grad_slot(self);
        const int p = t.parents(self)[0];
        if (!t.requires_grad(p)) return;
        const auto& xv = t.val(p);
        auto& gp = t.grad_slot(p);
        S gx = 0;
        for (std::size_t i = 0; i < g.size(); ++i) gx += g.data[i] * xv.data[i];
        const S coef = gx / (n * n);
        for (std::size_t i = 0; i < g.size(); ++i) gp.data[i] += c * (g.data[i] - xv.data[i] * coef);
    });
}

// mean((a-b)^2) over all entries.
template <typename S>
Var mse(Tape<S>& t, Var a, Var b) {
    Var d = sub(t, a, b);
    return mean_all(t, mul(t, d, d));
}

}  // namespace via
