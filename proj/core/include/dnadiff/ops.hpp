#pragma once

#include <algorithm>
#include <cmath>

#include "dnadiff/autograd.hpp"
#include "dnadiff/conv.hpp"

namespace dnadiff::nn {

// ---------------------------------------------------------------------------
// pointwise
// ---------------------------------------------------------------------------

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
    require_same_shape(a->value, b->value, "add");
    Tensor<S> out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
    return make_op_node<S>(std::move(out), {a, b}, [](Node<S>& n) {
        for (int p = 0; p < 2; ++p) {
            Node<S>& pn = *n.parents[p];
            if (!pn.requires_grad) continue;
            Tensor<S>& g = pn.g();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
        }
    });
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
    require_same_shape(a->value, b->value, "sub");
    Tensor<S> out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
    return make_op_node<S>(std::move(out), {a, b}, [](Node<S>& n) {
        if (n.parents[0]->requires_grad) {
            Tensor<S>& g = n.parents[0]->g();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor<S>& g = n.parents[1]->g();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] -= n.grad[i];
        }
    });
}

template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
    require_same_shape(a->value, b->value, "mul");
    Tensor<S> out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
    return make_op_node<S>(std::move(out), {a, b}, [](Node<S>& n) {
        if (n.parents[0]->requires_grad) {
            Tensor<S>& g = n.parents[0]->g();
            const Tensor<S>& bv = n.parents[1]->value;
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * bv[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor<S>& g = n.parents[1]->g();
            const Tensor<S>& av = n.parents[0]->value;
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * av[i];
        }
    });
}

template <typename S>
Var<S> mul_scalar(const Var<S>& a, S c) {
    Tensor<S> out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= c;
    return make_op_node<S>(std::move(out), {a}, [c](Node<S>& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor<S>& g = n.parents[0]->g();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += c * n.grad[i];
    });
}

template <typename S>
Var<S> add_scalar(const Var<S>& a, S c) {
    Tensor<S> out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += c;
    return make_op_node<S>(std::move(out), {a}, [](Node<S>& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor<S>& g = n.parents[0]->g();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
    });
}

template <typename S>
Var<S> exp(const Var<S>& a) {
    Tensor<S> out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::exp(out[i]);
    return make_op_node<S>(std::move(out), {a}, [](Node<S>& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor<S>& g = n.parents[0]->g();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * n.value[i];
    });
}

template <typename S>
Var<S> leaky_relu(const Var<S>& a, S slope = S(0.01)) {
    Tensor<S> out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i)
        if (out[i] < S(0)) out[i] *= slope;
    return make_op_node<S>(std::move(out), {a}, [slope](Node<S>& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor<S>& g = n.parents[0]->g();
        const Tensor<S>& x = n.parents[0]->value;
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * (x[i] < S(0) ? slope : S(1));
    });
}

// Clamp to [lo, hi]; gradient passes through inside the range, 0 outside.
template <typename S>
Var<S> clamp(const Var<S>& a, S lo, S hi) {
    if (lo > hi) throw ValueError("clamp: lo exceeds hi");
    Tensor<S> out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::min(hi, std::max(lo, out[i]));
    return make_op_node<S>(std::move(out), {a}, [lo, hi](Node<S>& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor<S>& g = n.parents[0]->g();
        const Tensor<S>& x = n.parents[0]->value;
        for (int64_t i = 0; i < g.numel(); ++i)
            if (x[i] >= lo && x[i] <= hi) g[i] += n.grad[i];
    });
}

// swish(x) = x * sigmoid(x); d/dx = sig(x) * (1 + x * (1 - sig(x))).
template <typename S>
Var<S> swish(const Var<S>& a) {
    Tensor<S> out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) {
        S x = out[i];
        out[i] = x / (S(1) + std::exp(-x));
    }
    return make_op_node<S>(std::move(out), {a}, [](Node<S>& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor<S>& g = n.parents[0]->g();
        const Tensor<S>& x = n.parents[0]->value;
        for (int64_t i = 0; i < g.numel(); ++i) {
            S sig = S(1) / (S(1) + std::exp(-x[i]));
            g[i] += n.grad[i] * sig * (S(1) + x[i] * (S(1) - sig));
        }
    });
}

// ---------------------------------------------------------------------------
// reductions, shape ops
// ---------------------------------------------------------------------------

template <typename S>
Var<S> sum(const Var<S>& a) {
    S acc = 0;
    for (int64_t i = 0; i < a->value.numel(); ++i) acc += a->value[i];
    Tensor<S> out({1});
    out[0] = acc;
    return make_op_node<S>(std::move(out), {a}, [](Node<S>& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor<S>& g = n.parents[0]->g();
        S go = n.grad[0];
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += go;
    });
}

template <typename S>
Var<S> mean(const Var<S>& a) {
    return mul_scalar(sum(a), S(1) / static_cast<S>(a->value.numel()));
}

template <typename S>
Var<S> reshape(const Var<S>& a, Shape new_shape) {
    if (shape_numel(new_shape) != a->value.numel())
        throw ShapeError("reshape: element count mismatch " + shape_str(a->value.shape) + " -> " +
                         shape_str(new_shape));
    Tensor<S> out(std::move(new_shape), a->value.data);
    return make_op_node<S>(std::move(out), {a}, [](Node<S>& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor<S>& g = n.parents[0]->g();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
    });
}

// Concatenate along the channel axis (axis 1).
template <typename S>
Var<S> cat_channels(const std::vector<Var<S>>& parts) {
    if (parts.empty()) throw ValueError("cat_channels: no inputs");
    const Tensor<S>& first = parts[0]->value;
    if (first.rank() < 2) throw ShapeError("cat_channels: inputs must have rank >= 2");
    int64_t B = first.dim(0);
    int64_t inner = first.numel() / (B * first.dim(1));
    int64_t ctotal = 0;
    for (const auto& p : parts) {
        const Tensor<S>& t = p->value;
        if (t.rank() != first.rank() || t.dim(0) != B || t.numel() / (B * t.dim(1)) != inner)
            throw ShapeError("cat_channels: incompatible input " + shape_str(t.shape));
        for (size_t d = 2; d < t.rank(); ++d)
            if (t.dim(d) != first.dim(d)) throw ShapeError("cat_channels: trailing axis mismatch");
        ctotal += t.dim(1);
    }
    Shape out_shape = first.shape;
    out_shape[1] = ctotal;
    Tensor<S> out(out_shape);
    int64_t coff = 0;
    for (const auto& p : parts) {
        const Tensor<S>& t = p->value;
        int64_t c = t.dim(1);
        for (int64_t b = 0; b < B; ++b)
            std::copy(t.ptr() + b * c * inner, t.ptr() + (b + 1) * c * inner,
                      out.ptr() + (b * ctotal + coff) * inner);
        coff += c;
    }
    std::vector<Var<S>> parents(parts.begin(), parts.end());
    return make_op_node<S>(std::move(out), std::move(parents), [B, inner, ctotal](Node<S>& n) {
        int64_t coff = 0;
        for (auto& pv : n.parents) {
            int64_t c = pv->value.dim(1);
            if (pv->requires_grad) {
                Tensor<S>& g = pv->g();
                for (int64_t b = 0; b < B; ++b) {
                    const S* src = n.grad.ptr() + (b * ctotal + coff) * inner;
                    S* dst = g.ptr() + b * c * inner;
                    for (int64_t i = 0; i < c * inner; ++i) dst[i] += src[i];
                }
            }
            coff += c;
        }
    });
}

// Channel slice [c0, c1).
template <typename S>
Var<S> slice_channels(const Var<S>& a, int64_t c0, int64_t c1) {
    const Tensor<S>& x = a->value;
    if (x.rank() < 2) throw ShapeError("slice_channels: input must have rank >= 2");
    int64_t B = x.dim(0), C = x.dim(1);
    if (c0 < 0 || c1 > C || c0 >= c1) throw ShapeError("slice_channels: bad range on channel axis");
    int64_t inner = x.numel() / (B * C);
    Shape out_shape = x.shape;
    out_shape[1] = c1 - c0;
    Tensor<S> out(out_shape);
    for (int64_t b = 0; b < B; ++b)
        std::copy(x.ptr() + (b * C + c0) * inner, x.ptr() + (b * C + c1) * inner,
                  out.ptr() + b * (c1 - c0) * inner);
    return make_op_node<S>(std::move(out), {a}, [B, C, c0, c1, inner](Node<S>& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor<S>& g = n.parents[0]->g();
        for (int64_t b = 0; b < B; ++b) {
            const S* src = n.grad.ptr() + b * (c1 - c0) * inner;
            S* dst = g.ptr() + (b * C + c0) * inner;
            for (int64_t i = 0; i < (c1 - c0) * inner; ++i) dst[i] += src[i];
        }
    });
}

// Swap the last two axes (rank >= 2).
template <typename S>
Var<S> transpose_last(const Var<S>& a) {
    const Tensor<S>& x = a->value;
    if (x.rank() < 2) throw ShapeError("transpose_last: input must have rank >= 2");
    int64_t R = x.dim(x.rank() - 2), C = x.dim(x.rank() - 1);
    int64_t G = x.numel() / (R * C);
    Shape out_shape = x.shape;
    std::swap(out_shape[x.rank() - 2], out_shape[x.rank() - 1]);
    Tensor<S> out(out_shape);
    for (int64_t g = 0; g < G; ++g) {
        const S* src = x.ptr() + g * R * C;
        S* dst = out.ptr() + g * R * C;
        for (int64_t r = 0; r < R; ++r)
            for (int64_t c = 0; c < C; ++c) dst[c * R + r] = src[r * C + c];
    }
    return make_op_node<S>(std::move(out), {a}, [G, R, C](Node<S>& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor<S>& g = n.parents[0]->g();
        for (int64_t gi = 0; gi < G; ++gi) {
            const S* src = n.grad.ptr() + gi * R * C;  // [C, R] layout
            S* dst = g.ptr() + gi * R * C;             // [R, C] layout
            for (int64_t c = 0; c < C; ++c)
                for (int64_t r = 0; r < R; ++r) dst[r * C + c] += src[c * R + r];
        }
    });
}

// Swap axes 1 and 2 of a rank-4 tensor: [A, B, C, D] -> [A, C, B, D].
template <typename S>
Var<S> swap_axes_12(const Var<S>& a) {
    const Tensor<S>& x = a->value;
    require_rank(x, 4, "swap_axes_12 input");
    int64_t A = x.dim(0), B = x.dim(1), C = x.dim(2), D = x.dim(3);
    Tensor<S> out({A, C, B, D});
    for (int64_t i = 0; i < A; ++i)
        for (int64_t j = 0; j < B; ++j)
            for (int64_t k = 0; k < C; ++k)
                std::copy(x.ptr() + ((i * B + j) * C + k) * D, x.ptr() + ((i * B + j) * C + k + 1) * D,
                          out.ptr() + ((i * C + k) * B + j) * D);
    return make_op_node<S>(std::move(out), {a}, [A, B, C, D](Node<S>& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor<S>& g = n.parents[0]->g();
        for (int64_t i = 0; i < A; ++i)
            for (int64_t j = 0; j < B; ++j)
                for (int64_t k = 0; k < C; ++k) {
                    const S* src = n.grad.ptr() + ((i * C + k) * B + j) * D;
                    S* dst = g.ptr() + ((i * B + j) * C + k) * D;
                    for (int64_t d = 0; d < D; ++d) dst[d] += src[d];
                }
    });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

// Batched matmul: [G, N, K] x [G, K, M] -> [G, N, M].
template <typename S>
Var<S> bmm(const Var<S>& a, const Var<S>& b) {
    const Tensor<S>& av = a->value;
    const Tensor<S>& bv = b->value;
    require_rank(av, 3, "bmm lhs");
    require_rank(bv, 3, "bmm rhs");
    if (av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(1))
        throw ShapeError("bmm: incompatible shapes " + shape_str(av.shape) + " x " + shape_str(bv.shape));
    const int64_t G = av.dim(0), N = av.dim(1), K = av.dim(2), M = bv.dim(2);
    Tensor<S> out({G, N, M}, S(0));
    for (int64_t g = 0; g < G; ++g) {
        const S* A = av.ptr() + g * N * K;
        const S* B = bv.ptr() + g * K * M;
        S* O = out.ptr() + g * N * M;
        for (int64_t i = 0; i < N; ++i)
            for (int64_t k = 0; k < K; ++k) {
                S aik = A[i * K + k];
                const S* brow = B + k * M;
                S* orow = O + i * M;
                for (int64_t j = 0; j < M; ++j) orow[j] += aik * brow[j];
            }
    }
    return make_op_node<S>(std::move(out), {a, b}, [G, N, K, M](Node<S>& n) {
        const Tensor<S>& go = n.grad;
        Node<S>& an = *n.parents[0];
        Node<S>& bn = *n.parents[1];
        if (an.requires_grad) {
            Tensor<S>& ga = an.g();
            const Tensor<S>& bv = bn.value;
            for (int64_t g = 0; g < G; ++g) {
                const S* GO = go.ptr() + g * N * M;
                const S* B = bv.ptr() + g * K * M;
                S* GA = ga.ptr() + g * N * K;
                for (int64_t i = 0; i < N; ++i)
                    for (int64_t k = 0; k < K; ++k) {
                        const S* gorow = GO + i * M;
                        const S* brow = B + k * M;
                        S acc = 0;
                        for (int64_t j = 0; j < M; ++j) acc += gorow[j] * brow[j];
                        GA[i * K + k] += acc;
                    }
            }
        }
        if (bn.requires_grad) {
            Tensor<S>& gb = bn.g();
            const Tensor<S>& av = an.value;
            for (int64_t g = 0; g < G; ++g) {
                const S* GO = go.ptr() + g * N * M;
                const S* A = av.ptr() + g * N * K;
                S* GB = gb.ptr() + g * K * M;
                for (int64_t i = 0; i < N; ++i)
                    for (int64_t k = 0; k < K; ++k) {
                        S aik = A[i * K + k];
                        const S* gorow = GO + i * M;
                        S* gbrow = GB + k * M;
                        for (int64_t j = 0; j < M; ++j) gbrow[j] += aik * gorow[j];
                    }
            }
        }
    });
}

// Affine map over the trailing axis: x [..., din] x w [din, dout] (+ bias).
template <typename S>
Var<S> linear(const Var<S>& x, const Var<S>& w, const Var<S>& bias = nullptr) {
    const Tensor<S>& xv = x->value;
    const Tensor<S>& wv = w->value;
    require_rank(wv, 2, "linear weight");
    if (xv.rank() < 1 || xv.shape.back() != wv.dim(0))
        throw ShapeError("linear: trailing axis " + shape_str(xv.shape) + " does not match weight " +
                         shape_str(wv.shape));
    const int64_t din = wv.dim(0), dout = wv.dim(1);
    const int64_t R = xv.numel() / din;
    if (bias) {
        require_rank(bias->value, 1, "linear bias");
        if (bias->value.dim(0) != dout) throw ShapeError("linear: bias length does not match output axis");
    }
    Shape out_shape = xv.shape;
    out_shape.back() = dout;
    Tensor<S> out(out_shape, S(0));
    for (int64_t r = 0; r < R; ++r) {
        const S* xrow = xv.ptr() + r * din;
        S* orow = out.ptr() + r * dout;
        if (bias)
            for (int64_t j = 0; j < dout; ++j) orow[j] = bias->value[j];
        for (int64_t i = 0; i < din; ++i) {
            S xi = xrow[i];
            const S* wrow = wv.ptr() + i * dout;
            for (int64_t j = 0; j < dout; ++j) orow[j] += xi * wrow[j];
        }
    }
    std::vector<Var<S>> parents = bias ? std::vector<Var<S>>{x, w, bias} : std::vector<Var<S>>{x, w};
    return make_op_node<S>(std::move(out), std::move(parents), [R, din, dout](Node<S>& n) {
        const Tensor<S>& go = n.grad;
        Node<S>& xn = *n.parents[0];
        Node<S>& wn = *n.parents[1];
        if (xn.requires_grad) {
            Tensor<S>& gx = xn.g();
            const Tensor<S>& wv = wn.value;
            for (int64_t r = 0; r < R; ++r) {
                const S* gorow = go.ptr() + r * dout;
                S* gxrow = gx.ptr() + r * din;
                for (int64_t i = 0; i < din; ++i) {
                    const S* wrow = wv.ptr() + i * dout;
                    S acc = 0;
                    for (int64_t j = 0; j < dout; ++j) acc += gorow[j] * wrow[j];
                    gxrow[i] += acc;
                }
            }
        }
        if (wn.requires_grad) {
            Tensor<S>& gw = wn.g();
            const Tensor<S>& xv = xn.value;
            for (int64_t r = 0; r < R; ++r) {
                const S* gorow = go.ptr() + r * dout;
                const S* xrow = xv.ptr() + r * din;
                for (int64_t i = 0; i < din; ++i) {
                    S xi = xrow[i];
                    S* gwrow = gw.ptr() + i * dout;
                    for (int64_t j = 0; j < dout; ++j) gwrow[j] += xi * gorow[j];
                }
            }
        }
        if (n.parents.size() == 3 && n.parents[2]->requires_grad) {
            Tensor<S>& gb = n.parents[2]->g();
            for (int64_t r = 0; r < R; ++r) {
                const S* gorow = go.ptr() + r * dout;
                for (int64_t j = 0; j < dout; ++j) gb[j] += gorow[j];
            }
        }
    });
}

// Per-channel bias: x [B, C, ...] + b [C].
template <typename S>
Var<S> add_channel_bias(const Var<S>& x, const Var<S>& b) {
    const Tensor<S>& xv = x->value;
    const Tensor<S>& bv = b->value;
    if (xv.rank() < 2) throw ShapeError("add_channel_bias: input must have rank >= 2");
    require_rank(bv, 1, "add_channel_bias bias");
    const int64_t B = xv.dim(0), C = xv.dim(1);
    if (bv.dim(0) != C) throw ShapeError("add_channel_bias: bias length does not match channel axis");
    const int64_t inner = xv.numel() / (B * C);
    Tensor<S> out = xv;
    for (int64_t bc = 0; bc < B * C; ++bc) {
        S bias = bv[bc % C];
        S* p = out.ptr() + bc * inner;
        for (int64_t i = 0; i < inner; ++i) p[i] += bias;
    }
    return make_op_node<S>(std::move(out), {x, b}, [B, C, inner](Node<S>& n) {
        if (n.parents[0]->requires_grad) {
            Tensor<S>& g = n.parents[0]->g();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor<S>& gb = n.parents[1]->g();
            for (int64_t bc = 0; bc < B * C; ++bc) {
                const S* p = n.grad.ptr() + bc * inner;
                S acc = 0;
                for (int64_t i = 0; i < inner; ++i) acc += p[i];
                gb[bc % C] += acc;
            }
        }
    });
}

// Per-sample per-channel shift: x [B, C, ...] + t [B, C]. Used to inject the
// projected time embedding into feature maps.
template <typename S>
Var<S> add_channel_map(const Var<S>& x, const Var<S>& t) {
    const Tensor<S>& xv = x->value;
    const Tensor<S>& tv = t->value;
    if (xv.rank() < 2) throw ShapeError("add_channel_map: input must have rank >= 2");
    require_rank(tv, 2, "add_channel_map shift");
    const int64_t B = xv.dim(0), C = xv.dim(1);
    if (tv.dim(0) != B || tv.dim(1) != C)
        throw ShapeError("add_channel_map: shift shape " + shape_str(tv.shape) + " does not match [B, C]");
    const int64_t inner = xv.numel() / (B * C);
    Tensor<S> out = xv;
    for (int64_t bc = 0; bc < B * C; ++bc) {
        S shift = tv[bc];
        S* p = out.ptr() + bc * inner;
        for (int64_t i = 0; i < inner; ++i) p[i] += shift;
    }
    return make_op_node<S>(std::move(out), {x, t}, [B, C, inner](Node<S>& n) {
        if (n.parents[0]->requires_grad) {
            Tensor<S>& g = n.parents[0]->g();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor<S>& gt = n.parents[1]->g();
            for (int64_t bc = 0; bc < B * C; ++bc) {
                const S* p = n.grad.ptr() + bc * inner;
                S acc = 0;
                for (int64_t i = 0; i < inner; ++i) acc += p[i];
                gt[bc] += acc;
            }
        }
    });
}

// ---------------------------------------------------------------------------
// softmax, normalization, losses
// ---------------------------------------------------------------------------

// Numerically stable softmax over the last axis.
template <typename S>
Var<S> softmax_lastdim(const Var<S>& a) {
    const Tensor<S>& x = a->value;
    if (x.rank() < 1) throw ShapeError("softmax: scalar input");
    const int64_t C = x.shape.back();
    const int64_t R = x.numel() / C;
    Tensor<S> out = x;
    for (int64_t r = 0; r < R; ++r) {
        S* row = out.ptr() + r * C;
        S mx = row[0];
        for (int64_t i = 1; i < C; ++i) mx = std::max(mx, row[i]);
        S z = 0;
        for (int64_t i = 0; i < C; ++i) {
            row[i] = std::exp(row[i] - mx);
            z += row[i];
        }
        S inv = S(1) / z;
        for (int64_t i = 0; i < C; ++i) row[i] *= inv;
    }
    return make_op_node<S>(std::move(out), {a}, [R, C](Node<S>& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor<S>& g = n.parents[0]->g();
        for (int64_t r = 0; r < R; ++r) {
            const S* y = n.value.ptr() + r * C;
            const S* gy = n.grad.ptr() + r * C;
            S dot = 0;
            for (int64_t i = 0; i < C; ++i) dot += gy[i] * y[i];
            S* gx = g.ptr() + r * C;
            for (int64_t i = 0; i < C; ++i) gx[i] += y[i] * (gy[i] - dot);
        }
    });
}

// Softmax over the channel axis (axis 1) of [B, C, ...]; used by the decoder
// head where each position along the trailing axes is a distribution over C.
template <typename S>
Var<S> softmax_channels(const Var<S>& a) {
    const Tensor<S>& x = a->value;
    if (x.rank() < 2) throw ShapeError("softmax_channels: input must have rank >= 2");
    const int64_t B = x.dim(0), C = x.dim(1);
    const int64_t inner = x.numel() / (B * C);
    Tensor<S> out = x;
    for (int64_t b = 0; b < B; ++b) {
        S* base = out.ptr() + b * C * inner;
        for (int64_t i = 0; i < inner; ++i) {
            S mx = base[i];
            for (int64_t c = 1; c < C; ++c) mx = std::max(mx, base[c * inner + i]);
            S z = 0;
            for (int64_t c = 0; c < C; ++c) {
                S e = std::exp(base[c * inner + i] - mx);
                base[c * inner + i] = e;
                z += e;
            }
            S inv = S(1) / z;
            for (int64_t c = 0; c < C; ++c) base[c * inner + i] *= inv;
        }
    }
    return make_op_node<S>(std::move(out), {a}, [B, C, inner](Node<S>& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor<S>& g = n.parents[0]->g();
        for (int64_t b = 0; b < B; ++b) {
            const S* y = n.value.ptr() + b * C * inner;
            const S* gy = n.grad.ptr() + b * C * inner;
            S* gx = g.ptr() + b * C * inner;
            for (int64_t i = 0; i < inner; ++i) {
                S dot = 0;
                for (int64_t c = 0; c < C; ++c) dot += gy[c * inner + i] * y[c * inner + i];
                for (int64_t c = 0; c < C; ++c)
                    gx[c * inner + i] += y[c * inner + i] * (gy[c * inner + i] - dot);
            }
        }
    });
}

// Mutable running statistics owned by a batchnorm layer.
template <typename S>
struct BatchNormState {
    Tensor<S> running_mean;
    Tensor<S> running_var;
    explicit BatchNormState(int64_t channels)
        : running_mean({channels}, S(0)), running_var(Shape{channels}, S(1)) {}
};

// Batch normalization over all axes except the channel axis of [B, C, ...].
// Train mode normalizes with batch statistics (biased variance) and updates
// the running stats by EMA; eval mode normalizes with the running stats.
template <typename S>
Var<S> batchnorm(const Var<S>& x, const Var<S>& scale, const Var<S>& shift, BatchNormState<S>& state, bool train,
                 S momentum = S(0.1), S eps = S(1e-5)) {
    const Tensor<S>& xv = x->value;
    if (xv.rank() < 2) throw ShapeError("batchnorm: input must have rank >= 2");
    const int64_t B = xv.dim(0), C = xv.dim(1);
    const int64_t inner = xv.numel() / (B * C);
    if (scale->value.numel() != C || shift->value.numel() != C)
        throw ShapeError("batchnorm: scale/shift length does not match channel axis");
    if (state.running_mean.numel() != C) throw ShapeError("batchnorm: state channel count mismatch");
    if (train && B < 2) throw ValueError("batchnorm: train mode requires batch size >= 2 (variance undefined)");

    const int64_t N = B * inner;
    auto mu = std::make_shared<std::vector<S>>(C);
    auto inv_std = std::make_shared<std::vector<S>>(C);
    if (train) {
        for (int64_t c = 0; c < C; ++c) {
            S m = 0;
            for (int64_t b = 0; b < B; ++b) {
                const S* p = xv.ptr() + (b * C + c) * inner;
                for (int64_t i = 0; i < inner; ++i) m += p[i];
            }
            m /= static_cast<S>(N);
            S v = 0;
            for (int64_t b = 0; b < B; ++b) {
                const S* p = xv.ptr() + (b * C + c) * inner;
                for (int64_t i = 0; i < inner; ++i) {
                    S d = p[i] - m;
                    v += d * d;
                }
            }
            v /= static_cast<S>(N);
            (*mu)[c] = m;
            (*inv_std)[c] = S(1) / std::sqrt(v + eps);
            S unbiased = N > 1 ? v * static_cast<S>(N) / static_cast<S>(N - 1) : v;
            state.running_mean[c] = (S(1) - momentum) * state.running_mean[c] + momentum * m;
            state.running_var[c] = (S(1) - momentum) * state.running_var[c] + momentum * unbiased;
        }
    } else {
        for (int64_t c = 0; c < C; ++c) {
            (*mu)[c] = state.running_mean[c];
            (*inv_std)[c] = S(1) / std::sqrt(state.running_var[c] + eps);
        }
    }

    Tensor<S> out(xv.shape);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            const S* p = xv.ptr() + (b * C + c) * inner;
            S* o = out.ptr() + (b * C + c) * inner;
            S g = scale->value[c], beta = shift->value[c], m = (*mu)[c], is = (*inv_std)[c];
            for (int64_t i = 0; i < inner; ++i) o[i] = (p[i] - m) * is * g + beta;
        }

    return make_op_node<S>(std::move(out), {x, scale, shift}, [B, C, inner, N, mu, inv_std, train](Node<S>& n) {
        Node<S>& xn = *n.parents[0];
        Node<S>& sn = *n.parents[1];
        Node<S>& bn = *n.parents[2];
        const Tensor<S>& xv = xn.value;
        const Tensor<S>& go = n.grad;
        // Per channel: sums of dy and dy*xhat.
        std::vector<S> sum_dy(C, S(0)), sum_dy_xhat(C, S(0));
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c) {
                const S* gp = go.ptr() + (b * C + c) * inner;
                const S* xp = xv.ptr() + (b * C + c) * inner;
                S m = (*mu)[c], is = (*inv_std)[c];
                S a0 = 0, a1 = 0;
                for (int64_t i = 0; i < inner; ++i) {
                    a0 += gp[i];
                    a1 += gp[i] * (xp[i] - m) * is;
                }
                sum_dy[c] += a0;
                sum_dy_xhat[c] += a1;
            }
        if (sn.requires_grad) {
            Tensor<S>& gs = sn.g();
            for (int64_t c = 0; c < C; ++c) gs[c] += sum_dy_xhat[c];
        }
        if (bn.requires_grad) {
            Tensor<S>& gb = bn.g();
            for (int64_t c = 0; c < C; ++c) gb[c] += sum_dy[c];
        }
        if (xn.requires_grad) {
            Tensor<S>& gx = xn.g();
            const Tensor<S>& sv = sn.value;
            for (int64_t b = 0; b < B; ++b)
                for (int64_t c = 0; c < C; ++c) {
                    const S* gp = go.ptr() + (b * C + c) * inner;
                    const S* xp = xv.ptr() + (b * C + c) * inner;
                    S* gxp = gx.ptr() + (b * C + c) * inner;
                    S m = (*mu)[c], is = (*inv_std)[c], gam = sv[c];
                    if (train) {
                        S mean_dy = sum_dy[c] / static_cast<S>(N);
                        S mean_dy_xhat = sum_dy_xhat[c] / static_cast<S>(N);
                        for (int64_t i = 0; i < inner; ++i) {
                            S xhat = (xp[i] - m) * is;
                            gxp[i] += gam * is * (gp[i] - mean_dy - xhat * mean_dy_xhat);
                        }
                    } else {
                        for (int64_t i = 0; i < inner; ++i) gxp[i] += gam * is * gp[i];
                    }
                }
        }
    });
}

// Group normalization of [B, C, ...]: channels split into `groups` groups,
// each normalized over its channels and all trailing axes. Batch-independent,
// so train and eval behave identically.
template <typename S>
Var<S> groupnorm(const Var<S>& x, const Var<S>& scale, const Var<S>& shift, int64_t groups, S eps = S(1e-5)) {
    const Tensor<S>& xv = x->value;
    if (xv.rank() < 2) throw ShapeError("groupnorm: input must have rank >= 2");
    const int64_t B = xv.dim(0), C = xv.dim(1);
    if (groups < 1 || C % groups != 0)
        throw ShapeError("groupnorm: groups " + std::to_string(groups) + " must divide channels " +
                         std::to_string(C));
    if (scale->value.numel() != C || shift->value.numel() != C)
        throw ShapeError("groupnorm: scale/shift length does not match channel axis");
    const int64_t inner = xv.numel() / (B * C);
    const int64_t cg = C / groups;
    const int64_t gsize = cg * inner;

    auto mu = std::make_shared<std::vector<S>>(B * groups);
    auto inv_std = std::make_shared<std::vector<S>>(B * groups);
    Tensor<S> out(xv.shape);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t g = 0; g < groups; ++g) {
            const S* p = xv.ptr() + (b * C + g * cg) * inner;
            S m = 0;
            for (int64_t i = 0; i < gsize; ++i) m += p[i];
            m /= static_cast<S>(gsize);
            S v = 0;
            for (int64_t i = 0; i < gsize; ++i) {
                S d = p[i] - m;
                v += d * d;
            }
            v /= static_cast<S>(gsize);
            S is = S(1) / std::sqrt(v + eps);
            (*mu)[b * groups + g] = m;
            (*inv_std)[b * groups + g] = is;
            S* o = out.ptr() + (b * C + g * cg) * inner;
            for (int64_t c = 0; c < cg; ++c) {
                S gam = scale->value[g * cg + c], beta = shift->value[g * cg + c];
                for (int64_t i = 0; i < inner; ++i)
                    o[c * inner + i] = (p[c * inner + i] - m) * is * gam + beta;
            }
        }

    return make_op_node<S>(std::move(out), {x, scale, shift}, [B, C, groups, cg, inner, gsize, mu, inv_std](Node<S>& n) {
        Node<S>& xn = *n.parents[0];
        Node<S>& sn = *n.parents[1];
        Node<S>& bn = *n.parents[2];
        const Tensor<S>& xv = xn.value;
        const Tensor<S>& go = n.grad;
        const Tensor<S>& sv = sn.value;
        if (sn.requires_grad || bn.requires_grad) {
            for (int64_t b = 0; b < B; ++b)
                for (int64_t c = 0; c < C; ++c) {
                    const S* gp = go.ptr() + (b * C + c) * inner;
                    const S* xp = xv.ptr() + (b * C + c) * inner;
                    int64_t g = c / cg;
                    S m = (*mu)[b * groups + g], is = (*inv_std)[b * groups + g];
                    S a0 = 0, a1 = 0;
                    for (int64_t i = 0; i < inner; ++i) {
                        a0 += gp[i];
                        a1 += gp[i] * (xp[i] - m) * is;
                    }
                    if (bn.requires_grad) bn.g()[c] += a0;
                    if (sn.requires_grad) sn.g()[c] += a1;
                }
        }
        if (xn.requires_grad) {
            Tensor<S>& gx = xn.g();
            for (int64_t b = 0; b < B; ++b)
                for (int64_t g = 0; g < groups; ++g) {
                    const S* xp = xv.ptr() + (b * C + g * cg) * inner;
                    const S* gp = go.ptr() + (b * C + g * cg) * inner;
                    S* gxp = gx.ptr() + (b * C + g * cg) * inner;
                    S m = (*mu)[b * groups + g], is = (*inv_std)[b * groups + g];
                    // w = gamma * dy restricted to the group
                    S mean_w = 0, mean_w_xhat = 0;
                    for (int64_t c = 0; c < cg; ++c) {
                        S gam = sv[g * cg + c];
                        for (int64_t i = 0; i < inner; ++i) {
                            S w = gam * gp[c * inner + i];
                            mean_w += w;
                            mean_w_xhat += w * (xp[c * inner + i] - m) * is;
                        }
                    }
                    mean_w /= static_cast<S>(gsize);
                    mean_w_xhat /= static_cast<S>(gsize);
                    for (int64_t c = 0; c < cg; ++c) {
                        S gam = sv[g * cg + c];
                        for (int64_t i = 0; i < inner; ++i) {
                            S xhat = (xp[c * inner + i] - m) * is;
                            gxp[c * inner + i] +=
                                is * (gam * gp[c * inner + i] - mean_w - xhat * mean_w_xhat);
                        }
                    }
                }
        }
    });
}

enum class Reduction { Mean, Sum };

// Cross entropy between per-position distributions. probs and target are
// [B, n, L]: n-way distribution per position. Loss per sample is
// -sum_t sum_l target * log(prob + 1e-12), averaged (or summed) over the L
// positions, then averaged over the batch.
template <typename S>
Var<S> cross_entropy(const Var<S>& probs, const Tensor<S>& target, Reduction reduction = Reduction::Mean) {
    static constexpr double kLogEps = 1e-12;
    const Tensor<S>& p = probs->value;
    require_rank(p, 3, "cross_entropy probabilities");
    require_same_shape(p, target, "cross_entropy");
    const int64_t B = p.dim(0), n = p.dim(1), L = p.dim(2);
    double acc = 0;
    for (int64_t i = 0; i < p.numel(); ++i)
        if (target[i] != S(0)) acc -= static_cast<double>(target[i]) * std::log(static_cast<double>(p[i]) + kLogEps);
    S scale = reduction == Reduction::Mean ? S(1) / static_cast<S>(B * L) : S(1) / static_cast<S>(B);
    Tensor<S> out({1});
    out[0] = static_cast<S>(acc) * scale;
    auto tgt = std::make_shared<Tensor<S>>(target);
    return make_op_node<S>(std::move(out), {probs}, [tgt, scale, n](Node<S>& n_) {
        if (!n_.parents[0]->requires_grad) return;
        Tensor<S>& g = n_.parents[0]->g();
        const Tensor<S>& p = n_.parents[0]->value;
        S go = n_.grad[0] * scale;
        for (int64_t i = 0; i < g.numel(); ++i)
            if ((*tgt)[i] != S(0)) g[i] -= go * (*tgt)[i] / (p[i] + static_cast<S>(kLogEps));
    });
}

// ---------------------------------------------------------------------------
// attention
// ---------------------------------------------------------------------------

// Multi-head scaled dot-product attention with an output projection and no
// bias terms. query [B, N, d], key/value [B, M, d], w_out [d, d].
template <typename S>
Var<S> attention(const Var<S>& query, const Var<S>& key, const Var<S>& value, int64_t heads, const Var<S>& w_out) {
    const Tensor<S>& qv = query->value;
    const Tensor<S>& kv = key->value;
    const Tensor<S>& vv = value->value;
    require_rank(qv, 3, "attention query");
    require_rank(kv, 3, "attention key");
    require_rank(vv, 3, "attention value");
    const int64_t B = qv.dim(0), N = qv.dim(1), d = qv.dim(2);
    const int64_t M = kv.dim(1);
    if (kv.dim(0) != B || vv.dim(0) != B || kv.dim(2) != d || vv.dim(2) != d || vv.dim(1) != M)
        throw ShapeError("attention: query/key/value shapes are inconsistent");
    if (heads < 1 || d % heads != 0)
        throw ShapeError("attention: head count " + std::to_string(heads) + " must divide model dim " +
                         std::to_string(d));
    const int64_t dh = d / heads;

    auto split = [&](const Var<S>& t, int64_t rows) {
        // [B, rows, d] -> [B*heads, rows, dh]
        auto r = reshape(t, {B, rows, heads, dh});
        auto s = swap_axes_12(r);  // [B, heads, rows, dh]
        return reshape(s, {B * heads, rows, dh});
    };
    auto qh = split(query, N);
    auto kh = split(key, M);
    auto vh = split(value, M);

    auto scores = mul_scalar(bmm(qh, transpose_last(kh)), S(1) / static_cast<S>(std::sqrt(static_cast<double>(dh))));
    auto weights = softmax_lastdim(scores);
    auto ctx = bmm(weights, vh);  // [B*heads, N, dh]
    auto merged = reshape(swap_axes_12(reshape(ctx, {B, heads, N, dh})), {B, N, d});
    return linear(merged, w_out);
}

// Attention weights only; exposed for the row-stochasticity checks.
template <typename S>
Var<S> attention_weights(const Var<S>& query, const Var<S>& key, int64_t heads) {
    const int64_t B = query->value.dim(0), N = query->value.dim(1), d = query->value.dim(2);
    const int64_t M = key->value.dim(1);
    if (heads < 1 || d % heads != 0) throw ShapeError("attention_weights: heads must divide dim");
    const int64_t dh = d / heads;
    auto split = [&](const Var<S>& t, int64_t rows) {
        return reshape(swap_axes_12(reshape(t, {B, rows, heads, dh})), {B * heads, rows, dh});
    };
    auto scores = mul_scalar(bmm(split(query, N), transpose_last(split(key, M))),
                             S(1) / static_cast<S>(std::sqrt(static_cast<double>(dh))));
    return softmax_lastdim(scores);
}

}  // namespace dnadiff::nn
