#pragma once

#include "dnadiff/autograd.hpp"

namespace dnadiff::nn {

inline int64_t conv_out_len(int64_t in, int64_t k, int64_t stride, int64_t pad) {
    return (in + 2 * pad - k) / stride + 1;
}

namespace detail {

// Accumulate one (ic, oc, k) diagonal of a 1-D cross-correlation:
//   out[ol] += w * in[ol*stride + k - pad]  for all valid ol.
template <typename S>
inline void corr1d_axis(S* out, const S* in, S w, int64_t lo_out, int64_t in_len, int64_t k, int64_t stride,
                        int64_t pad) {
    int64_t ol_lo = 0;
    int64_t shift = k - pad;
    if (shift < 0) ol_lo = (-shift + stride - 1) / stride;
    for (int64_t ol = ol_lo; ol < lo_out; ++ol) {
        int64_t i = ol * stride + shift;
        if (i >= in_len) break;
        out[ol] += w * in[i];
    }
}

}  // namespace detail

// conv1d: input [B, Cin, L], kernel [Cout, Cin, K] -> [B, Cout, Lo].
// Cross-correlation (no kernel flip), matching the gradient-checked adjoints.
template <typename S>
Var<S> conv1d(const Var<S>& input, const Var<S>& kernel, int64_t stride, int64_t pad) {
    const Tensor<S>& x = input->value;
    const Tensor<S>& w = kernel->value;
    require_rank(x, 3, "conv1d input");
    require_rank(w, 3, "conv1d kernel");
    if (stride < 1) throw ValueError("conv1d: stride must be >= 1");
    if (pad < 0) throw ValueError("conv1d: pad must be >= 0");
    const int64_t B = x.dim(0), Cin = x.dim(1), L = x.dim(2);
    const int64_t Cout = w.dim(0), K = w.dim(2);
    if (w.dim(1) != Cin)
        throw ShapeError("conv1d: kernel input-channel axis " + std::to_string(w.dim(1)) +
                         " does not match input channel axis " + std::to_string(Cin));
    if (K > L + 2 * pad)
        throw ShapeError("conv1d: kernel length axis " + std::to_string(K) + " exceeds padded input length " +
                         std::to_string(L + 2 * pad));
    const int64_t Lo = conv_out_len(L, K, stride, pad);

    Tensor<S> out({B, Cout, Lo});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t oc = 0; oc < Cout; ++oc) {
            S* o = out.ptr() + (b * Cout + oc) * Lo;
            for (int64_t ic = 0; ic < Cin; ++ic) {
                const S* xi = x.ptr() + (b * Cin + ic) * L;
                const S* wk = w.ptr() + (oc * Cin + ic) * K;
                for (int64_t k = 0; k < K; ++k) detail::corr1d_axis(o, xi, wk[k], Lo, L, k, stride, pad);
            }
        }

    return make_op_node<S>(
        std::move(out), {input, kernel}, [stride, pad, B, Cin, Cout, L, K, Lo](Node<S>& n) {
            const Tensor<S>& go = n.grad;
            Node<S>& xi_n = *n.parents[0];
            Node<S>& w_n = *n.parents[1];
            const Tensor<S>& x = xi_n.value;
            const Tensor<S>& w = w_n.value;
            if (xi_n.requires_grad) {
                Tensor<S>& gx = xi_n.g();
                for (int64_t b = 0; b < B; ++b)
                    for (int64_t oc = 0; oc < Cout; ++oc) {
                        const S* g = go.ptr() + (b * Cout + oc) * Lo;
                        for (int64_t ic = 0; ic < Cin; ++ic) {
                            S* gxp = gx.ptr() + (b * Cin + ic) * L;
                            const S* wk = w.ptr() + (oc * Cin + ic) * K;
                            for (int64_t k = 0; k < K; ++k) {
                                int64_t shift = k - pad;
                                int64_t ol_lo = shift < 0 ? (-shift + stride - 1) / stride : 0;
                                for (int64_t ol = ol_lo; ol < Lo; ++ol) {
                                    int64_t i = ol * stride + shift;
                                    if (i >= L) break;
                                    gxp[i] += wk[k] * g[ol];
                                }
                            }
                        }
                    }
            }
            if (w_n.requires_grad) {
                Tensor<S>& gw = w_n.g();
                for (int64_t b = 0; b < B; ++b)
                    for (int64_t oc = 0; oc < Cout; ++oc) {
                        const S* g = go.ptr() + (b * Cout + oc) * Lo;
                        for (int64_t ic = 0; ic < Cin; ++ic) {
                            const S* xp = x.ptr() + (b * Cin + ic) * L;
                            S* gwk = gw.ptr() + (oc * Cin + ic) * K;
                            for (int64_t k = 0; k < K; ++k) {
                                int64_t shift = k - pad;
                                int64_t ol_lo = shift < 0 ? (-shift + stride - 1) / stride : 0;
                                S acc = 0;
                                for (int64_t ol = ol_lo; ol < Lo; ++ol) {
                                    int64_t i = ol * stride + shift;
                                    if (i >= L) break;
                                    acc += xp[i] * g[ol];
                                }
                                gwk[k] += acc;
                            }
                        }
                    }
            }
        });
}

// conv2d: input [B, Cin, H, W], kernel [Cout, Cin, Kh, Kw] -> [B, Cout, Ho, Wo].
template <typename S>
Var<S> conv2d(const Var<S>& input, const Var<S>& kernel, int64_t stride, int64_t pad) {
    const Tensor<S>& x = input->value;
    const Tensor<S>& w = kernel->value;
    require_rank(x, 4, "conv2d input");
    require_rank(w, 4, "conv2d kernel");
    if (stride < 1) throw ValueError("conv2d: stride must be >= 1");
    if (pad < 0) throw ValueError("conv2d: pad must be >= 0");
    const int64_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t Cout = w.dim(0), Kh = w.dim(2), Kw = w.dim(3);
    if (w.dim(1) != Cin)
        throw ShapeError("conv2d: kernel input-channel axis " + std::to_string(w.dim(1)) +
                         " does not match input channel axis " + std::to_string(Cin));
    if (Kh > H + 2 * pad || Kw > W + 2 * pad)
        throw ShapeError("conv2d: kernel " + std::to_string(Kh) + "x" + std::to_string(Kw) +
                         " exceeds padded input " + std::to_string(H + 2 * pad) + "x" + std::to_string(W + 2 * pad));
    const int64_t Ho = conv_out_len(H, Kh, stride, pad);
    const int64_t Wo = conv_out_len(W, Kw, stride, pad);

    Tensor<S> out({B, Cout, Ho, Wo});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t oc = 0; oc < Cout; ++oc) {
            S* obase = out.ptr() + (b * Cout + oc) * Ho * Wo;
            for (int64_t ic = 0; ic < Cin; ++ic) {
                const S* xbase = x.ptr() + (b * Cin + ic) * H * W;
                const S* wbase = w.ptr() + (oc * Cin + ic) * Kh * Kw;
                for (int64_t kh = 0; kh < Kh; ++kh)
                    for (int64_t oh = 0; oh < Ho; ++oh) {
                        int64_t ih = oh * stride + kh - pad;
                        if (ih < 0 || ih >= H) continue;
                        S* orow = obase + oh * Wo;
                        const S* xrow = xbase + ih * W;
                        for (int64_t kw = 0; kw < Kw; ++kw)
                            detail::corr1d_axis(orow, xrow, wbase[kh * Kw + kw], Wo, W, kw, stride, pad);
                    }
            }
        }

    return make_op_node<S>(
        std::move(out), {input, kernel}, [stride, pad, B, Cin, Cout, H, W, Kh, Kw, Ho, Wo](Node<S>& n) {
            const Tensor<S>& go = n.grad;
            Node<S>& xi_n = *n.parents[0];
            Node<S>& w_n = *n.parents[1];
            const Tensor<S>& x = xi_n.value;
            const Tensor<S>& w = w_n.value;
            if (xi_n.requires_grad) {
                Tensor<S>& gx = xi_n.g();
                for (int64_t b = 0; b < B; ++b)
                    for (int64_t oc = 0; oc < Cout; ++oc) {
                        const S* gbase = go.ptr() + (b * Cout + oc) * Ho * Wo;
                        for (int64_t ic = 0; ic < Cin; ++ic) {
                            S* gxbase = gx.ptr() + (b * Cin + ic) * H * W;
                            const S* wbase = w.ptr() + (oc * Cin + ic) * Kh * Kw;
                            for (int64_t kh = 0; kh < Kh; ++kh)
                                for (int64_t oh = 0; oh < Ho; ++oh) {
                                    int64_t ih = oh * stride + kh - pad;
                                    if (ih < 0 || ih >= H) continue;
                                    const S* grow = gbase + oh * Wo;
                                    S* gxrow = gxbase + ih * W;
                                    for (int64_t kw = 0; kw < Kw; ++kw) {
                                        S wv = wbase[kh * Kw + kw];
                                        int64_t shift = kw - pad;
                                        int64_t ol_lo = shift < 0 ? (-shift + stride - 1) / stride : 0;
                                        for (int64_t ow = ol_lo; ow < Wo; ++ow) {
                                            int64_t iw = ow * stride + shift;
                                            if (iw >= W) break;
                                            gxrow[iw] += wv * grow[ow];
                                        }
                                    }
                                }
                        }
                    }
            }
            if (w_n.requires_grad) {
                Tensor<S>& gw = w_n.g();
                for (int64_t b = 0; b < B; ++b)
                    for (int64_t oc = 0; oc < Cout; ++oc) {
                        const S* gbase = go.ptr() + (b * Cout + oc) * Ho * Wo;
                        for (int64_t ic = 0; ic < Cin; ++ic) {
                            const S* xbase = x.ptr() + (b * Cin + ic) * H * W;
                            S* gwbase = gw.ptr() + (oc * Cin + ic) * Kh * Kw;
                            for (int64_t kh = 0; kh < Kh; ++kh)
                                for (int64_t oh = 0; oh < Ho; ++oh) {
                                    int64_t ih = oh * stride + kh - pad;
                                    if (ih < 0 || ih >= H) continue;
                                    const S* grow = gbase + oh * Wo;
                                    const S* xrow = xbase + ih * W;
                                    for (int64_t kw = 0; kw < Kw; ++kw) {
                                        int64_t shift = kw - pad;
                                        int64_t ol_lo = shift < 0 ? (-shift + stride - 1) / stride : 0;
                                        S acc = 0;
                                        for (int64_t ow = ol_lo; ow < Wo; ++ow) {
                                            int64_t iw = ow * stride + shift;
                                            if (iw >= W) break;
                                            acc += xrow[iw] * grow[ow];
                                        }
                                        gwbase[kh * Kw + kw] += acc;
                                    }
                                }
                        }
                    }
            }
        });
}

// Transposed 2-D convolution, the exact adjoint of conv2d with padding 0 and
// the same stride. Kernel layout matches conv2d: [Cforward_out, Cforward_in,
// Kh, Kw]. The input here has Cforward_out channels and the output has
// Cforward_in channels; spatial size grows to (in-1)*stride + K.
template <typename S>
Var<S> transposed_conv2d(const Var<S>& input, const Var<S>& kernel, int64_t stride) {
    const Tensor<S>& x = input->value;
    const Tensor<S>& w = kernel->value;
    require_rank(x, 4, "transposed_conv2d input");
    require_rank(w, 4, "transposed_conv2d kernel");
    if (stride < 1) throw ValueError("transposed_conv2d: stride must be >= 1");
    const int64_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t Cout = w.dim(1), Kh = w.dim(2), Kw = w.dim(3);
    if (w.dim(0) != Cin)
        throw ShapeError("transposed_conv2d: kernel leading channel axis " + std::to_string(w.dim(0)) +
                         " does not match input channel axis " + std::to_string(Cin));
    const int64_t Ho = (H - 1) * stride + Kh;
    const int64_t Wo = (W - 1) * stride + Kw;

    Tensor<S> out({B, Cout, Ho, Wo});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t ic = 0; ic < Cin; ++ic) {
            const S* xbase = x.ptr() + (b * Cin + ic) * H * W;
            for (int64_t oc = 0; oc < Cout; ++oc) {
                S* obase = out.ptr() + (b * Cout + oc) * Ho * Wo;
                const S* wbase = w.ptr() + (ic * Cout + oc) * Kh * Kw;
                for (int64_t h = 0; h < H; ++h)
                    for (int64_t kh = 0; kh < Kh; ++kh) {
                        S* orow = obase + (h * stride + kh) * Wo;
                        const S* xrow = xbase + h * W;
                        for (int64_t kw = 0; kw < Kw; ++kw) {
                            S wv = wbase[kh * Kw + kw];
                            for (int64_t ww = 0; ww < W; ++ww) orow[ww * stride + kw] += wv * xrow[ww];
                        }
                    }
            }
        }

    return make_op_node<S>(std::move(out), {input, kernel}, [stride, B, Cin, Cout, H, W, Kh, Kw, Ho, Wo](Node<S>& n) {
        const Tensor<S>& go = n.grad;
        Node<S>& xi_n = *n.parents[0];
        Node<S>& w_n = *n.parents[1];
        const Tensor<S>& x = xi_n.value;
        const Tensor<S>& w = w_n.value;
        if (xi_n.requires_grad) {
            // Adjoint of the adjoint: a plain stride-s correlation of the
            // output gradient with the kernel.
            Tensor<S>& gx = xi_n.g();
            for (int64_t b = 0; b < B; ++b)
                for (int64_t ic = 0; ic < Cin; ++ic) {
                    S* gxbase = gx.ptr() + (b * Cin + ic) * H * W;
                    for (int64_t oc = 0; oc < Cout; ++oc) {
                        const S* gbase = go.ptr() + (b * Cout + oc) * Ho * Wo;
                        const S* wbase = w.ptr() + (ic * Cout + oc) * Kh * Kw;
                        for (int64_t h = 0; h < H; ++h)
                            for (int64_t kh = 0; kh < Kh; ++kh) {
                                const S* grow = gbase + (h * stride + kh) * Wo;
                                S* gxrow = gxbase + h * W;
                                for (int64_t kw = 0; kw < Kw; ++kw) {
                                    S wv = wbase[kh * Kw + kw];
                                    for (int64_t ww = 0; ww < W; ++ww) gxrow[ww] += wv * grow[ww * stride + kw];
                                }
                            }
                    }
                }
        }
        if (w_n.requires_grad) {
            Tensor<S>& gw = w_n.g();
            for (int64_t b = 0; b < B; ++b)
                for (int64_t ic = 0; ic < Cin; ++ic) {
                    const S* xbase = x.ptr() + (b * Cin + ic) * H * W;
                    for (int64_t oc = 0; oc < Cout; ++oc) {
                        const S* gbase = go.ptr() + (b * Cout + oc) * Ho * Wo;
                        S* gwbase = gw.ptr() + (ic * Cout + oc) * Kh * Kw;
                        for (int64_t h = 0; h < H; ++h)
                            for (int64_t kh = 0; kh < Kh; ++kh) {
                                const S* grow = gbase + (h * stride + kh) * Wo;
                                const S* xrow = xbase + h * W;
                                for (int64_t kw = 0; kw < Kw; ++kw) {
                                    S acc = 0;
                                    for (int64_t ww = 0; ww < W; ++ww) acc += xrow[ww] * grow[ww * stride + kw];
                                    gwbase[kh * Kw + kw] += acc;
                                }
                            }
                    }
                }
        }
    });
}

// maxpool1d: [B, C, L] -> [B, C, L/window]; window must divide L. Gradient
// routes to the first position attaining the max (ties -> lowest index).
template <typename S>
Var<S> maxpool1d(const Var<S>& input, int64_t window) {
    const Tensor<S>& x = input->value;
    require_rank(x, 3, "maxpool1d input");
    if (window < 1) throw ValueError("maxpool1d: window must be >= 1");
    const int64_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
    if (L % window != 0)
        throw ShapeError("maxpool1d: window " + std::to_string(window) + " does not divide length " +
                         std::to_string(L));
    const int64_t Lo = L / window;

    Tensor<S> out({B, C, Lo});
    auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(B * C * Lo));
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const S* xp = x.ptr() + bc * L;
        S* op = out.ptr() + bc * Lo;
        int64_t* ap = argmax->data() + bc * Lo;
        for (int64_t ol = 0; ol < Lo; ++ol) {
            int64_t base = ol * window;
            S best = xp[base];
            int64_t best_i = base;
            for (int64_t k = 1; k < window; ++k)
                if (xp[base + k] > best) {
                    best = xp[base + k];
                    best_i = base + k;
                }
            op[ol] = best;
            ap[ol] = best_i;
        }
    }

    return make_op_node<S>(std::move(out), {input}, [argmax, B, C, L, Lo](Node<S>& n) {
        Node<S>& xi_n = *n.parents[0];
        if (!xi_n.requires_grad) return;
        Tensor<S>& gx = xi_n.g();
        const Tensor<S>& go = n.grad;
        for (int64_t bc = 0; bc < B * C; ++bc) {
            S* gxp = gx.ptr() + bc * L;
            const S* gp = go.ptr() + bc * Lo;
            const int64_t* ap = argmax->data() + bc * Lo;
            for (int64_t ol = 0; ol < Lo; ++ol) gxp[ap[ol]] += gp[ol];
        }
    });
}

// Nearest-neighbour upsampling. Rank-3 inputs repeat along the length axis,
// rank-4 inputs along both spatial axes. Inverse pair of maxpool on inputs
// that are constant within each window.
template <typename S>
Var<S> upsample_nearest(const Var<S>& input, int64_t factor) {
    const Tensor<S>& x = input->value;
    if (factor < 1) throw ValueError("upsample_nearest: factor must be >= 1");
    if (x.rank() == 3) {
        const int64_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
        const int64_t Lo = L * factor;
        Tensor<S> out({B, C, Lo});
        for (int64_t bc = 0; bc < B * C; ++bc) {
            const S* xp = x.ptr() + bc * L;
            S* op = out.ptr() + bc * Lo;
            for (int64_t l = 0; l < L; ++l)
                for (int64_t k = 0; k < factor; ++k) op[l * factor + k] = xp[l];
        }
        return make_op_node<S>(std::move(out), {input}, [factor, B, C, L, Lo](Node<S>& n) {
            Node<S>& xi_n = *n.parents[0];
            if (!xi_n.requires_grad) return;
            Tensor<S>& gx = xi_n.g();
            const Tensor<S>& go = n.grad;
            for (int64_t bc = 0; bc < B * C; ++bc) {
                S* gxp = gx.ptr() + bc * L;
                const S* gp = go.ptr() + bc * Lo;
                for (int64_t l = 0; l < L; ++l) {
                    S acc = 0;
                    for (int64_t k = 0; k < factor; ++k) acc += gp[l * factor + k];
                    gxp[l] += acc;
                }
            }
        });
    }
    if (x.rank() == 4) {
        const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
        const int64_t Ho = H * factor, Wo = W * factor;
        Tensor<S> out({B, C, Ho, Wo});
        for (int64_t bc = 0; bc < B * C; ++bc) {
            const S* xp = x.ptr() + bc * H * W;
            S* op = out.ptr() + bc * Ho * Wo;
            for (int64_t h = 0; h < H; ++h)
                for (int64_t fh = 0; fh < factor; ++fh) {
                    S* orow = op + (h * factor + fh) * Wo;
                    const S* xrow = xp + h * W;
                    for (int64_t w = 0; w < W; ++w)
                        for (int64_t fw = 0; fw < factor; ++fw) orow[w * factor + fw] = xrow[w];
                }
        }
        return make_op_node<S>(std::move(out), {input}, [factor, B, C, H, W, Ho, Wo](Node<S>& n) {
            Node<S>& xi_n = *n.parents[0];
            if (!xi_n.requires_grad) return;
            Tensor<S>& gx = xi_n.g();
            const Tensor<S>& go = n.grad;
            for (int64_t bc = 0; bc < B * C; ++bc) {
                S* gxp = gx.ptr() + bc * H * W;
                const S* gp = go.ptr() + bc * Ho * Wo;
                for (int64_t h = 0; h < H; ++h)
                    for (int64_t fh = 0; fh < factor; ++fh) {
                        const S* grow = gp + (h * factor + fh) * Wo;
                        S* gxrow = gxp + h * W;
                        for (int64_t w = 0; w < W; ++w) {
                            S acc = 0;
                            for (int64_t fw = 0; fw < factor; ++fw) acc += grow[w * factor + fw];
                            gxrow[w] += acc;
                        }
                    }
            }
        });
    }
    throw ShapeError("upsample_nearest: expected rank 3 or 4 input, got " + shape_str(x.shape));
}

}  // namespace dnadiff::nn
