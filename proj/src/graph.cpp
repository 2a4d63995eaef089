#include "hazeforge/ad/graph.hpp"

#include <algorithm>

namespace hazeforge::ad {

const char* op_name(Op op) {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Div: return "div";
        case Op::Neg: return "neg";
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::Abs: return "abs";
        case Op::Relu: return "relu";
        case Op::Sigmoid: return "sigmoid";
        case Op::Softplus: return "softplus";
        case Op::ClampMin: return "clamp_min";
        case Op::AddScalar: return "add_scalar";
        case Op::MulScalar: return "mul_scalar";
        case Op::Mean: return "mean";
        case Op::Sum: return "sum";
        case Op::GlobalAvgPool: return "global_avg_pool";
        case Op::AvgPool2d: return "avg_pool2d";
        case Op::UpsampleNearest: return "upsample_nearest";
        case Op::Concat: return "concat";
        case Op::SliceChannels: return "slice_channels";
        case Op::Conv2d: return "conv2d";
        case Op::BroadcastScalar: return "broadcast_scalar";
    }
    return "?";
}

namespace {

struct Strides {
    size_t s[4];
};

// Stride 0 where the input dim is broadcast.
Strides strides_for(const Shape& in, const Shape& out) {
    Strides st{};
    size_t acc = 1;
    size_t full[4];
    const int id[4] = {in.n, in.c, in.h, in.w};
    for (int i = 3; i >= 0; --i) {
        full[i] = acc;
        acc *= static_cast<size_t>(id[i]);
    }
    const int od[4] = {out.n, out.c, out.h, out.w};
    for (int i = 0; i < 4; ++i) st.s[i] = (id[i] == od[i]) ? full[i] : 0;
    return st;
}

template <typename T>
T stable_sigmoid(T x) {
    if (x >= T(0)) {
        const T e = std::exp(-x);
        return T(1) / (T(1) + e);
    }
    const T e = std::exp(x);
    return e / (T(1) + e);
}

// Valid output-x range for one kernel column: ox in [lo, hi) keeps
// ox*stride - pad + kx inside [0, W).
inline void ox_range(int W, int stride, int pad, int kx, int ow, int& lo, int& hi) {
    lo = 0;
    while (lo < ow && lo * stride - pad + kx < 0) ++lo;
    hi = ow;
    while (hi > lo && (hi - 1) * stride - pad + kx >= W) --hi;
}

template <typename T>
void im2col(const T* x, int C, int H, int W, int k, int stride, int pad, int oh, int ow, T* cols) {
    const size_t ohw = static_cast<size_t>(oh) * ow;
    for (int ci = 0; ci < C; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                T* row = cols + ((static_cast<size_t>(ci) * k + ky) * k + kx) * ohw;
                int lo, hi;
                ox_range(W, stride, pad, kx, ow, lo, hi);
                for (int oy = 0; oy < oh; ++oy) {
                    const int y = oy * stride - pad + ky;
                    T* dst = row + static_cast<size_t>(oy) * ow;
                    if (y < 0 || y >= H) {
                        std::fill(dst, dst + ow, T(0));
                        continue;
                    }
                    const T* src = x + (static_cast<size_t>(ci) * H + y) * W - pad + kx;
                    for (int ox = 0; ox < lo; ++ox) dst[ox] = T(0);
                    if (stride == 1) {
                        for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox];
                    } else {
                        for (int ox = lo; ox < hi; ++ox) dst[ox] = src[static_cast<size_t>(ox) * stride];
                    }
                    for (int ox = hi; ox < ow; ++ox) dst[ox] = T(0);
                }
            }
        }
    }
}

template <typename T>
void transpose(const T* src, int rows, int cols, T* dst) {
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) dst[static_cast<size_t>(c) * rows + r] = src[static_cast<size_t>(r) * cols + c];
}

// One hot scratch panel per thread; reusing it keeps the im2col traffic in
// cache instead of streaming per-node buffers through DRAM.
template <typename T>
std::vector<T>& conv_scratch(size_t need) {
    thread_local std::vector<T> buf;
    if (buf.size() < need) buf.resize(need);
    return buf;
}


template <typename T>
void col2im_add(const T* dcols, int C, int H, int W, int k, int stride, int pad, int oh, int ow, T* dx) {
    const size_t ohw = static_cast<size_t>(oh) * ow;
    for (int ci = 0; ci < C; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const T* row = dcols + ((static_cast<size_t>(ci) * k + ky) * k + kx) * ohw;
                int lo, hi;
                ox_range(W, stride, pad, kx, ow, lo, hi);
                for (int oy = 0; oy < oh; ++oy) {
                    const int y = oy * stride - pad + ky;
                    if (y < 0 || y >= H) continue;
                    T* dst = dx + (static_cast<size_t>(ci) * H + y) * W - pad + kx;
                    const T* src = row + static_cast<size_t>(oy) * ow;
                    if (stride == 1) {
                        for (int ox = lo; ox < hi; ++ox) dst[ox] += src[ox];
                    } else {
                        for (int ox = lo; ox < hi; ++ox) dst[static_cast<size_t>(ox) * stride] += src[ox];
                    }
                }
            }
        }
    }
}

}  // namespace

template <typename T>
void Graph<T>::forward_node(TensorId id) {
    Node& nd = nodes_[id];
    const size_t n = nd.val.size();
    T* out = nd.val.data();

    switch (nd.op) {
        case Op::Leaf:
            return;

        case Op::Add:
        case Op::Sub:
        case Op::Mul:
        case Op::Div: {
            const Node& na = nodes_[nd.a];
            const Node& nb = nodes_[nd.b];
            const T* va = na.val.data();
            const T* vb = nb.val.data();
            if (na.shape == nd.shape && nb.shape == nd.shape) {
                switch (nd.op) {
                    case Op::Add:
                        for (size_t i = 0; i < n; ++i) out[i] = va[i] + vb[i];
                        break;
                    case Op::Sub:
                        for (size_t i = 0; i < n; ++i) out[i] = va[i] - vb[i];
                        break;
                    case Op::Mul:
                        for (size_t i = 0; i < n; ++i) out[i] = va[i] * vb[i];
                        break;
                    default:
                        for (size_t i = 0; i < n; ++i) out[i] = va[i] / vb[i];
                        break;
                }
            } else {
                const Strides sa = strides_for(na.shape, nd.shape);
                const Strides sb = strides_for(nb.shape, nd.shape);
                const Op op = nd.op;
                size_t o = 0;
                for (int i0 = 0; i0 < nd.shape.n; ++i0)
                    for (int i1 = 0; i1 < nd.shape.c; ++i1)
                        for (int i2 = 0; i2 < nd.shape.h; ++i2) {
                            const T* pa = va + i0 * sa.s[0] + i1 * sa.s[1] + i2 * sa.s[2];
                            const T* pb = vb + i0 * sb.s[0] + i1 * sb.s[1] + i2 * sb.s[2];
                            const size_t wa = sa.s[3], wb = sb.s[3];
                            const int w = nd.shape.w;
                            switch (op) {
                                case Op::Add:
                                    for (int i3 = 0; i3 < w; ++i3, ++o) out[o] = pa[i3 * wa] + pb[i3 * wb];
                                    break;
                                case Op::Sub:
                                    for (int i3 = 0; i3 < w; ++i3, ++o) out[o] = pa[i3 * wa] - pb[i3 * wb];
                                    break;
                                case Op::Mul:
                                    for (int i3 = 0; i3 < w; ++i3, ++o) out[o] = pa[i3 * wa] * pb[i3 * wb];
                                    break;
                                default:
                                    for (int i3 = 0; i3 < w; ++i3, ++o) out[o] = pa[i3 * wa] / pb[i3 * wb];
                                    break;
                            }
                        }
            }
            break;
        }

        case Op::Neg: {
            const T* va = nodes_[nd.a].val.data();
            for (size_t i = 0; i < n; ++i) out[i] = -va[i];
            break;
        }
        case Op::Exp: {
            const T* va = nodes_[nd.a].val.data();
            for (size_t i = 0; i < n; ++i) out[i] = std::exp(va[i]);
            break;
        }
        case Op::Log: {
            const T* va = nodes_[nd.a].val.data();
            for (size_t i = 0; i < n; ++i) out[i] = std::log(va[i]);
            break;
        }
        case Op::Abs: {
            const T* va = nodes_[nd.a].val.data();
            for (size_t i = 0; i < n; ++i) {
                out[i] = va[i] < T(0) ? -va[i] : va[i];
                if (track_kinks_) fold_kink(va[i] >= T(0));
            }
            break;
        }
        case Op::Relu: {
            const T* va = nodes_[nd.a].val.data();
            for (size_t i = 0; i < n; ++i) {
                out[i] = va[i] > T(0) ? va[i] : T(0);
                if (track_kinks_) fold_kink(va[i] > T(0));
            }
            break;
        }
        case Op::Sigmoid: {
            const T* va = nodes_[nd.a].val.data();
            for (size_t i = 0; i < n; ++i) out[i] = stable_sigmoid(va[i]);
            break;
        }
        case Op::Softplus: {
            const T* va = nodes_[nd.a].val.data();
            for (size_t i = 0; i < n; ++i) {
                const T x = va[i];
                out[i] = x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
            }
            break;
        }
        case Op::ClampMin: {
            const T* va = nodes_[nd.a].val.data();
            const T lo = nd.scalar;
            for (size_t i = 0; i < n; ++i) {
                out[i] = va[i] < lo ? lo : va[i];
                if (track_kinks_) fold_kink(va[i] >= lo);
            }
            break;
        }
        case Op::AddScalar: {
            const T* va = nodes_[nd.a].val.data();
            for (size_t i = 0; i < n; ++i) out[i] = va[i] + nd.scalar;
            break;
        }
        case Op::MulScalar: {
            const T* va = nodes_[nd.a].val.data();
            for (size_t i = 0; i < n; ++i) out[i] = va[i] * nd.scalar;
            break;
        }

        case Op::Mean:
        case Op::Sum: {
            const Node& na = nodes_[nd.a];
            double acc = 0.0;
            for (T v : na.val) acc += static_cast<double>(v);
            out[0] = static_cast<T>(nd.op == Op::Mean ? acc / static_cast<double>(na.val.size()) : acc);
            break;
        }

        case Op::GlobalAvgPool: {
            const Node& na = nodes_[nd.a];
            const size_t hw = static_cast<size_t>(na.shape.h) * na.shape.w;
            const size_t nc = static_cast<size_t>(na.shape.n) * na.shape.c;
            for (size_t j = 0; j < nc; ++j) {
                double acc = 0.0;
                const T* src = na.val.data() + j * hw;
                for (size_t i = 0; i < hw; ++i) acc += static_cast<double>(src[i]);
                out[j] = static_cast<T>(acc / static_cast<double>(hw));
            }
            break;
        }

        case Op::AvgPool2d: {
            const Node& na = nodes_[nd.a];
            const int k = nd.i0, stride = nd.i1;
            const int H = na.shape.h, W = na.shape.w;
            const T inv = T(1) / static_cast<T>(k * k);
            size_t o = 0;
            for (int img = 0; img < nd.shape.n * nd.shape.c; ++img) {
                const T* src = na.val.data() + static_cast<size_t>(img) * H * W;
                for (int oy = 0; oy < nd.shape.h; ++oy)
                    for (int ox = 0; ox < nd.shape.w; ++ox, ++o) {
                        T acc = T(0);
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx)
                                acc += src[static_cast<size_t>(oy * stride + ky) * W + ox * stride + kx];
                        out[o] = acc * inv;
                    }
            }
            break;
        }

        case Op::UpsampleNearest: {
            const Node& na = nodes_[nd.a];
            const int f = nd.i0;
            const int H = na.shape.h, W = na.shape.w;
            const int OH = nd.shape.h, OW = nd.shape.w;
            for (int img = 0; img < nd.shape.n * nd.shape.c; ++img) {
                const T* src = na.val.data() + static_cast<size_t>(img) * H * W;
                T* dst = out + static_cast<size_t>(img) * OH * OW;
                for (int y = 0; y < OH; ++y) {
                    const T* srow = src + static_cast<size_t>(y / f) * W;
                    T* drow = dst + static_cast<size_t>(y) * OW;
                    for (int x = 0; x < OW; ++x) drow[x] = srow[x / f];
                }
            }
            break;
        }

        case Op::Concat: {
            const Node& na = nodes_[nd.a];
            const Node& nb = nodes_[nd.b];
            const size_t hw = static_cast<size_t>(nd.shape.h) * nd.shape.w;
            const size_t a_blk = static_cast<size_t>(na.shape.c) * hw;
            const size_t b_blk = static_cast<size_t>(nb.shape.c) * hw;
            for (int img = 0; img < nd.shape.n; ++img) {
                std::copy_n(na.val.data() + img * a_blk, a_blk, out + img * (a_blk + b_blk));
                std::copy_n(nb.val.data() + img * b_blk, b_blk, out + img * (a_blk + b_blk) + a_blk);
            }
            break;
        }

        case Op::SliceChannels: {
            const Node& na = nodes_[nd.a];
            const size_t hw = static_cast<size_t>(nd.shape.h) * nd.shape.w;
            const size_t in_blk = static_cast<size_t>(na.shape.c) * hw;
            const size_t out_blk = static_cast<size_t>(nd.i1) * hw;
            for (int img = 0; img < nd.shape.n; ++img)
                std::copy_n(na.val.data() + img * in_blk + nd.i0 * hw, out_blk, out + img * out_blk);
            break;
        }

        case Op::Conv2d: {
            Node& nx = nodes_[nd.a];
            const Node& nw = nodes_[nd.b];
            const int stride = nd.i0, pad = nd.i1;
            const int Cin = nx.shape.c, H = nx.shape.h, W = nx.shape.w;
            const int Cout = nw.shape.n, k = nw.shape.h;
            const int oh = nd.shape.h, ow = nd.shape.w;
            const int K = Cin * k * k;
            const size_t ohw = static_cast<size_t>(oh) * ow;
            const size_t in_blk = static_cast<size_t>(Cin) * H * W;
            const size_t col_blk = static_cast<size_t>(K) * ohw;
#pragma omp parallel for schedule(static) if (threads() > 1 && nx.shape.n > 1)
            for (int img = 0; img < nx.shape.n; ++img) {
                auto& cols = conv_scratch<T>(col_blk);
                im2col(nx.val.data() + img * in_blk, Cin, H, W, k, stride, pad, oh, ow, cols.data());
                gemm(nw.val.data(), cols.data(), out + img * static_cast<size_t>(Cout) * ohw, Cout,
                     static_cast<int>(ohw), K, false);
            }
            break;
        }

        case Op::BroadcastScalar: {
            const T v = nodes_[nd.a].val[0];
            std::fill(out, out + n, v);
            break;
        }
    }

    if (opt_.check_finite) check_finite(id);
}

template <typename T>
void Graph<T>::backward_node(TensorId id) {
    Node& nd = nodes_[id];
    const size_t n = nd.val.size();
    const T* g = nd.grad.data();
    Node& na = nodes_[nd.a];
    const bool need_a = na.needs_grad;
    if (need_a) ensure_grad(nd.a);

    switch (nd.op) {
        case Op::Leaf:
            return;

        case Op::Add:
        case Op::Sub:
        case Op::Mul:
        case Op::Div: {
            Node& nb = nodes_[nd.b];
            const bool need_b = nb.needs_grad;
            if (need_b) ensure_grad(nd.b);
            const T* va = na.val.data();
            const T* vb = nb.val.data();
            T* ga = need_a ? na.grad.data() : nullptr;
            T* gb = need_b ? nb.grad.data() : nullptr;
            const bool same = na.shape == nd.shape && nb.shape == nd.shape;
            if (same) {
                switch (nd.op) {
                    case Op::Add:
                        if (ga)
                            for (size_t i = 0; i < n; ++i) ga[i] += g[i];
                        if (gb)
                            for (size_t i = 0; i < n; ++i) gb[i] += g[i];
                        break;
                    case Op::Sub:
                        if (ga)
                            for (size_t i = 0; i < n; ++i) ga[i] += g[i];
                        if (gb)
                            for (size_t i = 0; i < n; ++i) gb[i] -= g[i];
                        break;
                    case Op::Mul:
                        if (ga)
                            for (size_t i = 0; i < n; ++i) ga[i] += g[i] * vb[i];
                        if (gb)
                            for (size_t i = 0; i < n; ++i) gb[i] += g[i] * va[i];
                        break;
                    default:
                        if (ga)
                            for (size_t i = 0; i < n; ++i) ga[i] += g[i] / vb[i];
                        if (gb)
                            for (size_t i = 0; i < n; ++i) gb[i] -= g[i] * va[i] / (vb[i] * vb[i]);
                        break;
                }
                break;
            }
            const Strides sa = strides_for(na.shape, nd.shape);
            const Strides sb = strides_for(nb.shape, nd.shape);
            size_t o = 0;
            for (int i0 = 0; i0 < nd.shape.n; ++i0)
                for (int i1 = 0; i1 < nd.shape.c; ++i1)
                    for (int i2 = 0; i2 < nd.shape.h; ++i2) {
                        const size_t base_a = i0 * sa.s[0] + i1 * sa.s[1] + i2 * sa.s[2];
                        const size_t base_b = i0 * sb.s[0] + i1 * sb.s[1] + i2 * sb.s[2];
                        for (int i3 = 0; i3 < nd.shape.w; ++i3, ++o) {
                            const size_t ia = base_a + i3 * sa.s[3];
                            const size_t ib = base_b + i3 * sb.s[3];
                            switch (nd.op) {
                                case Op::Add:
                                    if (ga) ga[ia] += g[o];
                                    if (gb) gb[ib] += g[o];
                                    break;
                                case Op::Sub:
                                    if (ga) ga[ia] += g[o];
                                    if (gb) gb[ib] -= g[o];
                                    break;
                                case Op::Mul:
                                    if (ga) ga[ia] += g[o] * vb[ib];
                                    if (gb) gb[ib] += g[o] * va[ia];
                                    break;
                                default:  // Div
                                    if (ga) ga[ia] += g[o] / vb[ib];
                                    if (gb) gb[ib] -= g[o] * va[ia] / (vb[ib] * vb[ib]);
                                    break;
                            }
                        }
                    }
            break;
        }

        case Op::Neg: {
            T* ga = na.grad.data();
            for (size_t i = 0; i < n; ++i) ga[i] -= g[i];
            break;
        }
        case Op::Exp: {
            T* ga = na.grad.data();
            const T* out = nd.val.data();
            for (size_t i = 0; i < n; ++i) ga[i] += g[i] * out[i];
            break;
        }
        case Op::Log: {
            T* ga = na.grad.data();
            const T* va = na.val.data();
            for (size_t i = 0; i < n; ++i) ga[i] += g[i] / va[i];
            break;
        }
        case Op::Abs: {
            T* ga = na.grad.data();
            const T* va = na.val.data();
            for (size_t i = 0; i < n; ++i) {
                if (va[i] > T(0))
                    ga[i] += g[i];
                else if (va[i] < T(0))
                    ga[i] -= g[i];
            }
            break;
        }
        case Op::Relu: {
            T* ga = na.grad.data();
            const T* va = na.val.data();
            for (size_t i = 0; i < n; ++i)
                if (va[i] > T(0)) ga[i] += g[i];
            break;
        }
        case Op::Sigmoid: {
            T* ga = na.grad.data();
            const T* out = nd.val.data();
            for (size_t i = 0; i < n; ++i) ga[i] += g[i] * out[i] * (T(1) - out[i]);
            break;
        }
        case Op::Softplus: {
            T* ga = na.grad.data();
            const T* va = na.val.data();
            for (size_t i = 0; i < n; ++i) ga[i] += g[i] * stable_sigmoid(va[i]);
            break;
        }
        case Op::ClampMin: {
            T* ga = na.grad.data();
            const T* va = na.val.data();
            for (size_t i = 0; i < n; ++i)
                if (va[i] >= nd.scalar) ga[i] += g[i];
            break;
        }
        case Op::AddScalar: {
            T* ga = na.grad.data();
            for (size_t i = 0; i < n; ++i) ga[i] += g[i];
            break;
        }
        case Op::MulScalar: {
            T* ga = na.grad.data();
            for (size_t i = 0; i < n; ++i) ga[i] += g[i] * nd.scalar;
            break;
        }

        case Op::Mean: {
            T* ga = na.grad.data();
            const T gv = g[0] / static_cast<T>(na.val.size());
            for (size_t i = 0; i < na.val.size(); ++i) ga[i] += gv;
            break;
        }
        case Op::Sum: {
            T* ga = na.grad.data();
            for (size_t i = 0; i < na.val.size(); ++i) ga[i] += g[0];
            break;
        }

        case Op::GlobalAvgPool: {
            T* ga = na.grad.data();
            const size_t hw = static_cast<size_t>(na.shape.h) * na.shape.w;
            const size_t nc = static_cast<size_t>(na.shape.n) * na.shape.c;
            const T inv = T(1) / static_cast<T>(hw);
            for (size_t j = 0; j < nc; ++j) {
                const T gv = g[j] * inv;
                T* dst = ga + j * hw;
                for (size_t i = 0; i < hw; ++i) dst[i] += gv;
            }
            break;
        }

        case Op::AvgPool2d: {
            T* ga = na.grad.data();
            const int k = nd.i0, stride = nd.i1;
            const int H = na.shape.h, W = na.shape.w;
            const T inv = T(1) / static_cast<T>(k * k);
            size_t o = 0;
            for (int img = 0; img < nd.shape.n * nd.shape.c; ++img) {
                T* dst = ga + static_cast<size_t>(img) * H * W;
                for (int oy = 0; oy < nd.shape.h; ++oy)
                    for (int ox = 0; ox < nd.shape.w; ++ox, ++o) {
                        const T gv = g[o] * inv;
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx)
                                dst[static_cast<size_t>(oy * stride + ky) * W + ox * stride + kx] += gv;
                    }
            }
            break;
        }

        case Op::UpsampleNearest: {
            T* ga = na.grad.data();
            const int f = nd.i0;
            const int H = na.shape.h, W = na.shape.w;
            const int OW = nd.shape.w;
            for (int img = 0; img < nd.shape.n * nd.shape.c; ++img) {
                const T* gsrc = g + static_cast<size_t>(img) * nd.shape.h * OW;
                T* dst = ga + static_cast<size_t>(img) * H * W;
                for (int y = 0; y < H; ++y)
                    for (int x = 0; x < W; ++x) {
                        T acc = T(0);
                        for (int fy = 0; fy < f; ++fy)
                            for (int fx = 0; fx < f; ++fx)
                                acc += gsrc[static_cast<size_t>(y * f + fy) * OW + x * f + fx];
                        dst[static_cast<size_t>(y) * W + x] += acc;
                    }
            }
            break;
        }

        case Op::Concat: {
            Node& nb = nodes_[nd.b];
            const bool need_b = nb.needs_grad;
            if (need_b) ensure_grad(nd.b);
            const size_t hw = static_cast<size_t>(nd.shape.h) * nd.shape.w;
            const size_t a_blk = static_cast<size_t>(na.shape.c) * hw;
            const size_t b_blk = static_cast<size_t>(nb.shape.c) * hw;
            for (int img = 0; img < nd.shape.n; ++img) {
                const T* gsrc = g + img * (a_blk + b_blk);
                if (need_a) {
                    T* ga = na.grad.data() + img * a_blk;
                    for (size_t i = 0; i < a_blk; ++i) ga[i] += gsrc[i];
                }
                if (need_b) {
                    T* gb = nb.grad.data() + img * b_blk;
                    for (size_t i = 0; i < b_blk; ++i) gb[i] += gsrc[a_blk + i];
                }
            }
            break;
        }

        case Op::SliceChannels: {
            T* ga = na.grad.data();
            const size_t hw = static_cast<size_t>(nd.shape.h) * nd.shape.w;
            const size_t in_blk = static_cast<size_t>(na.shape.c) * hw;
            const size_t out_blk = static_cast<size_t>(nd.i1) * hw;
            for (int img = 0; img < nd.shape.n; ++img) {
                T* dst = ga + img * in_blk + nd.i0 * hw;
                const T* src = g + img * out_blk;
                for (size_t i = 0; i < out_blk; ++i) dst[i] += src[i];
            }
            break;
        }

        case Op::Conv2d: {
            Node& nx = na;
            Node& nw = nodes_[nd.b];
            const bool need_x = nx.needs_grad;
            const bool need_w = nw.needs_grad;
            if (need_w) ensure_grad(nd.b);
            const int stride = nd.i0, pad = nd.i1;
            const int Cin = nx.shape.c, H = nx.shape.h, W = nx.shape.w;
            const int Cout = nw.shape.n, k = nw.shape.h;
            const int oh = nd.shape.h, ow = nd.shape.w;
            const int K = Cin * k * k;
            const size_t ohw = static_cast<size_t>(oh) * ow;
            const size_t in_blk = static_cast<size_t>(Cin) * H * W;
            const size_t col_blk = static_cast<size_t>(K) * ohw;

            std::vector<T> wT;
            if (need_x) {
                wT.resize(static_cast<size_t>(K) * Cout);
                transpose(nw.val.data(), Cout, K, wT.data());
            }

            // batch loop stays serial so the dW accumulation order is fixed
            auto& cols = conv_scratch<T>(col_blk * (need_x ? 2 : 1));
            T* dcols = cols.data() + (need_x ? col_blk : 0);
            for (int img = 0; img < nx.shape.n; ++img) {
                const T* gout = g + img * static_cast<size_t>(Cout) * ohw;
                if (need_w) {
                    im2col(nx.val.data() + img * in_blk, Cin, H, W, k, stride, pad, oh, ow, cols.data());
                    // dW[co][r] += dot(dY row co, im2col row r)
                    gemm_abT(gout, cols.data(), nw.grad.data(), Cout, K, static_cast<int>(ohw), true);
                }
                if (need_x) {
                    gemm(wT.data(), gout, dcols, K, static_cast<int>(ohw), Cout, false);
                    col2im_add(dcols, Cin, H, W, k, stride, pad, oh, ow, nx.grad.data() + img * in_blk);
                }
            }
            break;
        }

        case Op::BroadcastScalar: {
            T* ga = na.grad.data();
            double acc = 0.0;
            for (size_t i = 0; i < n; ++i) acc += static_cast<double>(g[i]);
            ga[0] += static_cast<T>(acc);
            break;
        }
    }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace hazeforge::ad
