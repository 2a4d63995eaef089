#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hazeforge/ad/gemm.hpp"
#include "hazeforge/errors.hpp"

namespace hazeforge::ad {

// Dense 4-D shape, batch x channel x height x width. Lower-rank tensors use
// leading 1s; a scalar is {1,1,1,1}.
struct Shape {
    int n = 1, c = 1, h = 1, w = 1;

    size_t count() const { return static_cast<size_t>(n) * c * h * w; }
    bool operator==(const Shape&) const = default;
    int dim(int i) const { return i == 0 ? n : i == 1 ? c : i == 2 ? h : w; }
    std::string str() const {
        return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
               std::to_string(w) + "]";
    }
};

inline Shape scalar_shape() { return Shape{1, 1, 1, 1}; }

using TensorId = int32_t;

enum class Op : uint8_t {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Log,
    Abs,
    Relu,
    Sigmoid,
    Softplus,
    ClampMin,
    AddScalar,
    MulScalar,
    Mean,
    Sum,
    GlobalAvgPool,
    AvgPool2d,
    UpsampleNearest,
    Concat,
    SliceChannels,
    Conv2d,
    BroadcastScalar,
};

const char* op_name(Op op);

// Reverse-mode tape over eagerly evaluated nodes. Construction order is a
// topological order by definition (an op's inputs always exist first), so
// backward() walks ids in reverse. Nodes created before freeze_persistent()
// (parameters, frozen constants) survive reset_tape() and keep their gradient
// buffers across backward() calls; transient gradients are re-zeroed per call.
template <typename T>
class Graph {
public:
    struct Node {
        Op op = Op::Leaf;
        Shape shape;
        TensorId a = -1, b = -1;
        std::vector<T> val;
        std::vector<T> grad;  // allocated lazily at first backward touch
        bool needs_grad = false;
        T scalar = T(0);  // AddScalar / MulScalar / ClampMin threshold
        int i0 = 0, i1 = 0;  // conv: stride/pad; pool: k/stride; upsample: factor; slice: start/count
        std::string name;    // parameters only
    };

    struct Options {
        bool check_finite = true;
    };

    explicit Graph(Options opt = {}) : opt_(opt) {}

    // --- leaves ------------------------------------------------------------

    TensorId parameter(const std::string& name, Shape s, std::vector<T> init) {
        if (watermark_ != static_cast<TensorId>(nodes_.size()))
            throw ConfigError("graph: parameters must be created before transient nodes");
        if (init.size() != s.count()) throw ShapeError("parameter " + name + ": init size mismatch");
        TensorId id = add_leaf(s, std::move(init), true);
        nodes_[id].name = name;
        params_.emplace(name, id);
        watermark_ = static_cast<TensorId>(nodes_.size());
        return id;
    }

    // Persistent non-trainable leaf (e.g. frozen extractor weights).
    TensorId frozen(Shape s, std::vector<T> v) {
        if (watermark_ != static_cast<TensorId>(nodes_.size()))
            throw ConfigError("graph: frozen leaves must be created before transient nodes");
        TensorId id = add_leaf(s, std::move(v), false);
        watermark_ = static_cast<TensorId>(nodes_.size());
        return id;
    }

    TensorId leaf(Shape s, std::vector<T> v, bool needs_grad = false) {
        if (v.size() != s.count()) throw ShapeError("leaf: data size mismatch");
        return add_leaf(s, std::move(v), needs_grad);
    }

    TensorId constant(Shape s, std::vector<T> v) { return leaf(s, std::move(v), false); }

    void set_leaf(TensorId id, std::span<const T> v) {
        Node& nd = node(id);
        if (nd.op != Op::Leaf) throw ConfigError("set_leaf: node is not a leaf");
        if (v.size() != nd.val.size()) throw ShapeError("set_leaf: size mismatch");
        std::copy(v.begin(), v.end(), nd.val.begin());
    }

    // --- elementwise ops (standard batch/channel broadcasting) --------------

    TensorId add(TensorId a, TensorId b) { return binary(Op::Add, a, b); }
    TensorId sub(TensorId a, TensorId b) { return binary(Op::Sub, a, b); }
    TensorId mul(TensorId a, TensorId b) { return binary(Op::Mul, a, b); }
    TensorId div(TensorId a, TensorId b) { return binary(Op::Div, a, b); }

    TensorId neg(TensorId a) { return unary(Op::Neg, a); }
    TensorId exp(TensorId a) { return unary(Op::Exp, a); }
    TensorId log(TensorId a) { return unary(Op::Log, a); }
    TensorId abs(TensorId a) { return unary(Op::Abs, a); }
    TensorId relu(TensorId a) { return unary(Op::Relu, a); }
    TensorId sigmoid(TensorId a) { return unary(Op::Sigmoid, a); }
    TensorId softplus(TensorId a) { return unary(Op::Softplus, a); }

    TensorId clamp_min(TensorId a, T lo) {
        TensorId id = unary(Op::ClampMin, a, /*defer=*/true);
        nodes_[id].scalar = lo;
        forward_node(id);
        return id;
    }
    TensorId add_scalar(TensorId a, T s) {
        TensorId id = unary(Op::AddScalar, a, true);
        nodes_[id].scalar = s;
        forward_node(id);
        return id;
    }
    TensorId mul_scalar(TensorId a, T s) {
        TensorId id = unary(Op::MulScalar, a, true);
        nodes_[id].scalar = s;
        forward_node(id);
        return id;
    }

    // --- reductions and structure -------------------------------------------

    TensorId mean(TensorId a) { return reduce(Op::Mean, a); }
    TensorId sum(TensorId a) { return reduce(Op::Sum, a); }

    TensorId global_avg_pool(TensorId a) {
        const Shape& s = shape(a);
        TensorId id = new_node(Op::GlobalAvgPool, Shape{s.n, s.c, 1, 1}, a);
        forward_node(id);
        return id;
    }

    TensorId avg_pool2d(TensorId a, int k, int stride) {
        const Shape& s = shape(a);
        if (k < 1 || stride < 1) throw ConfigError("avg_pool2d: k and stride must be >= 1");
        if (s.h < k || s.w < k) throw ShapeError("avg_pool2d: window larger than input " + s.str());
        const int oh = (s.h - k) / stride + 1, ow = (s.w - k) / stride + 1;
        TensorId id = new_node(Op::AvgPool2d, Shape{s.n, s.c, oh, ow}, a);
        nodes_[id].i0 = k;
        nodes_[id].i1 = stride;
        forward_node(id);
        return id;
    }

    TensorId upsample_nearest(TensorId a, int factor) {
        if (factor < 1) throw ConfigError("upsample_nearest: factor must be >= 1");
        const Shape& s = shape(a);
        TensorId id = new_node(Op::UpsampleNearest, Shape{s.n, s.c, s.h * factor, s.w * factor}, a);
        nodes_[id].i0 = factor;
        forward_node(id);
        return id;
    }

    TensorId concat(TensorId a, TensorId b) {
        const Shape& sa = shape(a);
        const Shape& sb = shape(b);
        if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w)
            throw ShapeError("concat: incompatible shapes " + sa.str() + " vs " + sb.str());
        TensorId id = new_node(Op::Concat, Shape{sa.n, sa.c + sb.c, sa.h, sa.w}, a, b);
        forward_node(id);
        return id;
    }

    TensorId slice_channels(TensorId a, int start, int count) {
        const Shape& s = shape(a);
        if (start < 0 || count < 1 || start + count > s.c)
            throw ShapeError("slice_channels: range [" + std::to_string(start) + ", +" + std::to_string(count) +
                             ") outside " + s.str());
        TensorId id = new_node(Op::SliceChannels, Shape{s.n, count, s.h, s.w}, a);
        nodes_[id].i0 = start;
        nodes_[id].i1 = count;
        forward_node(id);
        return id;
    }

    TensorId broadcast_scalar(TensorId a, Shape target) {
        if (shape(a).count() != 1) throw ShapeError("broadcast_scalar: input must be a scalar");
        TensorId id = new_node(Op::BroadcastScalar, target, a);
        forward_node(id);
        return id;
    }

    // Cross-correlation: x[N,Cin,H,W] (*) w[Cout,Cin,k,k] -> [N,Cout,oh,ow].
    TensorId conv2d(TensorId x, TensorId w, int stride = 1, int pad = 0) {
        const Shape& sx = shape(x);
        const Shape& sw = shape(w);
        if (sw.h != sw.w) throw ShapeError("conv2d: only square kernels supported, got " + sw.str());
        if (sx.c != sw.c)
            throw ShapeError("conv2d: channel mismatch, input " + sx.str() + " vs weight " + sw.str());
        if (stride < 1 || pad < 0) throw ConfigError("conv2d: invalid stride/pad");
        const int k = sw.h;
        const int oh = (sx.h + 2 * pad - k) / stride + 1;
        const int ow = (sx.w + 2 * pad - k) / stride + 1;
        if (oh < 1 || ow < 1) throw ShapeError("conv2d: kernel does not fit input " + sx.str());
        TensorId id = new_node(Op::Conv2d, Shape{sx.n, sw.n, oh, ow}, x, w);
        nodes_[id].i0 = stride;
        nodes_[id].i1 = pad;
        forward_node(id);
        return id;
    }

    // --- execution -----------------------------------------------------------

    // Re-runs every op node in order; leaves keep their current values. Used
    // after set_leaf / parameter updates and by finite-difference checks.
    void recompute() {
        for (TensorId i = 0; i < static_cast<TensorId>(nodes_.size()); ++i)
            if (nodes_[i].op != Op::Leaf) forward_node(i);
    }

    void backward(TensorId loss) {
        Node& ln = node(loss);
        if (ln.shape.count() != 1) throw ConfigError("backward: loss must be a scalar tensor");
        // reachability of the loss from each node
        std::vector<uint8_t> reach(nodes_.size(), 0);
        reach[loss] = 1;
        for (TensorId i = loss; i >= 0; --i) {
            if (!reach[i]) continue;
            const Node& nd = nodes_[i];
            if (nd.a >= 0) reach[nd.a] = 1;
            if (nd.b >= 0) reach[nd.b] = 1;
        }
        // transient grads restart at zero every call; persistent ones accumulate
        for (TensorId i = 0; i <= loss; ++i) {
            if (!reach[i] || !nodes_[i].needs_grad) continue;
            ensure_grad(i);
            if (i >= watermark_) std::fill(nodes_[i].grad.begin(), nodes_[i].grad.end(), T(0));
        }
        ensure_grad(loss);
        nodes_[loss].grad[0] += T(1);
        for (TensorId i = loss; i >= 0; --i) {
            if (!reach[i] || nodes_[i].op == Op::Leaf || !nodes_[i].needs_grad) continue;
            backward_node(i);
        }
    }

    void zero_grads() {
        for (auto& nd : nodes_)
            if (!nd.grad.empty()) std::fill(nd.grad.begin(), nd.grad.end(), T(0));
    }

    void reset_tape() {
        nodes_.resize(watermark_);
    }

    // --- accessors -----------------------------------------------------------

    // by value: node storage reallocates as ops are appended
    Shape shape(TensorId id) const { return node(id).shape; }
    const std::vector<T>& val(TensorId id) const { return node(id).val; }
    std::vector<T>& val_mut(TensorId id) { return node(id).val; }
    const std::vector<T>& grad(TensorId id) const { return node(id).grad; }
    bool has_grad(TensorId id) const { return !node(id).grad.empty(); }
    T scalar_value(TensorId id) const {
        const Node& nd = node(id);
        if (nd.shape.count() != 1) throw ShapeError("scalar_value: tensor is not scalar");
        return nd.val[0];
    }
    const std::map<std::string, TensorId>& parameters() const { return params_; }
    size_t node_count() const { return nodes_.size(); }
    TensorId watermark() const { return watermark_; }
    const std::string& name(TensorId id) const { return node(id).name; }

    // Kink tracking: during forward, fold the active side of every Relu/Abs/
    // ClampMin element into a signature. Finite-difference checks compare the
    // signature between the +eps and -eps evaluations and skip entries whose
    // perturbation crosses a nondifferentiable point.
    void set_track_kinks(bool on) {
        track_kinks_ = on;
        kink_signature_ = 1469598103934665603ull;
    }
    uint64_t kink_signature() const { return kink_signature_; }

private:
    Node& node(TensorId id) {
        if (id < 0 || id >= static_cast<TensorId>(nodes_.size())) throw ConfigError("graph: bad tensor id");
        return nodes_[id];
    }
    const Node& node(TensorId id) const {
        if (id < 0 || id >= static_cast<TensorId>(nodes_.size())) throw ConfigError("graph: bad tensor id");
        return nodes_[id];
    }

    TensorId add_leaf(Shape s, std::vector<T> v, bool needs_grad) {
        if (v.size() != s.count()) throw ShapeError("leaf: data size mismatch");
        Node nd;
        nd.shape = s;
        nd.val = std::move(v);
        nd.needs_grad = needs_grad;
        nodes_.push_back(std::move(nd));
        if (opt_.check_finite) check_finite(static_cast<TensorId>(nodes_.size()) - 1);
        return static_cast<TensorId>(nodes_.size()) - 1;
    }

    TensorId new_node(Op op, Shape s, TensorId a, TensorId b = -1) {
        Node nd;
        nd.op = op;
        nd.shape = s;
        nd.a = a;
        nd.b = b;
        nd.needs_grad = node(a).needs_grad || (b >= 0 && node(b).needs_grad);
        nd.val.resize(s.count());
        nodes_.push_back(std::move(nd));
        return static_cast<TensorId>(nodes_.size()) - 1;
    }

    static Shape broadcast_shape(const Shape& a, const Shape& b, Op op) {
        Shape out;
        int* od[4] = {&out.n, &out.c, &out.h, &out.w};
        for (int i = 0; i < 4; ++i) {
            const int da = a.dim(i), db = b.dim(i);
            if (da == db)
                *od[i] = da;
            else if (da == 1)
                *od[i] = db;
            else if (db == 1)
                *od[i] = da;
            else
                throw ShapeError(std::string(op_name(op)) + ": incompatible shapes " + a.str() + " vs " + b.str());
        }
        return out;
    }

    TensorId binary(Op op, TensorId a, TensorId b) {
        Shape s = broadcast_shape(shape(a), shape(b), op);
        TensorId id = new_node(op, s, a, b);
        forward_node(id);
        return id;
    }

    TensorId unary(Op op, TensorId a, bool defer = false) {
        TensorId id = new_node(op, shape(a), a);
        if (!defer) forward_node(id);
        return id;
    }

    TensorId reduce(Op op, TensorId a) {
        TensorId id = new_node(op, scalar_shape(), a);
        forward_node(id);
        return id;
    }

    void ensure_grad(TensorId id) {
        Node& nd = nodes_[id];
        if (nd.grad.empty()) nd.grad.assign(nd.val.size(), T(0));
    }

    void check_finite(TensorId id) {
        const auto& vals = nodes_[id].val;
        const T limit = std::numeric_limits<T>::max();
        int bad = 0;
        const T* p = vals.data();
        const size_t n = vals.size();
#pragma omp simd reduction(+ : bad)
        for (size_t i = 0; i < n; ++i) bad += (std::abs(p[i]) <= limit) ? 0 : 1;
        if (bad != 0)
            throw NumericError(std::string("non-finite value in ") + op_name(nodes_[id].op) + " node #" +
                               std::to_string(id));
    }

    void fold_kink(bool side) {
        kink_signature_ = (kink_signature_ ^ (side ? 0x9e3779b97f4a7c15ull : 0x2545f4914f6cdd1dull)) *
                          1099511628211ull;
    }

    void forward_node(TensorId id);
    void backward_node(TensorId id);

    Options opt_;
    std::vector<Node> nodes_;
    std::map<std::string, TensorId> params_;
    TensorId watermark_ = 0;
    bool track_kinks_ = false;
    uint64_t kink_signature_ = 1469598103934665603ull;
};

using GraphF = Graph<float>;
using GraphD = Graph<double>;

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace hazeforge::ad
