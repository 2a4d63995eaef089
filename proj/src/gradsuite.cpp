#include "hazeforge/gradsuite.hpp"

#include <functional>

#include "hazeforge/losses.hpp"
#include "hazeforge/model.hpp"
#include "hazeforge/rng.hpp"

namespace hazeforge::gradsuite {

namespace {

using ad::GraphD;
using ad::Shape;
using ad::TensorId;

std::vector<double> random_values(Rng& rng, size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

Shape random_shape(Rng& rng) {
    return Shape{1 + static_cast<int>(rng.below(2)), 1 + static_cast<int>(rng.below(3)),
                 1 + static_cast<int>(rng.below(5)), 1 + static_cast<int>(rng.below(5))};
}

void check_unary(SuiteReport& rep, const std::function<TensorId(GraphD&, TensorId)>& op, double lo, double hi,
                 uint64_t seed) {
    Rng rng(seed);
    GraphD g;
    Shape s = random_shape(rng);
    TensorId p = g.parameter("p", s, random_values(rng, s.count(), lo, hi));
    TensorId y = op(g, p);
    TensorId w = g.constant(g.shape(y), random_values(rng, g.shape(y).count(), 0.1, 1.0));
    rep.merge(ad::grad_check(g, g.mean(g.mul(y, w)), 1e-5, 5, seed));
}

void check_binary(SuiteReport& rep, const std::function<TensorId(GraphD&, TensorId, TensorId)>& op, double lo,
                  double hi, uint64_t seed) {
    Rng rng(seed);
    GraphD g;
    Shape sa = random_shape(rng);
    Shape sb = sa;
    if (seed % 2 == 0) sb.h = sb.w = 1;
    TensorId a = g.parameter("a", sa, random_values(rng, sa.count(), lo, hi));
    TensorId b = g.parameter("b", sb, random_values(rng, sb.count(), lo, hi));
    TensorId y = op(g, a, b);
    TensorId w = g.constant(g.shape(y), random_values(rng, g.shape(y).count(), 0.1, 1.0));
    rep.merge(ad::grad_check(g, g.mean(g.mul(y, w)), 1e-5, 5, seed));
}

}  // namespace

SuiteReport op_checks(int seeds_per_op) {
    SuiteReport rep;
    for (uint64_t seed = 1; seed <= static_cast<uint64_t>(seeds_per_op); ++seed) {
        check_binary(rep, [](GraphD& g, TensorId a, TensorId b) { return g.add(a, b); }, -2, 2, seed);
        check_binary(rep, [](GraphD& g, TensorId a, TensorId b) { return g.sub(a, b); }, -2, 2, seed);
        check_binary(rep, [](GraphD& g, TensorId a, TensorId b) { return g.mul(a, b); }, -2, 2, seed);
        check_binary(rep, [](GraphD& g, TensorId a, TensorId b) { return g.div(a, b); }, 0.5, 2, seed);
        check_unary(rep, [](GraphD& g, TensorId x) { return g.neg(x); }, -2, 2, seed);
        check_unary(rep, [](GraphD& g, TensorId x) { return g.exp(x); }, -1, 1, seed);
        check_unary(rep, [](GraphD& g, TensorId x) { return g.log(x); }, 0.2, 3, seed);
        check_unary(rep, [](GraphD& g, TensorId x) { return g.abs(x); }, 0.1, 2, seed);
        check_unary(rep, [](GraphD& g, TensorId x) { return g.relu(x); }, 0.05, 2, seed);
        check_unary(rep, [](GraphD& g, TensorId x) { return g.sigmoid(x); }, -3, 3, seed);
        check_unary(rep, [](GraphD& g, TensorId x) { return g.softplus(x); }, -3, 3, seed);
        check_unary(rep, [](GraphD& g, TensorId x) { return g.clamp_min(x, 0.5); }, 0.6, 2, seed);
        check_unary(rep, [](GraphD& g, TensorId x) { return g.add_scalar(x, 0.7); }, -2, 2, seed);
        check_unary(rep, [](GraphD& g, TensorId x) { return g.mul_scalar(x, -1.3); }, -2, 2, seed);
        check_unary(rep, [](GraphD& g, TensorId x) { return g.mean(x); }, -2, 2, seed);
        check_unary(rep, [](GraphD& g, TensorId x) { return g.sum(x); }, -2, 2, seed);
        check_unary(rep, [](GraphD& g, TensorId x) { return g.global_avg_pool(x); }, -2, 2, seed);
        check_unary(rep, [](GraphD& g, TensorId x) { return g.upsample_nearest(x, 2); }, -2, 2, seed);
        check_unary(rep, [](GraphD& g, TensorId x) { return g.concat(x, g.mul_scalar(x, 2.0)); }, -2, 2, seed);
        check_unary(rep,
                    [](GraphD& g, TensorId x) { return g.broadcast_scalar(g.mean(x), Shape{1, 2, 3, 4}); }, -2,
                    2, seed);
        {
            Rng rng(seed * 31);
            GraphD g;
            const int k = 1 + static_cast<int>(rng.below(2));
            const int h = k + 1 + static_cast<int>(rng.below(4));
            Shape s{1, 1 + static_cast<int>(rng.below(2)), h, h};
            TensorId p = g.parameter("p", s, random_values(rng, s.count(), -2, 2));
            TensorId y = g.avg_pool2d(p, k, k);
            TensorId w = g.constant(g.shape(y), random_values(rng, g.shape(y).count(), 0.1, 1.0));
            rep.merge(ad::grad_check(g, g.mean(g.mul(y, w)), 1e-5, 5, seed));
        }
        {
            Rng rng(seed * 53);
            GraphD g;
            const int kk = 1 + static_cast<int>(rng.below(3));
            const int stride = 1 + static_cast<int>(rng.below(2));
            const int pad = static_cast<int>(rng.below(2));
            const int cin = 1 + static_cast<int>(rng.below(3));
            const int cout = 1 + static_cast<int>(rng.below(3));
            const int h = kk + 2 + static_cast<int>(rng.below(4));
            Shape sx{1 + static_cast<int>(rng.below(2)), cin, h, h};
            Shape sw{cout, cin, kk, kk};
            TensorId x = g.parameter("x", sx, random_values(rng, sx.count(), -1, 1));
            TensorId w = g.parameter("w", sw, random_values(rng, sw.count(), -1, 1));
            TensorId y = g.conv2d(x, w, stride, pad);
            TensorId wt = g.constant(g.shape(y), random_values(rng, g.shape(y).count(), 0.1, 1.0));
            rep.merge(ad::grad_check(g, g.mean(g.mul(y, wt)), 1e-5, 5, seed));
        }
    }
    return rep;
}

SuiteReport committee_graph_check(uint64_t seed, int directions) {
    model::NetworkConfig net;
    net.base_channels = 8;
    net.input_height = net.input_width = 8;
    net.seed = seed;

    GraphD g;
    model::DehazeModel<double> m(g, net);
    model::FeatureExtractor<double> fx(g, net.frozen_seed);

    Rng rng(seed * 997);
    const Shape img_shape{2, 3, 8, 8};
    const Shape depth_shape{2, 1, 8, 8};
    TensorId hazy = g.leaf(img_shape, random_values(rng, img_shape.count(), 0.0, 1.0));
    TensorId teacher = g.leaf(depth_shape, random_values(rng, depth_shape.count(), net.z_min, net.z_max));

    auto [s1, s2] = m.two_stage(hazy);
    committee::LossTerms terms;
    terms.sc = committee::loss_sc(g, s1, hazy);
    terms.cc = committee::loss_cc(g, s1, s2, hazy);
    terms.dc = committee::loss_dc(g, s1, s2, teacher);
    terms.is = committee::loss_is(g, fx, s2.clean, s1.clean);
    TensorId total = committee::total_loss(g, terms, committee::LossWeights{},
                                           committee::ActiveSet{true, true, true, true});

    SuiteReport rep;
    rep.merge(ad::grad_check_directional(g, total, 1e-5, directions, seed));
    return rep;
}

}  // namespace hazeforge::gradsuite
