#include "hazeforge/losses.hpp"

namespace hazeforge::committee {

AblationMode ablation_mode_from_string(const std::string& s) {
    if (s == "m1") return AblationMode::M1;
    if (s == "m2") return AblationMode::M2;
    if (s == "m3") return AblationMode::M3;
    if (s == "m4") return AblationMode::M4;
    throw ConfigError("unknown ablation mode: " + s + " (expected m1..m4)");
}

std::string to_string(AblationMode m) {
    switch (m) {
        case AblationMode::M1: return "m1";
        case AblationMode::M2: return "m2";
        case AblationMode::M3: return "m3";
        default: return "m4";
    }
}

ActiveSet active_losses(AblationMode mode, int phase) {
    if (phase == 1) return {.sc = true};
    switch (mode) {
        case AblationMode::M1: return {.sc = true};
        case AblationMode::M2: return {.sc = true, .cc = true};
        case AblationMode::M3: return {.sc = true, .cc = true, .is = true};
        default: return {.sc = true, .cc = true, .dc = true, .is = true};
    }
}

namespace {

template <typename T>
ad::TensorId l1(ad::Graph<T>& g, ad::TensorId a, ad::TensorId b) {
    return g.mean(g.abs(g.sub(a, b)));
}

// t*clean + (1-t)*A with t = exp(-beta*z); beta [N,1,1,1], z [N,1,H,W],
// A [N,3,1,1] broadcast against clean [N,3,H,W].
template <typename T>
ad::TensorId asm_reconstruction(ad::Graph<T>& g, ad::TensorId clean, ad::TensorId beta, ad::TensorId z,
                                ad::TensorId atmosphere) {
    ad::TensorId t = g.exp(g.neg(g.mul(beta, z)));
    ad::TensorId omt = g.add_scalar(g.neg(t), T(1));
    return g.add(g.mul(t, clean), g.mul(omt, atmosphere));
}

}  // namespace

template <typename T>
ad::TensorId loss_sc(ad::Graph<T>& g, const model::StageOutputs& stage1, ad::TensorId hazy) {
    ad::TensorId recon = asm_reconstruction(g, stage1.clean, stage1.beta, stage1.depth, stage1.atmosphere);
    return l1(g, recon, hazy);
}

template <typename T>
ad::TensorId loss_sc_literal(ad::Graph<T>& g, const model::StageOutputs& stage1, const model::StageOutputs& stage2,
                             ad::TensorId hazy) {
    ad::TensorId recon = asm_reconstruction(g, stage1.clean, stage2.beta, stage2.depth, stage2.atmosphere);
    return l1(g, recon, hazy);
}

template <typename T>
ad::TensorId loss_cc(ad::Graph<T>& g, const model::StageOutputs& stage1, const model::StageOutputs& stage2,
                     ad::TensorId hazy) {
    ad::TensorId z = stage1.depth;
    ad::TensorId beta_sum = g.add(stage1.beta, stage2.beta);
    ad::TensorId t_both = g.exp(g.neg(g.mul(beta_sum, z)));
    ad::TensorId t_h = g.exp(g.neg(g.mul(stage1.beta, z)));
    ad::TensorId t_c = g.exp(g.neg(g.mul(stage2.beta, z)));
    ad::TensorId omt_c = g.add_scalar(g.neg(t_c), T(1));
    ad::TensorId omt_h = g.add_scalar(g.neg(t_h), T(1));
    ad::TensorId recon = g.add(g.add(g.mul(t_both, stage2.clean), g.mul(g.mul(t_h, omt_c), stage2.atmosphere)),
                               g.mul(omt_h, stage1.atmosphere));
    return l1(g, recon, hazy);
}

template <typename T>
ad::TensorId loss_dc(ad::Graph<T>& g, const model::StageOutputs& stage1, const model::StageOutputs& stage2,
                     ad::TensorId teacher_depth) {
    return g.add(l1(g, stage1.depth, teacher_depth), l1(g, stage2.depth, teacher_depth));
}

template <typename T>
ad::TensorId gaussian_kl_features(ad::Graph<T>& g, ad::TensorId features_p, ad::TensorId features_q) {
    const ad::Shape sp = g.shape(features_p);
    const ad::Shape sq = g.shape(features_q);
    if (!(sp == sq)) throw ShapeError("gaussian_kl_features: shape mismatch " + sp.str() + " vs " + sq.str());

    auto stats = [&](ad::TensorId f) {
        ad::TensorId mu = g.global_avg_pool(f);
        ad::TensorId centered = g.sub(f, mu);
        ad::TensorId var = g.clamp_min(g.global_avg_pool(g.mul(centered, centered)), T(1e-6));
        return std::pair{mu, var};
    };
    auto [mu_p, var_p] = stats(features_p);
    auto [mu_q, var_q] = stats(features_q);

    // KL(N(mu_p,var_p) || N(mu_q,var_q))
    //   = 0.5*ln(var_q/var_p) + (var_p + (mu_p-mu_q)^2) / (2*var_q) - 0.5
    ad::TensorId log_term = g.mul_scalar(g.log(g.div(var_q, var_p)), T(0.5));
    ad::TensorId dmu = g.sub(mu_p, mu_q);
    ad::TensorId quad = g.div(g.add(var_p, g.mul(dmu, dmu)), g.mul_scalar(var_q, T(2)));
    ad::TensorId kl = g.add_scalar(g.add(log_term, quad), T(-0.5));

    // sum over channels, mean over batch
    return g.mul_scalar(g.sum(kl), T(1) / static_cast<T>(sp.n));
}

template <typename T>
ad::TensorId loss_is(ad::Graph<T>& g, const model::FeatureExtractor<T>& fx, ad::TensorId stage2_clean,
                     ad::TensorId stage1_clean, bool reverse) {
    ad::TensorId f_ideal = fx.forward(stage2_clean);
    ad::TensorId f_observed = fx.forward(stage1_clean);
    return reverse ? gaussian_kl_features(g, f_observed, f_ideal) : gaussian_kl_features(g, f_ideal, f_observed);
}

template <typename T>
ad::TensorId total_loss(ad::Graph<T>& g, const LossTerms& terms, const LossWeights& w, const ActiveSet& act) {
    if (w.sc < 0 || w.cc < 0 || w.dc < 0 || w.is < 0) throw ConfigError("loss weights must be nonnegative");
    ad::TensorId total = -1;
    auto accumulate = [&](bool active, ad::TensorId term, float weight) {
        if (!active) return;
        if (term < 0) throw ConfigError("total_loss: active term was not built");
        ad::TensorId scaled = g.mul_scalar(term, static_cast<T>(weight));
        total = total < 0 ? scaled : g.add(total, scaled);
    };
    accumulate(act.sc, terms.sc, w.sc);
    accumulate(act.cc, terms.cc, w.cc);
    accumulate(act.dc, terms.dc, w.dc);
    accumulate(act.is, terms.is, w.is);
    if (total < 0) throw ConfigError("total_loss: no active loss terms");
    return total;
}

#define HF_INSTANTIATE(T)                                                                                        \
    template ad::TensorId loss_sc<T>(ad::Graph<T>&, const model::StageOutputs&, ad::TensorId);                   \
    template ad::TensorId loss_sc_literal<T>(ad::Graph<T>&, const model::StageOutputs&,                          \
                                             const model::StageOutputs&, ad::TensorId);                          \
    template ad::TensorId loss_cc<T>(ad::Graph<T>&, const model::StageOutputs&, const model::StageOutputs&,      \
                                     ad::TensorId);                                                              \
    template ad::TensorId loss_dc<T>(ad::Graph<T>&, const model::StageOutputs&, const model::StageOutputs&,      \
                                     ad::TensorId);                                                              \
    template ad::TensorId gaussian_kl_features<T>(ad::Graph<T>&, ad::TensorId, ad::TensorId);                    \
    template ad::TensorId loss_is<T>(ad::Graph<T>&, const model::FeatureExtractor<T>&, ad::TensorId, ad::TensorId, \
                                     bool);                                                                      \
    template ad::TensorId total_loss<T>(ad::Graph<T>&, const LossTerms&, const LossWeights&, const ActiveSet&);

HF_INSTANTIATE(float)
HF_INSTANTIATE(double)
#undef HF_INSTANTIATE

}  // namespace hazeforge::committee
