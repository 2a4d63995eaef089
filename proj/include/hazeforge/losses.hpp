#pragma once

#include "hazeforge/ad/graph.hpp"
#include "hazeforge/model.hpp"

namespace hazeforge::committee {

struct LossWeights {
    float sc = 0.5f;
    float cc = 0.3f;
    float dc = 0.05f;
    float is = 0.1f;
};

enum class AblationMode { M1, M2, M3, M4 };

AblationMode ablation_mode_from_string(const std::string& s);
std::string to_string(AblationMode m);

struct ActiveSet {
    bool sc = false, cc = false, dc = false, is = false;
};

// Phase 1 trains with the synthesis-consistency loss alone; phase 2 enables
// the committee terms selected by the ablation mode:
//   m1 {sc}, m2 {sc,cc}, m3 {sc,cc,is}, m4 {sc,cc,dc,is}.
ActiveSet active_losses(AblationMode mode, int phase);

struct CommitteeOptions {
    // Reconstruct I_h from stage-2 parameters (the printed form of the
    // synthesis-consistency loss) instead of stage-1 parameters.
    bool literal_sc = false;
    // Reverse the KL direction: pull the observed-clean feature distribution
    // toward the ideal-clean one instead of the default opposite.
    bool kl_reverse = false;
};

// L1( t*clean + (1-t)*A, hazy ) with t = exp(-beta*z) from one stage.
template <typename T>
ad::TensorId loss_sc(ad::Graph<T>& g, const model::StageOutputs& stage1, ad::TensorId hazy);

// Printed-form variant: stage-1 clean estimate combined with stage-2's
// (beta, z, A).
template <typename T>
ad::TensorId loss_sc_literal(ad::Graph<T>& g, const model::StageOutputs& stage1, const model::StageOutputs& stage2,
                             ad::TensorId hazy);

// Cross-domain consistency: the double-haze composition of the stage-2 clean
// estimate must reproduce the hazy input. Both stages share z := stage-1 depth.
template <typename T>
ad::TensorId loss_cc(ad::Graph<T>& g, const model::StageOutputs& stage1, const model::StageOutputs& stage2,
                     ad::TensorId hazy);

// L1(z_h, teacher) + L1(z_c, teacher).
template <typename T>
ad::TensorId loss_dc(ad::Graph<T>& g, const model::StageOutputs& stage1, const model::StageOutputs& stage2,
                     ad::TensorId teacher_depth);

// Channelwise Gaussian KL between the frozen-extractor feature statistics of
// the two clean estimates: per image, each feature channel is modelled as a
// Gaussian via its spatial mean/variance (variance floored at 1e-6), the
// closed-form KL is summed over channels, and the batch is averaged.
template <typename T>
ad::TensorId loss_is(ad::Graph<T>& g, const model::FeatureExtractor<T>& fx, ad::TensorId stage2_clean,
                     ad::TensorId stage1_clean, bool reverse = false);

// KL core on already-extracted feature maps; exposed for direct testing.
template <typename T>
ad::TensorId gaussian_kl_features(ad::Graph<T>& g, ad::TensorId features_p, ad::TensorId features_q);

struct LossTerms {
    ad::TensorId sc = -1, cc = -1, dc = -1, is = -1;
};

// Weighted sum of the active terms. Throws ConfigError on a negative weight.
template <typename T>
ad::TensorId total_loss(ad::Graph<T>& g, const LossTerms& terms, const LossWeights& w, const ActiveSet& act);

}  // namespace hazeforge::committee
