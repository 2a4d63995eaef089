#include "hazeforge/asm_model.hpp"

#include <cmath>

#include "hazeforge/parallel.hpp"

namespace hazeforge::atmo {

namespace {

void check_finite_beta(float beta) {
    if (!std::isfinite(beta) || beta < 0.0f) throw InvalidInputError("transmission: beta must be finite and >= 0");
}

void check_depth_finite(const DepthMap& z) {
    for (float v : z.data) {
        if (!std::isfinite(v) || v <= 0.0f) throw InvalidInputError("transmission: depth must be finite and positive");
    }
}

}  // namespace

TransmissionMap transmission(float beta, const DepthMap& z) {
    check_finite_beta(beta);
    check_depth_finite(z);
    TransmissionMap t(z.height, z.width);
    const long n = static_cast<long>(z.data.size());
#pragma omp parallel for schedule(static) if (threads() > 1)
    for (long i = 0; i < n; ++i) t.data[i] = std::exp(-beta * z.data[i]);
    return t;
}

Image apply_asm(const Image& clean, const DepthMap& z, const HazeParams& params) {
    require_same_dims(clean.height, clean.width, z.height, z.width, "apply_asm");
    check_finite_beta(params.beta);
    Image out(clean.height, clean.width);
    const long n = static_cast<long>(clean.pixel_count());
    const float beta = params.beta;
    const float a0 = params.atmosphere[0], a1 = params.atmosphere[1], a2 = params.atmosphere[2];
#pragma omp parallel for schedule(static) if (threads() > 1)
    for (long i = 0; i < n; ++i) {
        const float t = std::exp(-beta * z.data[i]);
        const float omt = 1.0f - t;
        // rounding of the two products can overshoot [0,1] by ~1 ulp
        auto clamp01 = [](float v) { return v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v); };
        out.data[i * 3 + 0] = clamp01(t * clean.data[i * 3 + 0] + omt * a0);
        out.data[i * 3 + 1] = clamp01(t * clean.data[i * 3 + 1] + omt * a1);
        out.data[i * 3 + 2] = clamp01(t * clean.data[i * 3 + 2] + omt * a2);
    }
    return out;
}

Image invert_asm(const Image& hazy, const DepthMap& z, const HazeParams& params, float t_floor) {
    require_same_dims(hazy.height, hazy.width, z.height, z.width, "invert_asm");
    check_finite_beta(params.beta);
    if (!(t_floor > 0.0f)) throw InvalidInputError("invert_asm: t_floor must be > 0");
    Image out(hazy.height, hazy.width);
    const long n = static_cast<long>(hazy.pixel_count());
    const float beta = params.beta;
#pragma omp parallel for schedule(static) if (threads() > 1)
    for (long i = 0; i < n; ++i) {
        const float t = std::exp(-beta * z.data[i]);
        const float td = t < t_floor ? t_floor : t;
        const float omt = 1.0f - t;
        for (int c = 0; c < 3; ++c) {
            float v = (hazy.data[i * 3 + c] - omt * params.atmosphere[c]) / td;
            out.data[i * 3 + c] = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        }
    }
    return out;
}

Image apply_double_asm(const Image& ideal_clean, const DepthMap& z, const HazeParams& clean_params,
                       const HazeParams& synth_params) {
    require_same_dims(ideal_clean.height, ideal_clean.width, z.height, z.width, "apply_double_asm");
    check_finite_beta(clean_params.beta);
    check_finite_beta(synth_params.beta);
    Image out(ideal_clean.height, ideal_clean.width);
    const long n = static_cast<long>(ideal_clean.pixel_count());
    const float bc = clean_params.beta, bh = synth_params.beta;
#pragma omp parallel for schedule(static) if (threads() > 1)
    for (long i = 0; i < n; ++i) {
        const float zi = z.data[i];
        const float t_both = std::exp(-(bh + bc) * zi);
        const float t_h = std::exp(-bh * zi);
        const float t_c = std::exp(-bc * zi);
        for (int c = 0; c < 3; ++c) {
            float v = t_both * ideal_clean.data[i * 3 + c] + t_h * (1.0f - t_c) * clean_params.atmosphere[c] +
                      (1.0f - t_h) * synth_params.atmosphere[c];
            out.data[i * 3 + c] = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        }
    }
    return out;
}

}  // namespace hazeforge::atmo
