#pragma once

#include "hazeforge/image.hpp"

namespace hazeforge::atmo {

// Atmospheric scattering math: I = J*exp(-beta*z) + A*(1-exp(-beta*z)),
// its algebraic inverse, and the composed double-haze relation
// I_h = exp(-(bh+bc)z)*J + exp(-bh z)(1-exp(-bc z))*A_c + (1-exp(-bh z))*A_h.
//
// These are the OpenMP production kernels (float32). atmo::ref holds a plain
// serial implementation kept for testing, templated so the same code doubles
// as the float64 oracle path.

TransmissionMap transmission(float beta, const DepthMap& z);
Image apply_asm(const Image& clean, const DepthMap& z, const HazeParams& params);
Image invert_asm(const Image& hazy, const DepthMap& z, const HazeParams& params, float t_floor = 1e-3f);
Image apply_double_asm(const Image& ideal_clean, const DepthMap& z, const HazeParams& clean_params,
                       const HazeParams& synth_params);

namespace ref {

// Serial reference kernels over raw channel-interleaved buffers. T is float
// for parity checks against the parallel path and double for oracle math.

template <typename T>
void transmission(T beta, const T* z, size_t n, T* out) {
    for (size_t i = 0; i < n; ++i) out[i] = std::exp(-beta * z[i]);
}

template <typename T>
T clamp01(T v) {
    return v < T(0) ? T(0) : (v > T(1) ? T(1) : v);
}

template <typename T>
void apply_asm(const T* clean, const T* z, size_t pixels, T beta, const T* atmosphere, T* out) {
    for (size_t i = 0; i < pixels; ++i) {
        const T t = std::exp(-beta * z[i]);
        const T omt = T(1) - t;
        for (int c = 0; c < 3; ++c) out[i * 3 + c] = clamp01(t * clean[i * 3 + c] + omt * atmosphere[c]);
    }
}

template <typename T>
void invert_asm(const T* hazy, const T* z, size_t pixels, T beta, const T* atmosphere, T t_floor, T* out) {
    for (size_t i = 0; i < pixels; ++i) {
        const T t = std::exp(-beta * z[i]);
        const T td = t < t_floor ? t_floor : t;
        for (int c = 0; c < 3; ++c) {
            T v = (hazy[i * 3 + c] - (T(1) - t) * atmosphere[c]) / td;
            out[i * 3 + c] = v < T(0) ? T(0) : (v > T(1) ? T(1) : v);
        }
    }
}

template <typename T>
void apply_double_asm(const T* ideal_clean, const T* z, size_t pixels, T beta_c, const T* atmo_c, T beta_h,
                      const T* atmo_h, T* out) {
    for (size_t i = 0; i < pixels; ++i) {
        const T t_both = std::exp(-(beta_h + beta_c) * z[i]);
        const T t_h = std::exp(-beta_h * z[i]);
        const T t_c = std::exp(-beta_c * z[i]);
        for (int c = 0; c < 3; ++c)
            out[i * 3 + c] =
                clamp01(t_both * ideal_clean[i * 3 + c] + t_h * (T(1) - t_c) * atmo_c[c] + (T(1) - t_h) * atmo_h[c]);
    }
}

}  // namespace ref

}  // namespace hazeforge::atmo
