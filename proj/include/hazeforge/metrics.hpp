#pragma once

#include <array>

#include "hazeforge/image.hpp"

namespace hazeforge::eval {

// Full-reference metrics. PSNR and SSIM operate on linear intensity; the
// CIEDE2000 path goes through the standard sRGB -> XYZ(D65) -> CIELAB chain.

// 10*log10(1/MSE), peak 1.0, capped at 100 dB (identical images hit the cap).
double psnr(const Image& a, const Image& b);

// Mean local SSIM of the channel-mean luminance, 11x11 Gaussian window
// sigma=1.5, K1=0.01, K2=0.03, dynamic range 1.0, valid-window positions.
double ssim(const Image& a, const Image& b);

// Mean CIEDE2000 color difference over all pixels.
double ciede2000(const Image& a, const Image& b);

struct Lab {
    double L = 0.0, a = 0.0, b = 0.0;
};

// sRGB gamma encode of one linear component.
double srgb_encode(double linear);
// CIELAB (D65) of a linear-sRGB pixel.
Lab lab_from_linear_rgb(double r, double g, double b);
// The full CIEDE2000 formula on Lab pairs; exposed for the published
// reference-pair tests.
double ciede2000_lab(const Lab& x, const Lab& y);

}  // namespace hazeforge::eval
