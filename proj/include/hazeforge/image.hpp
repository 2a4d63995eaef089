#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "hazeforge/errors.hpp"

namespace hazeforge {

// H x W x 3 raster of linear intensity in [0,1], row-major, channel
// interleaved: data[(y*width + x)*3 + c].
struct Image {
    int height = 0;
    int width = 0;
    std::vector<float> data;

    Image() = default;
    Image(int h, int w, float fill = 0.0f) : height(h), width(w), data(static_cast<size_t>(h) * w * 3, fill) {}

    float& at(int y, int x, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    float at(int y, int x, int c) const { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    size_t pixel_count() const { return static_cast<size_t>(height) * width; }
};

// H x W single-channel positive depth raster.
struct DepthMap {
    int height = 0;
    int width = 0;
    std::vector<float> data;

    DepthMap() = default;
    DepthMap(int h, int w, float fill = 1.0f) : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {}

    float& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
    float at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
    size_t pixel_count() const { return static_cast<size_t>(height) * width; }
};

// Per-image scattering coefficient and global atmospheric light.
struct HazeParams {
    float beta = 0.0f;
    std::array<float, 3> atmosphere = {1.0f, 1.0f, 1.0f};
};

// exp(-beta*z) per pixel; values in (0,1].
struct TransmissionMap {
    int height = 0;
    int width = 0;
    std::vector<float> data;

    TransmissionMap() = default;
    TransmissionMap(int h, int w) : height(h), width(w), data(static_cast<size_t>(h) * w, 1.0f) {}

    float at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
};

inline void validate(const Image& img, const char* what = "image") {
    if (img.height < 8 || img.width < 8)
        throw InvalidInputError(std::string(what) + ": dimensions must be at least 8x8");
    if (img.data.size() != img.pixel_count() * 3)
        throw ShapeError(std::string(what) + ": buffer size does not match dimensions");
    for (float v : img.data) {
        if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
            throw InvalidInputError(std::string(what) + ": values must be finite and in [0,1]");
    }
}

inline void validate(const DepthMap& z, const char* what = "depth") {
    if (z.data.size() != z.pixel_count())
        throw ShapeError(std::string(what) + ": buffer size does not match dimensions");
    for (float v : z.data) {
        if (!std::isfinite(v) || v <= 0.0f)
            throw InvalidInputError(std::string(what) + ": depth must be finite and positive");
    }
}

inline void validate(const HazeParams& p) {
    if (!std::isfinite(p.beta) || p.beta < 0.0f)
        throw InvalidInputError("haze params: beta must be finite and >= 0");
    for (float a : p.atmosphere) {
        if (!std::isfinite(a) || a < 0.0f || a > 1.0f)
            throw InvalidInputError("haze params: atmospheric light channels must be in [0,1]");
    }
}

inline void require_same_dims(int h1, int w1, int h2, int w2, const char* op) {
    if (h1 != h2 || w1 != w2)
        throw ShapeError(std::string(op) + ": dimension mismatch " + std::to_string(h1) + "x" + std::to_string(w1) +
                         " vs " + std::to_string(h2) + "x" + std::to_string(w2));
}

}  // namespace hazeforge
