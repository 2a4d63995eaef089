#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hazeforge/image.hpp"
#include "hazeforge/rng.hpp"

namespace hazeforge::synth {

enum class DepthKind { Ramp, Radial, SmoothNoise };
enum class ContentKind { Gradients, Shapes, Textured };

std::string to_string(DepthKind k);
std::string to_string(ContentKind k);
DepthKind depth_kind_from_string(const std::string& s);
ContentKind content_kind_from_string(const std::string& s);

struct SceneSpec {
    uint64_t seed = 0;
    int height = 64;
    int width = 64;
    DepthKind depth_kind = DepthKind::SmoothNoise;
    ContentKind content_kind = ContentKind::Shapes;
};

struct ParamRanges {
    float beta_clean_min = 0.02f, beta_clean_max = 0.15f;
    float beta_haze_min = 0.4f, beta_haze_max = 1.6f;
    float atmosphere_min = 0.7f, atmosphere_max = 1.0f;
    float z_min = 0.5f, z_max = 3.0f;
};

// (J, I_c, I_h, z) with the exact parameters that generated them.
struct PairedSample {
    Image ideal_clean;    // J
    Image nonideal_clean; // I_c = apply_asm(J, z, clean_params)
    Image synthetic_hazy; // I_h = apply_asm(I_c, z, synth_params)
    DepthMap depth;
    HazeParams clean_params;
    HazeParams synth_params;
    uint64_t seed = 0;
};

struct DatasetManifest {
    uint32_t format_version = 1;
    int height = 0, width = 0;
    ParamRanges ranges;
    uint64_t master_seed = 0;
    struct Entry {
        uint64_t seed = 0;
        HazeParams clean_params;
        HazeParams synth_params;
        std::string split;  // "train" | "test"
    };
    std::vector<Entry> entries;
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<PairedSample> samples;  // aligned with manifest.entries
};

Image gen_clean(const SceneSpec& spec);
DepthMap gen_depth(const SceneSpec& spec, float z_min, float z_max);
void sample_params(uint64_t seed, const ParamRanges& ranges, HazeParams& clean_out, HazeParams& synth_out);
PairedSample make_pair(const Image& ideal_clean, const DepthMap& z, const HazeParams& clean_params,
                       const HazeParams& synth_params);

struct GenConfig {
    uint64_t master_seed = 7;
    int height = 64, width = 64;
    int train_count = 512;
    int test_count = 64;
    ParamRanges ranges;
};

// Deterministic per (master seed, config); sample i is derived from its own stream.
Dataset generate_dataset(const GenConfig& cfg);

void write_dataset(const Dataset& ds, const std::string& dir);
Dataset read_dataset(const std::string& dir);

// Bilinear resize to an arbitrary size; used by the CLI square-resize path.
Image resize_bilinear(const Image& src, int out_h, int out_w);

}  // namespace hazeforge::synth
