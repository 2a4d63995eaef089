#include "hazeforge/model.hpp"

#include <cmath>

#include "hazeforge/rng.hpp"

using nlohmann::json;

namespace hazeforge::model {

namespace {

struct ConvSpec {
    std::string name;
    int in_ch, out_ch, kernel, stride, pad;
};

// The full layer list in creation order. Channel widths grow by half the
// base per stride-2 stage (B, 1.5B, 2B, ...), keeping the full-resolution
// decoder convs affordable on a CPU. The clean and depth heads get separate
// decoders: sharing one trunk lets the depth-consistency gradients trade
// away the clean reconstruction when the committee phase starts.
int stage_channels(int base, int stage) { return base + base * stage / 2; }

std::vector<ConvSpec> layer_specs(const NetworkConfig& cfg) {
    const int B = cfg.base_channels;
    std::vector<ConvSpec> specs;
    specs.push_back({"stem", 3, B, 3, 1, 1});
    for (int i = 1; i <= cfg.encoder_depth; ++i)
        specs.push_back({"enc" + std::to_string(i), stage_channels(B, i - 1), stage_channels(B, i), 3, 2, 1});
    const int mid_ch = stage_channels(B, cfg.encoder_depth);
    specs.push_back({"mid", mid_ch, mid_ch, 3, 1, 1});
    for (int i = cfg.encoder_depth; i >= 1; --i)
        specs.push_back({"clean_dec" + std::to_string(i), stage_channels(B, i), stage_channels(B, i - 1), 3, 1, 1});
    specs.push_back({"clean_head", B, 3, 3, 1, 1});
    // the depth trunk runs at half width; it only has to carry one channel
    const int D = B / 2;
    for (int i = cfg.encoder_depth; i >= 1; --i)
        specs.push_back(
            {"depth_dec" + std::to_string(i), i == cfg.encoder_depth ? mid_ch : stage_channels(D, i), stage_channels(D, i - 1), 3, 1, 1});
    specs.push_back({"depth_head", D, 1, 3, 1, 1});
    specs.push_back({"beta_head", mid_ch, 1, 1, 1, 0});
    specs.push_back({"atmo_head", mid_ch, 3, 1, 1, 0});
    return specs;
}

std::vector<float> fan_in_uniform(Rng& rng, int out_ch, int in_ch, int k) {
    const float bound = 1.0f / std::sqrt(static_cast<float>(in_ch * k * k));
    std::vector<float> w(static_cast<size_t>(out_ch) * in_ch * k * k);
    for (auto& v : w) v = rng.uniform_f(-bound, bound);
    return w;
}

}  // namespace

void validate(const NetworkConfig& cfg) {
    if (cfg.base_channels < 2) throw ConfigError("network config: base_channels must be >= 2");
    if (cfg.encoder_depth < 1 || cfg.encoder_depth > 4)
        throw ConfigError("network config: encoder_depth must be in [1,4]");
    const int div = 1 << cfg.encoder_depth;
    if (cfg.input_height % div != 0 || cfg.input_width % div != 0 || cfg.input_height < 8 || cfg.input_width < 8)
        throw ConfigError("network config: input dims must be divisible by " + std::to_string(div));
    if (!(cfg.z_min > 0.0f) || !(cfg.z_min < cfg.z_max))
        throw ConfigError("network config: need 0 < z_min < z_max");
}

json to_json(const NetworkConfig& cfg) {
    return json{{"base_channels", cfg.base_channels}, {"encoder_depth", cfg.encoder_depth},
                {"z_min", cfg.z_min},                 {"z_max", cfg.z_max},
                {"seed", cfg.seed},                   {"frozen_seed", cfg.frozen_seed},
                {"input_height", cfg.input_height},   {"input_width", cfg.input_width}};
}

NetworkConfig network_config_from_json(const json& j) {
    NetworkConfig cfg;
    cfg.base_channels = j.at("base_channels").get<int>();
    cfg.encoder_depth = j.at("encoder_depth").get<int>();
    cfg.z_min = j.at("z_min").get<float>();
    cfg.z_max = j.at("z_max").get<float>();
    cfg.seed = j.at("seed").get<uint64_t>();
    cfg.frozen_seed = j.at("frozen_seed").get<uint64_t>();
    cfg.input_height = j.at("input_height").get<int>();
    cfg.input_width = j.at("input_width").get<int>();
    return cfg;
}

size_t parameter_count(const NetworkConfig& cfg) {
    size_t total = 0;
    for (const auto& s : layer_specs(cfg))
        total += static_cast<size_t>(s.out_ch) * s.in_ch * s.kernel * s.kernel + s.out_ch;
    return total;
}

std::vector<std::pair<std::string, std::vector<float>>> init_model(const NetworkConfig& cfg) {
    validate(cfg);
    Rng rng(cfg.seed ^ 0x5eedf00dull);
    std::vector<std::pair<std::string, std::vector<float>>> out;
    for (const auto& s : layer_specs(cfg)) {
        out.emplace_back(s.name + ".w", fan_in_uniform(rng, s.out_ch, s.in_ch, s.kernel));
        out.emplace_back(s.name + ".b", std::vector<float>(s.out_ch, 0.0f));
    }
    return out;
}

template <typename T>
DehazeModel<T>::DehazeModel(ad::Graph<T>& g, const NetworkConfig& cfg) : DehazeModel(g, cfg, false) {}

template <typename T>
DehazeModel<T> DehazeModel<T>::adopt(ad::Graph<T>& g, const NetworkConfig& cfg) {
    return DehazeModel(g, cfg, true);
}

template <typename T>
DehazeModel<T>::DehazeModel(ad::Graph<T>& g, const NetworkConfig& cfg, bool adopt_existing) : g_(&g), cfg_(cfg) {
    validate(cfg);
    if (adopt_existing) {
        for (const auto& s : layer_specs(cfg)) {
            p(s.name + ".w");
            p(s.name + ".b");
        }
        return;
    }
    const auto init = init_model(cfg);
    auto it = init.begin();
    for (const auto& s : layer_specs(cfg)) {
        std::vector<T> w(it->second.begin(), it->second.end());
        g.parameter(s.name + ".w", ad::Shape{s.out_ch, s.in_ch, s.kernel, s.kernel}, std::move(w));
        ++it;
        std::vector<T> b(it->second.begin(), it->second.end());
        g.parameter(s.name + ".b", ad::Shape{1, s.out_ch, 1, 1}, std::move(b));
        ++it;
    }
}

template <typename T>
ad::TensorId DehazeModel<T>::p(const std::string& name) const {
    auto it = g_->parameters().find(name);
    if (it == g_->parameters().end()) throw ConfigError("model: missing parameter '" + name + "'");
    return it->second;
}

template <typename T>
StageOutputs DehazeModel<T>::forward(ad::TensorId input) const {
    ad::Graph<T>& g = *g_;
    const ad::Shape in_shape = g.shape(input);
    if (in_shape.c != 3) throw ShapeError("dehaze forward: expected 3-channel input, got " + in_shape.str());
    const int div = 1 << cfg_.encoder_depth;
    if (in_shape.h % div != 0 || in_shape.w % div != 0)
        throw ShapeError("dehaze forward: input dims must be divisible by " + std::to_string(div));

    auto conv = [&](ad::TensorId x, const std::string& name, int stride, int pad) {
        ad::TensorId y = g.conv2d(x, p(name + ".w"), stride, pad);
        return g.add(y, p(name + ".b"));
    };

    ad::TensorId x = g.relu(conv(input, "stem", 1, 1));
    for (int i = 1; i <= cfg_.encoder_depth; ++i) x = g.relu(conv(x, "enc" + std::to_string(i), 2, 1));
    ad::TensorId mid = g.relu(conv(x, "mid", 1, 1));

    ad::TensorId c = mid;
    for (int i = cfg_.encoder_depth; i >= 1; --i) {
        c = g.upsample_nearest(c, 2);
        c = g.relu(conv(c, "clean_dec" + std::to_string(i), 1, 1));
    }
    ad::TensorId d = mid;
    for (int i = cfg_.encoder_depth; i >= 1; --i) {
        d = g.upsample_nearest(d, 2);
        d = g.relu(conv(d, "depth_dec" + std::to_string(i), 1, 1));
    }

    StageOutputs out;
    // half-gain pre-sigmoid: a mis-calibrated beta phase drives the required
    // clean values outside [0,1]; the flatter slope keeps the head out of
    // hard saturation so later phases can still move it
    out.clean = g.sigmoid(g.mul_scalar(conv(c, "clean_head", 1, 1), T(0.5)));
    ad::TensorId zs = g.sigmoid(conv(d, "depth_head", 1, 1));
    out.depth = g.add_scalar(g.mul_scalar(zs, static_cast<T>(cfg_.z_max - cfg_.z_min)), static_cast<T>(cfg_.z_min));

    ad::TensorId pooled = g.global_avg_pool(mid);
    out.beta = g.add_scalar(g.softplus(conv(pooled, "beta_head", 1, 0)), static_cast<T>(1e-4));
    out.atmosphere = g.sigmoid(conv(pooled, "atmo_head", 1, 0));
    return out;
}

template <typename T>
std::pair<StageOutputs, StageOutputs> DehazeModel<T>::two_stage(ad::TensorId hazy) const {
    StageOutputs stage1 = forward(hazy);
    StageOutputs stage2 = forward(stage1.clean);
    return {stage1, stage2};
}

template <typename T>
FeatureExtractor<T>::FeatureExtractor(ad::Graph<T>& g, uint64_t seed) : g_(&g) {
    Rng rng(seed ^ 0xf407e5ull);
    int in_ch = 3;
    for (int i = 0; i < kStages; ++i) {
        auto w = fan_in_uniform(rng, kChannels, in_ch, 3);
        weights_.push_back(g.frozen(ad::Shape{kChannels, in_ch, 3, 3}, std::vector<T>(w.begin(), w.end())));
        std::vector<float> b(kChannels);
        for (auto& v : b) v = rng.uniform_f(-0.1f, 0.1f);
        biases_.push_back(g.frozen(ad::Shape{1, kChannels, 1, 1}, std::vector<T>(b.begin(), b.end())));
        in_ch = kChannels;
    }
}

template <typename T>
ad::TensorId FeatureExtractor<T>::forward(ad::TensorId image) const {
    ad::Graph<T>& g = *g_;
    ad::TensorId x = image;
    for (int i = 0; i < kStages; ++i) {
        x = g.conv2d(x, weights_[i], 2, 1);
        x = g.relu(g.add(x, biases_[i]));
    }
    return x;
}

template class DehazeModel<float>;
template class DehazeModel<double>;
template class FeatureExtractor<float>;
template class FeatureExtractor<double>;

}  // namespace hazeforge::model
