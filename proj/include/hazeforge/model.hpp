#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "hazeforge/ad/graph.hpp"

namespace hazeforge::model {

struct NetworkConfig {
    int base_channels = 16;
    int encoder_depth = 2;  // number of stride-2 stages
    float z_min = 0.5f;
    float z_max = 3.0f;
    uint64_t seed = 1;
    uint64_t frozen_seed = 42;  // KL feature extractor init
    int input_height = 64;
    int input_width = 64;
};

nlohmann::json to_json(const NetworkConfig& cfg);
NetworkConfig network_config_from_json(const nlohmann::json& j);
void validate(const NetworkConfig& cfg);

// Closed-form trainable parameter count, computed from layer dimensions.
size_t parameter_count(const NetworkConfig& cfg);

// Deterministic fan-in-scaled uniform weights, zero biases. Values are drawn
// in float32 regardless of the graph scalar type so the float and double
// builds start from identical bits.
std::vector<std::pair<std::string, std::vector<float>>> init_model(const NetworkConfig& cfg);

// Handles into the graph for the four prediction heads of one forward pass.
struct StageOutputs {
    ad::TensorId clean = -1;       // [N,3,H,W], sigmoid head, values in [0,1]
    ad::TensorId depth = -1;       // [N,1,H,W], sigmoid rescaled to [z_min,z_max]
    ad::TensorId beta = -1;        // [N,1,1,1], softplus + 1e-4 floor
    ad::TensorId atmosphere = -1;  // [N,3,1,1], sigmoid
};

// Shared-weight predictor: one parameter set serves both stages. The model
// registers its parameters in the graph at construction; forward() appends
// transient ops, so call it after the graph's persistent prefix is complete.
template <typename T>
class DehazeModel {
public:
    DehazeModel(ad::Graph<T>& g, const NetworkConfig& cfg);
    // Attach to parameters that already exist in the graph (checkpoint load path).
    static DehazeModel adopt(ad::Graph<T>& g, const NetworkConfig& cfg);

    StageOutputs forward(ad::TensorId input) const;
    // stage 1 on the hazy input, stage 2 on stage 1's clean estimate;
    // gradients flow through both stages (no detach).
    std::pair<StageOutputs, StageOutputs> two_stage(ad::TensorId hazy) const;

    const NetworkConfig& config() const { return cfg_; }

private:
    DehazeModel(ad::Graph<T>& g, const NetworkConfig& cfg, bool adopt_existing);
    ad::TensorId p(const std::string& name) const;

    ad::Graph<T>* g_;
    NetworkConfig cfg_;
};

// Frozen randomly initialized conv stack for the distribution-matching loss:
// 3 stride-2 stages, 32 channels out, deterministic per seed; no gradient
// flows into the weights (they are frozen leaves), only into the image.
template <typename T>
class FeatureExtractor {
public:
    FeatureExtractor(ad::Graph<T>& g, uint64_t seed);
    ad::TensorId forward(ad::TensorId image) const;
    static constexpr int kChannels = 32;
    static constexpr int kStages = 3;

private:
    ad::Graph<T>* g_;
    std::vector<ad::TensorId> weights_;
    std::vector<ad::TensorId> biases_;
};

extern template class DehazeModel<float>;
extern template class DehazeModel<double>;
extern template class FeatureExtractor<float>;
extern template class FeatureExtractor<double>;

}  // namespace hazeforge::model
