#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "hazeforge/ad/graph.hpp"

namespace hazeforge::ad {

// Checkpoint pair: <prefix>.json (parameter table, step count, optional extra
// metadata) + <prefix>.bin (concatenated little-endian float32 payloads).
struct Checkpoint {
    int64_t step = 0;
    std::vector<std::pair<std::string, std::vector<float>>> params;  // sorted by name
    std::vector<Shape> shapes;                                       // aligned with params
    nlohmann::json extra;
};

void save_checkpoint(const Graph<float>& g, const std::string& prefix, int64_t step,
                     const nlohmann::json& extra = nlohmann::json::object());
void save_checkpoint(const Checkpoint& ck, const std::string& prefix);
Checkpoint load_checkpoint(const std::string& prefix);
// Copies values into same-named parameters; throws on any mismatch.
void apply_checkpoint(Graph<float>& g, const Checkpoint& ck);

// Elementwise mean of several checkpoints, accumulated in float64.
Checkpoint average_checkpoints(const std::vector<Checkpoint>& cks);

}  // namespace hazeforge::ad
