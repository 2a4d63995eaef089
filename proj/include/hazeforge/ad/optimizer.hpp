#pragma once

#include <map>
#include <vector>

#include "hazeforge/ad/graph.hpp"

namespace hazeforge::ad {

// Adam with bias correction over every parameter registered in a Graph.
template <typename T>
class Adam {
public:
    struct Config {
        T lr = T(1e-3);
        T beta1 = T(0.9);
        T beta2 = T(0.999);
        T eps = T(1e-8);
    };

    explicit Adam(Config cfg = {}) : cfg_(cfg) {}

    // One update step. Throws ConfigError if a parameter has no gradient
    // buffer (no backward pass has touched it yet).
    void step(Graph<T>& g);

    void zero_grads(Graph<T>& g) { g.zero_grads(); }

    int64_t step_count() const { return step_; }
    const Config& config() const { return cfg_; }

private:
    struct Moments {
        std::vector<T> m, v;
    };
    Config cfg_;
    std::map<std::string, Moments> state_;
    int64_t step_ = 0;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace hazeforge::ad
