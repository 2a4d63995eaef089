#include "hazeforge/ad/optimizer.hpp"

#include <cmath>

namespace hazeforge::ad {

template <typename T>
void Adam<T>::step(Graph<T>& g) {
    ++step_;
    const T bc1 = T(1) - std::pow(cfg_.beta1, static_cast<T>(step_));
    const T bc2 = T(1) - std::pow(cfg_.beta2, static_cast<T>(step_));
    for (const auto& [name, id] : g.parameters()) {
        if (!g.has_grad(id))
            throw ConfigError("adam: parameter '" + name + "' has no gradient; run backward first");
        auto& mom = state_[name];
        auto& p = g.val_mut(id);
        const auto& gr = g.grad(id);
        if (mom.m.empty()) {
            mom.m.assign(p.size(), T(0));
            mom.v.assign(p.size(), T(0));
        }
        for (size_t i = 0; i < p.size(); ++i) {
            mom.m[i] = cfg_.beta1 * mom.m[i] + (T(1) - cfg_.beta1) * gr[i];
            mom.v[i] = cfg_.beta2 * mom.v[i] + (T(1) - cfg_.beta2) * gr[i] * gr[i];
            const T mhat = mom.m[i] / bc1;
            const T vhat = mom.v[i] / bc2;
            p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace hazeforge::ad
