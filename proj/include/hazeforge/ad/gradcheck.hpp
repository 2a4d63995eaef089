#pragma once

#include <algorithm>

#include "hazeforge/ad/graph.hpp"
#include "hazeforge/rng.hpp"

namespace hazeforge::ad {

template <typename T>
struct GradCheckReport {
    T max_rel_error = T(0);
    int checked = 0;
    int skipped_kinks = 0;
};

// Central finite differences against the analytic gradients, sampling up to
// entries_per_param entries of every parameter. Entries whose +/-eps
// evaluations land on different sides of a relu/abs/clamp kink are excluded.
// Relative error per entry: |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
template <typename T>
GradCheckReport<T> grad_check(Graph<T>& g, TensorId loss, T epsilon, int entries_per_param = 8,
                              uint64_t seed = 1) {
    if (!(epsilon > T(0))) throw InvalidInputError("grad_check: epsilon must be > 0");
    GradCheckReport<T> rep;

    g.zero_grads();
    g.recompute();
    g.backward(loss);

    std::vector<std::pair<TensorId, std::vector<T>>> analytic;
    for (const auto& [name, id] : g.parameters()) analytic.emplace_back(id, g.grad(id));

    Rng rng(seed);
    for (const auto& [id, grads] : analytic) {
        auto& vals = g.val_mut(id);
        const size_t count = vals.size();
        std::vector<size_t> picks;
        if (count <= static_cast<size_t>(entries_per_param)) {
            picks.resize(count);
            for (size_t i = 0; i < count; ++i) picks[i] = i;
        } else {
            while (picks.size() < static_cast<size_t>(entries_per_param)) {
                size_t i = rng.below(count);
                if (std::find(picks.begin(), picks.end(), i) == picks.end()) picks.push_back(i);
            }
        }
        for (size_t i : picks) {
            const T orig = vals[i];
            g.set_track_kinks(true);
            vals[i] = orig + epsilon;
            g.recompute();
            const T f_plus = g.scalar_value(loss);
            const uint64_t sig_plus = g.kink_signature();
            g.set_track_kinks(true);
            vals[i] = orig - epsilon;
            g.recompute();
            const T f_minus = g.scalar_value(loss);
            const uint64_t sig_minus = g.kink_signature();
            vals[i] = orig;
            g.set_track_kinks(false);
            if (sig_plus != sig_minus) {
                ++rep.skipped_kinks;
                continue;
            }
            const T numeric = (f_plus - f_minus) / (T(2) * epsilon);
            const T a = grads[i];
            const T denom = std::max(T(1e-8), std::abs(a) + std::abs(numeric));
            rep.max_rel_error = std::max(rep.max_rel_error, std::abs(a - numeric) / denom);
            ++rep.checked;
        }
    }
    g.recompute();
    return rep;
}

// Directional variant for large composed graphs: compares central differences
// along random unit directions of the whole parameter vector against the
// analytic directional derivative. Per-entry differencing of a deep graph in
// float64 carries an absolute noise floor around 1e-12, which swamps entries
// whose true gradient is ~1e-9; the directional derivative is of the order of
// the gradient norm, so the same noise is orders of magnitude below the 1e-4
// verification threshold.
template <typename T>
GradCheckReport<T> grad_check_directional(Graph<T>& g, TensorId loss, T epsilon, int directions = 20,
                                          uint64_t seed = 1) {
    if (!(epsilon > T(0))) throw InvalidInputError("grad_check: epsilon must be > 0");
    GradCheckReport<T> rep;

    g.zero_grads();
    g.recompute();
    g.backward(loss);

    std::vector<TensorId> ids;
    std::vector<std::vector<T>> analytic;
    size_t total = 0;
    for (const auto& [name, id] : g.parameters()) {
        ids.push_back(id);
        analytic.push_back(g.grad(id));
        total += g.val(id).size();
    }
    if (total == 0) throw ConfigError("grad_check: graph has no parameters");

    Rng rng(seed);
    std::vector<T> direction(total);
    std::vector<T> saved(total);
    for (int d = 0; d < directions; ++d) {
        double norm2 = 0.0;
        for (auto& u : direction) {
            u = static_cast<T>(rng.gauss());
            norm2 += static_cast<double>(u) * u;
        }
        const T inv_norm = static_cast<T>(1.0 / std::sqrt(norm2));

        double analytic_dir = 0.0;
        size_t off = 0;
        for (size_t p = 0; p < ids.size(); ++p) {
            auto& vals = g.val_mut(ids[p]);
            for (size_t i = 0; i < vals.size(); ++i, ++off) {
                direction[off] *= inv_norm;
                saved[off] = vals[i];
                analytic_dir += static_cast<double>(analytic[p][i]) * direction[off];
            }
        }

        auto apply_shift = [&](T scale) {
            size_t o = 0;
            for (size_t p = 0; p < ids.size(); ++p) {
                auto& vals = g.val_mut(ids[p]);
                for (size_t i = 0; i < vals.size(); ++i, ++o) vals[i] = saved[o] + scale * direction[o];
            }
        };

        g.set_track_kinks(true);
        apply_shift(epsilon);
        g.recompute();
        const T f_plus = g.scalar_value(loss);
        const uint64_t sig_plus = g.kink_signature();
        g.set_track_kinks(true);
        apply_shift(-epsilon);
        g.recompute();
        const T f_minus = g.scalar_value(loss);
        const uint64_t sig_minus = g.kink_signature();
        apply_shift(T(0));
        g.set_track_kinks(false);
        if (sig_plus != sig_minus) {
            ++rep.skipped_kinks;
            continue;
        }
        const T numeric = (f_plus - f_minus) / (T(2) * epsilon);
        const T a = static_cast<T>(analytic_dir);
        const T denom = std::max(T(1e-8), std::abs(a) + std::abs(numeric));
        rep.max_rel_error = std::max(rep.max_rel_error, std::abs(a - numeric) / denom);
        ++rep.checked;
    }
    g.recompute();
    return rep;
}

}  // namespace hazeforge::ad
