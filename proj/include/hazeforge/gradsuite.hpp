#pragma once

#include <cstdint>

#include "hazeforge/ad/gradcheck.hpp"

namespace hazeforge::gradsuite {

struct SuiteReport {
    double max_rel_error = 0.0;
    int checked = 0;
    int skipped_kinks = 0;

    void merge(const ad::GradCheckReport<double>& r) {
        max_rel_error = r.max_rel_error > max_rel_error ? r.max_rel_error : max_rel_error;
        checked += r.checked;
        skipped_kinks += r.skipped_kinks;
    }
};

// Central finite differences (float64, eps 1e-5) for every forward op over
// randomized shapes/seeds.
SuiteReport op_checks(int seeds_per_op = 20);

// The full two-stage committee graph (model + all four losses) on a batch of
// 8x8 images, checked in float64 along random parameter-space directions.
SuiteReport committee_graph_check(uint64_t seed = 1, int directions = 24);

}  // namespace hazeforge::gradsuite
