#pragma once

namespace hazeforge {

// Process-wide worker count for the OpenMP kernels. 1 (the default) runs
// every kernel serially. Kernels are written so results are bit-identical
// for any thread count: each output element is produced by exactly one
// thread with a fixed-order inner reduction.
void set_threads(int n);
int threads();

}  // namespace hazeforge
