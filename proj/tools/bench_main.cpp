// Times the OpenMP kernels against their serial reference implementations.
#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include "hazeforge/ad/gemm.hpp"
#include "hazeforge/ad/graph.hpp"
#include "hazeforge/asm_model.hpp"
#include "hazeforge/metrics.hpp"
#include "hazeforge/parallel.hpp"
#include "hazeforge/rng.hpp"
#include "hazeforge/synthgen.hpp"

using namespace hazeforge;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char* name, double serial_ms, double parallel_ms, double flops = 0.0) {
    if (flops > 0.0)
        std::printf("%-28s serial %9.3f ms  parallel %9.3f ms  speedup %5.2fx  %7.2f GFLOP/s\n", name, serial_ms,
                    parallel_ms, serial_ms / parallel_ms, flops / (parallel_ms * 1e6));
    else
        std::printf("%-28s serial %9.3f ms  parallel %9.3f ms  speedup %5.2fx\n", name, serial_ms, parallel_ms,
                    serial_ms / parallel_ms);
}

}  // namespace

int main(int argc, char** argv) {
    int nthreads = 4;
    if (argc > 1) nthreads = std::atoi(argv[1]);
    std::printf("bench: parallel runs use %d threads\n\n", nthreads);

    Rng rng(1);

    // ASM kernels on a 512x512 scene
    {
        Image img(512, 512);
        for (auto& v : img.data) v = rng.uniform_f(0, 1);
        DepthMap z(512, 512);
        for (auto& v : z.data) v = rng.uniform_f(0.5f, 3.0f);
        HazeParams p{0.8f, {0.9f, 0.9f, 0.95f}};

        std::vector<float> ref_out(img.data.size());
        const float a[3] = {p.atmosphere[0], p.atmosphere[1], p.atmosphere[2]};
        const double serial = time_ms(
            [&] { atmo::ref::apply_asm<float>(img.data.data(), z.data.data(), img.pixel_count(), p.beta, a,
                                              ref_out.data()); },
            20);
        set_threads(nthreads);
        const double parallel = time_ms([&] { (void)atmo::apply_asm(img, z, p); }, 20);
        set_threads(1);
        report("apply_asm 512x512", serial, parallel);
    }

    // GEMM at the training conv sizes (dec2: K=288, N=4096)
    {
        const int M = 16, N = 4096, K = 288;
        std::vector<float> A(static_cast<size_t>(M) * K), B(static_cast<size_t>(K) * N),
            C(static_cast<size_t>(M) * N);
        for (auto& v : A) v = rng.uniform_f(-1, 1);
        for (auto& v : B) v = rng.uniform_f(-1, 1);
        const double flops = 2.0 * M * N * K;
        const double serial =
            time_ms([&] { ad::ref::gemm(A.data(), B.data(), C.data(), M, N, K, false); }, 10);
        set_threads(nthreads);
        const double parallel = time_ms([&] { ad::gemm(A.data(), B.data(), C.data(), M, N, K, false); }, 10);
        set_threads(1);
        report("gemm 16x4096x288", serial, parallel, flops);
    }
    {
        const int M = 64, N = 1024, K = 576;
        std::vector<float> A(static_cast<size_t>(M) * K), B(static_cast<size_t>(K) * N),
            C(static_cast<size_t>(M) * N);
        for (auto& v : A) v = rng.uniform_f(-1, 1);
        for (auto& v : B) v = rng.uniform_f(-1, 1);
        const double flops = 2.0 * M * N * K;
        const double serial =
            time_ms([&] { ad::ref::gemm(A.data(), B.data(), C.data(), M, N, K, false); }, 10);
        set_threads(nthreads);
        const double parallel = time_ms([&] { ad::gemm(A.data(), B.data(), C.data(), M, N, K, false); }, 10);
        set_threads(1);
        report("gemm 64x1024x576", serial, parallel, flops);
    }

    // conv2d forward through the graph, training-batch shaped
    {
        ad::GraphF g({.check_finite = false});
        ad::TensorId x = g.leaf(ad::Shape{8, 32, 32, 32}, [&] {
            std::vector<float> v(8 * 32 * 32 * 32);
            for (auto& e : v) e = rng.uniform_f(0, 1);
            return v;
        }());
        ad::TensorId w = g.leaf(ad::Shape{64, 32, 3, 3}, [&] {
            std::vector<float> v(64 * 32 * 9);
            for (auto& e : v) e = rng.uniform_f(-0.1f, 0.1f);
            return v;
        }());
        g.conv2d(x, w, 1, 1);
        const double flops = 2.0 * 8 * 64 * 32 * 32 * 32 * 9;
        const double serial = time_ms([&] { g.recompute(); }, 5);
        set_threads(nthreads);
        const double parallel = time_ms([&] { g.recompute(); }, 5);
        set_threads(1);
        report("conv2d 8x32x32x32 -> 64ch", serial, parallel, flops);
    }

    // per-sample dataset synthesis
    {
        synth::GenConfig gc;
        gc.master_seed = 3;
        gc.height = gc.width = 64;
        gc.train_count = 32;
        gc.test_count = 0;
        const double serial = time_ms([&] { (void)synth::generate_dataset(gc); }, 3);
        set_threads(nthreads);
        const double parallel = time_ms([&] { (void)synth::generate_dataset(gc); }, 3);
        set_threads(1);
        report("synth 32 samples 64x64", serial, parallel);
    }

    // SSIM evaluation
    {
        Image a(256, 256), b(256, 256);
        for (auto& v : a.data) v = rng.uniform_f(0, 1);
        for (auto& v : b.data) v = rng.uniform_f(0, 1);
        const double serial = time_ms([&] { (void)eval::ssim(a, b); }, 5);
        report("ssim 256x256 (serial only)", serial, serial);
    }

    return 0;
}
