// Microbenchmark for the compute kernels; handy when picking batch and
// time-step budgets for a machine.
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstdio>
#include <vector>

#include "snn/kernels.hpp"
#include "snn/tensor.hpp"

using Clock = std::chrono::steady_clock;

static double secs(Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double>(b - a).count();
}

// Spot-check a kernel result against the naive loop so a broken tile never
// gets benchmarked as a speedup.
static void verify_nn(const snn::Tensor& a, const snn::Tensor& b, const std::vector<double>& c,
                      std::size_t m, std::size_t k, std::size_t n, double reps) {
    for (std::size_t probe : {std::size_t(0), m * n / 2, m * n - 1}) {
        const std::size_t i = probe / n, j = probe % n;
        double want = 0.0;
        for (std::size_t kk = 0; kk < k; ++kk)
            want += static_cast<double>(a[i * k + kk]) * static_cast<double>(b[kk * n + j]);
        want *= reps;
        if (std::abs(c[probe] - want) > 1e-9 * (1.0 + std::abs(want))) {
            std::printf("KERNEL MISMATCH at (%zu,%zu): %g vs %g\n", i, j, c[probe], want);
            std::exit(1);
        }
    }
}

int main() {
    snn::Rng rng(7);

    // conv2-sized GEMM: 128 x 576 x 576
    {
        const std::size_t m = 128, k = 576, n = 576;
        snn::Tensor a = snn::seeded_uniform(rng, {m, k}, 0.5f);
        snn::Tensor b = snn::seeded_uniform(rng, {k, n}, 0.5f);
        std::vector<double> c(m * n, 0.0);
        const int reps = 40;
        auto t0 = Clock::now();
        for (int r = 0; r < reps; ++r)
            snn::kern::gemm_nn(c.data(), a.data(), b.data(), m, k, n);
        auto t1 = Clock::now();
        verify_nn(a, b, c, m, k, n, reps);
        double fl = 2.0 * m * k * n * reps;
        std::printf("gemm_nn  128x576x576   %7.2f GFLOP/s\n", fl / secs(t0, t1) * 1e-9);
    }
    // fc1 forward, weight-major orientation: 120 x 73728 x 15
    {
        const std::size_t m = 120, k = 73728, n = 15;
        snn::Tensor a = snn::seeded_uniform(rng, {m, k}, 0.5f);
        snn::Tensor b = snn::seeded_uniform(rng, {k, n}, 0.5f);
        for (std::size_t i = 0; i < b.size(); ++i) b[i] = b[i] > 0.3f ? 1.0f : 0.0f;
        std::vector<double> c(m * n, 0.0);
        const int reps = 40;
        auto t0 = Clock::now();
        for (int r = 0; r < reps; ++r)
            snn::kern::gemm_nn(c.data(), a.data(), b.data(), m, k, n);
        auto t1 = Clock::now();
        verify_nn(a, b, c, m, k, n, reps);
        std::printf("gemm_nn  120x73728x15  %7.2f GFLOP/s (narrow)\n",
                    2.0 * m * k * n * reps / secs(t0, t1) * 1e-9);
    }
    // fc1 transport, weight-major: 73728 x 120 x 15
    {
        const std::size_t m = 73728, k = 120, n = 15;
        snn::Tensor a = snn::seeded_uniform(rng, {m, k}, 0.5f);
        snn::Tensor b = snn::seeded_uniform(rng, {k, n}, 0.5f);
        std::vector<double> c(m * n, 0.0);
        const int reps = 40;
        auto t0 = Clock::now();
        for (int r = 0; r < reps; ++r)
            snn::kern::gemm_nn(c.data(), a.data(), b.data(), m, k, n);
        auto t1 = Clock::now();
        verify_nn(a, b, c, m, k, n, reps);
        std::printf("gemm_nn  73728x120x15  %7.2f GFLOP/s (narrow)\n",
                    2.0 * m * k * n * reps / secs(t0, t1) * 1e-9);
    }
    // gemm_tn weight-grad shape: 120 x 15 x 73728
    {
        const std::size_t m = 120, k = 15, n = 73728;
        snn::Tensor a = snn::seeded_uniform(rng, {k, m}, 0.5f);
        snn::Tensor b = snn::seeded_uniform(rng, {k, n}, 0.5f);
        std::vector<double> c(m * n, 0.0);
        const int reps = 20;
        auto t0 = Clock::now();
        for (int r = 0; r < reps; ++r)
            snn::kern::gemm_tn(c.data(), a.data(), b.data(), m, k, n);
        auto t1 = Clock::now();
        std::printf("gemm_tn  120x15x73728  %7.2f GFLOP/s\n",
                    2.0 * m * k * n * reps / secs(t0, t1) * 1e-9);
    }
    return 0;
}
