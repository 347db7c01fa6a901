#include "snn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <string>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

#include "snn/kernels.hpp"

namespace snn {

namespace {

std::string shape_str(const std::vector<std::size_t>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

}  // namespace

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0f) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_product(shape_) != data_.size())
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str(shape_));
}

bool Tensor::all_finite() const {
    for (float v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
    if (shape_product(shape) != size())
        throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), data_);
}

// ---------------------------------------------------------------------------
// Rng

static inline std::uint64_t splitmix_finalize(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

std::uint64_t Rng::next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    return splitmix_finalize(state_);
}

float Rng::next_unit() {
    return static_cast<float>(next_u64() >> 40) * (1.0f / 16777216.0f);
}

std::uint64_t Rng::next_below(std::uint64_t n) {
    // Rejection-free modulo is fine here: n is tiny relative to 2^64.
    return next_u64() % n;
}

Rng Rng::derive(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream) {
    std::uint64_t s = splitmix_finalize(seed ^ (0x9E3779B97F4A7C15ull * (stream + 1)));
    s = splitmix_finalize(s ^ (0xC2B2AE3D27D4EB4Full * (substream + 1)));
    return Rng(s);
}

Tensor seeded_uniform(Rng& rng, std::vector<std::size_t> shape, float bound) {
    if (!(bound > 0.0f)) throw ConfigError("seeded_uniform: bound must be positive");
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.next_uniform(bound);
    return t;
}

// ---------------------------------------------------------------------------
// Kernels

namespace kern {

namespace {

constexpr std::size_t MR = 8;    // rows per register tile
constexpr std::size_t NR = 32;   // columns per register tile
constexpr std::size_t KB = 448;  // k-panel so a B panel stays inside L2

// Narrow-N tile: time-batched layer GEMMs have n == T (<= ~16), far below
// NR; they run through an 8 x {8,16} tile with fixed-size register
// accumulators against a zero-padded copy of B so the wide path's edge
// handling never sees them.
constexpr std::size_t MRN = 8;
constexpr std::size_t NARROW_N = 16;

template <bool TransA, std::size_t NP>
void gemm_narrow_np(double* c, const float* a, const float* bp,
                    std::size_t m, std::size_t k, std::size_t n, bool skip_zero_a) {
    const auto a_at = [&](std::size_t i, std::size_t kk) {
        if constexpr (TransA) return a[kk * m + i];
        else return a[i * k + kk];
    };
    for (std::size_t i0 = 0; i0 < m; i0 += MRN) {
        const std::size_t mr = std::min(MRN, m - i0);
        double acc[MRN][NP] = {};
        for (std::size_t r = 0; r < mr; ++r)
            for (std::size_t x = 0; x < n; ++x) acc[r][x] = c[(i0 + r) * n + x];
        if (mr == MRN) {
            for (std::size_t kk = 0; kk < k; ++kk) {
                float av[MRN];
                bool all_zero = true;
#pragma GCC unroll 8
                for (std::size_t r = 0; r < MRN; ++r) {
                    av[r] = a_at(i0 + r, kk);
                    all_zero &= (av[r] == 0.0f);
                }
                if (skip_zero_a && all_zero) continue;
                const float* brow = bp + kk * NP;
#pragma GCC unroll 8
                for (std::size_t r = 0; r < MRN; ++r) {
                    const double ar = av[r];
                    for (std::size_t x = 0; x < NP; ++x)
                        acc[r][x] += ar * static_cast<double>(brow[x]);
                }
            }
        } else {
            for (std::size_t kk = 0; kk < k; ++kk) {
                const float* brow = bp + kk * NP;
                for (std::size_t r = 0; r < mr; ++r) {
                    const float av = a_at(i0 + r, kk);
                    if (skip_zero_a && av == 0.0f) continue;
                    for (std::size_t x = 0; x < NP; ++x)
                        acc[r][x] += static_cast<double>(av) * static_cast<double>(brow[x]);
                }
            }
        }
        for (std::size_t r = 0; r < mr; ++r)
            for (std::size_t x = 0; x < n; ++x) c[(i0 + r) * n + x] = acc[r][x];
    }
}

template <bool TransA>
void gemm_narrow(double* c, const float* a, const float* b,
                 std::size_t m, std::size_t k, std::size_t n, bool skip_zero_a) {
    const std::size_t np = n <= 8 ? 8 : 16;
    std::vector<float> bp(k * np, 0.0f);
    for (std::size_t kk = 0; kk < k; ++kk)
        std::memcpy(&bp[kk * np], b + kk * n, n * sizeof(float));
    if (np == 8)
        gemm_narrow_np<TransA, 8>(c, a, bp.data(), m, k, n, skip_zero_a);
    else
        gemm_narrow_np<TransA, 16>(c, a, bp.data(), m, k, n, skip_zero_a);
}

// One k-panel of C += A*B. Each C element still accumulates its k-terms in
// ascending order because panels are visited in ascending k with the same
// double accumulator, so tiling never changes a sum.
template <bool TransA>
void gemm_panel(double* c, const float* a, const float* b,
                std::size_t m, std::size_t k_total, std::size_t n,
                std::size_t k0, std::size_t k1, bool skip_zero_a) {
    const auto a_at = [&](std::size_t i, std::size_t kk) {
        if constexpr (TransA) return a[kk * m + i];
        else return a[i * k_total + kk];
    };
    for (std::size_t i0 = 0; i0 < m; i0 += MR) {
        const std::size_t mr = std::min(MR, m - i0);
        for (std::size_t j0 = 0; j0 < n; j0 += NR) {
            const std::size_t nr = std::min(NR, n - j0);
            if (mr == MR && nr == NR) {
                double acc[MR][NR];
                for (std::size_t r = 0; r < MR; ++r)
                    for (std::size_t x = 0; x < NR; ++x) acc[r][x] = c[(i0 + r) * n + j0 + x];
                for (std::size_t kk = k0; kk < k1; ++kk) {
                    float av[MR];
                    bool all_zero = true;
#pragma GCC unroll 8
                    for (std::size_t r = 0; r < MR; ++r) {
                        av[r] = a_at(i0 + r, kk);
                        all_zero &= (av[r] == 0.0f);
                    }
                    if (skip_zero_a && all_zero) continue;
                    const float* brow = b + kk * n + j0;
#pragma GCC unroll 8
                    for (std::size_t r = 0; r < MR; ++r) {
                        const double ar = av[r];
                        for (std::size_t x = 0; x < NR; ++x)
                            acc[r][x] += ar * static_cast<double>(brow[x]);
                    }
                }
                for (std::size_t r = 0; r < MR; ++r)
                    for (std::size_t x = 0; x < NR; ++x) c[(i0 + r) * n + j0 + x] = acc[r][x];
            } else {
                for (std::size_t r = 0; r < mr; ++r) {
                    for (std::size_t x = 0; x < nr; ++x) {
                        double s = c[(i0 + r) * n + j0 + x];
                        for (std::size_t kk = k0; kk < k1; ++kk) {
                            const float av = a_at(i0 + r, kk);
                            if (skip_zero_a && av == 0.0f) continue;
                            s += static_cast<double>(av) * static_cast<double>(b[kk * n + j0 + x]);
                        }
                        c[(i0 + r) * n + j0 + x] = s;
                    }
                }
            }
        }
    }
}

// Scalar fallback for tile edges: k-inner per element, same summation order.
template <bool TransA>
void gemm_scalar_block(double* c, const float* a, const float* b,
                       std::size_t m, std::size_t k_total, std::size_t n,
                       std::size_t i0, std::size_t i1, std::size_t j0, std::size_t j1,
                       std::size_t k0, std::size_t k1) {
    const auto a_at = [&](std::size_t i, std::size_t kk) {
        if constexpr (TransA) return a[kk * m + i];
        else return a[i * k_total + kk];
    };
    for (std::size_t i = i0; i < i1; ++i) {
        for (std::size_t j = j0; j < j1; ++j) {
            double s = c[i * n + j];
            for (std::size_t kk = k0; kk < k1; ++kk)
                s += static_cast<double>(a_at(i, kk)) * static_cast<double>(b[kk * n + j]);
            c[i * n + j] = s;
        }
    }
}

#if defined(__AVX512F__)

// 8x24 register tile on packed double panels. Packing only moves data
// (float->double conversion is exact), so every output element still sums
// its k-terms in ascending order.
template <bool TransA>
void gemm_wide_avx512(double* c, const float* a, const float* b,
                      std::size_t m, std::size_t k, std::size_t n) {
    constexpr std::size_t WNR = 24;
    const auto a_at = [&](std::size_t i, std::size_t kk) {
        if constexpr (TransA) return a[kk * m + i];
        else return a[i * k + kk];
    };
    thread_local std::vector<double> bpack, apack;
    const std::size_t m8 = m - m % MR;
    const std::size_t nb = n - n % WNR;
    for (std::size_t k0 = 0; k0 < k; k0 += KB) {
        const std::size_t k1 = std::min(k0 + KB, k);
        const std::size_t kb = k1 - k0;
        for (std::size_t j0 = 0; j0 < nb; j0 += WNR) {
            bpack.resize(kb * WNR);
            for (std::size_t kk = 0; kk < kb; ++kk)
                for (std::size_t x = 0; x < WNR; ++x)
                    bpack[kk * WNR + x] = b[(k0 + kk) * n + j0 + x];
            for (std::size_t i0 = 0; i0 < m8; i0 += MR) {
                apack.resize(kb * MR);
                for (std::size_t kk = 0; kk < kb; ++kk)
                    for (std::size_t r = 0; r < MR; ++r)
                        apack[kk * MR + r] = a_at(i0 + r, k0 + kk);
                __m512d acc[MR][3];
                for (std::size_t r = 0; r < MR; ++r)
                    for (std::size_t v = 0; v < 3; ++v)
                        acc[r][v] = _mm512_loadu_pd(c + (i0 + r) * n + j0 + v * 8);
                const double* ap = apack.data();
                const double* bp = bpack.data();
                for (std::size_t kk = 0; kk < kb; ++kk) {
                    const __m512d b0 = _mm512_loadu_pd(bp + kk * WNR);
                    const __m512d b1 = _mm512_loadu_pd(bp + kk * WNR + 8);
                    const __m512d b2 = _mm512_loadu_pd(bp + kk * WNR + 16);
#pragma GCC unroll 8
                    for (std::size_t r = 0; r < MR; ++r) {
                        const __m512d ar = _mm512_set1_pd(ap[kk * MR + r]);
                        acc[r][0] = _mm512_fmadd_pd(ar, b0, acc[r][0]);
                        acc[r][1] = _mm512_fmadd_pd(ar, b1, acc[r][1]);
                        acc[r][2] = _mm512_fmadd_pd(ar, b2, acc[r][2]);
                    }
                }
                for (std::size_t r = 0; r < MR; ++r)
                    for (std::size_t v = 0; v < 3; ++v)
                        _mm512_storeu_pd(c + (i0 + r) * n + j0 + v * 8, acc[r][v]);
            }
        }
        // edges: leftover rows across all columns, leftover columns for full rows
        gemm_scalar_block<TransA>(c, a, b, m, k, n, m8, m, 0, nb, k0, k1);
        gemm_scalar_block<TransA>(c, a, b, m, k, n, 0, m, nb, n, k0, k1);
    }
}

// Narrow-N (n <= 16) variant: 8 x {8,16} tile on a zero-padded packed B.
template <bool TransA, std::size_t NP>
void gemm_narrow_avx512(double* c, const float* a, const float* b,
                        std::size_t m, std::size_t k, std::size_t n) {
    constexpr std::size_t NV = NP / 8;
    const auto a_at = [&](std::size_t i, std::size_t kk) {
        if constexpr (TransA) return a[kk * m + i];
        else return a[i * k + kk];
    };
    thread_local std::vector<double> bpack, apack;
    const std::size_t m8 = m - m % MR;
    for (std::size_t k0 = 0; k0 < k; k0 += KB) {
        const std::size_t k1 = std::min(k0 + KB, k);
        const std::size_t kb = k1 - k0;
        bpack.assign(kb * NP, 0.0);
        for (std::size_t kk = 0; kk < kb; ++kk)
            for (std::size_t x = 0; x < n; ++x)
                bpack[kk * NP + x] = b[(k0 + kk) * n + x];
        for (std::size_t i0 = 0; i0 < m8; i0 += MR) {
            apack.resize(kb * MR);
            for (std::size_t kk = 0; kk < kb; ++kk)
                for (std::size_t r = 0; r < MR; ++r)
                    apack[kk * MR + r] = a_at(i0 + r, k0 + kk);
            __m512d acc[MR][NV];
            double ctile[MR][NP] = {};
            for (std::size_t r = 0; r < MR; ++r)
                for (std::size_t x = 0; x < n; ++x) ctile[r][x] = c[(i0 + r) * n + x];
            for (std::size_t r = 0; r < MR; ++r)
                for (std::size_t v = 0; v < NV; ++v)
                    acc[r][v] = _mm512_loadu_pd(&ctile[r][v * 8]);
            const double* ap = apack.data();
            const double* bp = bpack.data();
            for (std::size_t kk = 0; kk < kb; ++kk) {
                __m512d bv[NV];
                for (std::size_t v = 0; v < NV; ++v)
                    bv[v] = _mm512_loadu_pd(bp + kk * NP + v * 8);
#pragma GCC unroll 8
                for (std::size_t r = 0; r < MR; ++r) {
                    const __m512d ar = _mm512_set1_pd(ap[kk * MR + r]);
                    for (std::size_t v = 0; v < NV; ++v)
                        acc[r][v] = _mm512_fmadd_pd(ar, bv[v], acc[r][v]);
                }
            }
            for (std::size_t r = 0; r < MR; ++r)
                for (std::size_t v = 0; v < NV; ++v)
                    _mm512_storeu_pd(&ctile[r][v * 8], acc[r][v]);
            for (std::size_t r = 0; r < MR; ++r)
                for (std::size_t x = 0; x < n; ++x) c[(i0 + r) * n + x] = ctile[r][x];
        }
        gemm_scalar_block<TransA>(c, a, b, m, k, n, m8, m, 0, n, k0, k1);
    }
}

#endif  // __AVX512F__

template <bool TransA>
void gemm_blocked(double* c, const float* a, const float* b,
                  std::size_t m, std::size_t k, std::size_t n, bool skip_zero_a) {
#if defined(__AVX512F__)
    if (!skip_zero_a) {
        if (n <= 8) {
            gemm_narrow_avx512<TransA, 8>(c, a, b, m, k, n);
        } else if (n <= NARROW_N) {
            gemm_narrow_avx512<TransA, 16>(c, a, b, m, k, n);
        } else {
            gemm_wide_avx512<TransA>(c, a, b, m, k, n);
        }
        return;
    }
#endif
    if (n <= NARROW_N && k >= 64) {
        gemm_narrow<TransA>(c, a, b, m, k, n, skip_zero_a);
        return;
    }
    for (std::size_t k0 = 0; k0 < k; k0 += KB)
        gemm_panel<TransA>(c, a, b, m, k, n, k0, std::min(k0 + KB, k), skip_zero_a);
}

}  // namespace

void gemm_nn(double* c, const float* a, const float* b,
             std::size_t m, std::size_t k, std::size_t n, bool skip_zero_a) {
    gemm_blocked<false>(c, a, b, m, k, n, skip_zero_a);
}

void gemm_tn(double* c, const float* a_km, const float* b,
             std::size_t m, std::size_t k, std::size_t n) {
    gemm_blocked<true>(c, a_km, b, m, k, n, false);
}

void matvec_acc(double* y, const float* a, const float* x,
                std::size_t m, std::size_t k, bool skip_zero_x) {
    for (std::size_t i = 0; i < m; ++i) {
        double s = y[i];
        const float* arow = a + i * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const float xv = x[kk];
            if (skip_zero_x && xv == 0.0f) continue;
            s += static_cast<double>(arow[kk]) * static_cast<double>(xv);
        }
        y[i] = s;
    }
}

void weighted_rowsum_acc(double* y, const float* a, const float* e,
                         std::size_t k, std::size_t n) {
    for (std::size_t kk = 0; kk < k; ++kk) {
        const double ev = e[kk];
        if (ev == 0.0) continue;
        const float* arow = a + kk * n;
        for (std::size_t x = 0; x < n; ++x) y[x] += ev * static_cast<double>(arow[x]);
    }
}

void round_to_f32(const double* src, float* dst, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<float>(src[i]);
}

void im2col(const float* img, std::size_t c, std::size_t h, std::size_t w,
            std::size_t kh, std::size_t kw, std::size_t stride, float* cols) {
    const std::size_t oh = (h - kh) / stride + 1;
    const std::size_t ow = (w - kw) / stride + 1;
    const std::size_t p = oh * ow;
    std::size_t row = 0;
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t y = 0; y < kh; ++y) {
            for (std::size_t x = 0; x < kw; ++x, ++row) {
                float* out = cols + row * p;
                for (std::size_t py = 0; py < oh; ++py) {
                    const float* src = img + (ci * h + py * stride + y) * w + x;
                    if (stride == 1) {
                        std::memcpy(out + py * ow, src, ow * sizeof(float));
                    } else {
                        for (std::size_t px = 0; px < ow; ++px) out[py * ow + px] = src[px * stride];
                    }
                }
            }
        }
    }
}

void im2col_t(const float* img, std::size_t c, std::size_t h, std::size_t w,
              std::size_t kh, std::size_t kw, std::size_t stride, float* cols_t) {
    const std::size_t oh = (h - kh) / stride + 1;
    const std::size_t ow = (w - kw) / stride + 1;
    const std::size_t ck = c * kh * kw;
    for (std::size_t py = 0; py < oh; ++py) {
        for (std::size_t px = 0; px < ow; ++px) {
            float* out = cols_t + (py * ow + px) * ck;
            std::size_t col = 0;
            for (std::size_t ci = 0; ci < c; ++ci) {
                for (std::size_t y = 0; y < kh; ++y) {
                    const float* src = img + (ci * h + py * stride + y) * w + px * stride;
                    for (std::size_t x = 0; x < kw; ++x) out[col++] = src[x];
                }
            }
        }
    }
}

void col2im_acc(const float* cols, std::size_t c, std::size_t h, std::size_t w,
                std::size_t kh, std::size_t kw, std::size_t stride, double* img_acc) {
    const std::size_t oh = (h - kh) / stride + 1;
    const std::size_t ow = (w - kw) / stride + 1;
    const std::size_t p = oh * ow;
    std::size_t row = 0;
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t y = 0; y < kh; ++y) {
            for (std::size_t x = 0; x < kw; ++x, ++row) {
                const float* src = cols + row * p;
                for (std::size_t py = 0; py < oh; ++py) {
                    double* dst = img_acc + (ci * h + py * stride + y) * w + x;
                    for (std::size_t px = 0; px < ow; ++px)
                        dst[px * stride] += static_cast<double>(src[py * ow + px]);
                }
            }
        }
    }
}

}  // namespace kern

// ---------------------------------------------------------------------------
// Public ops

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeError("matmul expects rank-2 tensors");
    if (a.dim(1) != b.dim(0))
        throw ShapeError("matmul inner dimensions disagree: " + std::to_string(a.dim(1)) +
                         " vs " + std::to_string(b.dim(0)));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> acc(m * n, 0.0);
    kern::gemm_nn(acc.data(), a.data(), b.data(), m, k, n);
    Tensor out({m, n});
    kern::round_to_f32(acc.data(), out.data(), out.size());
    return out;
}

namespace {

void check_conv_shapes(const std::vector<std::size_t>& in_shape, const Tensor& kernels,
                       std::size_t stride) {
    if (in_shape.size() != 3 || kernels.rank() != 4)
        throw ShapeError("conv2d expects input [C,H,W] and kernels [O,C,kh,kw]");
    if (stride < 1) throw ShapeError("conv2d stride must be >= 1");
    if (kernels.dim(1) != in_shape[0])
        throw ShapeError("conv2d kernel channels do not match input channels");
    if (kernels.dim(2) > in_shape[1] || kernels.dim(3) > in_shape[2])
        throw ShapeError("conv2d kernel larger than input");
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride) {
    check_conv_shapes(input.shape(), kernels, stride);
    const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
    const std::size_t o = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
    const std::size_t oh = (h - kh) / stride + 1, ow = (w - kw) / stride + 1;
    const std::size_t ck = c * kh * kw, p = oh * ow;

    std::vector<float> cols(ck * p);
    kern::im2col(input.data(), c, h, w, kh, kw, stride, cols.data());
    std::vector<double> acc(o * p, 0.0);
    kern::gemm_nn(acc.data(), kernels.data(), cols.data(), o, ck, p);
    Tensor out({o, oh, ow});
    kern::round_to_f32(acc.data(), out.data(), out.size());
    return out;
}

Tensor conv2d_input_grad(const Tensor& out_grad, const Tensor& kernels,
                         const std::vector<std::size_t>& input_shape, std::size_t stride) {
    check_conv_shapes(input_shape, kernels, stride);
    const std::size_t c = input_shape[0], h = input_shape[1], w = input_shape[2];
    const std::size_t o = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
    const std::size_t oh = (h - kh) / stride + 1, ow = (w - kw) / stride + 1;
    if (out_grad.rank() != 3 || out_grad.dim(0) != o || out_grad.dim(1) != oh ||
        out_grad.dim(2) != ow)
        throw ShapeError("conv2d_input_grad: out_grad shape inconsistent with forward conv");
    const std::size_t ck = c * kh * kw, p = oh * ow;

    // cols = kernels^T * out_grad, then scatter back to the image grid.
    std::vector<double> cols_acc(ck * p, 0.0);
    kern::gemm_tn(cols_acc.data(), kernels.data(), out_grad.data(), ck, o, p);
    std::vector<float> cols(ck * p);
    kern::round_to_f32(cols_acc.data(), cols.data(), cols.size());

    std::vector<double> img_acc(c * h * w, 0.0);
    kern::col2im_acc(cols.data(), c, h, w, kh, kw, stride, img_acc.data());
    Tensor out({c, h, w});
    kern::round_to_f32(img_acc.data(), out.data(), out.size());
    return out;
}

Tensor conv2d_kernel_grad(const Tensor& input, const Tensor& out_grad,
                          const std::vector<std::size_t>& kernel_shape, std::size_t stride) {
    if (kernel_shape.size() != 4) throw ShapeError("conv2d_kernel_grad expects kernel shape [O,C,kh,kw]");
    const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
    const std::size_t o = kernel_shape[0], kh = kernel_shape[2], kw = kernel_shape[3];
    if (kernel_shape[1] != c) throw ShapeError("conv2d_kernel_grad channel mismatch");
    const std::size_t oh = (h - kh) / stride + 1, ow = (w - kw) / stride + 1;
    if (out_grad.rank() != 3 || out_grad.dim(0) != o || out_grad.dim(1) != oh ||
        out_grad.dim(2) != ow)
        throw ShapeError("conv2d_kernel_grad: out_grad shape inconsistent with forward conv");
    const std::size_t ck = c * kh * kw, p = oh * ow;

    std::vector<float> cols_t(p * ck);
    kern::im2col_t(input.data(), c, h, w, kh, kw, stride, cols_t.data());
    std::vector<double> acc(o * ck, 0.0);
    kern::gemm_nn(acc.data(), out_grad.data(), cols_t.data(), o, p, ck);
    Tensor out({o, c, kh, kw});
    kern::round_to_f32(acc.data(), out.data(), out.size());
    return out;
}

namespace {
void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) throw ShapeError(std::string(op) + ": shape mismatch");
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "hadamard");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
    return out;
}

Tensor scale(const Tensor& a, float s) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
    return out;
}

Tensor sign(const Tensor& a) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = out[i] > 0.0f ? 1.0f : (out[i] < 0.0f ? -1.0f : 0.0f);
    return out;
}

Tensor clamp(const Tensor& a, float lo, float hi) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], lo, hi);
    return out;
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "max_abs_diff");
    float m = 0.0f;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

Tensor transpose2d(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("transpose2d expects rank-2");
    Tensor out({a.dim(1), a.dim(0)});
    for (std::size_t i = 0; i < a.dim(0); ++i)
        for (std::size_t j = 0; j < a.dim(1); ++j) out.at(j, i) = a.at(i, j);
    return out;
}

}  // namespace snn
