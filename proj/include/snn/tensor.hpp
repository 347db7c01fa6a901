#pragma once

#include <cstddef>
#include <cstdint>
#include <cmath>
#include <vector>

#include "snn/error.hpp"

namespace snn {

/// Dense n-dimensional array of 32-bit floats in row-major order.
///
/// Tensors are plain values: copyable, movable, and immutable by convention
/// once handed to another module. All reductions longer than a handful of
/// terms are accumulated in double precision internally and rounded to
/// float once on output, which keeps results independent of vectorization
/// width and bit-reproducible across runs.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<float> data);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_[i]; }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    /// Rank-2 element access (row-major).
    float& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    float at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;

    void fill(float v);
    Tensor reshaped(std::vector<std::size_t> shape) const;

private:
    std::vector<std::size_t> shape_;
    std::vector<float> data_;
};

std::size_t shape_product(const std::vector<std::size_t>& shape);

/// Counter-based random generator (splitmix64). The sequence is a pure
/// function of the 64-bit state, so identical seeds give identical draws on
/// every platform. Streams derived via `derive` are independent and stable,
/// which is how all parameter/feedback/shuffle randomness is keyed.
///
/// Algorithm (frozen): state += 0x9E3779B97F4A7C15; z = state;
/// z = (z ^ z>>30) * 0xBF58476D1CE4E5B9; z = (z ^ z>>27) * 0x94D049BB133111EB;
/// output z ^ z>>31. Uniform floats take the top 24 bits, giving exactly
/// representable values in [0,1).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    /// Stable independent stream keyed by (seed, stream, substream).
    static Rng derive(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream = 0);

    std::uint64_t next_u64();

    /// Uniform in [0, 1), 24 bits of resolution.
    float next_unit();

    /// Uniform in [-bound, +bound).
    float next_uniform(float bound) { return (2.0f * next_unit() - 1.0f) * bound; }

    /// Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n);

private:
    std::uint64_t state_;
};

/// i.i.d. uniform tensor in [-bound, +bound), deterministic given the rng state.
Tensor seeded_uniform(Rng& rng, std::vector<std::size_t> shape, float bound);

/// Standard matrix product of rank-2 tensors [m x k] * [k x n] -> [m x n].
Tensor matmul(const Tensor& a, const Tensor& b);

/// Valid (no padding) cross-correlation, deep-learning convention: no kernel
/// flip. input [C,H,W], kernels [O,C,kh,kw] -> [O,H',W'] with
/// H' = (H-kh)/stride + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride);

/// Gradient of conv2d output w.r.t. its input, computed with the supplied
/// kernels (callers pass either the forward kernels or a feedback tensor of
/// the same shape).
Tensor conv2d_input_grad(const Tensor& out_grad, const Tensor& kernels,
                         const std::vector<std::size_t>& input_shape, std::size_t stride);

/// Gradient of conv2d output w.r.t. the kernels.
Tensor conv2d_kernel_grad(const Tensor& input, const Tensor& out_grad,
                          const std::vector<std::size_t>& kernel_shape, std::size_t stride);

// Elementwise helpers. All are pure and shape-checked.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
Tensor sign(const Tensor& a);  // sign(0) = 0
Tensor clamp(const Tensor& a, float lo, float hi);
float max_abs_diff(const Tensor& a, const Tensor& b);
Tensor transpose2d(const Tensor& a);

}  // namespace snn
