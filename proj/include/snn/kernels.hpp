#pragma once

#include <cstddef>

// Low-level compute kernels shared by the tensor ops and the network
// forward/backward passes. Every kernel accumulates each output element in
// double precision with the contraction index ascending, so results are
// bit-identical to a naive nested loop no matter how the inner loops are
// tiled or vectorized (float*float products are exact in double).
namespace snn::kern {

/// c[m x n] += a[m x k] * b[k x n], all row-major, c in double.
/// With skip_zero_a, k-iterations whose a-values are exactly zero are
/// skipped; spike matrices are binary so this is a large win and does not
/// change any sum.
void gemm_nn(double* c, const float* a, const float* b,
             std::size_t m, std::size_t k, std::size_t n, bool skip_zero_a = false);

/// c[m x n] += transpose(a_km)[m x k] * b[k x n] where a_km is stored [k x m].
void gemm_tn(double* c, const float* a_km, const float* b,
             std::size_t m, std::size_t k, std::size_t n);

/// y[m] += a[m x k] * x[k], k ascending per row.
void matvec_acc(double* y, const float* a, const float* x,
                std::size_t m, std::size_t k, bool skip_zero_x = false);

/// y[n] += sum_k e[k] * a[k x n] -- transpose-matvec as a weighted row sum,
/// vectorized across columns.
void weighted_rowsum_acc(double* y, const float* a, const float* e,
                         std::size_t k, std::size_t n);

/// Round a double buffer into a float buffer.
void round_to_f32(const double* src, float* dst, std::size_t n);

/// Patch matrix [C*kh*kw x P] for valid conv, P = out_h*out_w.
void im2col(const float* img, std::size_t c, std::size_t h, std::size_t w,
            std::size_t kh, std::size_t kw, std::size_t stride, float* cols);

/// Transposed patch matrix [P x C*kh*kw].
void im2col_t(const float* img, std::size_t c, std::size_t h, std::size_t w,
              std::size_t kh, std::size_t kw, std::size_t stride, float* cols_t);

/// Scatter-add of a patch matrix back onto the image grid (adjoint of
/// im2col); accumulates into a double image buffer.
void col2im_acc(const float* cols, std::size_t c, std::size_t h, std::size_t w,
                std::size_t kh, std::size_t kw, std::size_t stride, double* img_acc);

}  // namespace snn::kern
