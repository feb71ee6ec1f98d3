#pragma once

#include "qbench/quant.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace qbench {

// fp32 reference operand, row-major.
struct DenseMatrix {
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    std::vector<float> values;
};

// Batch of b activation columns, column-major (each column one n-vector).
struct ThinMatrix {
    std::int64_t rows = 0; // n
    std::int64_t cols = 0; // b
    std::vector<float> values;

    std::span<const float> column(std::int64_t j) const {
        return {values.data() + j * rows, static_cast<std::size_t>(rows)};
    }
};

// a.scale * b.scale * S with S = sum_i (a.code_i - 8) * b.code_i.
// S is exact 32-bit integer arithmetic; the float combine is
// ((a.d * b.d) * S), both multiplications in fp32.
float dot_block_q4_q8(const BlockQ4& a, const BlockQ8& b);
float dot_block_q4_q8_scalar(const BlockQ4& a, const BlockQ8& b);

// True when dot_block_q4_q8 dispatches to the lane-parallel path.
bool kernel_simd_enabled();

// out_r = per-row block dots accumulated left-to-right in fp32.
std::vector<float> gemv_q4_q8(const QuantMatrixQ4& A, const QuantVectorQ8& x);
std::vector<float> gemv_q4_q8_scalar(const QuantMatrixQ4& A, const QuantVectorQ8& x);

// Worker-facing slice: computes rows [row_begin, row_end), writing
// out[row_begin..row_end). out must point at the full m-element buffer.
void gemv_q4_q8_rows(const QuantMatrixQ4& A, const QuantVectorQ8& x,
                     std::int64_t row_begin, std::int64_t row_end, float* out);

// The full kernel: quantize x to Q8, then gemv_q4_q8.
std::vector<float> gemv_quantizing(const QuantMatrixQ4& A, std::span<const float> x);

// Thin-matrix extension: column j of the m x b column-major result is
// bitwise-equal to gemv_quantizing(A, X.column(j)); A blocks are reused
// across columns.
std::vector<float> gemm_thin(const QuantMatrixQ4& A, const ThinMatrix& X);
void gemm_thin_rows(const QuantMatrixQ4& A, std::span<const QuantVectorQ8> columns,
                    std::int64_t row_begin, std::int64_t row_end, float* out);

// fp64-accumulated dense matrix-vector product, rounded to fp32 at the end.
std::vector<float> gemv_f32_reference(const DenseMatrix& A, std::span<const float> x);

// Speed baseline: dequantizes each A block to fp32 on the fly and does an
// fp32 dot with the un-quantized x. No Q8 error; used only for comparison.
std::vector<float> gemv_naive_baseline(const QuantMatrixQ4& A, std::span<const float> x);
void gemv_naive_baseline_rows(const QuantMatrixQ4& A, std::span<const float> x,
                              std::int64_t row_begin, std::int64_t row_end, float* out);

} // namespace qbench
