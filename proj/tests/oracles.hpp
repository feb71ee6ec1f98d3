#pragma once

// Test-side fp64 oracles, independent of the kernel implementation paths:
// operands are dequantized in double precision straight from the stored
// codes and accumulated in double.

#include "qbench/kernels.hpp"
#include "qbench/quant.hpp"
#include "qbench/rng.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace testutil {

inline double oracle_dequant_q4(const qbench::BlockQ4& b, int i) {
    return static_cast<double>(b.code(i) - 8) * static_cast<double>(b.d);
}

inline double oracle_dequant_q8(const qbench::BlockQ8& b, int i) {
    return static_cast<double>(b.qs[static_cast<std::size_t>(i)]) * static_cast<double>(b.d);
}

inline double oracle_dot_block(const qbench::BlockQ4& a, const qbench::BlockQ8& b) {
    double sum = 0.0;
    for (int i = 0; i < qbench::kBlockSize; ++i)
        sum += oracle_dequant_q4(a, i) * oracle_dequant_q8(b, i);
    return sum;
}

// fp64 dequantized-operand GEMV oracle.
inline std::vector<double> oracle_gemv(const qbench::QuantMatrixQ4& A,
                                       const qbench::QuantVectorQ8& x) {
    std::vector<double> out(static_cast<std::size_t>(A.m));
    for (std::int64_t r = 0; r < A.m; ++r) {
        double acc = 0.0;
        for (std::int64_t k = 0; k < A.blocks_per_row(); ++k)
            acc += oracle_dot_block(A.row(r)[k], x.blocks[static_cast<std::size_t>(k)]);
        out[static_cast<std::size_t>(r)] = acc;
    }
    return out;
}

// fp64 oracle for the naive baseline: dequantized A against unquantized x.
inline std::vector<double> oracle_gemv_dense_x(const qbench::QuantMatrixQ4& A,
                                               std::span<const float> x) {
    std::vector<double> out(static_cast<std::size_t>(A.m));
    for (std::int64_t r = 0; r < A.m; ++r) {
        double acc = 0.0;
        for (std::int64_t k = 0; k < A.blocks_per_row(); ++k)
            for (int i = 0; i < qbench::kBlockSize; ++i)
                acc += oracle_dequant_q4(A.row(r)[k], i) *
                       static_cast<double>(x[static_cast<std::size_t>(k * qbench::kBlockSize + i)]);
        out[static_cast<std::size_t>(r)] = acc;
    }
    return out;
}

inline std::vector<float> random_values(qbench::Rng& rng, std::size_t count, double scale = 1.0) {
    std::vector<float> out(count);
    for (float& v : out)
        v = rng.gaussian_f32(scale);
    return out;
}

inline qbench::QuantMatrixQ4 random_qmat(qbench::Rng& rng, std::int64_t m, std::int64_t n) {
    return qbench::quantize_matrix_q4(m, n, random_values(rng, static_cast<std::size_t>(m * n)));
}

} // namespace testutil
