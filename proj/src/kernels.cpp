#include "qbench/kernels.hpp"

#include <stdexcept>
#include <string>

#if defined(__SSE2__)
#include <emmintrin.h>
#define QBENCH_SIMD_SSE2 1
#else
#define QBENCH_SIMD_SSE2 0
#endif

namespace qbench {

namespace {

void check_gemv_shapes(const QuantMatrixQ4& A, std::int64_t xn) {
    if (A.m < 1 || A.n < 1 || A.n % kBlockSize != 0)
        throw std::invalid_argument("gemv: invalid matrix shape");
    if (A.blocks.size() !=
        static_cast<std::size_t>(A.m) * static_cast<std::size_t>(A.blocks_per_row()))
        throw std::invalid_argument("gemv: block count does not match shape");
    if (A.n != xn)
        throw std::invalid_argument("gemv: dimension mismatch, A.n=" + std::to_string(A.n) +
                                    " x.n=" + std::to_string(xn));
}

inline std::int32_t dot_codes_scalar(const BlockQ4& a, const BlockQ8& b) {
    std::int32_t sum = 0;
    for (int j = 0; j < kBlockSize / 2; ++j) {
        const std::uint8_t byte = a.qs[static_cast<std::size_t>(j)];
        const std::int32_t a0 = (byte & 0x0F) - 8;
        const std::int32_t a1 = (byte >> 4) - 8;
        sum += a0 * b.qs[static_cast<std::size_t>(2 * j)];
        sum += a1 * b.qs[static_cast<std::size_t>(2 * j + 1)];
    }
    return sum;
}

#if QBENCH_SIMD_SSE2
inline std::int32_t dot_codes_sse2(const BlockQ4& a, const BlockQ8& b) {
    const __m128i low_mask = _mm_set1_epi8(0x0F);
    const __m128i zero = _mm_setzero_si128();
    const __m128i eight = _mm_set1_epi16(8);

    const __m128i packed = _mm_loadu_si128(reinterpret_cast<const __m128i*>(a.qs.data()));
    const __m128i even = _mm_and_si128(packed, low_mask);
    const __m128i odd = _mm_and_si128(_mm_srli_epi16(packed, 4), low_mask);
    // interleave even/odd nibbles back into natural code order
    const __m128i a0 = _mm_unpacklo_epi8(even, odd); // codes 0..15
    const __m128i a1 = _mm_unpackhi_epi8(even, odd); // codes 16..31

    const __m128i b0 = _mm_loadu_si128(reinterpret_cast<const __m128i*>(b.qs.data()));
    const __m128i b1 = _mm_loadu_si128(reinterpret_cast<const __m128i*>(b.qs.data() + 16));
    const __m128i b0s = _mm_cmpgt_epi8(zero, b0);
    const __m128i b1s = _mm_cmpgt_epi8(zero, b1);

    // widen to 16-bit; products fit comfortably, madd pairs are exact
    const __m128i a0l = _mm_sub_epi16(_mm_unpacklo_epi8(a0, zero), eight);
    const __m128i a0h = _mm_sub_epi16(_mm_unpackhi_epi8(a0, zero), eight);
    const __m128i a1l = _mm_sub_epi16(_mm_unpacklo_epi8(a1, zero), eight);
    const __m128i a1h = _mm_sub_epi16(_mm_unpackhi_epi8(a1, zero), eight);
    const __m128i b0l = _mm_unpacklo_epi8(b0, b0s);
    const __m128i b0h = _mm_unpackhi_epi8(b0, b0s);
    const __m128i b1l = _mm_unpacklo_epi8(b1, b1s);
    const __m128i b1h = _mm_unpackhi_epi8(b1, b1s);

    __m128i acc = _mm_madd_epi16(a0l, b0l);
    acc = _mm_add_epi32(acc, _mm_madd_epi16(a0h, b0h));
    acc = _mm_add_epi32(acc, _mm_madd_epi16(a1l, b1l));
    acc = _mm_add_epi32(acc, _mm_madd_epi16(a1h, b1h));

    acc = _mm_add_epi32(acc, _mm_shuffle_epi32(acc, _MM_SHUFFLE(1, 0, 3, 2)));
    acc = _mm_add_epi32(acc, _mm_shuffle_epi32(acc, _MM_SHUFFLE(2, 3, 0, 1)));
    return _mm_cvtsi128_si32(acc);
}
#endif

inline std::int32_t dot_codes(const BlockQ4& a, const BlockQ8& b) {
#if QBENCH_SIMD_SSE2
    return dot_codes_sse2(a, b);
#else
    return dot_codes_scalar(a, b);
#endif
}

inline float combine(float da, float db, std::int32_t s) {
    return (da * db) * static_cast<float>(s);
}

template <std::int32_t (*DotCodes)(const BlockQ4&, const BlockQ8&)>
void gemv_rows_impl(const QuantMatrixQ4& A, const QuantVectorQ8& x, std::int64_t row_begin,
                    std::int64_t row_end, float* out) {
    const std::int64_t nb = A.blocks_per_row();
    const BlockQ8* xb = x.blocks.data();
    for (std::int64_t r = row_begin; r < row_end; ++r) {
        const BlockQ4* ab = A.row(r);
        float acc = 0.0f;
        for (std::int64_t k = 0; k < nb; ++k)
            acc += combine(ab[k].d, xb[k].d, DotCodes(ab[k], xb[k]));
        out[r] = acc;
    }
}

} // namespace

float dot_block_q4_q8(const BlockQ4& a, const BlockQ8& b) {
    return combine(a.d, b.d, dot_codes(a, b));
}

float dot_block_q4_q8_scalar(const BlockQ4& a, const BlockQ8& b) {
    return combine(a.d, b.d, dot_codes_scalar(a, b));
}

bool kernel_simd_enabled() {
    return QBENCH_SIMD_SSE2 != 0;
}

void gemv_q4_q8_rows(const QuantMatrixQ4& A, const QuantVectorQ8& x, std::int64_t row_begin,
                     std::int64_t row_end, float* out) {
    gemv_rows_impl<dot_codes>(A, x, row_begin, row_end, out);
}

std::vector<float> gemv_q4_q8(const QuantMatrixQ4& A, const QuantVectorQ8& x) {
    check_gemv_shapes(A, x.n);
    std::vector<float> out(static_cast<std::size_t>(A.m));
    gemv_rows_impl<dot_codes>(A, x, 0, A.m, out.data());
    return out;
}

std::vector<float> gemv_q4_q8_scalar(const QuantMatrixQ4& A, const QuantVectorQ8& x) {
    check_gemv_shapes(A, x.n);
    std::vector<float> out(static_cast<std::size_t>(A.m));
    gemv_rows_impl<dot_codes_scalar>(A, x, 0, A.m, out.data());
    return out;
}

std::vector<float> gemv_quantizing(const QuantMatrixQ4& A, std::span<const float> x) {
    check_gemv_shapes(A, static_cast<std::int64_t>(x.size()));
    return gemv_q4_q8(A, quantize_vec_q8(x));
}

void gemm_thin_rows(const QuantMatrixQ4& A, std::span<const QuantVectorQ8> columns,
                    std::int64_t row_begin, std::int64_t row_end, float* out) {
    const std::int64_t nb = A.blocks_per_row();
    const std::int64_t b = static_cast<std::int64_t>(columns.size());
    // A blocks are loaded once per (row, block) and reused across columns;
    // per-column accumulation stays left-to-right over blocks.
    std::vector<float> acc(static_cast<std::size_t>(b));
    for (std::int64_t r = row_begin; r < row_end; ++r) {
        const BlockQ4* ab = A.row(r);
        std::fill(acc.begin(), acc.end(), 0.0f);
        for (std::int64_t k = 0; k < nb; ++k) {
            const BlockQ4& blk = ab[k];
            for (std::int64_t j = 0; j < b; ++j)
                acc[static_cast<std::size_t>(j)] +=
                    combine(blk.d, columns[static_cast<std::size_t>(j)].blocks[static_cast<std::size_t>(k)].d,
                            dot_codes(blk, columns[static_cast<std::size_t>(j)].blocks[static_cast<std::size_t>(k)]));
        }
        for (std::int64_t j = 0; j < b; ++j)
            out[j * A.m + r] = acc[static_cast<std::size_t>(j)];
    }
}

std::vector<float> gemm_thin(const QuantMatrixQ4& A, const ThinMatrix& X) {
    check_gemv_shapes(A, X.rows);
    if (X.cols < 1)
        throw std::invalid_argument("gemm_thin: batch must be >= 1");
    if (X.values.size() != static_cast<std::size_t>(X.rows) * static_cast<std::size_t>(X.cols))
        throw std::invalid_argument("gemm_thin: value count does not match shape");

    std::vector<QuantVectorQ8> columns;
    columns.reserve(static_cast<std::size_t>(X.cols));
    for (std::int64_t j = 0; j < X.cols; ++j)
        columns.push_back(quantize_vec_q8(X.column(j)));

    std::vector<float> out(static_cast<std::size_t>(A.m) * static_cast<std::size_t>(X.cols));
    gemm_thin_rows(A, columns, 0, A.m, out.data());
    return out;
}

std::vector<float> gemv_f32_reference(const DenseMatrix& A, std::span<const float> x) {
    if (A.rows < 1 || A.cols < 1)
        throw std::invalid_argument("reference gemv: invalid shape");
    if (A.values.size() != static_cast<std::size_t>(A.rows) * static_cast<std::size_t>(A.cols))
        throw std::invalid_argument("reference gemv: value count does not match shape");
    if (static_cast<std::int64_t>(x.size()) != A.cols)
        throw std::invalid_argument("reference gemv: dimension mismatch");

    std::vector<float> out(static_cast<std::size_t>(A.rows));
    for (std::int64_t r = 0; r < A.rows; ++r) {
        const float* row = A.values.data() + r * A.cols;
        double acc = 0.0;
        for (std::int64_t c = 0; c < A.cols; ++c)
            acc += static_cast<double>(row[c]) * static_cast<double>(x[static_cast<std::size_t>(c)]);
        out[static_cast<std::size_t>(r)] = static_cast<float>(acc);
    }
    return out;
}

void gemv_naive_baseline_rows(const QuantMatrixQ4& A, std::span<const float> x,
                              std::int64_t row_begin, std::int64_t row_end, float* out) {
    const std::int64_t nb = A.blocks_per_row();
    for (std::int64_t r = row_begin; r < row_end; ++r) {
        const BlockQ4* ab = A.row(r);
        float acc = 0.0f;
        for (std::int64_t k = 0; k < nb; ++k) {
            const BlockQ4& blk = ab[k];
            const float* xk = x.data() + k * kBlockSize;
            for (int j = 0; j < kBlockSize / 2; ++j) {
                const std::uint8_t byte = blk.qs[static_cast<std::size_t>(j)];
                acc += static_cast<float>((byte & 0x0F) - 8) * blk.d * xk[2 * j];
                acc += static_cast<float>((byte >> 4) - 8) * blk.d * xk[2 * j + 1];
            }
        }
        out[r] = acc;
    }
}

std::vector<float> gemv_naive_baseline(const QuantMatrixQ4& A, std::span<const float> x) {
    check_gemv_shapes(A, static_cast<std::int64_t>(x.size()));
    std::vector<float> out(static_cast<std::size_t>(A.m));
    gemv_naive_baseline_rows(A, x, 0, A.m, out.data());
    return out;
}

} // namespace qbench
