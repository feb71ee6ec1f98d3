#include "qbench/quant.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

namespace qbench {

namespace {

void check_block_length(std::size_t len) {
    if (len != static_cast<std::size_t>(kBlockSize))
        throw std::invalid_argument("block length must be 32, got " + std::to_string(len));
}

void check_multiple_of_block(std::size_t len) {
    if (len == 0 || len % kBlockSize != 0)
        throw std::invalid_argument("length must be a positive multiple of 32, got " +
                                    std::to_string(len));
}

void check_finite(std::span<const float> x) {
    for (float v : x)
        if (!std::isfinite(v))
            throw std::invalid_argument("non-finite input");
}

// Rounds the magnitude of v up until its significand fits in `bits` bits.
// Scales constrained this way make every code*scale product exact in fp32
// (4-bit Q4 codes need <= 21 bits, 8-bit Q8 codes <= 17), so dequantization
// hits the ideal lattice and the |scale|/2 round-trip bound holds without
// ulp exceptions. Rounding up keeps all quotients inside the code range.
float round_scale_up(float v, int bits) {
    if (v == 0.0f)
        return v;
    auto u = std::bit_cast<std::uint32_t>(v);
    const std::uint32_t mask = (1u << (24 - bits)) - 1u;
    if (u & mask)
        u = (u & ~mask) + (mask + 1u);
    return std::bit_cast<float>(u);
}

} // namespace

BlockQ4 quantize_block_q4(std::span<const float> x) {
    check_block_length(x.size());
    check_finite(x);

    float amax = 0.0f; // largest magnitude
    float vmax = 0.0f; // its signed value, first occurrence wins ties
    float omax = 0.0f; // largest magnitude of the opposite sign
    for (int i = 0; i < kBlockSize; ++i) {
        const float a = std::fabs(x[static_cast<std::size_t>(i)]);
        if (a > amax) {
            amax = a;
            vmax = x[static_cast<std::size_t>(i)];
        }
    }
    for (int i = 0; i < kBlockSize; ++i) {
        const float v = x[static_cast<std::size_t>(i)];
        if ((vmax > 0.0f) == (v < 0.0f))
            omax = std::max(omax, std::fabs(v));
    }

    BlockQ4 out;
    // The dominant extreme sits at the -8 end of the code range; the code
    // range is asymmetric ([-8, 7]), so when the opposite extreme exceeds
    // 7/8 of the dominant one the scale widens to opp/7 to keep every
    // quotient representable (otherwise saturation would cost up to a full
    // scale step of error).
    out.d = vmax / -8.0f;
    const float opp_scale = omax / 7.0f;
    if (opp_scale > std::fabs(out.d))
        out.d = vmax < 0.0f ? opp_scale : -opp_scale;
    out.d = round_scale_up(out.d, 21);
    if (out.d == 0.0f) {
        for (int i = 0; i < kBlockSize; ++i)
            out.set_code(i, 8);
        return out;
    }

    // Quotient in double so the +-d/2 round-trip bound survives rounding.
    const double id = 1.0 / static_cast<double>(out.d);
    for (int i = 0; i < kBlockSize; ++i) {
        const double q = static_cast<double>(x[static_cast<std::size_t>(i)]) * id + 8.5;
        const int c = static_cast<int>(std::floor(q));
        out.set_code(i, std::clamp(c, 0, 15));
    }
    return out;
}

void dequantize_block_q4(const BlockQ4& b, std::span<float> out) {
    check_block_length(out.size());
    for (int i = 0; i < kBlockSize; ++i)
        out[static_cast<std::size_t>(i)] = static_cast<float>(b.code(i) - 8) * b.d;
}

std::array<float, kBlockSize> dequantize_block_q4(const BlockQ4& b) {
    std::array<float, kBlockSize> out;
    dequantize_block_q4(b, out);
    return out;
}

std::vector<BlockQ4> quantize_row_q4(std::span<const float> row) {
    check_multiple_of_block(row.size());
    std::vector<BlockQ4> blocks;
    blocks.reserve(row.size() / kBlockSize);
    for (std::size_t off = 0; off < row.size(); off += kBlockSize)
        blocks.push_back(quantize_block_q4(row.subspan(off, kBlockSize)));
    return blocks;
}

QuantVectorQ8 quantize_vec_q8(std::span<const float> x) {
    check_multiple_of_block(x.size());
    check_finite(x);

    QuantVectorQ8 out;
    out.n = static_cast<std::int64_t>(x.size());
    out.blocks.resize(x.size() / kBlockSize);

    for (std::size_t b = 0; b < out.blocks.size(); ++b) {
        const float* xb = x.data() + b * kBlockSize;
        float amax = 0.0f;
        for (int i = 0; i < kBlockSize; ++i)
            amax = std::max(amax, std::fabs(xb[i]));

        BlockQ8& blk = out.blocks[b];
        blk.d = round_scale_up(amax / 127.0f, 17);
        if (blk.d == 0.0f)
            continue; // codes stay 0
        const double id = 1.0 / static_cast<double>(blk.d);
        for (int i = 0; i < kBlockSize; ++i) {
            const double q = std::round(static_cast<double>(xb[i]) * id);
            blk.qs[static_cast<std::size_t>(i)] =
                static_cast<std::int8_t>(std::clamp(q, -127.0, 127.0));
        }
    }
    return out;
}

std::vector<float> dequantize_vec_q8(const QuantVectorQ8& v) {
    std::vector<float> out(static_cast<std::size_t>(v.n));
    for (std::size_t b = 0; b < v.blocks.size(); ++b) {
        const BlockQ8& blk = v.blocks[b];
        for (int i = 0; i < kBlockSize; ++i)
            out[b * kBlockSize + static_cast<std::size_t>(i)] =
                static_cast<float>(blk.qs[static_cast<std::size_t>(i)]) * blk.d;
    }
    return out;
}

QuantMatrixQ4 quantize_matrix_q4(std::int64_t m, std::int64_t n, std::span<const float> values) {
    if (m < 1 || n < 1)
        throw std::invalid_argument("matrix dimensions must be positive");
    check_multiple_of_block(static_cast<std::size_t>(n));
    if (values.size() != static_cast<std::size_t>(m) * static_cast<std::size_t>(n))
        throw std::invalid_argument("value count does not match matrix shape");

    QuantMatrixQ4 out;
    out.m = m;
    out.n = n;
    out.blocks.resize(static_cast<std::size_t>(m) * static_cast<std::size_t>(n / kBlockSize));
    for (std::int64_t r = 0; r < m; ++r) {
        const auto row = values.subspan(static_cast<std::size_t>(r * n), static_cast<std::size_t>(n));
        BlockQ4* dst = out.row(r);
        for (std::int64_t b = 0; b < out.blocks_per_row(); ++b)
            dst[b] = quantize_block_q4(row.subspan(static_cast<std::size_t>(b) * kBlockSize, kBlockSize));
    }
    return out;
}

} // namespace qbench
