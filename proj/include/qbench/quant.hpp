#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace qbench {

inline constexpr int kBlockSize = 32;

namespace detail {

// Allocator whose value-init is a no-op for trivial types. Block storage
// sized through it leaves pages untouched until a worker writes them, which
// is what makes first-touch placement possible (see parallel.hpp).
template <class T>
struct default_init_allocator : std::allocator<T> {
    template <class U>
    struct rebind {
        using other = default_init_allocator<U>;
    };
    template <class U>
    void construct(U* p) noexcept(std::is_nothrow_default_constructible_v<U>) {
        ::new (static_cast<void*>(p)) U;
    }
    template <class U, class... Args>
    void construct(U* p, Args&&... args) {
        std::allocator_traits<std::allocator<T>>::construct(
            *static_cast<std::allocator<T>*>(this), p, std::forward<Args>(args)...);
    }
};

} // namespace detail

// One 32-element weight block: fp32 scale, 4-bit codes offset by 8.
// Byte j of qs packs code 2j in the low nibble and code 2j+1 in the high one,
// matching the on-disk layout.
struct BlockQ4 {
    float d = 0.0f;
    std::array<std::uint8_t, 16> qs{};

    int code(int i) const {
        const std::uint8_t byte = qs[static_cast<std::size_t>(i) >> 1];
        return (i & 1) ? (byte >> 4) : (byte & 0x0F);
    }
    void set_code(int i, int c) {
        std::uint8_t& byte = qs[static_cast<std::size_t>(i) >> 1];
        if (i & 1)
            byte = static_cast<std::uint8_t>((byte & 0x0F) | (c << 4));
        else
            byte = static_cast<std::uint8_t>((byte & 0xF0) | c);
    }
    bool operator==(const BlockQ4&) const = default;
};

// One 32-element activation block: fp32 scale, signed 8-bit codes in [-127, 127].
struct BlockQ8 {
    float d = 0.0f;
    std::array<std::int8_t, 32> qs{};

    bool operator==(const BlockQ8&) const = default;
};

using BlockQ4Vec = std::vector<BlockQ4, detail::default_init_allocator<BlockQ4>>;

// Row-major m x n matrix of Q4 blocks (all blocks of row 0, then row 1, ...).
struct QuantMatrixQ4 {
    std::int64_t m = 0;
    std::int64_t n = 0;
    BlockQ4Vec blocks;

    std::int64_t blocks_per_row() const { return n / kBlockSize; }
    const BlockQ4* row(std::int64_t r) const { return blocks.data() + r * blocks_per_row(); }
    BlockQ4* row(std::int64_t r) { return blocks.data() + r * blocks_per_row(); }
    bool operator==(const QuantMatrixQ4&) const = default;
};

// Quantized activation vector: n/32 Q8 blocks.
struct QuantVectorQ8 {
    std::int64_t n = 0;
    std::vector<BlockQ8> blocks;

    bool operator==(const QuantVectorQ8&) const = default;
};

// Scale d = (signed max-magnitude element, ties lowest index) / -8, widened
// to cover the opposite extreme when that one exceeds 7/8 of the dominant
// magnitude; code_i = clamp(floor(x_i/d + 8.5), 0, 15). Zero block => d 0,
// codes 8. Stored scales carry a reduced significand so (code-8)*d is exact
// in fp32; round-trip error is at most |d|/2 per element.
// Throws std::invalid_argument on non-finite input.
BlockQ4 quantize_block_q4(std::span<const float> x);

// out_i = (code_i - 8) * d
void dequantize_block_q4(const BlockQ4& b, std::span<float> out);
std::array<float, kBlockSize> dequantize_block_q4(const BlockQ4& b);

// Independent per-block quantization of consecutive 32-element chunks.
std::vector<BlockQ4> quantize_row_q4(std::span<const float> row);

// Per block: d = max|x_i| / 127 (0 if the block is zero);
// code_i = round-half-away-from-zero(x_i/d) clamped to [-127, 127].
QuantVectorQ8 quantize_vec_q8(std::span<const float> x);

// out_i = code_i * d
std::vector<float> dequantize_vec_q8(const QuantVectorQ8& v);

// Row-by-row Q4 quantization of a dense row-major m x n buffer.
QuantMatrixQ4 quantize_matrix_q4(std::int64_t m, std::int64_t n, std::span<const float> values);

} // namespace qbench
