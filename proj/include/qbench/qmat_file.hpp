#pragma once

#include "qbench/quant.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace qbench {

// Binary .qmat container, little-endian:
//   "QMAT" | version u32 = 1 | m u64 | n u64 | block_kind u8 (0 = Q4_0) |
//   7 reserved zero bytes | m*(n/32) blocks of { scale f32, 16 packed code bytes }.
inline constexpr std::uint32_t kQmatVersion = 1;
inline constexpr std::uint8_t kQmatBlockKindQ4_0 = 0;
inline constexpr std::size_t kQmatHeaderSize = 32;
inline constexpr std::size_t kQmatBlockSize = 20;

std::vector<std::uint8_t> serialize_qmat(const QuantMatrixQ4& mat);
QuantMatrixQ4 parse_qmat(std::span<const std::uint8_t> bytes);

void save_qmat(const QuantMatrixQ4& mat, const std::string& path);
QuantMatrixQ4 load_qmat(const std::string& path);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);

} // namespace qbench
