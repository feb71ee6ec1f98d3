#include "qbench/qmat_file.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace qbench {

namespace {

constexpr char kMagic[4] = {'Q', 'M', 'A', 'T'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
    put_u32(out, std::bit_cast<std::uint32_t>(v));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

[[noreturn]] void bad(const std::string& what) {
    throw std::runtime_error("qmat: " + what);
}

} // namespace

std::vector<std::uint8_t> serialize_qmat(const QuantMatrixQ4& mat) {
    if (mat.m < 1 || mat.n < 1 || mat.n % kBlockSize != 0)
        throw std::invalid_argument("qmat: invalid matrix shape");
    const std::size_t n_blocks =
        static_cast<std::size_t>(mat.m) * static_cast<std::size_t>(mat.n / kBlockSize);
    if (mat.blocks.size() != n_blocks)
        throw std::invalid_argument("qmat: block count does not match shape");

    std::vector<std::uint8_t> out;
    out.reserve(kQmatHeaderSize + n_blocks * kQmatBlockSize);
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kQmatVersion);
    put_u64(out, static_cast<std::uint64_t>(mat.m));
    put_u64(out, static_cast<std::uint64_t>(mat.n));
    out.push_back(kQmatBlockKindQ4_0);
    out.insert(out.end(), 7, 0);

    for (const BlockQ4& b : mat.blocks) {
        put_f32(out, b.d);
        out.insert(out.end(), b.qs.begin(), b.qs.end());
    }
    return out;
}

QuantMatrixQ4 parse_qmat(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kQmatHeaderSize)
        bad("truncated header");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        bad("bad magic");
    if (get_u32(bytes.data() + 4) != kQmatVersion)
        bad("unsupported version");
    const std::uint64_t m = get_u64(bytes.data() + 8);
    const std::uint64_t n = get_u64(bytes.data() + 16);
    if (bytes[24] != kQmatBlockKindQ4_0)
        bad("unsupported block kind");
    for (int i = 25; i < 32; ++i)
        if (bytes[static_cast<std::size_t>(i)] != 0)
            bad("nonzero reserved bytes");
    if (m < 1 || n < 1 || n % kBlockSize != 0)
        bad("invalid shape");
    if (m > (std::uint64_t{1} << 40) || n > (std::uint64_t{1} << 40))
        bad("implausible shape");

    const std::size_t n_blocks = static_cast<std::size_t>(m * (n / kBlockSize));
    if (bytes.size() != kQmatHeaderSize + n_blocks * kQmatBlockSize)
        bad("payload size does not match shape");

    QuantMatrixQ4 mat;
    mat.m = static_cast<std::int64_t>(m);
    mat.n = static_cast<std::int64_t>(n);
    mat.blocks.resize(n_blocks);
    const std::uint8_t* p = bytes.data() + kQmatHeaderSize;
    for (std::size_t i = 0; i < n_blocks; ++i, p += kQmatBlockSize) {
        BlockQ4& b = mat.blocks[i];
        b.d = std::bit_cast<float>(get_u32(p));
        if (!std::isfinite(b.d))
            bad("non-finite block scale");
        std::memcpy(b.qs.data(), p + 4, 16);
    }
    return mat;
}

void save_qmat(const QuantMatrixQ4& mat, const std::string& path) {
    write_file_bytes(path, serialize_qmat(mat));
}

QuantMatrixQ4 load_qmat(const std::string& path) {
    return parse_qmat(read_file_bytes(path));
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open for reading: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad())
        throw std::runtime_error("read failed: " + path);
    return bytes;
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw std::runtime_error("write failed: " + path);
}

} // namespace qbench
