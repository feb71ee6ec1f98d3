#include "qbench/bench.hpp"
#include "qbench/qmat_file.hpp"
#include "qbench/rng.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <sstream>

using namespace qbench;

namespace {

const std::string kGoldenPath = std::string(QBENCH_GOLDEN_DIR) + "/golden_4x64.qmat";

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace

TEST_SUITE("qmat") {

TEST_CASE("serialize/parse round-trip preserves the matrix") {
    Rng rng(33);
    const QuantMatrixQ4 mat = testutil::random_qmat(rng, 5, 96);
    const auto bytes = serialize_qmat(mat);
    CHECK(bytes.size() == kQmatHeaderSize + mat.blocks.size() * kQmatBlockSize);
    const QuantMatrixQ4 back = parse_qmat(bytes);
    CHECK(back == mat);
    CHECK(serialize_qmat(back) == bytes);
}

TEST_CASE("save/load via file") {
    Rng rng(34);
    const QuantMatrixQ4 mat = testutil::random_qmat(rng, 3, 64);
    const std::string path = temp_path("qbench_roundtrip.qmat");
    save_qmat(mat, path);
    CHECK(load_qmat(path) == mat);
    std::remove(path.c_str());
}

TEST_CASE("parse rejects malformed containers") {
    Rng rng(35);
    const auto bytes = serialize_qmat(testutil::random_qmat(rng, 2, 32));

    auto corrupt = [&](std::size_t off, std::uint8_t v) {
        auto copy = bytes;
        copy[off] = v;
        return copy;
    };

    CHECK_THROWS_AS(parse_qmat(corrupt(0, 'X')), std::runtime_error);    // magic
    CHECK_THROWS_AS(parse_qmat(corrupt(4, 9)), std::runtime_error);      // version
    CHECK_THROWS_AS(parse_qmat(corrupt(24, 1)), std::runtime_error);     // block kind
    CHECK_THROWS_AS(parse_qmat(corrupt(30, 1)), std::runtime_error);     // reserved
    CHECK_THROWS_AS(parse_qmat(corrupt(8, 3)), std::runtime_error);      // m vs payload

    auto truncated = bytes;
    truncated.pop_back();
    CHECK_THROWS_AS(parse_qmat(truncated), std::runtime_error);
    CHECK_THROWS_AS(parse_qmat(std::vector<std::uint8_t>(8, 0)), std::runtime_error);
}

TEST_CASE("parse rejects a non-finite block scale") {
    Rng rng(36);
    auto bytes = serialize_qmat(testutil::random_qmat(rng, 1, 32));
    // overwrite the first block scale with +inf (little-endian 0x7f800000)
    bytes[kQmatHeaderSize + 0] = 0x00;
    bytes[kQmatHeaderSize + 1] = 0x00;
    bytes[kQmatHeaderSize + 2] = 0x80;
    bytes[kQmatHeaderSize + 3] = 0x7f;
    CHECK_THROWS_AS(parse_qmat(bytes), std::runtime_error);
}

TEST_CASE("checked-in golden file matches the frozen bytes and round-trips") {
    const auto file_bytes = read_file_bytes(kGoldenPath);
    CHECK(file_bytes == golden_qmat_bytes());
    CHECK(file_bytes == serialize_qmat(build_golden_matrix()));
    CHECK(serialize_qmat(parse_qmat(file_bytes)) == file_bytes);
}

TEST_CASE("verify fails the golden round-trip after a flipped code nibble") {
    auto bytes = read_file_bytes(kGoldenPath);
    bytes[kQmatHeaderSize + 7] ^= 0x0F; // one code nibble inside block 0
    const std::string path = temp_path("qbench_corrupted.qmat");
    write_file_bytes(path, bytes);

    std::ostringstream log;
    CHECK(verify(log, path) == 1);
    CHECK(log.str().find("[FAIL] qmat golden round-trip") != std::string::npos);
    std::remove(path.c_str());
}

} // TEST_SUITE
