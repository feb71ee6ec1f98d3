#pragma once

#include "qbench/parallel.hpp"
#include "qbench/toymodel.hpp"

#include <chrono>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace qbench {

// One benchmark measurement row.
struct BenchRecord {
    std::string kernel;
    std::int64_t m = 0;
    std::int64_t n = 0;
    std::int64_t batch = 1;
    int threads = 1;
    std::string policy;
    int reps = 1;
    double seconds_mean = 0.0;
    double seconds_min = 0.0;
    double gops = 0.0; // 2*m*n*batch / (seconds_min * 1e9)
    std::vector<std::string> warnings;
};

struct SweepConfig {
    std::vector<std::int64_t> sizes;
    std::vector<int> threads;
    std::vector<NumaPolicy> policies;
    int reps = 10;
    int warmup = 3;
    std::uint64_t seed = 42;
};

// GEMV op count convention: 2*m*n (multiply + add), batch-scaled.
double gops_value(std::int64_t m, std::int64_t n, std::int64_t batch, double seconds);

using NowFn = std::function<std::chrono::steady_clock::time_point()>;

struct TimingResult {
    int reps = 0;
    double seconds_mean = 0.0;
    double seconds_min = 0.0;
};

// Runs fn `warmup` untimed times, then `reps` timed ones; the monotonic
// timer brackets only the call. `now` is injectable for timer tests.
TimingResult time_kernel(const std::function<void()>& fn, int reps, int warmup,
                         const NowFn& now = {});

// Fig.-2-style single-thread size sweep of the quantized kernel against the
// naive dequantize-and-fp32-dot baseline, on seeded random square instances.
std::vector<BenchRecord> sweep_sizes(const SweepConfig& cfg);

// Fig.-3/4-style sweep: toy-decoder prefill and token generation per
// (threads x policy) point.
std::vector<BenchRecord> sweep_threads(const SweepConfig& cfg, const LayerShapes& shapes,
                                       int prompt_len, int gen_tokens);

// Full oracle/property suite on small seeded instances; prints one
// pass/fail line per property to `log`. Returns 0 when green.
// When golden_qmat_path is non-empty that file must hold the golden bytes.
int verify(std::ostream& log, const std::string& golden_qmat_path = "");

// The pinned CSV schema.
std::string csv_header();
std::string format_csv(const std::vector<BenchRecord>& records,
                       const std::vector<std::string>& comments = {});
void emit_csv(const std::vector<BenchRecord>& records, const std::string& path,
              const std::vector<std::string>& comments = {});
std::vector<BenchRecord> parse_csv_file(const std::string& path);
std::vector<BenchRecord> parse_csv(const std::string& text);

// Compiler/flags line recorded as a CSV comment, so toolchain comparisons
// can be re-created by building twice.
std::string toolchain_description();

// The checked-in golden matrix: seed-42 gaussian 4x64, and its frozen bytes.
QuantMatrixQ4 build_golden_matrix();
std::vector<std::uint8_t> golden_qmat_bytes();

} // namespace qbench
