// Acceptance suite: runs every criterion at its stated tolerance and prints
// one pass/fail line each. Exit code is the number of failed criteria.

#include "qbench/bench.hpp"
#include "qbench/kernels.hpp"
#include "qbench/parallel.hpp"
#include "qbench/qmat_file.hpp"
#include "qbench/quant.hpp"
#include "qbench/rng.hpp"
#include "qbench/toymodel.hpp"

#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace qbench;

namespace {

const std::string kGoldenDir = QBENCH_GOLDEN_DIR;
const std::string kCliPath = QBENCH_CLI_PATH;

struct Outcome {
    bool pass = false;
    bool warn = false;
    std::string detail;
};

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

// 1. round-trip error <= |scale|/2 over 1e5 Q4 and 1e5 Q8 blocks, < 10 s
Outcome criterion_quant_bounds() {
    const double t0 = now_s();
    Rng rng(1001);
    long violations = 0;
    for (int b = 0; b < 100000; ++b) {
        const double scale = std::pow(10.0, rng.uniform() * 8.0 - 4.0);
        const auto x = testutil::random_values(rng, kBlockSize, scale);
        const BlockQ4 blk = quantize_block_q4(x);
        const auto back = dequantize_block_q4(blk);
        const double half = std::fabs(static_cast<double>(blk.d)) / 2.0;
        for (int i = 0; i < kBlockSize; ++i)
            if (std::fabs(static_cast<double>(back[static_cast<std::size_t>(i)]) -
                          static_cast<double>(x[static_cast<std::size_t>(i)])) > half)
                ++violations;
    }
    for (int b = 0; b < 100000; ++b) {
        const double scale = std::pow(10.0, rng.uniform() * 8.0 - 4.0);
        const auto x = testutil::random_values(rng, kBlockSize, scale);
        const QuantVectorQ8 v = quantize_vec_q8(x);
        const std::vector<float> back = dequantize_vec_q8(v);
        const double half = std::fabs(static_cast<double>(v.blocks[0].d)) / 2.0;
        for (int i = 0; i < kBlockSize; ++i)
            if (std::fabs(static_cast<double>(back[static_cast<std::size_t>(i)]) -
                          static_cast<double>(x[static_cast<std::size_t>(i)])) > half)
                ++violations;
    }
    const double secs = now_s() - t0;
    std::ostringstream d;
    d << violations << " violations over 2x1e5 blocks in " << secs << " s";
    return {violations == 0 && secs < 10.0, false, d.str()};
}

// 2. 200 GEMV instances, m in [1,64], n in {32..8192}: per element within
//    1e-4*(1+|oracle|) of the fp64 dequantized-operand oracle
Outcome criterion_oracle_equivalence() {
    Rng rng(1002);
    long violations = 0;
    for (int inst = 0; inst < 200; ++inst) {
        const std::int64_t m = 1 + static_cast<std::int64_t>(rng.next_u64() % 64);
        std::int64_t n = kBlockSize * (1 + static_cast<std::int64_t>(rng.next_u64() % 256));
        if (inst == 0)
            n = 32;
        if (inst == 1)
            n = 8192;
        const QuantMatrixQ4 A = testutil::random_qmat(rng, m, n);
        const QuantVectorQ8 x =
            quantize_vec_q8(testutil::random_values(rng, static_cast<std::size_t>(n)));
        const std::vector<float> got = gemv_q4_q8(A, x);
        const std::vector<double> want = testutil::oracle_gemv(A, x);
        for (std::int64_t r = 0; r < m; ++r) {
            const double tol = 1e-4 * (1.0 + std::fabs(want[static_cast<std::size_t>(r)]));
            if (std::fabs(static_cast<double>(got[static_cast<std::size_t>(r)]) -
                          want[static_cast<std::size_t>(r)]) > tol)
                ++violations;
        }
    }
    return {violations == 0, false,
            std::to_string(violations) + " element violations over 200 instances"};
}

// 3. parallel_gemv bitwise-identical to serial for t in {1,2,4,8} and all
//    four policies; gemm_thin bitwise-matches column-wise GEMV for
//    b in {1,2,8,32}; 50 random instances
Outcome criterion_bitwise_determinism() {
    Rng rng(1003);
    struct Instance {
        QuantMatrixQ4 A;
        std::vector<float> x;
        std::vector<float> serial;
    };
    std::vector<Instance> instances;
    for (int i = 0; i < 50; ++i) {
        const std::int64_t m = 1 + static_cast<std::int64_t>(rng.next_u64() % 128);
        const std::int64_t n = kBlockSize * (1 + static_cast<std::int64_t>(rng.next_u64() % 16));
        Instance inst;
        inst.A = testutil::random_qmat(rng, m, n);
        inst.x = testutil::random_values(rng, static_cast<std::size_t>(n));
        inst.serial = gemv_quantizing(inst.A, inst.x);
        instances.push_back(std::move(inst));
    }

    long mismatches = 0;
    for (int t : {1, 2, 4, 8}) {
        WorkerPool pool(t);
        for (NumaPolicy policy : kAllPolicies) {
            pool.apply_policy(policy);
            for (const Instance& inst : instances) {
                const ThreadPlan plan = partition_rows(inst.A.m, t);
                if (parallel_gemv(inst.A, inst.x, plan, pool) != inst.serial)
                    ++mismatches;
            }
        }
    }

    for (const Instance& inst : instances) {
        for (std::int64_t b : {1, 2, 8, 32}) {
            ThinMatrix X{inst.A.n, b,
                         testutil::random_values(rng, static_cast<std::size_t>(inst.A.n * b))};
            const std::vector<float> out = gemm_thin(inst.A, X);
            for (std::int64_t j = 0; j < b; ++j) {
                const std::vector<float> col = gemv_quantizing(inst.A, X.column(j));
                if (!std::equal(col.begin(), col.end(), out.begin() + j * inst.A.m))
                    ++mismatches;
            }
        }
    }
    return {mismatches == 0, false, std::to_string(mismatches) + " bitwise mismatches"};
}

// 4. toy-preset prefill(p) final hidden state bitwise-equals p sequential
//    generation steps, p in {1, 4, 22}
Outcome criterion_regime_equivalence() {
    ToyDecoder model(preset_shapes("toy"), 4242, "toy");
    WorkerPool pool(2);
    for (int p : {1, 4, 22}) {
        const auto [hidden, stats] = model.prefill(p, pool);
        (void)stats;
        model.reset();
        std::vector<float> last;
        for (int t = 0; t < p; ++t)
            last = model.step_token(pool);
        const std::size_t d = static_cast<std::size_t>(model.shapes().d_model);
        if (!std::equal(last.begin(), last.end(), hidden.end() - static_cast<std::ptrdiff_t>(d)))
            return {false, false, "mismatch at p=" + std::to_string(p)};
        model.reset();
    }
    return {true, false, "bitwise equal for p in {1,4,22}"};
}

// 5. single-thread quantized kernel vs naive baseline GOPS at sizes >= 1024:
//    ratio < 1.0 fails, [1.0, 1.3) passes with a warning; < 2 min
Outcome criterion_baseline_speedup() {
    const double t0 = now_s();
    SweepConfig cfg;
    cfg.sizes = {1024, 2048, 4096};
    cfg.reps = 5;
    cfg.warmup = 2;
    cfg.seed = 1005;
    const std::vector<BenchRecord> records = sweep_sizes(cfg);

    bool pass = true, warn = false;
    std::ostringstream d;
    for (std::size_t i = 0; i + 1 < records.size(); i += 2) {
        const double ratio = records[i].gops / records[i + 1].gops;
        d << "s=" << records[i].m << " ratio=" << ratio << "  ";
        if (ratio < 1.0)
            pass = false;
        else if (ratio < 1.3)
            warn = true;
    }
    const double secs = now_s() - t0;
    if (secs >= 120.0)
        pass = false;
    d << "(" << secs << " s; target >= 1.3x, hard floor 1.0x)";
    return {pass, warn, d.str()};
}

// 6. toy preset, prompt 22, 64 generated tokens, 4 threads: prefill tokens/s
//    >= generation tokens/s in at least 2 of 3 repetitions
Outcome criterion_phase_ordering() {
    ToyDecoder model(preset_shapes("toy"), 4242, "toy");
    WorkerPool pool(4);
    pool.apply_policy(NumaPolicy::MemoryInterleave);
    if (pool.first_touch_active())
        model.place_weights(pool);

    int ordered = 0;
    std::ostringstream d;
    for (int rep = 0; rep < 3; ++rep) {
        const auto [hidden, pre] = model.prefill(22, pool);
        (void)hidden;
        const PhaseStats gen = model.generate(64, pool);
        const double pre_tps = pre.tokens_per_s();
        const double gen_tps = gen.tokens_per_s();
        if (pre_tps >= gen_tps)
            ++ordered;
        d << "rep" << rep << ": prefill=" << pre_tps << " generate=" << gen_tps << " tok/s  ";
    }
    return {ordered >= 2, false, d.str()};
}

// 7. golden .qmat round-trips byte-exactly; CSV header matches the pinned
//    schema byte-exactly
Outcome criterion_goldens() {
    const auto file_bytes = read_file_bytes(kGoldenDir + "/golden_4x64.qmat");
    if (file_bytes != golden_qmat_bytes())
        return {false, false, "golden .qmat differs from frozen bytes"};
    if (serialize_qmat(parse_qmat(file_bytes)) != file_bytes)
        return {false, false, "golden .qmat did not round-trip byte-exactly"};
    if (serialize_qmat(build_golden_matrix()) != file_bytes)
        return {false, false, "golden generator no longer reproduces the file"};

    const std::string header = "kernel,m,n,batch,threads,policy,reps,seconds_mean,"
                               "seconds_min,gops,warnings";
    if (csv_header() != header)
        return {false, false, "CSV header schema drifted"};
    if (format_csv({}) != header + "\n")
        return {false, false, "empty CSV is not header-only"};
    return {true, false, "qmat and CSV schema goldens hold"};
}

// 8. `qbench verify` completes green in under 5 minutes
Outcome criterion_cli_verify() {
    const std::string cmd = "\"" + kCliPath + "\" verify --golden \"" + kGoldenDir +
                            "/golden_4x64.qmat\" > /dev/null 2>&1";
    const double t0 = now_s();
    const int rc = std::system(cmd.c_str());
    const double secs = now_s() - t0;
    std::ostringstream d;
    d << "exit=" << rc << " in " << secs << " s";
    return {rc == 0 && secs < 300.0, false, d.str()};
}

} // namespace

int main() {
    struct Criterion {
        const char* name;
        Outcome (*run)();
    };
    const Criterion criteria[] = {
        {"1. quantization round-trip bounds", criterion_quant_bounds},
        {"2. kernel/oracle equivalence", criterion_oracle_equivalence},
        {"3. bitwise determinism (parallel, gemm)", criterion_bitwise_determinism},
        {"4. prefill/generation regime equivalence", criterion_regime_equivalence},
        {"5. baseline speedup at sizes >= 1024", criterion_baseline_speedup},
        {"6. prefill >= generation throughput", criterion_phase_ordering},
        {"7. format and schema goldens", criterion_goldens},
        {"8. qbench verify green under 5 min", criterion_cli_verify},
    };

    int failures = 0;
    for (const Criterion& c : criteria) {
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, false, std::string("exception: ") + e.what()};
        }
        std::cout << (o.pass ? (o.warn ? "[WARN] " : "[PASS] ") : "[FAIL] ") << c.name << " — "
                  << o.detail << '\n';
        if (!o.pass)
            ++failures;
    }
    std::cout << (failures == 0 ? "acceptance: all criteria passed\n"
                                : "acceptance: " + std::to_string(failures) + " criteria failed\n");
    return failures;
}
