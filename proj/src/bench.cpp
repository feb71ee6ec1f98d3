#include "qbench/bench.hpp"

#include "qbench/kernels.hpp"
#include "qbench/qmat_file.hpp"
#include "qbench/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace qbench {

namespace {

std::string fmt_g9(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::string join(const std::vector<std::string>& parts, char sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i)
            out += sep;
        out += parts[i];
    }
    return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = s.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

} // namespace

double gops_value(std::int64_t m, std::int64_t n, std::int64_t batch, double seconds) {
    return 2.0 * static_cast<double>(m) * static_cast<double>(n) * static_cast<double>(batch) /
           (seconds * 1e9);
}

TimingResult time_kernel(const std::function<void()>& fn, int reps, int warmup, const NowFn& now) {
    if (reps < 1)
        throw std::invalid_argument("reps must be >= 1");
    if (warmup < 0)
        throw std::invalid_argument("warmup must be >= 0");
    const NowFn clock = now ? now : NowFn([] { return std::chrono::steady_clock::now(); });

    for (int i = 0; i < warmup; ++i)
        fn();

    TimingResult result;
    result.reps = reps;
    double sum = 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < reps; ++i) {
        const auto t0 = clock();
        fn();
        const auto t1 = clock();
        const double dt = std::chrono::duration<double>(t1 - t0).count();
        sum += dt;
        best = std::min(best, dt);
    }
    result.seconds_mean = sum / reps;
    result.seconds_min = best;
    return result;
}

std::string csv_header() {
    return "kernel,m,n,batch,threads,policy,reps,seconds_mean,seconds_min,gops,warnings";
}

std::string format_csv(const std::vector<BenchRecord>& records,
                       const std::vector<std::string>& comments) {
    std::string out;
    for (const std::string& c : comments)
        out += "# " + c + "\n";
    out += csv_header();
    out += '\n';
    for (const BenchRecord& r : records) {
        out += r.kernel;
        out += ',' + std::to_string(r.m);
        out += ',' + std::to_string(r.n);
        out += ',' + std::to_string(r.batch);
        out += ',' + std::to_string(r.threads);
        out += ',' + r.policy;
        out += ',' + std::to_string(r.reps);
        out += ',' + fmt_g9(r.seconds_mean);
        out += ',' + fmt_g9(r.seconds_min);
        out += ',' + fmt_g9(r.gops);
        out += ',' + join(r.warnings, ';');
        out += '\n';
    }
    return out;
}

void emit_csv(const std::vector<BenchRecord>& records, const std::string& path,
              const std::vector<std::string>& comments) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot open for writing: " + path);
    out << format_csv(records, comments);
    if (!out)
        throw std::runtime_error("write failed: " + path);
}

std::vector<BenchRecord> parse_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    bool saw_header = false;
    std::vector<BenchRecord> records;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#')
            continue;
        if (!saw_header) {
            if (line != csv_header())
                throw std::runtime_error("csv: unexpected header: " + line);
            saw_header = true;
            continue;
        }
        const std::vector<std::string> f = split(line, ',');
        if (f.size() != 11)
            throw std::runtime_error("csv: expected 11 fields, got " + std::to_string(f.size()));
        BenchRecord r;
        r.kernel = f[0];
        r.m = std::stoll(f[1]);
        r.n = std::stoll(f[2]);
        r.batch = std::stoll(f[3]);
        r.threads = std::stoi(f[4]);
        r.policy = f[5];
        r.reps = std::stoi(f[6]);
        r.seconds_mean = std::stod(f[7]);
        r.seconds_min = std::stod(f[8]);
        r.gops = std::stod(f[9]);
        if (!f[10].empty())
            r.warnings = split(f[10], ';');
        records.push_back(std::move(r));
    }
    if (!saw_header)
        throw std::runtime_error("csv: missing header");
    return records;
}

std::vector<BenchRecord> parse_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open for reading: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str());
}

std::string toolchain_description() {
#if defined(__clang__)
    std::string compiler = std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
    std::string compiler = std::string("gcc ") + __VERSION__;
#else
    std::string compiler = "unknown";
#endif
#if defined(QBENCH_CXX_FLAGS)
    const std::string flags = QBENCH_CXX_FLAGS;
#else
    const std::string flags = "";
#endif
    return "toolchain: " + compiler + "; flags: " + flags +
           "; simd: " + (kernel_simd_enabled() ? "sse2" : "scalar");
}

// ---------------------------------------------------------------------------
// golden matrix

QuantMatrixQ4 build_golden_matrix() {
    Rng rng(mix_seed(42, 0x474f4c44));
    const std::int64_t m = 4, n = 64;
    std::vector<float> values(static_cast<std::size_t>(m * n));
    for (float& v : values)
        v = rng.gaussian_f32();
    return quantize_matrix_q4(m, n, values);
}

namespace {

// serialize_qmat(build_golden_matrix()), frozen. Also checked in at
// tests/golden/golden_4x64.qmat.
constexpr const char* kGoldenQmatHex =
    "514d415401000000040000000000000040000000000000000000000000000000a0888f3ea39683a766909467"
    "9ac9b8a6788989adb83a943e55c699b0ecb7f8968a91837ab7a26a87584346be69bc478051c48369875a1299"
    "7ba3ca73481eba3e7989399b6dbc9447d555769a38803b5878b2713e3b26970c655056f76a540691399db690"
    "9053a63e15857796fedab9b7a847624562c255c7a8ca8cbe435668b82736547c0ab6ac377bb1a93138fe9f3e"
    "39446a9beca4809c8a09966d65b632b8";

std::vector<std::uint8_t> hex_decode(std::string_view hex) {
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9')
            return c - '0';
        if (c >= 'a' && c <= 'f')
            return c - 'a' + 10;
        throw std::invalid_argument("bad hex digit");
    };
    std::vector<std::uint8_t> out;
    out.reserve(hex.size() / 2);
    for (std::size_t i = 0; i + 1 < hex.size(); i += 2)
        out.push_back(static_cast<std::uint8_t>(nibble(hex[i]) * 16 + nibble(hex[i + 1])));
    return out;
}

} // namespace

std::vector<std::uint8_t> golden_qmat_bytes() {
    return hex_decode(kGoldenQmatHex);
}

// ---------------------------------------------------------------------------
// verify: oracle/property suite

namespace {

// fp64 dequantized-operand oracle, independent of the kernel paths.
double oracle_dot_f64(const BlockQ4& a, const BlockQ8& b) {
    double sum = 0.0;
    for (int i = 0; i < kBlockSize; ++i) {
        const double av = static_cast<double>(a.code(i) - 8) * static_cast<double>(a.d);
        const double bv = static_cast<double>(b.qs[static_cast<std::size_t>(i)]) *
                          static_cast<double>(b.d);
        sum += av * bv;
    }
    return sum;
}

std::vector<double> oracle_gemv_f64(const QuantMatrixQ4& A, const QuantVectorQ8& x) {
    std::vector<double> out(static_cast<std::size_t>(A.m));
    for (std::int64_t r = 0; r < A.m; ++r) {
        double acc = 0.0;
        for (std::int64_t k = 0; k < A.blocks_per_row(); ++k)
            acc += oracle_dot_f64(A.row(r)[k], x.blocks[static_cast<std::size_t>(k)]);
        out[static_cast<std::size_t>(r)] = acc;
    }
    return out;
}

std::vector<float> random_values(Rng& rng, std::size_t count, double scale = 1.0) {
    std::vector<float> out(count);
    for (float& v : out)
        v = rng.gaussian_f32(scale);
    return out;
}

QuantMatrixQ4 random_qmat(Rng& rng, std::int64_t m, std::int64_t n) {
    return quantize_matrix_q4(m, n, random_values(rng, static_cast<std::size_t>(m * n)));
}

bool check_q4_roundtrip(int n_blocks, std::uint64_t seed) {
    Rng rng(seed);
    for (int b = 0; b < n_blocks; ++b) {
        const double scale = std::pow(10.0, rng.uniform() * 6.0 - 3.0);
        const std::vector<float> x = random_values(rng, kBlockSize, scale);
        const BlockQ4 blk = quantize_block_q4(x);
        const auto back = dequantize_block_q4(blk);
        const double half = std::fabs(static_cast<double>(blk.d)) / 2.0;
        for (int i = 0; i < kBlockSize; ++i) {
            const double err = std::fabs(static_cast<double>(back[static_cast<std::size_t>(i)]) -
                                         static_cast<double>(x[static_cast<std::size_t>(i)]));
            if (err > half)
                return false;
        }
    }
    return true;
}

bool check_q8_roundtrip(int n_blocks, std::uint64_t seed) {
    Rng rng(seed);
    for (int b = 0; b < n_blocks; ++b) {
        const double scale = std::pow(10.0, rng.uniform() * 6.0 - 3.0);
        const std::vector<float> x = random_values(rng, kBlockSize, scale);
        const QuantVectorQ8 v = quantize_vec_q8(x);
        const std::vector<float> back = dequantize_vec_q8(v);
        const double half = std::fabs(static_cast<double>(v.blocks[0].d)) / 2.0;
        for (int i = 0; i < kBlockSize; ++i) {
            const double err = std::fabs(static_cast<double>(back[static_cast<std::size_t>(i)]) -
                                         static_cast<double>(x[static_cast<std::size_t>(i)]));
            if (err > half)
                return false;
        }
    }
    return true;
}

bool check_kernel_oracle(int n_instances, std::uint64_t seed) {
    Rng rng(seed);
    for (int i = 0; i < n_instances; ++i) {
        const std::int64_t m = 1 + static_cast<std::int64_t>(rng.next_u64() % 48);
        const std::int64_t n = kBlockSize * (1 + static_cast<std::int64_t>(rng.next_u64() % 64));
        const QuantMatrixQ4 A = random_qmat(rng, m, n);
        const QuantVectorQ8 xq = quantize_vec_q8(random_values(rng, static_cast<std::size_t>(n)));
        const std::vector<float> got = gemv_q4_q8(A, xq);
        const std::vector<double> want = oracle_gemv_f64(A, xq);
        for (std::int64_t r = 0; r < m; ++r) {
            const double tol = 1e-4 * (1.0 + std::fabs(want[static_cast<std::size_t>(r)]));
            if (std::fabs(static_cast<double>(got[static_cast<std::size_t>(r)]) -
                          want[static_cast<std::size_t>(r)]) > tol)
                return false;
        }
    }
    return true;
}

bool check_scalar_simd(int n_instances, std::uint64_t seed) {
    Rng rng(seed);
    for (int i = 0; i < n_instances; ++i) {
        const std::int64_t m = 1 + static_cast<std::int64_t>(rng.next_u64() % 32);
        const std::int64_t n = kBlockSize * (1 + static_cast<std::int64_t>(rng.next_u64() % 32));
        const QuantMatrixQ4 A = random_qmat(rng, m, n);
        const QuantVectorQ8 xq = quantize_vec_q8(random_values(rng, static_cast<std::size_t>(n)));
        if (gemv_q4_q8(A, xq) != gemv_q4_q8_scalar(A, xq))
            return false;
    }
    return true;
}

bool check_gemm_gemv(std::uint64_t seed) {
    Rng rng(seed);
    const std::int64_t m = 48, n = 160;
    const QuantMatrixQ4 A = random_qmat(rng, m, n);
    for (std::int64_t b : {1, 2, 8}) {
        ThinMatrix X{n, b, random_values(rng, static_cast<std::size_t>(n * b))};
        const std::vector<float> out = gemm_thin(A, X);
        for (std::int64_t j = 0; j < b; ++j) {
            const std::vector<float> col = gemv_quantizing(A, X.column(j));
            if (!std::equal(col.begin(), col.end(), out.begin() + j * m))
                return false;
        }
    }
    return true;
}

bool check_parallel_determinism(std::uint64_t seed) {
    Rng rng(seed);
    const std::int64_t m = 96, n = 256;
    const QuantMatrixQ4 A = random_qmat(rng, m, n);
    const std::vector<float> x = random_values(rng, static_cast<std::size_t>(n));
    const std::vector<float> serial = gemv_quantizing(A, x);
    for (int t : {1, 2, 4, 8}) {
        for (NumaPolicy policy : kAllPolicies) {
            const ThreadPlan plan = partition_rows(m, t);
            if (parallel_gemv(A, x, plan, policy) != serial)
                return false;
        }
    }
    return true;
}

bool check_prefill_generate(std::uint64_t seed) {
    const LayerShapes shapes{128, 256, 2};
    const int p = 4;
    ToyDecoder model(shapes, seed);
    WorkerPool pool(2);
    const auto [hidden, stats] = model.prefill(p, pool);
    (void)stats;
    model.reset();
    std::vector<float> last;
    for (int t = 0; t < p; ++t)
        last = model.step_token(pool);
    const std::size_t d = static_cast<std::size_t>(shapes.d_model);
    return std::equal(last.begin(), last.end(), hidden.end() - static_cast<std::ptrdiff_t>(d));
}

bool check_golden_qmat(const std::string& path, std::string& detail) {
    const std::vector<std::uint8_t> expected = golden_qmat_bytes();
    if (expected.empty()) {
        detail = "frozen golden bytes missing";
        return false;
    }
    const std::vector<std::uint8_t> generated = serialize_qmat(build_golden_matrix());
    if (generated != expected) {
        detail = "generator output differs from frozen bytes";
        return false;
    }
    std::vector<std::uint8_t> bytes = expected;
    if (!path.empty()) {
        bytes = read_file_bytes(path);
        if (bytes != expected) {
            detail = "file differs from frozen bytes: " + path;
            return false;
        }
    }
    const QuantMatrixQ4 mat = parse_qmat(bytes);
    if (serialize_qmat(mat) != bytes) {
        detail = "re-serialization is not byte-identical";
        return false;
    }
    return true;
}

bool check_csv_schema() {
    const std::string text = format_csv({});
    return text == csv_header() + "\n";
}

} // namespace

int verify(std::ostream& log, const std::string& golden_qmat_path) {
    struct Property {
        const char* name;
        std::function<bool(std::string&)> run;
    };
    const std::uint64_t seed = 20240917;

    const std::vector<Property> properties = {
        {"q4 round-trip bound (20000 blocks)",
         [&](std::string&) { return check_q4_roundtrip(20000, seed); }},
        {"q8 round-trip bound (20000 blocks)",
         [&](std::string&) { return check_q8_roundtrip(20000, seed + 1); }},
        {"kernel vs fp64 oracle (40 instances)",
         [&](std::string&) { return check_kernel_oracle(40, seed + 2); }},
        {"scalar/simd path equivalence",
         [&](std::string&) { return check_scalar_simd(20, seed + 3); }},
        {"gemm_thin vs column-wise gemv",
         [&](std::string&) { return check_gemm_gemv(seed + 4); }},
        {"parallel bitwise determinism",
         [&](std::string&) { return check_parallel_determinism(seed + 5); }},
        {"prefill/generate equivalence",
         [&](std::string&) { return check_prefill_generate(seed + 6); }},
        {"qmat golden round-trip",
         [&](std::string& d) { return check_golden_qmat(golden_qmat_path, d); }},
        {"csv schema", [&](std::string&) { return check_csv_schema(); }},
    };

    int failures = 0;
    for (const Property& p : properties) {
        std::string detail;
        bool ok = false;
        try {
            ok = p.run(detail);
        } catch (const std::exception& e) {
            detail = e.what();
        }
        log << (ok ? "[ ok ] " : "[FAIL] ") << p.name;
        if (!ok && !detail.empty())
            log << " — " << detail;
        log << '\n';
        if (!ok)
            ++failures;
    }
    log << (failures == 0 ? "verify: all properties passed\n"
                          : "verify: " + std::to_string(failures) + " properties failed\n");
    return failures == 0 ? 0 : 1;
}

// ---------------------------------------------------------------------------
// sweeps

namespace {

void validate_sweep_config(const SweepConfig& cfg) {
    if (cfg.reps < 1)
        throw std::invalid_argument("reps must be >= 1");
    if (cfg.warmup < 0)
        throw std::invalid_argument("warmup must be >= 0");
    for (std::int64_t s : cfg.sizes)
        if (s < kBlockSize || s % kBlockSize != 0)
            throw std::invalid_argument("size " + std::to_string(s) +
                                        " is not a positive multiple of 32");
}

BenchRecord make_record(std::string kernel, std::int64_t m, std::int64_t n, std::int64_t batch,
                        int threads, NumaPolicy policy, const TimingResult& timing,
                        std::vector<std::string> warnings = {}) {
    BenchRecord r;
    r.kernel = std::move(kernel);
    r.m = m;
    r.n = n;
    r.batch = batch;
    r.threads = threads;
    r.policy = std::string(policy_name(policy));
    r.reps = timing.reps;
    r.seconds_mean = timing.seconds_mean;
    r.seconds_min = timing.seconds_min;
    r.gops = gops_value(m, n, batch, timing.seconds_min);
    r.warnings = std::move(warnings);
    return r;
}

} // namespace

std::vector<BenchRecord> sweep_sizes(const SweepConfig& cfg) {
    validate_sweep_config(cfg);
    if (cfg.sizes.empty())
        throw std::invalid_argument("size sweep needs a non-empty size list");

    std::vector<BenchRecord> records;
    for (const std::int64_t s : cfg.sizes) {
        Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(s)));
        const QuantMatrixQ4 A = random_qmat(rng, s, s);
        const std::vector<float> x = random_values(rng, static_cast<std::size_t>(s));

        std::vector<float> sink;
        const TimingResult tq = time_kernel([&] { sink = gemv_quantizing(A, x); },
                                            cfg.reps, cfg.warmup);
        records.push_back(make_record("gemv_quantizing", s, s, 1, 1, NumaPolicy::AllOff, tq));

        const TimingResult tn = time_kernel([&] { sink = gemv_naive_baseline(A, x); },
                                            cfg.reps, cfg.warmup);
        records.push_back(make_record("gemv_naive_baseline", s, s, 1, 1, NumaPolicy::AllOff, tn));
    }
    return records;
}

std::vector<BenchRecord> sweep_threads(const SweepConfig& cfg, const LayerShapes& shapes,
                                       int prompt_len, int gen_tokens) {
    validate_sweep_config(cfg);
    if (cfg.threads.empty() || cfg.policies.empty())
        throw std::invalid_argument("thread sweep needs non-empty thread and policy lists");
    if (prompt_len < 1 || gen_tokens < 1)
        throw std::invalid_argument("prompt_len and gen_tokens must be >= 1");

    ToyDecoder model(shapes, cfg.seed);
    // ops per token through the quantized linear layers: m*n with
    // m = n_layers*(4*d_model + 3*d_ff) rows of width n = d_model.
    const std::int64_t phase_m =
        static_cast<std::int64_t>(shapes.n_layers) *
        (4 * static_cast<std::int64_t>(shapes.d_model) + 3 * static_cast<std::int64_t>(shapes.d_ff));
    const std::int64_t phase_n = shapes.d_model;

    std::vector<BenchRecord> records;
    for (const NumaPolicy policy : cfg.policies) {
        for (const int t : cfg.threads) {
            WorkerPool pool(t);
            const PlacementReport report = pool.apply_policy(policy);
            if (pool.first_touch_active())
                model.place_weights(pool);
            std::cerr << report.log_line() << '\n';

            // prefill phase: per-rep wall time from PhaseStats
            TimingResult tp;
            tp.reps = cfg.reps;
            {
                double sum = 0.0, best = std::numeric_limits<double>::infinity();
                for (int i = 0; i < cfg.warmup; ++i)
                    model.prefill(prompt_len, pool);
                for (int i = 0; i < cfg.reps; ++i) {
                    const auto [hidden, stats] = model.prefill(prompt_len, pool);
                    (void)hidden;
                    sum += stats.seconds;
                    best = std::min(best, stats.seconds);
                }
                tp.seconds_mean = sum / cfg.reps;
                tp.seconds_min = best;
            }
            records.push_back(make_record("prefill", phase_m, phase_n, prompt_len, t, policy, tp,
                                          report.warnings));

            TimingResult tg;
            tg.reps = cfg.reps;
            {
                double sum = 0.0, best = std::numeric_limits<double>::infinity();
                for (int i = 0; i < cfg.warmup; ++i) {
                    model.prefill(prompt_len, pool);
                    model.generate(gen_tokens, pool);
                }
                for (int i = 0; i < cfg.reps; ++i) {
                    model.prefill(prompt_len, pool); // restart from a fresh cache, untimed
                    const PhaseStats stats = model.generate(gen_tokens, pool);
                    sum += stats.seconds;
                    best = std::min(best, stats.seconds);
                }
                tg.seconds_mean = sum / cfg.reps;
                tg.seconds_min = best;
            }
            records.push_back(make_record("generate", phase_m, phase_n, gen_tokens, t, policy, tg,
                                          report.warnings));
        }
    }
    return records;
}

} // namespace qbench
