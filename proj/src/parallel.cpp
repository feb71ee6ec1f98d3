#include "qbench/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

#if defined(__linux__)
#include <pthread.h>
#include <sched.h>
#endif

#if defined(QBENCH_HAVE_NUMA)
#include <numa.h>
#endif

namespace qbench {

namespace {

int hardware_cpus() {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : static_cast<int>(n);
}

int detect_numa_nodes() {
#if defined(QBENCH_HAVE_NUMA)
    if (numa_available() >= 0)
        return std::max(1, numa_num_configured_nodes());
#endif
    return 1;
}

std::optional<bool> read_host_numa_balancing() {
    std::ifstream in("/proc/sys/kernel/numa_balancing");
    if (!in)
        return std::nullopt;
    int v = -1;
    in >> v;
    if (v < 0)
        return std::nullopt;
    return v != 0;
}

bool pin_self_to_cpu(int cpu) {
#if defined(__linux__)
    cpu_set_t set;
    CPU_ZERO(&set);
    CPU_SET(cpu, &set);
    return pthread_setaffinity_np(pthread_self(), sizeof(set), &set) == 0;
#else
    (void)cpu;
    return false;
#endif
}

bool unpin_self(int n_cpus) {
#if defined(__linux__)
    cpu_set_t set;
    CPU_ZERO(&set);
    for (int c = 0; c < n_cpus && c < CPU_SETSIZE; ++c)
        CPU_SET(c, &set);
    return pthread_setaffinity_np(pthread_self(), sizeof(set), &set) == 0;
#else
    (void)n_cpus;
    return false;
#endif
}

void validate_plan(const ThreadPlan& plan, std::int64_t m) {
    if (plan.ranges.empty())
        throw std::invalid_argument("thread plan has no ranges");
    std::int64_t expect = 0;
    for (const RowRange& r : plan.ranges) {
        if (r.begin != expect || r.end <= r.begin)
            throw std::invalid_argument("thread plan ranges must be sorted, disjoint and contiguous");
        expect = r.end;
    }
    if (expect != m)
        throw std::invalid_argument("thread plan does not cover all rows");
}

// In debug builds every output element must be written exactly once.
class WriteOnceCheck {
public:
#ifndef NDEBUG
    explicit WriteOnceCheck(std::size_t n) : n_(n), counts_(new std::atomic<std::uint32_t>[n]) {
        for (std::size_t i = 0; i < n_; ++i)
            counts_[i].store(0, std::memory_order_relaxed);
    }
    void mark(std::int64_t begin, std::int64_t end) {
        for (std::int64_t i = begin; i < end; ++i)
            counts_[static_cast<std::size_t>(i)].fetch_add(1, std::memory_order_relaxed);
    }
    void verify() const {
        for (std::size_t i = 0; i < n_; ++i)
            if (counts_[i].load(std::memory_order_relaxed) != 1)
                throw std::logic_error("parallel_gemv: output element not written exactly once");
    }

private:
    std::size_t n_;
    std::unique_ptr<std::atomic<std::uint32_t>[]> counts_;
#else
    explicit WriteOnceCheck(std::size_t) {}
    void mark(std::int64_t, std::int64_t) {}
    void verify() const {}
#endif
};

} // namespace

std::string_view policy_name(NumaPolicy p) {
    switch (p) {
    case NumaPolicy::BalancingOn: return "balancing";
    case NumaPolicy::AllOff: return "alloff";
    case NumaPolicy::CoreBinding: return "bind";
    case NumaPolicy::MemoryInterleave: return "interleave";
    }
    return "?";
}

NumaPolicy parse_policy(std::string_view name) {
    for (NumaPolicy p : kAllPolicies)
        if (policy_name(p) == name)
            return p;
    throw std::invalid_argument("unknown policy '" + std::string(name) +
                                "' (expected balancing|alloff|bind|interleave)");
}

ThreadPlan partition_rows(std::int64_t m, int n_threads) {
    if (m < 1)
        throw std::invalid_argument("partition_rows: m must be >= 1");
    if (n_threads < 1)
        throw std::invalid_argument("partition_rows: n_threads must be >= 1");

    const std::int64_t chunks = std::min<std::int64_t>(n_threads, m);
    const std::int64_t base = m / chunks;
    const std::int64_t remainder = m % chunks;

    ThreadPlan plan;
    plan.n_threads = n_threads;
    plan.ranges.reserve(static_cast<std::size_t>(chunks));
    std::int64_t row = 0;
    for (std::int64_t c = 0; c < chunks; ++c) {
        const std::int64_t len = base + (c < remainder ? 1 : 0);
        plan.ranges.push_back({row, row + len});
        row += len;
    }
    return plan;
}

std::string PlacementReport::log_line() const {
    std::ostringstream os;
    os << "placement policy=" << policy_name(policy) << " threads=" << n_threads;
    os << " pinning=";
    if (pinned_cpus.empty()) {
        os << "none";
    } else {
        for (std::size_t i = 0; i < pinned_cpus.size(); ++i)
            os << (i ? "," : "") << pinned_cpus[i];
    }
    os << " interleave=" << (interleave_applied ? "os" : (first_touch_shards ? "first-touch" : "none"));
    os << " numa_nodes=" << numa_nodes;
    if (host_numa_balancing)
        os << " host_balancing=" << (*host_numa_balancing ? "on" : "off");
    for (const std::string& w : warnings)
        os << " warning=\"" << w << "\"";
    return os.str();
}

WorkerPool::WorkerPool(int n_threads) {
    if (n_threads < 1)
        throw std::invalid_argument("worker pool needs at least one thread");
    workers_.reserve(static_cast<std::size_t>(n_threads));
    for (int i = 0; i < n_threads; ++i)
        workers_.emplace_back([this, i] { worker_main(i); });
}

WorkerPool::~WorkerPool() {
    {
        std::lock_guard lock(mu_);
        stop_ = true;
    }
    cv_job_.notify_all();
    for (std::thread& t : workers_)
        t.join();
}

void WorkerPool::worker_main(int index) {
    std::uint64_t seen = 0;
    for (;;) {
        const std::function<void(int)>* job = nullptr;
        {
            std::unique_lock lock(mu_);
            cv_job_.wait(lock, [&] { return stop_ || generation_ != seen; });
            if (stop_)
                return;
            seen = generation_;
            job = job_;
        }
        try {
            (*job)(index);
        } catch (...) {
            std::lock_guard lock(mu_);
            if (!worker_error_)
                worker_error_ = std::current_exception();
        }
        {
            std::lock_guard lock(mu_);
            ++n_done_;
        }
        cv_done_.notify_one();
    }
}

void WorkerPool::run(const std::function<void(int)>& fn) {
    std::exception_ptr err;
    {
        std::unique_lock lock(mu_);
        job_ = &fn;
        n_done_ = 0;
        ++generation_;
        cv_job_.notify_all();
        cv_done_.wait(lock, [&] { return n_done_ == size(); });
        job_ = nullptr;
        err = worker_error_;
        worker_error_ = nullptr;
    }
    if (err)
        std::rethrow_exception(err);
}

PlacementReport WorkerPool::apply_policy(NumaPolicy policy) {
    PlacementReport report;
    report.policy = policy;
    report.n_threads = size();
    report.numa_nodes = detect_numa_nodes();
    report.host_numa_balancing = read_host_numa_balancing();

    const int n_cpus = hardware_cpus();
    first_touch_active_ = false;

    // reset any previous placement
    std::atomic<int> reset_failures{0};
    run([&](int) {
        if (!unpin_self(n_cpus))
            reset_failures.fetch_add(1, std::memory_order_relaxed);
#if defined(QBENCH_HAVE_NUMA)
        if (numa_available() >= 0)
            numa_set_localalloc();
#endif
    });

    switch (policy) {
    case NumaPolicy::BalancingOn:
        if (!report.host_numa_balancing.has_value())
            report.warnings.push_back("kernel NUMA balancing state not readable on this host");
        else if (!*report.host_numa_balancing)
            report.warnings.push_back("kernel NUMA balancing is disabled on this host");
        break;

    case NumaPolicy::AllOff:
        if (report.host_numa_balancing.value_or(false))
            report.warnings.push_back("kernel NUMA balancing is enabled globally; "
                                      "it cannot be disabled in-process");
        break;

    case NumaPolicy::CoreBinding: {
        report.pinned_cpus.assign(static_cast<std::size_t>(size()), -1);
        std::atomic<int> failures{0};
        run([&](int k) {
            const int cpu = k % n_cpus;
            if (pin_self_to_cpu(cpu))
                report.pinned_cpus[static_cast<std::size_t>(k)] = cpu;
            else
                failures.fetch_add(1, std::memory_order_relaxed);
        });
        if (failures.load() > 0) {
            report.pinned_cpus.clear();
            report.warnings.push_back("thread pinning not permitted on this host");
        }
        break;
    }

    case NumaPolicy::MemoryInterleave: {
        report.interleave_requested = true;
        report.first_touch_shards = true;
        first_touch_active_ = true;
#if defined(QBENCH_HAVE_NUMA)
        if (numa_available() >= 0 && report.numa_nodes > 1) {
            run([&](int) { numa_set_interleave_mask(numa_all_nodes_ptr); });
            report.interleave_applied = true;
        } else {
            report.warnings.push_back("host exposes a single memory node; "
                                      "OS interleaving is a no-op");
        }
#else
        report.warnings.push_back("built without libnuma; OS interleaving unavailable");
#endif
        break;
    }
    }

    (void)reset_failures;
    return report;
}

PlacementReport apply_policy(NumaPolicy policy, int n_threads) {
    WorkerPool pool(n_threads);
    return pool.apply_policy(policy);
}

std::vector<float> parallel_gemv(const QuantMatrixQ4& A, std::span<const float> x,
                                 const ThreadPlan& plan, WorkerPool& pool) {
    validate_plan(plan, A.m);
    if (static_cast<int>(plan.ranges.size()) > pool.size())
        throw std::invalid_argument("thread plan has more ranges than pool workers");
    if (A.n != static_cast<std::int64_t>(x.size()))
        throw std::invalid_argument("parallel_gemv: dimension mismatch");

    // x is quantized once; workers share the immutable blocks.
    const QuantVectorQ8 xq = quantize_vec_q8(x);
    std::vector<float> out(static_cast<std::size_t>(A.m));

    if (plan.ranges.size() == 1) {
        gemv_q4_q8_rows(A, xq, 0, A.m, out.data());
        return out;
    }

    WriteOnceCheck check(out.size());
    pool.run([&](int k) {
        if (k >= static_cast<int>(plan.ranges.size()))
            return;
        const RowRange r = plan.ranges[static_cast<std::size_t>(k)];
        gemv_q4_q8_rows(A, xq, r.begin, r.end, out.data());
        check.mark(r.begin, r.end);
    });
    check.verify();
    return out;
}

std::vector<float> parallel_gemv(const QuantMatrixQ4& A, std::span<const float> x,
                                 const ThreadPlan& plan, NumaPolicy policy) {
    WorkerPool pool(static_cast<int>(plan.ranges.size()));
    pool.apply_policy(policy);
    return parallel_gemv(A, x, plan, pool);
}

std::vector<float> parallel_gemm_thin(const QuantMatrixQ4& A, const ThinMatrix& X,
                                      const ThreadPlan& plan, WorkerPool& pool) {
    validate_plan(plan, A.m);
    if (static_cast<int>(plan.ranges.size()) > pool.size())
        throw std::invalid_argument("thread plan has more ranges than pool workers");
    if (A.n != X.rows)
        throw std::invalid_argument("parallel_gemm_thin: dimension mismatch");

    std::vector<QuantVectorQ8> columns;
    columns.reserve(static_cast<std::size_t>(X.cols));
    for (std::int64_t j = 0; j < X.cols; ++j)
        columns.push_back(quantize_vec_q8(X.column(j)));

    std::vector<float> out(static_cast<std::size_t>(A.m) * static_cast<std::size_t>(X.cols));
    if (plan.ranges.size() == 1) {
        gemm_thin_rows(A, columns, 0, A.m, out.data());
        return out;
    }
    pool.run([&](int k) {
        if (k >= static_cast<int>(plan.ranges.size()))
            return;
        const RowRange r = plan.ranges[static_cast<std::size_t>(k)];
        gemm_thin_rows(A, columns, r.begin, r.end, out.data());
    });
    return out;
}

QuantMatrixQ4 first_touch_copy(const QuantMatrixQ4& A, const ThreadPlan& plan, WorkerPool& pool) {
    validate_plan(plan, A.m);
    if (static_cast<int>(plan.ranges.size()) > pool.size())
        throw std::invalid_argument("thread plan has more ranges than pool workers");

    QuantMatrixQ4 out;
    out.m = A.m;
    out.n = A.n;
    out.blocks.resize(A.blocks.size()); // pages stay untouched until workers write

    const std::int64_t nb = A.blocks_per_row();
    pool.run([&](int k) {
        if (k >= static_cast<int>(plan.ranges.size()))
            return;
        const RowRange r = plan.ranges[static_cast<std::size_t>(k)];
        std::memcpy(out.blocks.data() + r.begin * nb, A.blocks.data() + r.begin * nb,
                    static_cast<std::size_t>((r.end - r.begin) * nb) * sizeof(BlockQ4));
    });
    return out;
}

} // namespace qbench
