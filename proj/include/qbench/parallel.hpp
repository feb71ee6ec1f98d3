#pragma once

#include "qbench/kernels.hpp"
#include "qbench/quant.hpp"

#include <array>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace qbench {

// The four placement policies explored by the harness.
enum class NumaPolicy {
    BalancingOn,      // automatic NUMA balancing, nothing else
    AllOff,           // no pinning, no interleaving, no balancing
    CoreBinding,      // balancing off, workers pinned round-robin to CPUs
    MemoryInterleave, // balancing off, interleaved allocation + first-touch shards
};

constexpr std::array<NumaPolicy, 4> kAllPolicies = {
    NumaPolicy::BalancingOn, NumaPolicy::AllOff, NumaPolicy::CoreBinding,
    NumaPolicy::MemoryInterleave};

// Short token used on the command line and in CSV output.
std::string_view policy_name(NumaPolicy p);
NumaPolicy parse_policy(std::string_view name); // throws std::invalid_argument

struct RowRange {
    std::int64_t begin = 0;
    std::int64_t end = 0;

    std::int64_t size() const { return end - begin; }
    bool operator==(const RowRange&) const = default;
};

// Deterministic contiguous row partition: ranges are sorted, disjoint,
// cover [0, m) exactly and differ in size by at most one row.
struct ThreadPlan {
    int n_threads = 1;
    std::vector<RowRange> ranges;
};

ThreadPlan partition_rows(std::int64_t m, int n_threads);

// What a policy application actually did on this host. Placement is
// best-effort: missing OS support degrades to a warning, never an error.
struct PlacementReport {
    NumaPolicy policy = NumaPolicy::AllOff;
    int n_threads = 1;
    std::vector<int> pinned_cpus;        // empty: no pinning
    bool interleave_requested = false;
    bool interleave_applied = false;     // OS-level interleaving active
    bool first_touch_shards = false;     // workers first-touch their row shards
    int numa_nodes = 1;
    std::optional<bool> host_numa_balancing; // from /proc, when readable
    std::vector<std::string> warnings;

    std::string log_line() const;
};

// Long-lived worker pool. run() executes fn(worker_index) on every worker
// and returns after all of them finished; worker exceptions are rethrown.
class WorkerPool {
public:
    explicit WorkerPool(int n_threads);
    ~WorkerPool();
    WorkerPool(const WorkerPool&) = delete;
    WorkerPool& operator=(const WorkerPool&) = delete;

    int size() const { return static_cast<int>(workers_.size()); }
    void run(const std::function<void(int)>& fn);

    // Applies pinning / memory policy on the workers themselves. Safe to call
    // repeatedly; earlier placement is reset first.
    PlacementReport apply_policy(NumaPolicy policy);

    // Set when the active policy wants worker-side first-touch of data shards.
    bool first_touch_active() const { return first_touch_active_; }

private:
    void worker_main(int index);

    std::vector<std::thread> workers_;
    std::mutex mu_;
    std::condition_variable cv_job_;
    std::condition_variable cv_done_;
    const std::function<void(int)>* job_ = nullptr;
    std::uint64_t generation_ = 0;
    int n_done_ = 0;
    bool stop_ = false;
    std::exception_ptr worker_error_;
    bool first_touch_active_ = false;
};

// One-shot probe: creates a pool, applies the policy, reports.
PlacementReport apply_policy(NumaPolicy policy, int n_threads);

// Row-partitioned quantized GEMV. Bitwise-identical to the serial
// gemv_quantizing(A, x) for any plan, pool size and policy.
std::vector<float> parallel_gemv(const QuantMatrixQ4& A, std::span<const float> x,
                                 const ThreadPlan& plan, WorkerPool& pool);
std::vector<float> parallel_gemv(const QuantMatrixQ4& A, std::span<const float> x,
                                 const ThreadPlan& plan, NumaPolicy policy);

// Row-partitioned thin GEMM; bitwise-identical to serial gemm_thin.
std::vector<float> parallel_gemm_thin(const QuantMatrixQ4& A, const ThinMatrix& X,
                                      const ThreadPlan& plan, WorkerPool& pool);

// Rebuilds the block storage with every worker copying its own row range,
// so pages land near their consumer under first-touch placement.
QuantMatrixQ4 first_touch_copy(const QuantMatrixQ4& A, const ThreadPlan& plan, WorkerPool& pool);

} // namespace qbench
