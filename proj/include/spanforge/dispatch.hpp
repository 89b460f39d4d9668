#pragma once

#include "spanforge/accel.hpp"
#include "spanforge/corpus.hpp"
#include "spanforge/executor.hpp"
#include "spanforge/partitioner.hpp"
#include "spanforge/profiler.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace spanforge::dispatch {

using Clock = std::chrono::steady_clock;

struct DispatchConfig {
    std::size_t byte_threshold = 1000;
    std::size_t max_docs_per_package = 8;
    std::chrono::microseconds flush_timeout{1000};
    std::size_t worker_threads = default_worker_threads();

    static std::size_t default_worker_threads() noexcept;
    void validate() const;
};

enum class PackReason { Threshold, MaxDocs, Timeout, Drain };
std::string_view to_string(PackReason reason) noexcept;

/// One subgraph invocation waiting for the accelerator.
struct Submission {
    std::uint64_t ticket = 0;
    int subgraph = 0;
    accel::StreamEntry entry;
    std::size_t bytes = 0;
    Clock::time_point submitted{};
};

struct WorkPackage {
    std::uint64_t id = 0;
    int subgraph = 0;
    std::vector<Submission> entries;
    std::size_t payload_bytes = 0;
    PackReason reason = PackReason::Drain;
};

/// Per-subgraph FIFO queues and the packing rule; no threads, no clocks of
/// its own.
class Packer {
public:
    explicit Packer(DispatchConfig config);

    void submit(Submission s);
    /// The next package if the rule allows one: payload > threshold or
    /// max docs reached, else the oldest entry has waited flush_timeout,
    /// else `drain` is set.
    std::optional<WorkPackage> pack(Clock::time_point now, bool drain);
    std::size_t pending() const noexcept;
    /// When the oldest queued entry times out.
    std::optional<Clock::time_point> next_deadline() const;

private:
    DispatchConfig config_;
    std::map<int, std::deque<Submission>> queues_;
    std::uint64_t next_id_ = 0;
};

struct CompletionSignal {
    std::uint64_t package = 0;
    std::vector<accel::EntryResult> results;  // per entry, in package order
};

struct PackageRecord {
    std::uint64_t id = 0;
    int subgraph = 0;
    std::size_t entries = 0;
    std::size_t payload_bytes = 0;
    PackReason reason = PackReason::Drain;
};

struct DispatchStats {
    std::vector<PackageRecord> packages;
    std::uint64_t submissions = 0;
    std::uint64_t releases = 0;
    std::uint64_t accel_cycles = 0;
    std::map<int, std::vector<accel::StageTrace>> trace;  // per subgraph
};

/// Communication thread plus accelerator executor. Workers call `call`,
/// which blocks (sleeping) until the package holding their entry completes.
class Dispatcher {
public:
    Dispatcher(DispatchConfig config, std::map<int, const accel::Pipeline*> pipelines, accel::StreamOptions stream,
               std::size_t workers);
    ~Dispatcher();
    Dispatcher(const Dispatcher&) = delete;
    Dispatcher& operator=(const Dispatcher&) = delete;

    /// Worker side: submits and sleeps until released. Returns the entry's
    /// result, which may carry a per-entry error.
    accel::EntryResult call(int subgraph, accel::StreamEntry entry);
    /// A worker will submit nothing further.
    void worker_exited();

    /// Releases every ticket of a dispatched package exactly once. Throws
    /// InvariantViolation for an unknown or already completed package.
    void complete(CompletionSignal signal);

    /// Stops the threads after all work drained; rethrows a fatal error.
    void shutdown();
    DispatchStats stats() const;

private:
    struct Slot {
        std::mutex m;
        std::condition_variable cv;
        bool ready = false;
        accel::EntryResult result;
    };

    void communication_loop();
    void accelerator_loop();
    void fail(std::exception_ptr e);

    DispatchConfig config_;
    std::map<int, const accel::Pipeline*> pipelines_;
    accel::StreamOptions stream_;

    mutable std::mutex m_;
    std::condition_variable cv_;        // communication thread
    std::condition_variable accel_cv_;  // accelerator executor
    std::deque<Submission> submit_queue_;  // workers -> communication thread
    Packer packer_;                        // communication thread only
    std::deque<WorkPackage> accel_queue_;
    std::deque<CompletionSignal> completions_;
    std::map<std::uint64_t, std::vector<std::uint64_t>> in_flight_;  // package -> tickets
    std::map<std::uint64_t, std::shared_ptr<Slot>> slots_;
    std::uint64_t next_ticket_ = 0;
    std::size_t live_workers_;
    std::size_t blocked_ = 0;
    bool stopping_ = false;
    bool accel_stop_ = false;
    std::exception_ptr fatal_;
    DispatchStats stats_;

    std::thread comm_;
    std::thread accel_;
};

struct RunOptions {
    partition::CapabilitySet caps = partition::CapabilitySet::defaults();
    accel::PipelineOptions pipeline;
    accel::CostModel cost;
    accel::LaneMode lane_mode = accel::LaneMode::Simulated;
    bool profile = true;
};

struct RunResult {
    std::vector<DocumentAnnotations> documents;  // corpus order
    profile::ProfileReport profile;
    DispatchStats stats;
};

/// Document-per-thread execution of the plan's supergraph; SubgraphCall
/// nodes go through the dispatcher. Failed documents are reported in their
/// DocumentAnnotations; the run continues.
RunResult run_corpus(const partition::PartitionPlan& plan, const corpus::Corpus& corpus, const DispatchConfig& config,
                     const RunOptions& options = {});

/// Builds one pipeline per subgraph of the plan.
std::map<int, accel::Pipeline> build_pipelines(const partition::PartitionPlan& plan, const RunOptions& options);

} // namespace spanforge::dispatch
