#pragma once

#include "spanforge/accel.hpp"
#include "spanforge/aog.hpp"
#include "spanforge/corpus.hpp"
#include "spanforge/executor.hpp"
#include "spanforge/partitioner.hpp"

#include <map>
#include <string>
#include <vector>

namespace spanforge::dispatch {
struct DispatchConfig;
struct RunOptions;
} // namespace spanforge::dispatch

namespace spanforge::profile {

/// Accumulated operator time of one run.
struct ProfileReport {
    std::map<NodeId, double> per_node;         // seconds
    std::map<std::string, double> per_kind;    // seconds, keyed by operator kind name
    std::uint64_t bytes = 0;
    double total_s = 0;                        // wall-clock time of the run
    std::size_t threads = 1;

    /// Builds per-node and per-kind totals from a merged clock.
    static ProfileReport from_clock(const CompiledGraph& graph, const NodeClock& clock);

    double throughput() const noexcept { return total_s > 0 ? static_cast<double>(bytes) / total_s : 0.0; }
    double profiled_seconds() const noexcept;

    nlohmann::ordered_json to_json() const;
    static ProfileReport from_json(const nlohmann::json& j);
};

/// Fraction of profiled operator time per kind. Throws Error on an empty
/// profile.
std::map<std::string, double> relative_distribution(const ProfileReport& report);

/// Sum of the distribution over extraction kinds, resp. relational kinds.
double extraction_fraction(const std::map<std::string, double>& distribution);
double relational_fraction(const std::map<std::string, double>& distribution);

struct EstimateInput {
    double tp_sw = 0;  // bytes/s
    double tp_hw = 0;  // bytes/s
    double rt_sw = 0;  // residual software runtime fraction

    void validate() const;
};

/// 1 / (1/tp_HW + rt_SW/tp_SW)
double estimate_throughput(const EstimateInput& in);

struct ScenarioEstimate {
    int scenario = 0;
    double rt_sw = 0;
    double tp_sw = 0;
    double tp_hw = 0;
    double tp_est = 0;
    double speedup = 0;
    std::string accounting;  // "pessimistic" for scenarios 1-2, "optimistic" for 3
    bool no_benefit = false;
};

/// rt_SW = 1 - (time share of the plan's offloaded nodes); tp_HW from the
/// cost model at `doc_size`. Throws Error if a plan offloads a node the
/// profile never saw.
ScenarioEstimate estimate_scenario(const ProfileReport& profile, const partition::PartitionPlan& plan,
                                   const accel::CostModel& cost, double doc_size);
std::vector<ScenarioEstimate> speedup_report(const ProfileReport& profile,
                                             const std::vector<const partition::PartitionPlan*>& plans,
                                             const accel::CostModel& cost, double doc_size);

/// `scenario,rt_sw,tp_sw,tp_hw,tp_est,speedup,accounting`
std::string report_csv(const std::vector<ScenarioEstimate>& rows);
/// Fixed-width table for terminals.
std::string report_table(const std::vector<ScenarioEstimate>& rows);

/// `kind,seconds,fraction`
std::string distribution_csv(const ProfileReport& report);

struct ScanRow {
    std::size_t threads = 0;
    std::uint64_t bytes = 0;
    double seconds = 0;
    double throughput = 0;
};

/// Runs the plan over the corpus once per thread count.
std::vector<ScanRow> throughput_scan(const partition::PartitionPlan& plan, const corpus::Corpus& corpus,
                                     const std::vector<std::size_t>& thread_counts,
                                     const dispatch::DispatchConfig& config, const dispatch::RunOptions& options);

/// `threads,bytes,seconds,bytes_per_s`
std::string scan_csv(const std::vector<ScanRow>& rows);

} // namespace spanforge::profile
