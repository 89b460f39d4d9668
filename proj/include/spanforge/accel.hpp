#pragma once

#include "spanforge/operators.hpp"
#include "spanforge/partitioner.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <vector>

namespace spanforge::accel {

struct CostModel {
    double peak_bandwidth = 500e6;   // bytes/s
    double package_rate = 48828.125; // packages/s, see calibrated_package_rate
    std::size_t lanes = 4;
    double clock_hz = 250e6;
    std::uint64_t setup_cycles = 64;  // per document
    std::size_t docs_per_package = 8;

    void validate() const;
};

/// Package rate at which `docs_per_package` documents of `doc_size` bytes
/// reach peak/`factor`.
double calibrated_package_rate(double peak_bandwidth, std::size_t docs_per_package, double doc_size,
                               double factor);

/// min(peak, package_rate * docs_per_package * doc_size). Throws Error for
/// doc_size <= 0.
double model_throughput(const CostModel& cost, double doc_size, std::size_t docs_per_package);
double model_throughput(const CostModel& cost, double doc_size);

/// Bounded reorder window keyed by (begin, end) of one Span column.
class SortingBuffer {
public:
    SortingBuffer(std::size_t capacity, std::optional<std::size_t> key_column, std::string stage = "sort");

    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t size() const noexcept { return heap_.size(); }
    bool full() const noexcept { return heap_.size() >= capacity_; }
    bool empty() const noexcept { return heap_.empty(); }

    /// Throws StageError if the buffer is full, or if the tuple sorts before
    /// one already emitted (the window was too small to restore order).
    void push(Tuple t);
    /// Smallest buffered tuple.
    Tuple pop();

private:
    struct Entry {
        Span key;
        std::uint64_t seq;
        Tuple tuple;
    };
    struct Later {
        bool operator()(const Entry& a, const Entry& b) const noexcept {
            if (a.key != b.key) return b.key < a.key;
            return b.seq < a.seq;
        }
    };

    Span key_of(const Tuple& t) const;

    std::size_t capacity_;
    std::optional<std::size_t> key_column_;
    std::string stage_;
    std::priority_queue<Entry, std::vector<Entry>, Later> heap_;
    std::uint64_t seq_ = 0;
    std::optional<Span> last_;
};

/// Streaming Aho-Corasick matcher over case-folded entries.
class AhoCorasick {
public:
    explicit AhoCorasick(const ops::Dictionary& dict);

    int root() const noexcept { return 0; }
    int step(int state, char32_t folded) const noexcept;
    /// Lengths of every entry that ends in `state`.
    const std::vector<std::uint32_t>& ends(int state) const noexcept { return nodes_[static_cast<std::size_t>(state)].out; }
    std::size_t max_length() const noexcept { return max_length_; }

private:
    struct Node {
        std::vector<std::pair<char32_t, int>> next;
        int fail = 0;
        std::vector<std::uint32_t> out;
    };
    int child(int node, char32_t c) const noexcept;

    std::vector<Node> nodes_;
    std::size_t max_length_ = 0;
};

enum class StageKind {
    Regex,
    Dictionary,
    Select,
    Project,
    Join,
    Union,
    Consolidate,
    SortingBuffer,
    HostInput,
    Output,
};

std::string_view to_string(StageKind kind) noexcept;

struct PipelineOptions {
    std::size_t channel_capacity = 16;   // tuples
    std::size_t tap_window = 64;         // characters the fastest tap may lead the slowest
    std::size_t sort_capacity = 1024;    // tuples
};

/// Static description of one pipeline stage.
struct StageSpec {
    StageKind kind = StageKind::Select;
    std::string name;
    NodeId node = -1;              // -1 for buffers, host inputs and outputs
    int slot = -1;                 // HostInput: subgraph input slot; Output: port
    std::vector<int> inputs;       // producing stage per input slot
    std::vector<int> consumers;    // stages fed by this one
    Schema schema;                 // output schema
    bool sorted = true;            // output nondecreasing in (begin, end)
    std::optional<std::size_t> key_column;
};

/// Per-stage totals for the cycle/trace CSV.
struct StageTrace {
    std::uint64_t cycles = 0;
    std::uint64_t tuples_in = 0;
    std::uint64_t tuples_out = 0;
};

/// Recorded when instrumentation is on, per document.
struct StreamAudit {
    std::vector<std::vector<std::uint32_t>> tap_reads;  // per extraction stage, per character
    std::vector<int> tap_stages;                        // stage index of each tap
    std::vector<std::vector<Span>> sorted_streams;      // key sequences at sorted-input consumers
    std::vector<std::string> sorted_stream_names;
};

struct DocumentRun {
    std::vector<ops::AnnotationSet> outputs;  // per output port, canonical order
    std::uint64_t cycles = 0;                 // setup + bottleneck stage cycles
    std::vector<StageTrace> trace;
    std::optional<StreamAudit> audit;
};

/// Stages compiled from one subgraph. Immutable after build; run_document
/// creates fresh per-document state, so one Pipeline may serve many lanes.
class Pipeline {
public:
    /// Throws GraphError for kinds the capabilities exclude and
    /// PatternTooComplex for regexes over the state budget.
    static Pipeline build(const partition::Subgraph& subgraph, const partition::CapabilitySet& caps,
                          const PipelineOptions& options = {}, const CostModel& cost = {});

    const std::vector<StageSpec>& stages() const noexcept { return stages_; }
    std::size_t node_stage_count() const noexcept;
    std::size_t sorting_buffer_count() const noexcept;
    int subgraph_id() const noexcept { return subgraph_id_; }
    std::size_t input_count() const noexcept { return input_count_; }
    std::size_t output_count() const noexcept { return output_count_; }
    const PipelineOptions& options() const noexcept { return options_; }
    const CostModel& cost() const noexcept { return cost_; }

    /// `inputs` holds one set per subgraph input slot; the document slot's
    /// entry is ignored and may be null. Throws StageError on buffer overflow
    /// and InvariantViolation if the scheduler deadlocks.
    DocumentRun run_document(const Document& doc, const std::vector<const ops::AnnotationSet*>& inputs,
                             bool instrument = false) const;

    struct Compiled;

private:
    int subgraph_id_ = 0;
    std::size_t input_count_ = 0;
    std::size_t output_count_ = 0;
    PipelineOptions options_;
    CostModel cost_;
    std::vector<StageSpec> stages_;
    std::shared_ptr<const Compiled> compiled_;
};

Pipeline build_pipeline(const partition::Subgraph& subgraph, const partition::CapabilitySet& caps,
                        const PipelineOptions& options = {}, const CostModel& cost = {});

struct StreamEntry {
    DocumentPtr doc;
    std::vector<ops::AnnotationSet> inputs;  // per subgraph input slot; document slot left empty
};

struct EntryResult {
    std::vector<ops::AnnotationSet> outputs;
    std::optional<std::string> error;  // "stage: reason"
    std::uint64_t cycles = 0;
    std::optional<StreamAudit> audit;
};

struct StreamResult {
    std::vector<EntryResult> entries;         // in package order
    std::vector<std::uint64_t> lane_cycles;   // busy cycles per lane
    std::uint64_t cycles = 0;                 // sum over lanes
    std::vector<StageTrace> trace;            // per stage, summed over entries
};

enum class LaneMode { Simulated, Threaded };

struct StreamOptions {
    LaneMode mode = LaneMode::Simulated;
    bool instrument = false;
};

/// Runs a package: entry i goes to lane i mod lanes. Per-entry failures are
/// reported in EntryResult::error; others complete normally.
StreamResult execute_stream(const Pipeline& pipeline, const std::vector<StreamEntry>& entries,
                            const StreamOptions& options = {});

/// `stage,cycles,tuples_in,tuples_out`
std::string trace_csv(const Pipeline& pipeline, const std::vector<StageTrace>& trace);

} // namespace spanforge::accel
