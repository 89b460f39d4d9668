#pragma once

#include "spanforge/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace spanforge {

using NodeId = std::int32_t;

enum class OperatorKind {
    DocSource,
    RegexExtract,
    DictionaryExtract,
    Select,
    Project,
    Join,
    Union,
    Consolidate,
    Sink,
    SubgraphCall,
};

std::string_view to_string(OperatorKind kind) noexcept;
std::optional<OperatorKind> parse_operator_kind(std::string_view name) noexcept;

bool is_extraction(OperatorKind kind) noexcept;
bool is_relational(OperatorKind kind) noexcept;

/// Span predicate tree. Two-column atoms inside a Join resolve their first
/// column against the left input and the second against the right input.
struct Predicate {
    enum class Op { Follows, Contains, Overlaps, SpanLengthGreaterThan, And, Or, Not };

    Op op = Op::Contains;
    std::vector<std::string> columns;
    std::int64_t min = 0;  // Follows lower gap, or SpanLengthGreaterThan bound
    std::int64_t max = 0;  // Follows upper gap
    std::vector<Predicate> children;

    static Predicate follows(std::string a, std::string b, std::int64_t min, std::int64_t max);
    static Predicate contains(std::string a, std::string b);
    static Predicate overlaps(std::string a, std::string b);
    static Predicate length_greater_than(std::string a, std::int64_t k);
    static Predicate conjunction(Predicate a, Predicate b);
    static Predicate disjunction(Predicate a, Predicate b);
    static Predicate negation(Predicate a);

    friend bool operator==(const Predicate&, const Predicate&) = default;
};

std::string_view to_string(Predicate::Op op) noexcept;

struct NoParams {
    friend bool operator==(const NoParams&, const NoParams&) = default;
};
struct RegexParams {
    std::string pattern;
    friend bool operator==(const RegexParams&, const RegexParams&) = default;
};
struct DictionaryParams {
    std::string dict;
    std::vector<std::string> entries;
    std::string dict_file;  // set only when entries still need loading
    friend bool operator==(const DictionaryParams&, const DictionaryParams&) = default;
};
struct PredicateParams {
    Predicate predicate;
    friend bool operator==(const PredicateParams&, const PredicateParams&) = default;
};
struct ProjectParams {
    std::vector<std::string> columns;
    friend bool operator==(const ProjectParams&, const ProjectParams&) = default;
};
struct ConsolidateParams {
    std::string policy = "contained_within";
    friend bool operator==(const ConsolidateParams&, const ConsolidateParams&) = default;
};
struct SinkParams {
    std::string view;
    friend bool operator==(const SinkParams&, const SinkParams&) = default;
};
struct CallParams {
    int subgraph = -1;
    int inputs = 0;
    std::vector<Schema> outputs;  // one schema per output port
    friend bool operator==(const CallParams&, const CallParams&) = default;
};

using NodeParams = std::variant<NoParams, RegexParams, DictionaryParams, PredicateParams,
                                ProjectParams, ConsolidateParams, SinkParams, CallParams>;

struct OperatorNode {
    NodeId id = 0;
    OperatorKind kind = OperatorKind::DocSource;
    NodeParams params;
    std::string name;      // view name, informational
    Schema output_schema;  // filled by infer_schemas

    template <typename P>
    const P& as() const {
        return std::get<P>(params);
    }
    friend bool operator==(const OperatorNode&, const OperatorNode&) = default;
};

struct Edge {
    NodeId producer = 0;
    NodeId consumer = 0;
    int slot = 0;
    int port = 0;  // nonzero only for SubgraphCall producers

    friend auto operator<=>(const Edge&, const Edge&) = default;
};

class OperatorGraph {
public:
    /// Node ids must be unique; nodes are kept sorted by id.
    void add_node(OperatorNode node);
    void add_edge(Edge edge);
    void set_outputs(std::vector<NodeId> outputs) { outputs_ = std::move(outputs); }

    const std::vector<OperatorNode>& nodes() const noexcept { return nodes_; }
    const std::vector<Edge>& edges() const noexcept { return edges_; }
    const std::vector<NodeId>& outputs() const noexcept { return outputs_; }

    bool contains(NodeId id) const noexcept;
    const OperatorNode& node(NodeId id) const;
    OperatorNode& node(NodeId id);
    NodeId max_id() const noexcept;

    /// Incoming edges of `id`, ordered by slot.
    std::vector<Edge> inputs_of(NodeId id) const;
    std::vector<Edge> outputs_of(NodeId id) const;

    /// Schema carried by a producer port.
    const Schema& port_schema(NodeId producer, int port) const;

    friend bool operator==(const OperatorGraph&, const OperatorGraph&) = default;

private:
    std::size_t index_of(NodeId id) const;

    std::vector<OperatorNode> nodes_;
    std::vector<Edge> edges_;
    std::vector<NodeId> outputs_;
};

struct Finding {
    std::vector<NodeId> nodes;
    std::string message;
};

struct ValidationReport {
    std::vector<Finding> findings;
    bool ok() const noexcept { return findings.empty(); }
    std::string summary() const;
};

ValidationReport validate_graph(const OperatorGraph& graph);

/// Throws GraphError carrying the report summary when validation fails.
void require_valid(const OperatorGraph& graph);

/// Producers precede consumers; ties broken by ascending node id.
/// Throws GraphError on a cycle.
std::vector<NodeId> topo_order(const OperatorGraph& graph);

/// Populates every node's output schema. Throws SchemaError on mismatches.
OperatorGraph infer_schemas(OperatorGraph graph);

/// Join output schema: left columns then right columns, renaming right-side
/// collisions by appending "_r".
Schema join_schema(const Schema& left, const Schema& right);

inline constexpr int kAogVersion = 1;

nlohmann::ordered_json predicate_to_json(const Predicate& p);
Predicate predicate_from_json(const nlohmann::json& j);
nlohmann::ordered_json schema_to_json(const Schema& s);
Schema schema_from_json(const nlohmann::json& j);

nlohmann::ordered_json node_to_json(const OperatorNode& node);
OperatorNode node_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
nlohmann::ordered_json edge_to_json(const Edge& e);
Edge edge_from_json(const nlohmann::json& j);

nlohmann::ordered_json graph_to_json(const OperatorGraph& graph);
/// Reads nodes/edges/outputs; dictionary files resolve against `base_dir`.
OperatorGraph graph_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

/// Canonical text form (2-space indented JSON, trailing newline).
std::string serialize_aog(const OperatorGraph& graph);
/// Throws FormatError on malformed input, unknown kinds or version mismatch.
OperatorGraph deserialize_aog(std::string_view text, const std::filesystem::path& base_dir = {});

std::vector<std::string> load_dictionary_file(const std::filesystem::path& path);

} // namespace spanforge
