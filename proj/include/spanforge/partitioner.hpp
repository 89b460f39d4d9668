#pragma once

#include "spanforge/aog.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace spanforge::partition {

/// Operator kinds the accelerator can host, plus per-kind limits.
/// DocSource, Sink and SubgraphCall are never accelerable.
struct CapabilitySet {
    std::set<OperatorKind> accelerable;
    std::size_t regex_state_budget = 256;
    std::size_t max_subgraph_nodes = 0;  // 0 = unlimited

    static CapabilitySet defaults();
    static CapabilitySet extraction_only();
    /// {"accelerable":[kind names], "regex_state_budget":N, "max_subgraph_nodes":N}
    static CapabilitySet from_json(const nlohmann::json& j);
    /// "default", "extraction-only", or a path to a JSON file.
    static CapabilitySet load(std::string_view spec);

    bool allows(OperatorKind kind) const noexcept;
};

using Flags = std::map<NodeId, bool>;
using NodeSet = std::vector<NodeId>;  // ascending ids

Flags classify(const OperatorGraph& graph, const CapabilitySet& caps);

/// Strict ancestor/descendant bitsets over a graph's nodes.
class Reachability {
public:
    explicit Reachability(const OperatorGraph& graph);

    std::size_t size() const noexcept { return ids_.size(); }
    std::size_t index(NodeId id) const;
    NodeId id(std::size_t index) const noexcept { return ids_[index]; }
    bool reaches(NodeId from, NodeId to) const;

    /// No path between two members passes through a non-member.
    bool convex(const NodeSet& set) const;

private:
    friend class ConvexGrower;
    using Bits = std::vector<std::uint64_t>;

    std::vector<NodeId> ids_;
    std::map<NodeId, std::size_t> index_;
    std::vector<Bits> desc_;
    std::vector<Bits> anc_;
};

/// Greedy growth from extraction seeds (then remaining accelerable nodes) in
/// topological order; a node joins the current set iff the set stays convex.
/// Sets are disjoint, convex, and maximal with respect to both properties.
std::vector<NodeSet> maximal_convex_subgraphs(const OperatorGraph& graph, const Flags& flags,
                                              std::size_t max_nodes = 0);

/// A cut-edge source feeding one subgraph input slot. The document stream is
/// the input whose producer is the DocSource.
struct BoundaryInput {
    int slot = 0;
    NodeId producer = 0;  // id in the original graph
    int port = 0;
    std::vector<std::pair<NodeId, int>> targets;  // (internal node, slot)
    Schema schema;
    bool document = false;
};

struct BoundaryOutput {
    int port = 0;
    NodeId node = 0;
    Schema schema;
};

struct Subgraph {
    int id = 0;
    NodeId call = 0;         // SubgraphCall node in the supergraph
    OperatorGraph fragment;  // member nodes and internal edges only
    std::vector<BoundaryInput> inputs;
    std::vector<BoundaryOutput> outputs;

    bool has_document_input() const noexcept;
};

struct PartitionPlan {
    int scenario = 0;  // 0 when built by hand
    OperatorGraph supergraph;
    std::vector<Subgraph> subgraphs;
    std::map<NodeId, int> location;  // original node -> subgraph id, or -1 for host

    std::vector<NodeId> offloaded_nodes() const;
    const Subgraph& subgraph(int id) const;
};

/// Cuts each set out of `graph` (schemas inferred) and replaces it with a
/// SubgraphCall node. Throws GraphError for non-convex, overlapping or
/// unaccelerable sets, or when the contracted supergraph would be cyclic.
PartitionPlan rewrite(const OperatorGraph& graph, const std::vector<NodeSet>& sets);

/// 1: extraction operators only; 2: the single maximal convex subgraph that
/// holds every extraction node (else the largest); 3: all of them.
PartitionPlan scenario_plan(const OperatorGraph& graph, const CapabilitySet& caps, int scenario);
std::array<PartitionPlan, 3> scenario_plans(const OperatorGraph& graph, const CapabilitySet& caps);

/// Checks internal consistency; with `original`, also node conservation,
/// convexity and parameter identity against it.
void validate_plan(const PartitionPlan& plan, const OperatorGraph* original = nullptr);

nlohmann::ordered_json plan_to_json(const PartitionPlan& plan);
PartitionPlan plan_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
std::string serialize_plan(const PartitionPlan& plan);
PartitionPlan deserialize_plan(std::string_view text, const std::filesystem::path& base_dir = {});

/// Plan with no subgraphs: runs the whole graph in software.
PartitionPlan software_plan(const OperatorGraph& graph);

} // namespace spanforge::partition
