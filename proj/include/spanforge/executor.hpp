#pragma once

#include "spanforge/aog.hpp"
#include "spanforge/operators.hpp"

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace spanforge {

/// A validated, schema-annotated graph with every regex and dictionary
/// compiled once. Immutable and shareable across worker threads.
class CompiledGraph {
public:
    explicit CompiledGraph(OperatorGraph graph, std::size_t regex_budget = regex::kSoftwareStateBudget);

    const OperatorGraph& graph() const noexcept { return graph_; }
    const std::vector<NodeId>& order() const noexcept { return order_; }
    std::size_t dense_index(NodeId id) const;
    std::size_t node_count() const noexcept { return order_.size(); }

    const regex::Dfa* dfa(std::size_t dense) const noexcept { return dfas_[dense].get(); }
    const ops::Dictionary* dictionary(std::size_t dense) const noexcept { return dicts_[dense].get(); }
    const ops::BoundPredicate* predicate(std::size_t dense) const noexcept { return preds_[dense].get(); }
    /// Inputs of a node (by dense index), ordered by slot.
    const std::vector<Edge>& inputs(std::size_t dense) const noexcept { return inputs_[dense]; }

private:
    OperatorGraph graph_;
    std::vector<NodeId> order_;
    std::map<NodeId, std::size_t> dense_;
    std::vector<std::unique_ptr<regex::Dfa>> dfas_;
    std::vector<std::unique_ptr<ops::Dictionary>> dicts_;
    std::vector<std::unique_ptr<ops::BoundPredicate>> preds_;
    std::vector<std::vector<Edge>> inputs_;
};

/// Per-node accumulated seconds, indexed by CompiledGraph::dense_index.
struct NodeClock {
    std::vector<double> seconds;
    std::vector<std::uint64_t> calls;

    void resize(std::size_t n) {
        seconds.assign(n, 0.0);
        calls.assign(n, 0);
    }
    void merge(const NodeClock& other);
};

/// Handles a SubgraphCall node: receives the call node, the document and the
/// call's input sets in slot order; returns one set per output port.
using SubgraphInvoker = std::function<std::vector<ops::AnnotationSet>(
    const OperatorNode& call, const DocumentPtr& doc, const std::vector<const ops::AnnotationSet*>& inputs)>;

struct ExecutionHooks {
    SubgraphInvoker invoke_subgraph;
    NodeClock* clock = nullptr;  // null disables timing
};

/// Output sets of every node, by dense index then port.
using NodeResults = std::vector<std::vector<ops::AnnotationSet>>;

/// Evaluates every node in topological order, materializing each output.
NodeResults execute_all(const CompiledGraph& graph, const DocumentPtr& doc, const ExecutionHooks& hooks = {});

/// Sink outputs keyed by sink node id.
std::map<NodeId, ops::AnnotationSet> execute_sinks(const CompiledGraph& graph, const DocumentPtr& doc,
                                                   const ExecutionHooks& hooks = {});

/// Convenience form of the software oracle: compiles `graph` and runs it.
std::map<NodeId, ops::AnnotationSet> execute_graph_software(const OperatorGraph& graph, const Document& doc);

/// Annotations of one document keyed by output view name, or the error that
/// stopped its processing.
struct DocumentAnnotations {
    std::string doc;
    std::map<std::string, ops::AnnotationSet> views;
    std::optional<std::string> error;
};

DocumentAnnotations label_sinks(const OperatorGraph& graph, const std::string& doc_id,
                                const std::map<NodeId, ops::AnnotationSet>& sinks);

/// One JSON line per sink tuple, sorted by (doc, view, canonical order).
/// Failed documents are omitted.
std::string to_jsonl(std::vector<DocumentAnnotations> docs);

} // namespace spanforge
