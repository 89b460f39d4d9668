#include "spanforge/executor.hpp"

#include "spanforge/error.hpp"

#include <algorithm>
#include <chrono>

namespace spanforge {

CompiledGraph::CompiledGraph(OperatorGraph graph, std::size_t regex_budget) : graph_(std::move(graph)) {
    require_valid(graph_);
    order_ = topo_order(graph_);
    const std::size_t n = order_.size();
    dfas_.resize(n);
    dicts_.resize(n);
    preds_.resize(n);
    inputs_.resize(n);
    for (std::size_t i = 0; i < n; ++i) dense_[order_[i]] = i;
    for (std::size_t i = 0; i < n; ++i) {
        const OperatorNode& node = graph_.node(order_[i]);
        inputs_[i] = graph_.inputs_of(node.id);
        switch (node.kind) {
            case OperatorKind::RegexExtract:
                dfas_[i] = std::make_unique<regex::Dfa>(regex::compile(node.as<RegexParams>().pattern, regex_budget));
                break;
            case OperatorKind::DictionaryExtract: {
                const auto& p = node.as<DictionaryParams>();
                dicts_[i] = std::make_unique<ops::Dictionary>(p.dict, p.entries);
                break;
            }
            case OperatorKind::Select: {
                const Schema& in = graph_.port_schema(inputs_[i][0].producer, inputs_[i][0].port);
                preds_[i] = std::make_unique<ops::BoundPredicate>(
                    ops::BoundPredicate::for_select(node.as<PredicateParams>().predicate, in));
                break;
            }
            case OperatorKind::Join: {
                const Schema& l = graph_.port_schema(inputs_[i][0].producer, inputs_[i][0].port);
                const Schema& r = graph_.port_schema(inputs_[i][1].producer, inputs_[i][1].port);
                preds_[i] = std::make_unique<ops::BoundPredicate>(
                    ops::BoundPredicate::for_join(node.as<PredicateParams>().predicate, l, r));
                break;
            }
            default:
                break;
        }
    }
}

std::size_t CompiledGraph::dense_index(NodeId id) const {
    auto it = dense_.find(id);
    if (it == dense_.end()) throw GraphError("no node with id " + std::to_string(id));
    return it->second;
}

void NodeClock::merge(const NodeClock& other) {
    if (seconds.size() < other.seconds.size()) {
        seconds.resize(other.seconds.size(), 0.0);
        calls.resize(other.calls.size(), 0);
    }
    for (std::size_t i = 0; i < other.seconds.size(); ++i) {
        seconds[i] += other.seconds[i];
        calls[i] += other.calls[i];
    }
}

NodeResults execute_all(const CompiledGraph& cg, const DocumentPtr& doc, const ExecutionHooks& hooks) {
    const OperatorGraph& g = cg.graph();
    NodeResults results(cg.node_count());
    using clock = std::chrono::steady_clock;

    for (std::size_t i = 0; i < cg.node_count(); ++i) {
        const OperatorNode& node = g.node(cg.order()[i]);
        const auto& in_edges = cg.inputs(i);
        std::vector<const ops::AnnotationSet*> inputs;
        inputs.reserve(in_edges.size());
        for (const auto& e : in_edges) {
            inputs.push_back(&results[cg.dense_index(e.producer)][static_cast<std::size_t>(e.port)]);
        }

        const auto t0 = hooks.clock ? clock::now() : clock::time_point{};
        auto& out = results[i];
        switch (node.kind) {
            case OperatorKind::DocSource:
                out.push_back({node.output_schema, {{Value{doc->utf8}}}});
                break;
            case OperatorKind::RegexExtract:
                out.push_back(ops::regex_extract(doc->text, *cg.dfa(i)));
                break;
            case OperatorKind::DictionaryExtract:
                out.push_back(ops::dictionary_extract(doc->text, *cg.dictionary(i)));
                break;
            case OperatorKind::Select:
                out.push_back(ops::select(*inputs[0], *cg.predicate(i)));
                break;
            case OperatorKind::Project:
                out.push_back(ops::project(*inputs[0], node.as<ProjectParams>().columns));
                break;
            case OperatorKind::Join:
                out.push_back(ops::span_join(*inputs[0], *inputs[1], *cg.predicate(i), node.output_schema));
                break;
            case OperatorKind::Union:
                out.push_back(ops::union_all(inputs));
                break;
            case OperatorKind::Consolidate:
                out.push_back(ops::consolidate(*inputs[0], node.as<ConsolidateParams>().policy));
                break;
            case OperatorKind::Sink:
                out.push_back(*inputs[0]);
                break;
            case OperatorKind::SubgraphCall: {
                if (!hooks.invoke_subgraph) {
                    throw GraphError("node " + std::to_string(node.id) +
                                     " is a SubgraphCall but no accelerator is attached");
                }
                out = hooks.invoke_subgraph(node, doc, inputs);
                if (out.size() != node.as<CallParams>().outputs.size()) {
                    throw InvariantViolation("subgraph call returned the wrong number of ports");
                }
                break;
            }
        }
        if (hooks.clock) {
            hooks.clock->seconds[i] += std::chrono::duration<double>(clock::now() - t0).count();
            ++hooks.clock->calls[i];
        }
    }
    return results;
}

std::map<NodeId, ops::AnnotationSet> execute_sinks(const CompiledGraph& cg, const DocumentPtr& doc,
                                                   const ExecutionHooks& hooks) {
    NodeResults all = execute_all(cg, doc, hooks);
    std::map<NodeId, ops::AnnotationSet> out;
    for (NodeId id : cg.graph().outputs()) {
        out.emplace(id, std::move(all[cg.dense_index(id)].front()));
    }
    return out;
}

std::map<NodeId, ops::AnnotationSet> execute_graph_software(const OperatorGraph& graph, const Document& doc) {
    CompiledGraph cg(graph);
    return execute_sinks(cg, std::make_shared<const Document>(doc));
}

DocumentAnnotations label_sinks(const OperatorGraph& graph, const std::string& doc_id,
                                const std::map<NodeId, ops::AnnotationSet>& sinks) {
    DocumentAnnotations out;
    out.doc = doc_id;
    for (const auto& [id, set] : sinks) {
        const auto& node = graph.node(id);
        const std::string& view = node.as<SinkParams>().view.empty() ? node.name : node.as<SinkParams>().view;
        out.views[view] = set;
    }
    return out;
}

namespace {

nlohmann::ordered_json value_json(const Value& v) {
    return std::visit(
        [](const auto& x) -> nlohmann::ordered_json {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, Span>) {
                nlohmann::ordered_json j;
                j["begin"] = x.begin;
                j["end"] = x.end;
                return j;
            } else {
                return nlohmann::ordered_json(x);
            }
        },
        v);
}

} // namespace

std::string to_jsonl(std::vector<DocumentAnnotations> docs) {
    std::sort(docs.begin(), docs.end(),
              [](const DocumentAnnotations& a, const DocumentAnnotations& b) { return a.doc < b.doc; });
    std::string out;
    for (auto& d : docs) {
        if (d.error) continue;
        for (auto& [view, set] : d.views) {
            set.canonicalize();
            for (const auto& t : set.tuples) {
                nlohmann::ordered_json rec;
                rec["doc"] = d.doc;
                rec["view"] = view;
                nlohmann::ordered_json cols = nlohmann::ordered_json::object();
                for (std::size_t c = 0; c < set.schema.size(); ++c) {
                    cols[set.schema.columns()[c].name] = value_json(t[c]);
                }
                rec["cols"] = std::move(cols);
                out += rec.dump();
                out += '\n';
            }
        }
    }
    return out;
}

} // namespace spanforge
