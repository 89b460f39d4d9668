#include "spanforge/aog.hpp"

#include "spanforge/error.hpp"
#include "spanforge/regex.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <queue>
#include <set>
#include <sstream>

namespace spanforge {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr std::pair<OperatorKind, std::string_view> kKindNames[] = {
    {OperatorKind::DocSource, "DocSource"},
    {OperatorKind::RegexExtract, "RegexExtract"},
    {OperatorKind::DictionaryExtract, "DictionaryExtract"},
    {OperatorKind::Select, "Select"},
    {OperatorKind::Project, "Project"},
    {OperatorKind::Join, "Join"},
    {OperatorKind::Union, "Union"},
    {OperatorKind::Consolidate, "Consolidate"},
    {OperatorKind::Sink, "Sink"},
    {OperatorKind::SubgraphCall, "SubgraphCall"},
};

constexpr std::pair<Predicate::Op, std::string_view> kOpNames[] = {
    {Predicate::Op::Follows, "Follows"},
    {Predicate::Op::Contains, "Contains"},
    {Predicate::Op::Overlaps, "Overlaps"},
    {Predicate::Op::SpanLengthGreaterThan, "SpanLengthGreaterThan"},
    {Predicate::Op::And, "And"},
    {Predicate::Op::Or, "Or"},
    {Predicate::Op::Not, "Not"},
};

// Fixed input arity per kind; -1 means variadic.
int fixed_arity(const OperatorNode& node) {
    switch (node.kind) {
        case OperatorKind::DocSource: return 0;
        case OperatorKind::Join: return 2;
        case OperatorKind::Union: return -1;
        case OperatorKind::SubgraphCall: {
            const auto* call = std::get_if<CallParams>(&node.params);
            return call ? call->inputs : 0;
        }
        default: return 1;
    }
}

std::string join_ids(const std::vector<NodeId>& ids) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) os << ", ";
        os << ids[i];
    }
    os << ']';
    return os.str();
}

bool params_match_kind(const OperatorNode& n) {
    switch (n.kind) {
        case OperatorKind::DocSource: return std::holds_alternative<NoParams>(n.params);
        case OperatorKind::RegexExtract: return std::holds_alternative<RegexParams>(n.params);
        case OperatorKind::DictionaryExtract: return std::holds_alternative<DictionaryParams>(n.params);
        case OperatorKind::Select:
        case OperatorKind::Join: return std::holds_alternative<PredicateParams>(n.params);
        case OperatorKind::Project: return std::holds_alternative<ProjectParams>(n.params);
        case OperatorKind::Union: return std::holds_alternative<NoParams>(n.params);
        case OperatorKind::Consolidate: return std::holds_alternative<ConsolidateParams>(n.params);
        case OperatorKind::Sink: return std::holds_alternative<SinkParams>(n.params);
        case OperatorKind::SubgraphCall: return std::holds_alternative<CallParams>(n.params);
    }
    return false;
}

void check_params(const OperatorNode& n, std::vector<Finding>& out) {
    auto add = [&](std::string msg) { out.push_back({{n.id}, std::move(msg)}); };
    if (!params_match_kind(n)) {
        add("node " + std::to_string(n.id) + " has parameters of the wrong kind");
        return;
    }
    switch (n.kind) {
        case OperatorKind::RegexExtract: {
            const auto& p = n.as<RegexParams>();
            if (p.pattern.empty()) {
                add("node " + std::to_string(n.id) + " has an empty regex pattern");
                break;
            }
            try {
                (void)regex::parse(p.pattern);
            } catch (const PatternError& e) {
                add("node " + std::to_string(n.id) + ": " + e.what());
            }
            break;
        }
        case OperatorKind::DictionaryExtract: {
            const auto& p = n.as<DictionaryParams>();
            if (p.dict.empty() && p.dict_file.empty()) {
                add("node " + std::to_string(n.id) + " names no dictionary");
            }
            for (const auto& e : p.entries) {
                if (e.empty()) add("node " + std::to_string(n.id) + " has an empty dictionary entry");
            }
            break;
        }
        case OperatorKind::Project:
            if (n.as<ProjectParams>().columns.empty()) {
                add("node " + std::to_string(n.id) + " projects no columns");
            }
            break;
        case OperatorKind::Consolidate:
            if (n.as<ConsolidateParams>().policy != "contained_within") {
                add("node " + std::to_string(n.id) + " uses unsupported consolidation policy '" +
                    n.as<ConsolidateParams>().policy + "'");
            }
            break;
        case OperatorKind::SubgraphCall:
            if (n.as<CallParams>().subgraph < 0) {
                add("node " + std::to_string(n.id) + " references no subgraph");
            }
            break;
        default:
            break;
    }
}

} // namespace

std::string_view to_string(OperatorKind kind) noexcept {
    for (const auto& [k, name] : kKindNames) {
        if (k == kind) return name;
    }
    return "?";
}

std::optional<OperatorKind> parse_operator_kind(std::string_view name) noexcept {
    for (const auto& [k, n] : kKindNames) {
        if (n == name) return k;
    }
    return std::nullopt;
}

bool is_extraction(OperatorKind kind) noexcept {
    return kind == OperatorKind::RegexExtract || kind == OperatorKind::DictionaryExtract;
}

bool is_relational(OperatorKind kind) noexcept {
    switch (kind) {
        case OperatorKind::Select:
        case OperatorKind::Project:
        case OperatorKind::Join:
        case OperatorKind::Union:
        case OperatorKind::Consolidate: return true;
        default: return false;
    }
}

std::string_view to_string(Predicate::Op op) noexcept {
    for (const auto& [o, name] : kOpNames) {
        if (o == op) return name;
    }
    return "?";
}

Predicate Predicate::follows(std::string a, std::string b, std::int64_t min, std::int64_t max) {
    Predicate p;
    p.op = Op::Follows;
    p.columns = {std::move(a), std::move(b)};
    p.min = min;
    p.max = max;
    return p;
}

Predicate Predicate::contains(std::string a, std::string b) {
    Predicate p;
    p.op = Op::Contains;
    p.columns = {std::move(a), std::move(b)};
    return p;
}

Predicate Predicate::overlaps(std::string a, std::string b) {
    Predicate p;
    p.op = Op::Overlaps;
    p.columns = {std::move(a), std::move(b)};
    return p;
}

Predicate Predicate::length_greater_than(std::string a, std::int64_t k) {
    Predicate p;
    p.op = Op::SpanLengthGreaterThan;
    p.columns = {std::move(a)};
    p.min = k;
    return p;
}

Predicate Predicate::conjunction(Predicate a, Predicate b) {
    Predicate p;
    p.op = Op::And;
    p.children = {std::move(a), std::move(b)};
    return p;
}

Predicate Predicate::disjunction(Predicate a, Predicate b) {
    Predicate p;
    p.op = Op::Or;
    p.children = {std::move(a), std::move(b)};
    return p;
}

Predicate Predicate::negation(Predicate a) {
    Predicate p;
    p.op = Op::Not;
    p.children = {std::move(a)};
    return p;
}

// ---------------------------------------------------------------------------
// OperatorGraph

std::size_t OperatorGraph::index_of(NodeId id) const {
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), id,
                               [](const OperatorNode& n, NodeId v) { return n.id < v; });
    if (it == nodes_.end() || it->id != id) {
        throw GraphError("no node with id " + std::to_string(id));
    }
    return static_cast<std::size_t>(it - nodes_.begin());
}

void OperatorGraph::add_node(OperatorNode node) {
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), node.id,
                               [](const OperatorNode& n, NodeId v) { return n.id < v; });
    if (it != nodes_.end() && it->id == node.id) {
        throw GraphError("duplicate node id " + std::to_string(node.id));
    }
    nodes_.insert(it, std::move(node));
}

void OperatorGraph::add_edge(Edge edge) {
    auto it = std::lower_bound(edges_.begin(), edges_.end(), edge);
    edges_.insert(it, edge);
}

bool OperatorGraph::contains(NodeId id) const noexcept {
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), id,
                               [](const OperatorNode& n, NodeId v) { return n.id < v; });
    return it != nodes_.end() && it->id == id;
}

const OperatorNode& OperatorGraph::node(NodeId id) const { return nodes_[index_of(id)]; }
OperatorNode& OperatorGraph::node(NodeId id) { return nodes_[index_of(id)]; }

NodeId OperatorGraph::max_id() const noexcept {
    return nodes_.empty() ? -1 : nodes_.back().id;
}

std::vector<Edge> OperatorGraph::inputs_of(NodeId id) const {
    std::vector<Edge> out;
    for (const auto& e : edges_) {
        if (e.consumer == id) out.push_back(e);
    }
    std::sort(out.begin(), out.end(), [](const Edge& a, const Edge& b) { return a.slot < b.slot; });
    return out;
}

std::vector<Edge> OperatorGraph::outputs_of(NodeId id) const {
    std::vector<Edge> out;
    for (const auto& e : edges_) {
        if (e.producer == id) out.push_back(e);
    }
    return out;
}

const Schema& OperatorGraph::port_schema(NodeId producer, int port) const {
    const auto& n = node(producer);
    if (n.kind == OperatorKind::SubgraphCall) {
        const auto& outs = n.as<CallParams>().outputs;
        if (port < 0 || static_cast<std::size_t>(port) >= outs.size()) {
            throw GraphError("node " + std::to_string(producer) + " has no output port " +
                             std::to_string(port));
        }
        return outs[static_cast<std::size_t>(port)];
    }
    if (port != 0) {
        throw GraphError("node " + std::to_string(producer) + " has no output port " +
                         std::to_string(port));
    }
    return n.output_schema;
}

// ---------------------------------------------------------------------------
// Validation

std::string ValidationReport::summary() const {
    std::string out;
    for (const auto& f : findings) {
        if (!out.empty()) out += "; ";
        out += f.message;
    }
    return out;
}

ValidationReport validate_graph(const OperatorGraph& graph) {
    ValidationReport report;
    auto& out = report.findings;
    const auto& nodes = graph.nodes();

    std::map<NodeId, std::size_t> index;
    for (std::size_t i = 0; i < nodes.size(); ++i) index[nodes[i].id] = i;

    std::vector<NodeId> sources;
    for (const auto& n : nodes) {
        if (n.id < 0) out.push_back({{n.id}, "node id " + std::to_string(n.id) + " is negative"});
        if (n.kind == OperatorKind::DocSource) sources.push_back(n.id);
        check_params(n, out);
    }
    if (sources.size() != 1) {
        out.push_back({sources, "graph has " + std::to_string(sources.size()) +
                                    " DocSource nodes, expected exactly one"});
    }

    // Edge endpoints and slot wiring.
    std::vector<Edge> good_edges;
    std::map<std::pair<NodeId, int>, int> slot_use;
    for (const auto& e : graph.edges()) {
        if (!index.count(e.producer) || !index.count(e.consumer)) {
            out.push_back({{e.producer, e.consumer},
                           "edge " + std::to_string(e.producer) + "->" + std::to_string(e.consumer) +
                               " references a missing node"});
            continue;
        }
        const auto& prod = nodes[index[e.producer]];
        const auto& cons = nodes[index[e.consumer]];
        if (e.port != 0) {
            const auto* call = std::get_if<CallParams>(&prod.params);
            if (prod.kind != OperatorKind::SubgraphCall || !call || e.port < 0 ||
                static_cast<std::size_t>(e.port) >= call->outputs.size()) {
                out.push_back({{e.producer}, "node " + std::to_string(e.producer) +
                                                 " has no output port " + std::to_string(e.port)});
            }
        }
        if (prod.kind == OperatorKind::Sink) {
            out.push_back({{e.producer}, "sink node " + std::to_string(e.producer) + " has a consumer"});
        }
        if (prod.kind == OperatorKind::DocSource && !is_extraction(cons.kind) &&
            cons.kind != OperatorKind::SubgraphCall) {
            out.push_back({{e.consumer}, "node " + std::to_string(e.consumer) +
                                             " consumes the document but is not an extraction operator"});
        }
        if (is_extraction(cons.kind) && prod.kind != OperatorKind::DocSource) {
            out.push_back({{e.consumer}, "extraction node " + std::to_string(e.consumer) +
                                             " must read from the DocSource"});
        }
        const int arity = fixed_arity(cons);
        if (e.slot < 0 || (arity >= 0 && e.slot >= arity)) {
            out.push_back({{e.consumer}, "node " + std::to_string(e.consumer) + " has no input slot " +
                                             std::to_string(e.slot)});
            continue;
        }
        if (++slot_use[{e.consumer, e.slot}] == 2) {
            out.push_back({{e.consumer}, "input slot " + std::to_string(e.slot) + " of node " +
                                             std::to_string(e.consumer) + " connected more than once"});
        }
        good_edges.push_back(e);
    }
    for (const auto& n : nodes) {
        int arity = fixed_arity(n);
        if (arity < 0) {
            int highest = -1;
            for (const auto& [key, count] : slot_use) {
                if (key.first == n.id) highest = std::max(highest, key.second);
            }
            arity = std::max(highest + 1, 1);
        }
        for (int s = 0; s < arity; ++s) {
            if (!slot_use.count({n.id, s})) {
                out.push_back({{n.id}, "input slot " + std::to_string(s) + " of node " +
                                           std::to_string(n.id) + " unconnected"});
            }
        }
    }

    // Outputs must be exactly the sinks.
    std::set<NodeId> sinks;
    for (const auto& n : nodes) {
        if (n.kind == OperatorKind::Sink) sinks.insert(n.id);
    }
    std::set<NodeId> declared(graph.outputs().begin(), graph.outputs().end());
    if (declared.size() != graph.outputs().size()) {
        out.push_back({graph.outputs(), "outputs list contains duplicates"});
    }
    if (declared != sinks) {
        out.push_back({graph.outputs(), "outputs list does not match the sink nodes"});
    }
    if (sinks.empty() && !nodes.empty()) out.push_back({{}, "graph has no sink"});

    // Cycle detection (Kahn); leftover nodes lie on or behind a cycle.
    std::map<NodeId, int> indeg;
    std::map<NodeId, std::vector<NodeId>> succ;
    std::map<NodeId, std::vector<NodeId>> pred;
    for (const auto& n : nodes) indeg[n.id] = 0;
    for (const auto& e : good_edges) {
        ++indeg[e.consumer];
        succ[e.producer].push_back(e.consumer);
        pred[e.consumer].push_back(e.producer);
    }
    std::vector<NodeId> ready;
    for (const auto& [id, d] : indeg) {
        if (d == 0) ready.push_back(id);
    }
    std::size_t visited = 0;
    auto remaining = indeg;
    while (!ready.empty()) {
        NodeId id = ready.back();
        ready.pop_back();
        ++visited;
        for (NodeId s : succ[id]) {
            if (--remaining[s] == 0) ready.push_back(s);
        }
    }
    if (visited != nodes.size()) {
        // Walk predecessors among unresolved nodes until a node repeats.
        NodeId start = -1;
        for (const auto& [id, d] : remaining) {
            if (d > 0) {
                start = id;
                break;
            }
        }
        std::vector<NodeId> walk;
        std::map<NodeId, std::size_t> pos;
        NodeId cur = start;
        while (!pos.count(cur)) {
            pos[cur] = walk.size();
            walk.push_back(cur);
            NodeId next = cur;
            for (NodeId p : pred[cur]) {
                if (remaining[p] > 0) {
                    next = p;
                    break;
                }
            }
            cur = next;
        }
        std::vector<NodeId> cycle(walk.begin() + static_cast<std::ptrdiff_t>(pos[cur]), walk.end());
        std::reverse(cycle.begin(), cycle.end());
        out.push_back({cycle, "cycle through nodes " + join_ids(cycle)});
        return report;
    }

    // Reachability from the source and to some sink.
    auto flood = [&](std::vector<NodeId> seeds, std::map<NodeId, std::vector<NodeId>>& adj) {
        std::set<NodeId> seen(seeds.begin(), seeds.end());
        while (!seeds.empty()) {
            NodeId id = seeds.back();
            seeds.pop_back();
            for (NodeId n : adj[id]) {
                if (seen.insert(n).second) seeds.push_back(n);
            }
        }
        return seen;
    };
    if (sources.size() == 1) {
        auto reach = flood(sources, succ);
        for (const auto& n : nodes) {
            if (!reach.count(n.id)) {
                out.push_back({{n.id}, "node " + std::to_string(n.id) + " is unreachable from the DocSource"});
            }
        }
    }
    auto coreach = flood(std::vector<NodeId>(sinks.begin(), sinks.end()), pred);
    for (const auto& n : nodes) {
        if (!coreach.count(n.id)) {
            out.push_back({{n.id}, "node " + std::to_string(n.id) + " does not reach any sink"});
        }
    }
    return report;
}

void require_valid(const OperatorGraph& graph) {
    auto report = validate_graph(graph);
    if (!report.ok()) throw GraphError("invalid operator graph: " + report.summary());
}

std::vector<NodeId> topo_order(const OperatorGraph& graph) {
    std::map<NodeId, int> indeg;
    std::map<NodeId, std::vector<NodeId>> succ;
    for (const auto& n : graph.nodes()) indeg[n.id] = 0;
    for (const auto& e : graph.edges()) {
        ++indeg[e.consumer];
        succ[e.producer].push_back(e.consumer);
    }
    std::priority_queue<NodeId, std::vector<NodeId>, std::greater<>> ready;
    for (const auto& [id, d] : indeg) {
        if (d == 0) ready.push(id);
    }
    std::vector<NodeId> order;
    order.reserve(indeg.size());
    while (!ready.empty()) {
        NodeId id = ready.top();
        ready.pop();
        order.push_back(id);
        for (NodeId s : succ[id]) {
            if (--indeg[s] == 0) ready.push(s);
        }
    }
    if (order.size() != graph.nodes().size()) throw GraphError("operator graph contains a cycle");
    return order;
}

// ---------------------------------------------------------------------------
// Schema inference

Schema join_schema(const Schema& left, const Schema& right) {
    std::vector<Column> cols = left.columns();
    auto taken = [&](const std::string& name) {
        return std::any_of(cols.begin(), cols.end(), [&](const Column& c) { return c.name == name; });
    };
    for (const auto& c : right.columns()) {
        Column copy = c;
        while (taken(copy.name)) copy.name += "_r";
        cols.push_back(std::move(copy));
    }
    return Schema(std::move(cols));
}

namespace {

void require_span(const Schema& schema, const std::string& column, NodeId id) {
    auto idx = schema.index_of(column);
    if (!idx) {
        throw SchemaError("node " + std::to_string(id) + ": unknown column '" + column + "'");
    }
    if (schema.columns()[*idx].type != ValueType::Span) {
        throw SchemaError("node " + std::to_string(id) + ": column '" + column + "' is not a Span");
    }
}

void check_predicate(const Predicate& p, const Schema& left, const Schema* right, const Schema& out,
                     NodeId id) {
    switch (p.op) {
        case Predicate::Op::Follows:
        case Predicate::Op::Contains:
        case Predicate::Op::Overlaps:
            if (p.columns.size() != 2) {
                throw SchemaError("node " + std::to_string(id) + ": " + std::string(to_string(p.op)) +
                                  " takes two columns");
            }
            require_span(left, p.columns[0], id);
            require_span(right ? *right : left, p.columns[1], id);
            break;
        case Predicate::Op::SpanLengthGreaterThan:
            if (p.columns.size() != 1) {
                throw SchemaError("node " + std::to_string(id) + ": SpanLengthGreaterThan takes one column");
            }
            require_span(out, p.columns[0], id);
            break;
        case Predicate::Op::And:
        case Predicate::Op::Or:
        case Predicate::Op::Not: {
            const std::size_t want = p.op == Predicate::Op::Not ? 1 : 2;
            if (p.children.size() != want) {
                throw SchemaError("node " + std::to_string(id) + ": malformed " +
                                  std::string(to_string(p.op)) + " predicate");
            }
            for (const auto& c : p.children) check_predicate(c, left, right, out, id);
            break;
        }
    }
}

} // namespace

OperatorGraph infer_schemas(OperatorGraph graph) {
    for (NodeId id : topo_order(graph)) {
        const auto inputs = graph.inputs_of(id);
        auto input_schema = [&](std::size_t i) -> const Schema& {
            if (i >= inputs.size()) {
                throw SchemaError("node " + std::to_string(id) + ": input slot " + std::to_string(i) +
                                  " unconnected");
            }
            return graph.port_schema(inputs[i].producer, inputs[i].port);
        };
        auto& n = graph.node(id);
        switch (n.kind) {
            case OperatorKind::DocSource:
                n.output_schema = Schema({{"text", ValueType::Text}});
                break;
            case OperatorKind::RegexExtract:
            case OperatorKind::DictionaryExtract:
                n.output_schema = Schema({{"match", ValueType::Span}});
                break;
            case OperatorKind::Select: {
                const Schema& in = input_schema(0);
                check_predicate(n.as<PredicateParams>().predicate, in, nullptr, in, id);
                n.output_schema = in;
                break;
            }
            case OperatorKind::Project: {
                const Schema& in = input_schema(0);
                std::vector<Column> cols;
                for (const auto& name : n.as<ProjectParams>().columns) {
                    auto idx = in.index_of(name);
                    if (!idx) {
                        throw SchemaError("node " + std::to_string(id) + ": unknown column '" + name + "'");
                    }
                    cols.push_back(in.columns()[*idx]);
                }
                n.output_schema = Schema(std::move(cols));
                break;
            }
            case OperatorKind::Join: {
                const Schema& l = input_schema(0);
                const Schema& r = input_schema(1);
                Schema out = join_schema(l, r);
                check_predicate(n.as<PredicateParams>().predicate, l, &r, out, id);
                n.output_schema = std::move(out);
                break;
            }
            case OperatorKind::Union: {
                const Schema& first = input_schema(0);
                for (std::size_t i = 1; i < inputs.size(); ++i) {
                    if (!(input_schema(i) == first)) {
                        throw SchemaError("node " + std::to_string(id) + ": schema mismatch on union input " +
                                          std::to_string(i));
                    }
                }
                n.output_schema = first;
                break;
            }
            case OperatorKind::Consolidate: {
                const Schema& in = input_schema(0);
                if (!in.first_span_column()) {
                    throw SchemaError("node " + std::to_string(id) + ": consolidate needs a Span column");
                }
                n.output_schema = in;
                break;
            }
            case OperatorKind::Sink:
                n.output_schema = input_schema(0);
                break;
            case OperatorKind::SubgraphCall: {
                const auto& outs = n.as<CallParams>().outputs;
                n.output_schema = outs.empty() ? Schema{} : outs.front();
                break;
            }
        }
    }
    return graph;
}

// ---------------------------------------------------------------------------
// JSON interchange

ordered_json predicate_to_json(const Predicate& p) {
    ordered_json j = ordered_json::array();
    j.push_back(std::string(to_string(p.op)));
    switch (p.op) {
        case Predicate::Op::Follows:
            j.push_back(p.columns.at(0));
            j.push_back(p.columns.at(1));
            j.push_back(p.min);
            j.push_back(p.max);
            break;
        case Predicate::Op::Contains:
        case Predicate::Op::Overlaps:
            j.push_back(p.columns.at(0));
            j.push_back(p.columns.at(1));
            break;
        case Predicate::Op::SpanLengthGreaterThan:
            j.push_back(p.columns.at(0));
            j.push_back(p.min);
            break;
        default:
            for (const auto& c : p.children) j.push_back(predicate_to_json(c));
            break;
    }
    return j;
}

Predicate predicate_from_json(const json& j) {
    if (!j.is_array() || j.empty() || !j[0].is_string()) {
        throw FormatError("predicate must be an array headed by an operator name");
    }
    const std::string name = j[0].get<std::string>();
    auto col = [&](std::size_t i) {
        if (i >= j.size() || !j[i].is_string()) {
            throw FormatError("predicate " + name + ": argument " + std::to_string(i) + " must be a column name");
        }
        return j[i].get<std::string>();
    };
    auto num = [&](std::size_t i) {
        if (i >= j.size() || !j[i].is_number_integer()) {
            throw FormatError("predicate " + name + ": argument " + std::to_string(i) + " must be an integer");
        }
        return j[i].get<std::int64_t>();
    };
    auto arity = [&](std::size_t n) {
        if (j.size() != n + 1) {
            throw FormatError("predicate " + name + " takes " + std::to_string(n) + " arguments");
        }
    };
    if (name == "Follows") {
        arity(4);
        return Predicate::follows(col(1), col(2), num(3), num(4));
    }
    if (name == "Contains") {
        arity(2);
        return Predicate::contains(col(1), col(2));
    }
    if (name == "Overlaps") {
        arity(2);
        return Predicate::overlaps(col(1), col(2));
    }
    if (name == "SpanLengthGreaterThan") {
        arity(2);
        return Predicate::length_greater_than(col(1), num(2));
    }
    if (name == "And") {
        arity(2);
        return Predicate::conjunction(predicate_from_json(j[1]), predicate_from_json(j[2]));
    }
    if (name == "Or") {
        arity(2);
        return Predicate::disjunction(predicate_from_json(j[1]), predicate_from_json(j[2]));
    }
    if (name == "Not") {
        arity(1);
        return Predicate::negation(predicate_from_json(j[1]));
    }
    throw FormatError("unknown predicate '" + name + "'");
}

ordered_json schema_to_json(const Schema& s) {
    ordered_json j = ordered_json::array();
    for (const auto& c : s.columns()) j.push_back({c.name, std::string(to_string(c.type))});
    return j;
}

Schema schema_from_json(const json& j) {
    if (!j.is_array()) throw FormatError("schema must be an array of [name, type] pairs");
    std::vector<Column> cols;
    for (const auto& c : j) {
        if (!c.is_array() || c.size() != 2 || !c[0].is_string() || !c[1].is_string()) {
            throw FormatError("schema column must be a [name, type] pair");
        }
        auto type = parse_value_type(c[1].get<std::string>());
        if (!type) throw FormatError("unknown column type '" + c[1].get<std::string>() + "'");
        cols.push_back({c[0].get<std::string>(), *type});
    }
    try {
        return Schema(std::move(cols));
    } catch (const SchemaError& e) {
        throw FormatError(e.what());
    }
}

ordered_json node_to_json(const OperatorNode& node) {
    ordered_json j;
    j["id"] = node.id;
    j["kind"] = std::string(to_string(node.kind));
    if (!node.name.empty()) j["name"] = node.name;
    ordered_json params = ordered_json::object();
    std::visit(
        [&](const auto& p) {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, RegexParams>) {
                params["pattern"] = p.pattern;
            } else if constexpr (std::is_same_v<P, DictionaryParams>) {
                params["dict"] = p.dict;
                if (!p.dict_file.empty() && p.entries.empty()) {
                    params["dict_file"] = p.dict_file;
                } else {
                    params["entries"] = p.entries;
                }
            } else if constexpr (std::is_same_v<P, PredicateParams>) {
                params["predicate"] = predicate_to_json(p.predicate);
            } else if constexpr (std::is_same_v<P, ProjectParams>) {
                params["columns"] = p.columns;
            } else if constexpr (std::is_same_v<P, ConsolidateParams>) {
                params["policy"] = p.policy;
            } else if constexpr (std::is_same_v<P, SinkParams>) {
                params["view"] = p.view;
            } else if constexpr (std::is_same_v<P, CallParams>) {
                params["subgraph"] = p.subgraph;
                params["inputs"] = p.inputs;
                ordered_json outs = ordered_json::array();
                for (const auto& s : p.outputs) outs.push_back(schema_to_json(s));
                params["outputs"] = std::move(outs);
            }
        },
        node.params);
    j["params"] = std::move(params);
    return j;
}

std::vector<std::string> load_dictionary_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot read dictionary file '" + path.string() + "'");
    std::vector<std::string> entries;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) entries.push_back(line);
    }
    return entries;
}

OperatorNode node_from_json(const json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object() || !j.contains("id") || !j.contains("kind")) {
        throw FormatError("node must be an object with 'id' and 'kind'");
    }
    if (!j["id"].is_number_integer()) throw FormatError("node id must be an integer");
    if (!j["kind"].is_string()) throw FormatError("node kind must be a string");
    OperatorNode n;
    n.id = j["id"].get<NodeId>();
    const std::string kind_name = j["kind"].get<std::string>();
    auto kind = parse_operator_kind(kind_name);
    if (!kind) throw FormatError("unknown node kind '" + kind_name + "'");
    n.kind = *kind;
    if (j.contains("name")) n.name = j["name"].get<std::string>();
    const json params = j.value("params", json::object());
    if (!params.is_object()) throw FormatError("node params must be an object");
    auto str = [&](const char* key) {
        if (!params.contains(key) || !params[key].is_string()) {
            throw FormatError(kind_name + " node " + std::to_string(n.id) + " needs string param '" + key + "'");
        }
        return params[key].get<std::string>();
    };
    try {
        switch (n.kind) {
            case OperatorKind::DocSource:
            case OperatorKind::Union:
                n.params = NoParams{};
                break;
            case OperatorKind::RegexExtract:
                n.params = RegexParams{str("pattern")};
                break;
            case OperatorKind::DictionaryExtract: {
                DictionaryParams p;
                p.dict = params.value("dict", std::string{});
                if (params.contains("entries")) {
                    p.entries = params["entries"].get<std::vector<std::string>>();
                } else if (params.contains("dict_file")) {
                    p.dict_file = params["dict_file"].get<std::string>();
                    std::filesystem::path file(p.dict_file);
                    if (file.is_relative() && !base_dir.empty()) file = base_dir / file;
                    p.entries = load_dictionary_file(file);
                    if (p.dict.empty()) p.dict = std::filesystem::path(p.dict_file).stem().string();
                    p.dict_file.clear();
                } else {
                    throw FormatError("DictionaryExtract node " + std::to_string(n.id) +
                                      " needs 'entries' or 'dict_file'");
                }
                n.params = std::move(p);
                break;
            }
            case OperatorKind::Select:
            case OperatorKind::Join:
                if (!params.contains("predicate")) {
                    throw FormatError(kind_name + " node " + std::to_string(n.id) + " needs a predicate");
                }
                n.params = PredicateParams{predicate_from_json(params["predicate"])};
                break;
            case OperatorKind::Project:
                n.params = ProjectParams{params.at("columns").get<std::vector<std::string>>()};
                break;
            case OperatorKind::Consolidate:
                n.params = ConsolidateParams{str("policy")};
                break;
            case OperatorKind::Sink:
                n.params = SinkParams{params.value("view", std::string{})};
                break;
            case OperatorKind::SubgraphCall: {
                CallParams p;
                if (!params.contains("subgraph") || !params["subgraph"].is_number_integer()) {
                    throw FormatError("SubgraphCall node " + std::to_string(n.id) + " needs integer 'subgraph'");
                }
                p.subgraph = params["subgraph"].get<int>();
                p.inputs = params.value("inputs", 0);
                if (params.contains("outputs")) {
                    for (const auto& s : params["outputs"]) p.outputs.push_back(schema_from_json(s));
                }
                n.params = std::move(p);
                break;
            }
        }
    } catch (const json::exception& e) {
        throw FormatError("node " + std::to_string(n.id) + ": " + e.what());
    }
    return n;
}

ordered_json edge_to_json(const Edge& e) {
    ordered_json j = ordered_json::array({e.producer, e.consumer, e.slot});
    if (e.port != 0) j.push_back(e.port);
    return j;
}

Edge edge_from_json(const json& j) {
    if (!j.is_array() || (j.size() != 3 && j.size() != 4)) {
        throw FormatError("edge must be [producer, consumer, slot] or [producer, consumer, slot, port]");
    }
    for (const auto& v : j) {
        if (!v.is_number_integer()) throw FormatError("edge fields must be integers");
    }
    Edge e{j[0].get<NodeId>(), j[1].get<NodeId>(), j[2].get<int>(), 0};
    if (j.size() == 4) e.port = j[3].get<int>();
    return e;
}

ordered_json graph_to_json(const OperatorGraph& graph) {
    ordered_json j;
    j["aog_version"] = kAogVersion;
    ordered_json nodes = ordered_json::array();
    for (const auto& n : graph.nodes()) nodes.push_back(node_to_json(n));
    j["nodes"] = std::move(nodes);
    ordered_json edges = ordered_json::array();
    for (const auto& e : graph.edges()) edges.push_back(edge_to_json(e));
    j["edges"] = std::move(edges);
    j["outputs"] = graph.outputs();
    return j;
}

OperatorGraph graph_from_json(const json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) throw FormatError("AOG document must be a JSON object");
    if (!j.contains("aog_version") || !j["aog_version"].is_number_integer()) {
        throw FormatError("AOG document lacks an integer 'aog_version'");
    }
    const int version = j["aog_version"].get<int>();
    if (version != kAogVersion) {
        throw FormatError("unsupported aog_version " + std::to_string(version) + " (expected " +
                          std::to_string(kAogVersion) + ")");
    }
    if (!j.contains("nodes") || !j["nodes"].is_array()) throw FormatError("AOG document lacks 'nodes'");
    OperatorGraph g;
    try {
        for (const auto& n : j["nodes"]) g.add_node(node_from_json(n, base_dir));
    } catch (const GraphError& e) {
        throw FormatError(e.what());
    }
    if (j.contains("edges")) {
        if (!j["edges"].is_array()) throw FormatError("'edges' must be an array");
        for (const auto& e : j["edges"]) g.add_edge(edge_from_json(e));
    }
    if (j.contains("outputs")) {
        if (!j["outputs"].is_array()) throw FormatError("'outputs' must be an array");
        std::vector<NodeId> outs;
        for (const auto& o : j["outputs"]) {
            if (!o.is_number_integer()) throw FormatError("output ids must be integers");
            outs.push_back(o.get<NodeId>());
        }
        g.set_outputs(std::move(outs));
    }
    // schemas are derived data; an invalid graph is returned as-is for reporting
    if (validate_graph(g).ok()) return infer_schemas(std::move(g));
    return g;
}

std::string serialize_aog(const OperatorGraph& graph) {
    return graph_to_json(graph).dump(2) + "\n";
}

OperatorGraph deserialize_aog(std::string_view text, const std::filesystem::path& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("malformed AOG document: ") + e.what());
    }
    return graph_from_json(j, base_dir);
}

} // namespace spanforge
