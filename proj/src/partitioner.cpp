#include "spanforge/partitioner.hpp"

#include "spanforge/error.hpp"
#include "spanforge/regex.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace spanforge::partition {

using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Capabilities

CapabilitySet CapabilitySet::defaults() {
    CapabilitySet caps;
    caps.accelerable = {OperatorKind::RegexExtract, OperatorKind::DictionaryExtract, OperatorKind::Select,
                        OperatorKind::Project,      OperatorKind::Join,              OperatorKind::Union,
                        OperatorKind::Consolidate};
    return caps;
}

CapabilitySet CapabilitySet::extraction_only() {
    CapabilitySet caps;
    caps.accelerable = {OperatorKind::RegexExtract, OperatorKind::DictionaryExtract};
    return caps;
}

CapabilitySet CapabilitySet::from_json(const json& j) {
    if (!j.is_object()) throw FormatError("capability file must be a JSON object");
    CapabilitySet caps;
    if (j.contains("accelerable")) {
        for (const auto& k : j["accelerable"]) {
            if (!k.is_string()) throw FormatError("accelerable kinds must be strings");
            auto kind = parse_operator_kind(k.get<std::string>());
            if (!kind) throw FormatError("unknown operator kind '" + k.get<std::string>() + "'");
            caps.accelerable.insert(*kind);
        }
    } else {
        caps.accelerable = defaults().accelerable;
    }
    if (j.contains("regex_state_budget")) caps.regex_state_budget = j["regex_state_budget"].get<std::size_t>();
    if (j.contains("max_subgraph_nodes")) caps.max_subgraph_nodes = j["max_subgraph_nodes"].get<std::size_t>();
    if (caps.regex_state_budget == 0) throw FormatError("regex_state_budget must be positive");
    return caps;
}

CapabilitySet CapabilitySet::load(std::string_view spec) {
    if (spec == "default") return defaults();
    if (spec == "extraction-only") return extraction_only();
    std::ifstream in{std::string(spec)};
    if (!in) throw FormatError("cannot read capability file '" + std::string(spec) + "'");
    try {
        return from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw FormatError("capability file '" + std::string(spec) + "': " + e.what());
    }
}

bool CapabilitySet::allows(OperatorKind kind) const noexcept {
    if (kind == OperatorKind::DocSource || kind == OperatorKind::Sink || kind == OperatorKind::SubgraphCall) {
        return false;
    }
    return accelerable.count(kind) > 0;
}

Flags classify(const OperatorGraph& graph, const CapabilitySet& caps) {
    Flags flags;
    for (const auto& n : graph.nodes()) {
        bool ok = caps.allows(n.kind);
        if (ok && n.kind == OperatorKind::RegexExtract) {
            try {
                ok = regex::count_states(n.as<RegexParams>().pattern, caps.regex_state_budget) > 0;
            } catch (const PatternError&) {
                ok = false;
            }
        }
        flags[n.id] = ok;
    }
    return flags;
}

// ---------------------------------------------------------------------------
// Reachability and convexity

namespace {

void set_bit(std::vector<std::uint64_t>& b, std::size_t i) { b[i / 64] |= std::uint64_t{1} << (i % 64); }
bool get_bit(const std::vector<std::uint64_t>& b, std::size_t i) { return (b[i / 64] >> (i % 64)) & 1u; }
void or_into(std::vector<std::uint64_t>& dst, const std::vector<std::uint64_t>& src) {
    for (std::size_t w = 0; w < dst.size(); ++w) dst[w] |= src[w];
}

} // namespace

Reachability::Reachability(const OperatorGraph& graph) {
    const auto order = topo_order(graph);
    for (const auto& n : graph.nodes()) {
        index_[n.id] = ids_.size();
        ids_.push_back(n.id);
    }
    const std::size_t n = ids_.size();
    const std::size_t words = (n + 63) / 64;
    desc_.assign(n, Bits(words, 0));
    anc_.assign(n, Bits(words, 0));
    std::vector<std::vector<std::size_t>> succ(n);
    std::vector<std::vector<std::size_t>> pred(n);
    for (const auto& e : graph.edges()) {
        succ[index_.at(e.producer)].push_back(index_.at(e.consumer));
        pred[index_.at(e.consumer)].push_back(index_.at(e.producer));
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const std::size_t u = index_.at(*it);
        for (std::size_t v : succ[u]) {
            set_bit(desc_[u], v);
            or_into(desc_[u], desc_[v]);
        }
    }
    for (NodeId id : order) {
        const std::size_t u = index_.at(id);
        for (std::size_t p : pred[u]) {
            set_bit(anc_[u], p);
            or_into(anc_[u], anc_[p]);
        }
    }
}

std::size_t Reachability::index(NodeId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw GraphError("no node with id " + std::to_string(id));
    return it->second;
}

bool Reachability::reaches(NodeId from, NodeId to) const {
    return get_bit(desc_[index(from)], index(to));
}

bool Reachability::convex(const NodeSet& set) const {
    const std::size_t words = desc_.empty() ? 0 : desc_.front().size();
    Bits member(words, 0);
    Bits down(words, 0);
    Bits up(words, 0);
    for (NodeId id : set) {
        const std::size_t i = index(id);
        set_bit(member, i);
        or_into(down, desc_[i]);
        or_into(up, anc_[i]);
    }
    for (std::size_t w = 0; w < words; ++w) {
        if (down[w] & up[w] & ~member[w]) return false;
    }
    return true;
}

class ConvexGrower {
public:
    explicit ConvexGrower(const Reachability& r)
        : r_(r), words_(r.desc_.empty() ? 0 : r.desc_.front().size()),
          member_(words_, 0), down_(words_, 0), up_(words_, 0) {}

    bool can_add(std::size_t i) const {
        for (std::size_t w = 0; w < words_; ++w) {
            std::uint64_t m = member_[w];
            if (w == i / 64) m |= std::uint64_t{1} << (i % 64);
            if ((down_[w] | r_.desc_[i][w]) & (up_[w] | r_.anc_[i][w]) & ~m) return false;
        }
        return true;
    }

    void add(std::size_t i) {
        set_bit(member_, i);
        or_into(down_, r_.desc_[i]);
        or_into(up_, r_.anc_[i]);
    }

private:
    const Reachability& r_;
    std::size_t words_;
    Reachability::Bits member_;
    Reachability::Bits down_;
    Reachability::Bits up_;
};

std::vector<NodeSet> maximal_convex_subgraphs(const OperatorGraph& graph, const Flags& flags, std::size_t max_nodes) {
    const Reachability reach(graph);
    const auto order = topo_order(graph);
    auto flagged = [&](NodeId id) {
        auto it = flags.find(id);
        return it != flags.end() && it->second;
    };

    std::vector<NodeId> seeds;
    for (NodeId id : order) {
        if (flagged(id) && is_extraction(graph.node(id).kind)) seeds.push_back(id);
    }
    for (NodeId id : order) {
        if (flagged(id) && !is_extraction(graph.node(id).kind)) seeds.push_back(id);
    }

    std::set<NodeId> assigned;
    std::vector<NodeSet> result;
    for (NodeId seed : seeds) {
        if (assigned.count(seed)) continue;
        ConvexGrower grower(reach);
        NodeSet set{seed};
        grower.add(reach.index(seed));
        assigned.insert(seed);
        bool grew = true;
        while (grew && (max_nodes == 0 || set.size() < max_nodes)) {
            grew = false;
            for (NodeId c : order) {
                if (!flagged(c) || assigned.count(c)) continue;
                const std::size_t ci = reach.index(c);
                if (!grower.can_add(ci)) continue;
                grower.add(ci);
                set.push_back(c);
                assigned.insert(c);
                grew = true;
                if (max_nodes != 0 && set.size() >= max_nodes) break;
            }
        }
        std::sort(set.begin(), set.end());
        result.push_back(std::move(set));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Rewrite

bool Subgraph::has_document_input() const noexcept {
    return std::any_of(inputs.begin(), inputs.end(), [](const BoundaryInput& in) { return in.document; });
}

std::vector<NodeId> PartitionPlan::offloaded_nodes() const {
    std::vector<NodeId> out;
    for (const auto& [id, loc] : location) {
        if (loc >= 0) out.push_back(id);
    }
    return out;
}

const Subgraph& PartitionPlan::subgraph(int id) const {
    for (const auto& s : subgraphs) {
        if (s.id == id) return s;
    }
    throw GraphError("plan has no subgraph " + std::to_string(id));
}

namespace {

// Re-derives fragment node schemas from boundary input schemas.
void infer_fragment_schemas(Subgraph& sg) {
    OperatorGraph tmp;
    NodeId next = std::max<NodeId>(sg.fragment.max_id(), 0) + 1;
    std::map<int, NodeId> slot_node;
    for (const auto& in : sg.inputs) {
        OperatorNode src;
        if (in.document) {
            src = OperatorNode{next++, OperatorKind::DocSource, NoParams{}, "Document", {}};
        } else {
            src = OperatorNode{next++, OperatorKind::SubgraphCall, CallParams{-1, 0, {in.schema}}, "input", {}};
        }
        slot_node[in.slot] = src.id;
        tmp.add_node(std::move(src));
    }
    for (const auto& n : sg.fragment.nodes()) tmp.add_node(n);
    for (const auto& e : sg.fragment.edges()) tmp.add_edge(e);
    for (const auto& in : sg.inputs) {
        for (const auto& [node, slot] : in.targets) tmp.add_edge({slot_node[in.slot], node, slot, 0});
    }
    tmp = infer_schemas(std::move(tmp));
    for (const auto& n : sg.fragment.nodes()) {
        sg.fragment.node(n.id).output_schema = tmp.node(n.id).output_schema;
    }
    for (auto& out : sg.outputs) {
        if (!sg.fragment.contains(out.node)) {
            throw GraphError("subgraph " + std::to_string(sg.id) + " output names missing node " +
                             std::to_string(out.node));
        }
        if (!(sg.fragment.node(out.node).output_schema == out.schema)) {
            throw GraphError("subgraph " + std::to_string(sg.id) + " output port " + std::to_string(out.port) +
                             " schema does not match node " + std::to_string(out.node));
        }
    }
}

} // namespace

PartitionPlan rewrite(const OperatorGraph& graph, const std::vector<NodeSet>& sets) {
    PartitionPlan plan;
    const Reachability reach(graph);

    std::map<NodeId, int> owner;
    for (std::size_t k = 0; k < sets.size(); ++k) {
        if (sets[k].empty()) throw GraphError("subgraph " + std::to_string(k) + " is empty");
        for (NodeId id : sets[k]) {
            const auto& n = graph.node(id);
            if (n.kind == OperatorKind::DocSource || n.kind == OperatorKind::Sink ||
                n.kind == OperatorKind::SubgraphCall) {
                throw GraphError("node " + std::to_string(id) + " (" + std::string(to_string(n.kind)) +
                                 ") cannot be offloaded");
            }
            if (!owner.emplace(id, static_cast<int>(k)).second) {
                throw GraphError("node " + std::to_string(id) + " appears in more than one subgraph");
            }
        }
        NodeSet sorted = sets[k];
        std::sort(sorted.begin(), sorted.end());
        if (!reach.convex(sorted)) throw GraphError("subgraph " + std::to_string(k) + " is not convex");
    }
    for (const auto& n : graph.nodes()) {
        auto it = owner.find(n.id);
        plan.location[n.id] = it == owner.end() ? -1 : it->second;
    }

    const NodeId first_call = graph.max_id() + 1;
    plan.subgraphs.resize(sets.size());

    // Output ports: internal producers with an edge leaving the set.
    std::map<NodeId, int> out_port;
    for (std::size_t k = 0; k < sets.size(); ++k) {
        Subgraph& sg = plan.subgraphs[k];
        sg.id = static_cast<int>(k);
        sg.call = first_call + static_cast<NodeId>(k);
        NodeSet members = sets[k];
        std::sort(members.begin(), members.end());
        for (NodeId id : members) sg.fragment.add_node(graph.node(id));
        for (NodeId id : members) {
            bool leaves = false;
            for (const auto& e : graph.outputs_of(id)) {
                auto it = owner.find(e.consumer);
                if (it == owner.end() || it->second != static_cast<int>(k)) leaves = true;
            }
            if (leaves) {
                const int port = static_cast<int>(sg.outputs.size());
                out_port[id] = port;
                sg.outputs.push_back({port, id, graph.node(id).output_schema});
            }
        }
    }

    // Inputs: distinct outside sources, ordered by (producer, port).
    for (std::size_t k = 0; k < sets.size(); ++k) {
        Subgraph& sg = plan.subgraphs[k];
        std::map<std::pair<NodeId, int>, std::size_t> slot_of;
        for (const auto& e : graph.edges()) {
            auto c = owner.find(e.consumer);
            if (c == owner.end() || c->second != static_cast<int>(k)) continue;
            auto p = owner.find(e.producer);
            if (p != owner.end() && p->second == static_cast<int>(k)) {
                sg.fragment.add_edge(e);
                continue;
            }
            auto key = std::make_pair(e.producer, e.port);
            auto it = slot_of.find(key);
            if (it == slot_of.end()) {
                BoundaryInput in;
                in.producer = e.producer;
                in.port = e.port;
                in.schema = graph.port_schema(e.producer, e.port);
                in.document = graph.node(e.producer).kind == OperatorKind::DocSource;
                it = slot_of.emplace(key, sg.inputs.size()).first;
                sg.inputs.push_back(std::move(in));
            }
            sg.inputs[it->second].targets.emplace_back(e.consumer, e.slot);
        }
        for (std::size_t s = 0; s < sg.inputs.size(); ++s) sg.inputs[s].slot = static_cast<int>(s);
    }

    // Supergraph.
    OperatorGraph& super = plan.supergraph;
    for (const auto& n : graph.nodes()) {
        if (!owner.count(n.id)) super.add_node(n);
    }
    for (const auto& sg : plan.subgraphs) {
        CallParams p;
        p.subgraph = sg.id;
        p.inputs = static_cast<int>(sg.inputs.size());
        for (const auto& o : sg.outputs) p.outputs.push_back(o.schema);
        OperatorNode call{sg.call, OperatorKind::SubgraphCall, std::move(p), "subgraph" + std::to_string(sg.id), {}};
        call.output_schema = call.as<CallParams>().outputs.empty() ? Schema{} : call.as<CallParams>().outputs.front();
        super.add_node(std::move(call));
    }
    auto source = [&](NodeId producer, int port) -> std::pair<NodeId, int> {
        auto it = owner.find(producer);
        if (it == owner.end()) return {producer, port};
        return {plan.subgraphs[static_cast<std::size_t>(it->second)].call, out_port.at(producer)};
    };
    for (const auto& e : graph.edges()) {
        if (owner.count(e.consumer)) continue;  // internal or call input, handled below
        auto [p, port] = source(e.producer, e.port);
        super.add_edge({p, e.consumer, e.slot, port});
    }
    for (const auto& sg : plan.subgraphs) {
        for (const auto& in : sg.inputs) {
            auto [p, port] = source(in.producer, in.port);
            super.add_edge({p, sg.call, in.slot, port});
        }
    }
    super.set_outputs(graph.outputs());

    auto report = validate_graph(super);
    if (!report.ok()) throw GraphError("rewrite produced an invalid supergraph: " + report.summary());
    plan.supergraph = infer_schemas(std::move(plan.supergraph));
    return plan;
}

PartitionPlan software_plan(const OperatorGraph& graph) {
    return rewrite(graph, {});
}

PartitionPlan scenario_plan(const OperatorGraph& graph, const CapabilitySet& caps, int scenario) {
    const Flags flags = classify(graph, caps);
    std::vector<NodeSet> sets;
    NodeSet extraction;
    for (NodeId id : topo_order(graph)) {
        if (flags.at(id) && is_extraction(graph.node(id).kind)) extraction.push_back(id);
    }
    std::sort(extraction.begin(), extraction.end());

    switch (scenario) {
        case 1: {
            if (extraction.empty()) break;
            const std::size_t cap = caps.max_subgraph_nodes == 0 ? extraction.size() : caps.max_subgraph_nodes;
            for (std::size_t i = 0; i < extraction.size(); i += cap) {
                sets.emplace_back(extraction.begin() + static_cast<std::ptrdiff_t>(i),
                                  extraction.begin() + static_cast<std::ptrdiff_t>(std::min(i + cap, extraction.size())));
            }
            break;
        }
        case 2: {
            auto all = maximal_convex_subgraphs(graph, flags, caps.max_subgraph_nodes);
            if (all.empty()) break;
            const NodeSet* pick = nullptr;
            if (!extraction.empty()) {
                for (const auto& s : all) {
                    if (std::includes(s.begin(), s.end(), extraction.begin(), extraction.end())) {
                        pick = &s;
                        break;
                    }
                }
            }
            if (!pick) {
                pick = &all.front();
                for (const auto& s : all) {
                    if (s.size() > pick->size()) pick = &s;
                }
            }
            sets.push_back(*pick);
            break;
        }
        case 3:
            sets = maximal_convex_subgraphs(graph, flags, caps.max_subgraph_nodes);
            break;
        default:
            throw Error("scenario must be 1, 2 or 3");
    }
    PartitionPlan plan = rewrite(graph, sets);
    plan.scenario = scenario;
    return plan;
}

std::array<PartitionPlan, 3> scenario_plans(const OperatorGraph& graph, const CapabilitySet& caps) {
    return {scenario_plan(graph, caps, 1), scenario_plan(graph, caps, 2), scenario_plan(graph, caps, 3)};
}

void validate_plan(const PartitionPlan& plan, const OperatorGraph* original) {
    require_valid(plan.supergraph);
    std::set<NodeId> seen;
    for (const auto& sg : plan.subgraphs) {
        if (!plan.supergraph.contains(sg.call)) {
            throw GraphError("subgraph " + std::to_string(sg.id) + " has no call node");
        }
        const auto& call = plan.supergraph.node(sg.call);
        if (call.kind != OperatorKind::SubgraphCall || call.as<CallParams>().subgraph != sg.id) {
            throw GraphError("node " + std::to_string(sg.call) + " does not call subgraph " + std::to_string(sg.id));
        }
        if (call.as<CallParams>().inputs != static_cast<int>(sg.inputs.size()) ||
            call.as<CallParams>().outputs.size() != sg.outputs.size()) {
            throw GraphError("subgraph " + std::to_string(sg.id) + " boundary does not match its call node");
        }
        (void)topo_order(sg.fragment);
        for (const auto& n : sg.fragment.nodes()) {
            if (!seen.insert(n.id).second) {
                throw GraphError("node " + std::to_string(n.id) + " appears in more than one subgraph");
            }
            if (plan.supergraph.contains(n.id)) {
                throw GraphError("node " + std::to_string(n.id) + " is both offloaded and on the host");
            }
        }
    }
    if (!original) return;

    std::size_t host = 0;
    for (const auto& n : plan.supergraph.nodes()) {
        if (n.kind == OperatorKind::SubgraphCall) continue;
        ++host;
        if (!original->contains(n.id) || original->node(n.id).params != n.params) {
            throw GraphError("host node " + std::to_string(n.id) + " differs from the original graph");
        }
    }
    if (host + seen.size() != original->nodes().size()) {
        throw GraphError("plan does not conserve the original node set");
    }
    const Reachability reach(*original);
    for (const auto& sg : plan.subgraphs) {
        NodeSet members;
        for (const auto& n : sg.fragment.nodes()) {
            if (!original->contains(n.id) || original->node(n.id).params != n.params) {
                throw GraphError("offloaded node " + std::to_string(n.id) + " differs from the original graph");
            }
            members.push_back(n.id);
        }
        if (!reach.convex(members)) throw GraphError("subgraph " + std::to_string(sg.id) + " is not convex");
    }
}

// ---------------------------------------------------------------------------
// JSON

ordered_json plan_to_json(const PartitionPlan& plan) {
    ordered_json j = graph_to_json(plan.supergraph);
    if (plan.scenario != 0) j["scenario"] = plan.scenario;
    ordered_json subs = ordered_json::array();
    for (const auto& sg : plan.subgraphs) {
        ordered_json s;
        s["id"] = sg.id;
        s["call"] = sg.call;
        ordered_json nodes = ordered_json::array();
        for (const auto& n : sg.fragment.nodes()) nodes.push_back(node_to_json(n));
        s["nodes"] = std::move(nodes);
        ordered_json edges = ordered_json::array();
        for (const auto& e : sg.fragment.edges()) edges.push_back(edge_to_json(e));
        s["edges"] = std::move(edges);
        ordered_json inputs = ordered_json::array();
        for (const auto& in : sg.inputs) {
            ordered_json i;
            i["slot"] = in.slot;
            i["from"] = {in.producer, in.port};
            ordered_json to = ordered_json::array();
            for (const auto& [node, slot] : in.targets) to.push_back({node, slot});
            i["to"] = std::move(to);
            i["document"] = in.document;
            i["schema"] = schema_to_json(in.schema);
            inputs.push_back(std::move(i));
        }
        s["inputs"] = std::move(inputs);
        ordered_json outputs = ordered_json::array();
        for (const auto& o : sg.outputs) {
            ordered_json oj;
            oj["port"] = o.port;
            oj["node"] = o.node;
            oj["schema"] = schema_to_json(o.schema);
            outputs.push_back(std::move(oj));
        }
        s["outputs"] = std::move(outputs);
        subs.push_back(std::move(s));
    }
    j["subgraphs"] = std::move(subs);
    ordered_json loc = ordered_json::object();
    for (const auto& [id, where] : plan.location) {
        loc[std::to_string(id)] = where < 0 ? std::string("host") : "accelerator:" + std::to_string(where);
    }
    j["location"] = std::move(loc);
    return j;
}

PartitionPlan plan_from_json(const json& j, const std::filesystem::path& base_dir) {
    PartitionPlan plan;
    try {
        plan.supergraph = graph_from_json(j, base_dir);
        plan.scenario = j.value("scenario", 0);
        if (j.contains("subgraphs")) {
            for (const auto& s : j["subgraphs"]) {
                Subgraph sg;
                sg.id = s.at("id").get<int>();
                sg.call = s.at("call").get<NodeId>();
                for (const auto& n : s.at("nodes")) sg.fragment.add_node(node_from_json(n, base_dir));
                for (const auto& e : s.at("edges")) sg.fragment.add_edge(edge_from_json(e));
                for (const auto& i : s.at("inputs")) {
                    BoundaryInput in;
                    in.slot = i.at("slot").get<int>();
                    in.producer = i.at("from").at(0).get<NodeId>();
                    in.port = i.at("from").at(1).get<int>();
                    for (const auto& t : i.at("to")) in.targets.emplace_back(t.at(0).get<NodeId>(), t.at(1).get<int>());
                    in.document = i.value("document", false);
                    in.schema = schema_from_json(i.at("schema"));
                    sg.inputs.push_back(std::move(in));
                }
                for (const auto& o : s.at("outputs")) {
                    sg.outputs.push_back({o.at("port").get<int>(), o.at("node").get<NodeId>(),
                                          schema_from_json(o.at("schema"))});
                }
                plan.subgraphs.push_back(std::move(sg));
            }
        }
        if (j.contains("location")) {
            for (const auto& [key, value] : j["location"].items()) {
                const std::string where = value.get<std::string>();
                int loc = -1;
                if (where.rfind("accelerator:", 0) == 0) {
                    loc = std::stoi(where.substr(12));
                } else if (where != "host") {
                    throw FormatError("unknown location '" + where + "'");
                }
                plan.location[std::stoi(key)] = loc;
            }
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed plan document: ") + e.what());
    } catch (const std::invalid_argument&) {
        throw FormatError("malformed plan document: bad location entry");
    }
    try {
        plan.supergraph = infer_schemas(std::move(plan.supergraph));
        for (auto& sg : plan.subgraphs) infer_fragment_schemas(sg);
        validate_plan(plan);
    } catch (const Error& e) {
        throw FormatError(std::string("inconsistent plan document: ") + e.what());
    }
    return plan;
}

std::string serialize_plan(const PartitionPlan& plan) {
    return plan_to_json(plan).dump(2) + "\n";
}

PartitionPlan deserialize_plan(std::string_view text, const std::filesystem::path& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("malformed plan document: ") + e.what());
    }
    return plan_from_json(j, base_dir);
}

} // namespace spanforge::partition
