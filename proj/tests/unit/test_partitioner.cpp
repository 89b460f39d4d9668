#include <doctest.h>

#include "spanforge/aql.hpp"
#include "spanforge/error.hpp"
#include "spanforge/fixtures.hpp"
#include "spanforge/partitioner.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace spanforge;
using namespace spanforge::partition;

namespace {

std::size_t non_call_nodes(const OperatorGraph& g) {
    std::size_t n = 0;
    for (const auto& node : g.nodes()) n += node.kind != OperatorKind::SubgraphCall;
    return n;
}

std::size_t call_nodes(const OperatorGraph& g) { return g.nodes().size() - non_call_nodes(g); }

OperatorGraph line(const std::vector<OperatorKind>& kinds) {
    OperatorGraph g;
    for (std::size_t i = 0; i < kinds.size(); ++i) g.add_node({static_cast<NodeId>(i + 1), kinds[i], NoParams{}, {}, {}});
    for (std::size_t i = 1; i < kinds.size(); ++i) {
        g.add_edge({static_cast<NodeId>(i), static_cast<NodeId>(i + 1), 0, 0});
    }
    return g;
}

void check_conservation(const PartitionPlan& plan, const OperatorGraph& original) {
    std::size_t inside = 0;
    for (const auto& sg : plan.subgraphs) inside += sg.fragment.nodes().size();
    CHECK(non_call_nodes(plan.supergraph) + inside == original.nodes().size());
    CHECK(call_nodes(plan.supergraph) == plan.subgraphs.size());
}

const char* kTwoIslands = R"(
create view A as extract regex /[A-Z][a-z]+/ on D.text from Document D;
create view LongA as select * from A where SpanLengthGreaterThan(A.match, 3);
create view B as extract regex /\d+/ on D.text from Document D;
create view LongB as select * from B where SpanLengthGreaterThan(B.match, 1);
output view LongA;
output view LongB;
)";

} // namespace

TEST_CASE("classification") {
    const auto g = aql::compile(R"(
create view R as extract regex /ab+/ on D.text from Document D;
create view Big as extract regex /(a|b)*a(a|b){12}/ on D.text from Document D;
create view C as consolidate R using 'ContainedWithin';
output view C;
output view Big;)");
    const auto flags = classify(g, CapabilitySet::defaults());
    const auto only = classify(g, CapabilitySet::extraction_only());
    NodeId r = -1, big = -1, c = -1;
    for (const auto& n : g.nodes()) {
        if (n.kind == OperatorKind::Sink) continue;
        if (n.name == "R") r = n.id;
        if (n.name == "Big") big = n.id;
        if (n.name == "C") c = n.id;
    }
    CHECK(flags.at(r));
    CHECK(flags.at(c));
    CHECK_FALSE(only.at(c));
    CHECK(only.at(r));
    // the budget test is the automaton's state count
    CHECK(regex::count_states("(a|b)*a(a|b){12}", CapabilitySet::defaults().regex_state_budget) == 0);
    CHECK_FALSE(flags.at(big));
    CHECK_FALSE(flags.at(0));
    for (const auto& n : g.nodes()) {
        if (n.kind == OperatorKind::Sink) CHECK_FALSE(flags.at(n.id));
    }
}

TEST_CASE("capability files") {
    const auto caps = CapabilitySet::from_json(nlohmann::json::parse(
        R"({"accelerable":["RegexExtract","Join"],"regex_state_budget":64,"max_subgraph_nodes":3})"));
    CHECK(caps.allows(OperatorKind::Join));
    CHECK_FALSE(caps.allows(OperatorKind::Union));
    CHECK(caps.regex_state_budget == 64);
    CHECK(caps.max_subgraph_nodes == 3);
    CHECK_THROWS_AS(CapabilitySet::from_json(nlohmann::json::parse(R"({"accelerable":["Frob"]})")), Error);
    CHECK_THROWS_AS(CapabilitySet::load("/no/such/caps.json"), Error);
    CHECK_FALSE(CapabilitySet::defaults().allows(OperatorKind::Sink));
}

TEST_CASE("maximal convex subgraph examples") {
    const auto chain = line({OperatorKind::RegexExtract, OperatorKind::Select, OperatorKind::Consolidate});
    CHECK(maximal_convex_subgraphs(chain, {{1, true}, {2, false}, {3, true}}) == std::vector<NodeSet>{{1}, {3}});

    OperatorGraph diamond;
    for (NodeId i = 1; i <= 4; ++i) diamond.add_node({i, OperatorKind::Select, NoParams{}, {}, {}});
    diamond.add_edge({1, 2, 0, 0});
    diamond.add_edge({1, 3, 0, 0});
    diamond.add_edge({2, 4, 0, 0});
    diamond.add_edge({3, 4, 1, 0});
    CHECK(maximal_convex_subgraphs(diamond, {{1, false}, {2, true}, {3, true}, {4, true}}) ==
          std::vector<NodeSet>{{2, 3, 4}});

    const auto t1 = aql::compile(fixtures::demo_query("T1").aql);
    Flags all;
    NodeSet interior;
    for (const auto& n : t1.nodes()) {
        const bool inner = n.kind != OperatorKind::DocSource && n.kind != OperatorKind::Sink;
        all[n.id] = inner;
        if (inner) interior.push_back(n.id);
    }
    CHECK(maximal_convex_subgraphs(t1, all) == std::vector<NodeSet>{interior});
}

TEST_CASE("greedy sets agree with brute force on small random DAGs") {
    gen::Rng rng(5);
    for (int t = 0; t < 12; ++t) {
        const auto g = gen::random_topology(rng, 3 + t % 5);
        const oracle::ConvexTable table(g);
        const std::size_t n = g.nodes().size();
        for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
            Flags flags;
            for (std::size_t i = 0; i < n; ++i) flags[static_cast<NodeId>(i)] = mask >> i & 1;
            const auto sets = maximal_convex_subgraphs(g, flags);
            CHECK_MESSAGE(oracle::check_convex_sets(table, flags, sets).empty(), "topology " << t << " mask " << mask);
        }
    }
}

TEST_CASE("Reachability convexity agrees with path enumeration") {
    gen::Rng rng(8);
    for (int t = 0; t < 20; ++t) {
        const auto g = gen::random_topology(rng, 6);
        const Reachability reach(g);
        const auto adj = oracle::adjacency(g);
        for (std::size_t mask = 1; mask < 64; ++mask) {
            NodeSet s;
            for (NodeId i = 0; i < 6; ++i) {
                if (mask >> i & 1) s.push_back(i);
            }
            CHECK(reach.convex(s) == oracle::convex_by_paths(adj, {s.begin(), s.end()}));
        }
    }
}

TEST_CASE("max_subgraph_nodes splits sets") {
    const auto chain = line({OperatorKind::RegexExtract, OperatorKind::Select, OperatorKind::Select,
                             OperatorKind::Select, OperatorKind::Select});
    Flags f;
    for (NodeId i = 1; i <= 5; ++i) f[i] = true;
    const auto sets = maximal_convex_subgraphs(chain, f, 2);
    for (const auto& s : sets) CHECK(s.size() <= 2);
    std::size_t total = 0;
    for (const auto& s : sets) total += s.size();
    CHECK(total == 5);
}

TEST_CASE("rewrite") {
    const auto t1 = aql::compile(fixtures::demo_query("T1").aql);
    const auto plan2 = scenario_plan(t1, CapabilitySet::defaults(), 2);
    REQUIRE(plan2.subgraphs.size() == 1);
    const auto& set = plan2.subgraphs[0].fragment.nodes();
    NodeSet ids;
    for (const auto& n : set) ids.push_back(n.id);
    const auto plan = rewrite(t1, {ids});
    CHECK(plan.supergraph.nodes().size() == t1.nodes().size() - ids.size() + 1);
    check_conservation(plan, t1);
    validate_plan(plan, &t1);

    const auto none = rewrite(t1, {});
    CHECK(none.supergraph == t1);
    CHECK(none.subgraphs.empty());

    const auto islands = aql::compile(kTwoIslands);
    std::vector<NodeSet> sets;
    for (const auto& n : islands.nodes()) {
        if (n.name == "A" || n.name == "B") sets.push_back({n.id});
    }
    for (const auto& n : islands.nodes()) {
        if (n.kind == OperatorKind::Sink) continue;
        if (n.name == "LongA") sets[0].push_back(n.id);
        if (n.name == "LongB") sets[1].push_back(n.id);
    }
    for (auto& s : sets) std::sort(s.begin(), s.end());
    const auto two = rewrite(islands, sets);
    CHECK(two.subgraphs.size() == 2);
    CHECK(call_nodes(two.supergraph) == 2);
    check_conservation(two, islands);
    validate_plan(two, &islands);

    // non-convex and overlapping sets are rejected
    const auto chain = aql::compile(R"(
create view A as extract regex /a+/ on D.text from Document D;
create view B as select * from A where SpanLengthGreaterThan(A.match, 1);
create view C as consolidate B using 'ContainedWithin';
output view C;)");
    CHECK_THROWS_AS(rewrite(chain, {{1, 3}}), GraphError);
    CHECK_THROWS_AS(rewrite(chain, {{1, 2}, {2, 3}}), GraphError);
    CHECK_THROWS_AS(rewrite(chain, {{0, 1}}), GraphError);
}

TEST_CASE("scenario plans") {
    const auto extraction = aql::compile(R"(
create view A as extract regex /a+/ on D.text from Document D;
create view B as extract regex /b+/ on D.text from Document D;
output view A;
output view B;)");
    const auto p = scenario_plans(extraction, CapabilitySet::defaults());
    CHECK(p[0].offloaded_nodes() == p[1].offloaded_nodes());
    CHECK(p[1].offloaded_nodes() == p[2].offloaded_nodes());
    CHECK(serialize_plan(p[0]).size() > 0);

    const auto t5 = aql::compile(fixtures::demo_query("T5").aql);
    const auto q = scenario_plans(t5, CapabilitySet::defaults());
    CHECK(q[2].offloaded_nodes().size() > q[0].offloaded_nodes().size());
    for (const auto& plan : q) {
        validate_plan(plan, &t5);
        check_conservation(plan, t5);
    }
    for (NodeId id : q[0].offloaded_nodes()) CHECK(is_extraction(t5.node(id).kind));

    const auto nothing = CapabilitySet::from_json(nlohmann::json::parse(R"({"accelerable":[]})"));
    for (const auto& plan : scenario_plans(t5, nothing)) CHECK(plan.subgraphs.empty());

    CHECK_THROWS_AS(scenario_plan(t5, CapabilitySet::defaults(), 4), Error);
}

TEST_CASE("rewrite preserves nodes on random graphs") {
    gen::Rng rng(31);
    for (int i = 0; i < 300; ++i) {
        const auto g = gen::random_query_graph(rng, 10);
        for (int s = 1; s <= 3; ++s) {
            const auto plan = scenario_plan(g, CapabilitySet::defaults(), s);
            validate_plan(plan, &g);
            check_conservation(plan, g);
            const auto back = deserialize_plan(serialize_plan(plan));
            CHECK(serialize_plan(back) == serialize_plan(plan));
            CHECK(back.offloaded_nodes() == plan.offloaded_nodes());
        }
    }
}
