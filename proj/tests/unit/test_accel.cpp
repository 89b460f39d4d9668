#include <doctest.h>

#include "spanforge/accel.hpp"
#include "spanforge/aql.hpp"
#include "spanforge/error.hpp"
#include "spanforge/fixtures.hpp"
#include "support/generators.hpp"
#include "support/subgraph_case.hpp"

using namespace spanforge;
using namespace spanforge::accel;
using partition::CapabilitySet;

namespace {

partition::PartitionPlan whole_plan(const std::string& aql) {
    return partition::scenario_plan(aql::compile(aql), CapabilitySet::defaults(), 3);
}

DocumentPtr make_doc(std::string text, std::string id = "d") {
    return std::make_shared<const Document>(Document::from_utf8(std::move(id), std::move(text)));
}

const char* kUnionJoin = R"(
create view Cap as extract regex /[A-Z][a-z]+/ on D.text from Document D;
create view Vowel as extract regex /[aeiou]/ on D.text from Document D;
create view Word as extract regex /[a-z]+/ on D.text from Document D;
create view Any as union all Cap, Vowel;
create view Pair as select * from Any, Word where Follows(Any.match, Word.match, 0, 3);
output view Pair;
)";

} // namespace

TEST_CASE("model throughput at 128, 256 and 2048 bytes") {
    CostModel m;
    CHECK(calibrated_package_rate(500e6, 8, 128, 10) == 48828.125);
    CHECK(m.package_rate == 48828.125);
    CHECK(model_throughput(m, 2048) == 500e6);
    CHECK(model_throughput(m, 4096) == 500e6);
    CHECK(model_throughput(m, 128) == 50e6);
    CHECK(model_throughput(m, 256) == 100e6);
    CHECK_THROWS_AS(model_throughput(m, 0), Error);
}

TEST_CASE("model throughput is nondecreasing and clamped") {
    CostModel m;
    double last = 0;
    for (double size = 1; size < 10000; size *= 1.07) {
        const double t = model_throughput(m, size);
        CHECK(t >= last);
        CHECK(t <= m.peak_bandwidth);
        last = t;
    }
    CostModel bad;
    bad.lanes = 0;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("sorting buffer") {
    SortingBuffer b(3, 0, "sb");
    b.push({Span{3, 4}});
    b.push({Span{1, 2}});
    b.push({Span{2, 3}});
    CHECK(b.full());
    CHECK_THROWS_AS(b.push({Span{0, 1}}), StageError);
    CHECK(std::get<Span>(b.pop()[0]) == Span{1, 2});
    // a key below one already emitted cannot be restored
    CHECK_THROWS_AS(b.push({Span{0, 1}}), StageError);
    CHECK(std::get<Span>(b.pop()[0]) == Span{2, 3});
    CHECK(std::get<Span>(b.pop()[0]) == Span{3, 4});
    CHECK(b.empty());
}

TEST_CASE("single regex subgraph compiles to one stage without buffers") {
    const auto plan = whole_plan("create view R as extract regex /ab+/ on D.text from Document D; output view R;");
    REQUIRE(plan.subgraphs.size() == 1);
    const auto p = Pipeline::build(plan.subgraphs[0], CapabilitySet::defaults());
    CHECK(p.node_stage_count() == 1);
    CHECK(p.sorting_buffer_count() == 0);
}

TEST_CASE("a sorting buffer sits between a union and a join") {
    const auto plan = whole_plan(kUnionJoin);
    REQUIRE(plan.subgraphs.size() == 1);
    const auto p = Pipeline::build(plan.subgraphs[0], CapabilitySet::defaults());
    CHECK(p.sorting_buffer_count() == 1);
    const auto& st = p.stages();
    bool found = false;
    for (const auto& s : st) {
        if (s.kind != StageKind::SortingBuffer) continue;
        REQUIRE(s.inputs.size() == 1);
        CHECK(st[static_cast<std::size_t>(s.inputs[0])].kind == StageKind::Union);
        CHECK_FALSE(st[static_cast<std::size_t>(s.inputs[0])].sorted);
        for (int c : s.consumers) CHECK(st[static_cast<std::size_t>(c)].kind == StageKind::Join);
        found = true;
    }
    CHECK(found);

    const auto d = make_doc("Abcdefg hij Kl mno");
    const CompiledGraph g(aql::compile(kUnionJoin));
    const auto results = execute_all(g, d);
    const auto c = harness::subgraph_case(g, results, plan.subgraphs[0]);
    const auto run = p.run_document(*d, harness::pointers(c), true);
    CHECK(run.outputs == c.expected);
    REQUIRE(run.audit);
    for (const auto& stream : run.audit->sorted_streams) CHECK(std::is_sorted(stream.begin(), stream.end()));
}

TEST_CASE("capabilities gate pipeline construction") {
    const auto plan = whole_plan(R"(
create view R as extract regex /a+/ on D.text from Document D;
create view C as consolidate R using 'ContainedWithin';
output view C;)");
    CHECK_THROWS_AS(Pipeline::build(plan.subgraphs[0], CapabilitySet::extraction_only()), GraphError);
    auto tight = CapabilitySet::defaults();
    tight.regex_state_budget = 2;
    CHECK_THROWS_AS(Pipeline::build(plan.subgraphs[0], tight), PatternTooComplex);
}

TEST_CASE("fixture subgraphs match software on one-document packages") {
    const auto corpus = fixtures::demo_corpus(3, 512, 5);
    for (const auto& q : fixtures::demo_queries()) {
        const CompiledGraph g(aql::compile(q.aql));
        const auto plan = partition::scenario_plan(g.graph(), CapabilitySet::defaults(), 3);
        for (const auto& sg : plan.subgraphs) {
            const auto p = Pipeline::build(sg, CapabilitySet::defaults());
            for (const auto& e : corpus) {
                const auto results = execute_all(g, e.doc);
                const auto c = harness::subgraph_case(g, results, sg);
                const auto stream = execute_stream(p, {{e.doc, c.inputs}});
                REQUIRE(stream.entries.size() == 1);
                CHECK_FALSE(stream.entries[0].error);
                CHECK_MESSAGE(stream.entries[0].outputs == c.expected, q.name);
            }
        }
    }
}

TEST_CASE("empty document costs setup cycles only") {
    const auto plan = whole_plan(kUnionJoin);
    const auto p = Pipeline::build(plan.subgraphs[0], CapabilitySet::defaults());
    const auto d = make_doc("");
    const std::vector<const ops::AnnotationSet*> inputs(p.input_count(), nullptr);
    const auto run = p.run_document(*d, inputs);
    for (const auto& o : run.outputs) CHECK(o.tuples.empty());
    CHECK(run.cycles == CostModel{}.setup_cycles);
}

TEST_CASE("eight equal documents on four lanes") {
    const auto plan = whole_plan("create view R as extract regex /q+/ on D.text from Document D; output view R;");
    const auto p = Pipeline::build(plan.subgraphs[0], CapabilitySet::defaults());
    std::vector<StreamEntry> entries;
    for (int i = 0; i < 8; ++i) entries.push_back({make_doc(std::string(300, 'a'), "d" + std::to_string(i)), {{}}});
    for (LaneMode mode : {LaneMode::Simulated, LaneMode::Threaded}) {
        const auto r = execute_stream(p, entries, {mode, false});
        REQUIRE(r.lane_cycles.size() == 4);
        for (auto c : r.lane_cycles) CHECK(c == 2 * (300 + CostModel{}.setup_cycles));
    }
    CHECK_THROWS_AS(execute_stream(p, {}), Error);
}

// The capitalised word at the end reaches the union ahead of the earlier
// vowels, so a one-slot buffer sees a key below one it already emitted.
TEST_CASE("per-entry failures stay with their entry") {
    const auto plan = whole_plan(kUnionJoin);
    PipelineOptions tiny;
    tiny.sort_capacity = 1;
    const auto p = Pipeline::build(plan.subgraphs[0], CapabilitySet::defaults(), tiny);
    std::vector<StreamEntry> entries;
    entries.push_back({make_doc("xyz"), {}});
    entries.push_back({make_doc("a bcdefghi Xy"), {}});
    entries.push_back({make_doc("rhythm"), {}});
    for (auto& e : entries) e.inputs.resize(p.input_count());
    const auto r = execute_stream(p, entries);
    CHECK_FALSE(r.entries[0].error);
    CHECK(r.entries[1].error);
    CHECK_FALSE(r.entries[2].error);
}

TEST_CASE("streams match software on random subgraphs, at any channel capacity") {
    gen::Rng rng(606);
    int runs = 0;
    for (int i = 0; i < 150; ++i) {
        const CompiledGraph g(gen::random_query_graph(rng, 8));
        const auto plan = partition::scenario_plan(g.graph(), CapabilitySet::defaults(), 3);
        const auto d = make_doc(gen::random_text(rng, 160));
        const auto results = execute_all(g, d);
        for (const auto& sg : plan.subgraphs) {
            const auto c = harness::subgraph_case(g, results, sg);
            for (std::size_t cap : {std::size_t{1}, std::size_t{2}, std::size_t{16}}) {
                PipelineOptions o;
                o.channel_capacity = cap;
                const auto p = Pipeline::build(sg, CapabilitySet::defaults(), o);
                const auto run = p.run_document(*d, harness::pointers(c), true);
                CHECK_MESSAGE(run.outputs == c.expected, serialize_aog(g.graph()) << " on '" << d->utf8 << "'");
                REQUIRE(run.audit);
                for (const auto& reads : run.audit->tap_reads) {
                    CHECK(reads.size() == d->text.size());
                    CHECK(std::all_of(reads.begin(), reads.end(), [](std::uint32_t n) { return n == 1; }));
                }
                for (const auto& s : run.audit->sorted_streams) CHECK(std::is_sorted(s.begin(), s.end()));
                ++runs;
            }
        }
    }
    CHECK(runs > 200);
}

TEST_CASE("trace csv") {
    const auto plan = whole_plan(kUnionJoin);
    const auto p = Pipeline::build(plan.subgraphs[0], CapabilitySet::defaults());
    const auto r = execute_stream(p, {{make_doc("Ab cd 12 ef"), std::vector<ops::AnnotationSet>(p.input_count())}});
    const std::string csv = trace_csv(p, r.trace);
    CHECK(csv.rfind("stage,cycles,tuples_in,tuples_out\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(p.stages().size() + 1));
}
