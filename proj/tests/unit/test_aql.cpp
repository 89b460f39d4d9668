#include <doctest.h>

#include "spanforge/aql.hpp"
#include "spanforge/error.hpp"
#include "spanforge/fixtures.hpp"

#include <fstream>
#include <set>
#include <sstream>

using namespace spanforge;

namespace {

const char* kJoinProgram = R"(
create view Cap as extract regex /[A-Z][a-z]+/ on D.text from Document D;
create view Num as extract regex /\d+/ on D.text from Document D;
create view CapNum as select * from Cap, Num where Follows(Cap.match, Num.match, 1, 3);
output view CapNum;
)";

std::size_t count_kind(const OperatorGraph& g, OperatorKind k) {
    std::size_t n = 0;
    for (const auto& node : g.nodes()) n += node.kind == k;
    return n;
}

} // namespace

TEST_CASE("minimal program parses to one regex view and one output") {
    const auto p = aql::parse_aql(
        "create view Caps as extract regex /[A-Z][a-z]+/ on D.text from Document D; output view Caps;");
    REQUIRE(p.views().size() == 1);
    CHECK(std::holds_alternative<aql::ExtractRegex>(p.views()[0]->body));
    CHECK(std::get<aql::ExtractRegex>(p.views()[0]->body).pattern == "[A-Z][a-z]+");
    CHECK(p.outputs().size() == 1);
}

TEST_CASE("output of an undefined view is a resolution error") {
    CHECK_THROWS_WITH_AS(aql::parse_aql("output view Missing;"), doctest::Contains("undefined view \"Missing\""),
                         ResolutionError);
}

TEST_CASE("join program has three views and a binary join") {
    const auto p = aql::parse_aql(kJoinProgram);
    REQUIRE(p.views().size() == 3);
    const auto* join = std::get_if<aql::JoinBody>(&p.views()[2]->body);
    REQUIRE(join);
    CHECK(aql::view_inputs(p.views()[2]->body).size() == 2);
    CHECK(join->predicate.op == Predicate::Op::Follows);
    CHECK(join->predicate.min == 1);
    CHECK(join->predicate.max == 3);
}

TEST_CASE("parse errors carry line and column") {
    try {
        aql::parse_aql("create view A as extract regex /a/ on D.text from Document D;\ncreate view B as frob;");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
        CHECK(e.column() > 1);
    }
}

TEST_CASE("single regex view lowers to Document, RegexExtract, Sink") {
    const auto g = aql::compile("create view Caps as extract regex /[A-Z][a-z]+/ on D.text from Document D; output view Caps;");
    REQUIRE(g.nodes().size() == 3);
    CHECK(g.node(0).kind == OperatorKind::DocSource);
    CHECK(g.node(1).kind == OperatorKind::RegexExtract);
    CHECK(g.node(2).kind == OperatorKind::Sink);
    CHECK(g.edges().size() == 2);
    CHECK(g.node(1).output_schema == Schema({{"match", ValueType::Span}}));
}

TEST_CASE("two extractions joined then projected lower to a five-view DAG") {
    const auto g = aql::compile(std::string(kJoinProgram).replace(std::string(kJoinProgram).find("output view CapNum;"),
                                                                  19, "create view P as select match_r from CapNum; output view P;"));
    // DocSource + 4 views + Sink; the five operators are Document, two extracts, join, project
    CHECK(g.nodes().size() == 6);
    CHECK(count_kind(g, OperatorKind::Join) == 1);
    for (const auto& n : g.nodes()) {
        if (n.kind == OperatorKind::Join) CHECK(g.inputs_of(n.id).size() == 2);
        if (n.kind == OperatorKind::Project) CHECK(n.output_schema == Schema({{"match_r", ValueType::Span}}));
    }
}

TEST_CASE("self-referential view is a cycle error") {
    CHECK_THROWS_AS(aql::compile("create view V as select * from V where SpanLengthGreaterThan(V.match, 1); output view V;"),
                    GraphError);
}

TEST_CASE("lowering is deterministic and every sink maps to one output statement") {
    for (const auto& q : fixtures::demo_queries()) {
        const auto a = aql::compile(q.aql);
        const auto b = aql::compile(q.aql);
        CHECK(a == b);
        CHECK(serialize_aog(a) == serialize_aog(b));
        const auto program = aql::parse_aql(q.aql);
        std::multiset<std::string> outs;
        for (const auto* o : program.outputs()) outs.insert(o->name);
        std::multiset<std::string> sinks;
        for (const auto& n : a.nodes()) {
            if (n.kind == OperatorKind::Sink) sinks.insert(n.as<SinkParams>().view);
        }
        CHECK(outs == sinks);
        CHECK(a.outputs().size() == program.outputs().size());
    }
}

TEST_CASE("compile, serialize, deserialize round trip") {
    for (const auto& q : fixtures::demo_queries()) {
        const auto g = aql::compile(q.aql);
        const auto back = deserialize_aog(serialize_aog(g));
        CHECK(back == g);
    }
}

TEST_CASE("unused views are dropped") {
    const auto g = aql::compile(R"(
create view A as extract regex /a+/ on D.text from Document D;
create view B as extract regex /b+/ on D.text from Document D;
output view A;)");
    CHECK(g.nodes().size() == 3);
}

TEST_CASE("dictionary from file is inlined relative to the query") {
    const auto g = aql::compile(R"(
create dictionary Cities from file 'cities.dict';
create view City as extract dictionary Cities on D.text from Document D;
output view City;)",
                                SPANFORGE_TEST_DATA);
    const auto& p = g.node(1).as<DictionaryParams>();
    CHECK(p.entries == std::vector<std::string>{"Zürich", "New York", "Paris"});
    CHECK_THROWS_AS(aql::compile("create dictionary X from file 'nope.dict';\n"
                                 "create view C as extract dictionary X on D.text from Document D; output view C;",
                                 SPANFORGE_TEST_DATA),
                    Error);
}

TEST_CASE("shipped query files match the bundled demo queries") {
    for (const auto& q : fixtures::demo_queries()) {
        std::ifstream in(std::string(SPANFORGE_QUERY_DIR) + "/" + q.name + ".aql");
        REQUIRE(in);
        std::ostringstream s;
        s << in.rdbuf();
        CHECK_MESSAGE(s.str() == q.aql, q.name);
    }
    CHECK_THROWS_AS(fixtures::demo_query("T9"), Error);
}
