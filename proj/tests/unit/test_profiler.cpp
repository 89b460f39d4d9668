#include <doctest.h>

#include "spanforge/aql.hpp"
#include "spanforge/dispatch.hpp"
#include "spanforge/error.hpp"
#include "spanforge/fixtures.hpp"
#include "spanforge/profiler.hpp"
#include "support/generators.hpp"

#include <random>

using namespace spanforge;
using namespace spanforge::profile;
using partition::CapabilitySet;

namespace {

ProfileReport kinds(std::map<std::string, double> per_kind) {
    ProfileReport r;
    r.per_kind = std::move(per_kind);
    return r;
}

ProfileReport profile_of(const OperatorGraph& g, const corpus::Corpus& docs) {
    dispatch::DispatchConfig c;
    c.worker_threads = 1;
    return dispatch::run_corpus(partition::software_plan(g), docs, c).profile;
}

} // namespace

TEST_CASE("relative distribution") {
    const auto d = relative_distribution(
        kinds({{"RegexExtract", 50}, {"DictionaryExtract", 32}, {"Join", 10}, {"Select", 8}}));
    CHECK(d.at("RegexExtract") == doctest::Approx(0.50));
    CHECK(d.at("DictionaryExtract") == doctest::Approx(0.32));
    CHECK(d.at("Join") == doctest::Approx(0.10));
    CHECK(d.at("Select") == doctest::Approx(0.08));
    CHECK(extraction_fraction(d) == doctest::Approx(0.82));
    CHECK(relational_fraction(d) == doctest::Approx(0.18));

    CHECK(relative_distribution(kinds({{"Join", 3}})).at("Join") == 1.0);
    CHECK_THROWS_AS(relative_distribution(kinds({{"Join", 0}})), Error);
    CHECK_THROWS_AS(relative_distribution(ProfileReport{}), Error);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0, 10);
    for (int i = 0; i < 200; ++i) {
        const auto dist = relative_distribution(kinds({{"RegexExtract", u(rng)}, {"Join", u(rng)}, {"Union", u(rng) + 1e-9}}));
        double sum = 0;
        for (const auto& [k, v] : dist) {
            CHECK(v >= 0);
            CHECK(v <= 1);
            sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("throughput estimate examples") {
    CHECK(estimate_throughput({10e6, 500e6, 0}) == doctest::Approx(500e6).epsilon(1e-12));
    CHECK(estimate_throughput({10e6, 1e18, 0.25}) == doctest::Approx(40e6).epsilon(1e-6));
    CHECK(estimate_throughput({10e6, 500e6, 0.18}) == 50e6);
    CHECK(estimate_throughput({2e6, 500e6, 0.03}) / 2e6 == doctest::Approx(29.4).epsilon(0.01));
    CHECK(estimate_throughput({10e6, 500e6, 0.03}) / 10e6 == doctest::Approx(20.0).epsilon(1e-9));
    CHECK(estimate_throughput({10e6, 500e6, 0.05}) / 10e6 == doctest::Approx(14.3).epsilon(0.01));
    CHECK_THROWS_AS(estimate_throughput({0, 500e6, 0.5}), Error);
    CHECK_THROWS_AS(estimate_throughput({1e6, -1, 0.5}), Error);
    CHECK_THROWS_AS(estimate_throughput({1e6, 1e6, 1.5}), Error);
}

TEST_CASE("throughput estimate bounds and monotonicity") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> lg(3, 10);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 10000; ++i) {
        const double sw = std::pow(10, lg(rng));
        const double hw = std::pow(10, lg(rng));
        const double rt = u(rng);
        const double e = estimate_throughput({sw, hw, rt});
        CHECK(e <= hw * (1 + 1e-12));
        if (rt > 0) CHECK(e <= sw / rt * (1 + 1e-12));
        const double rt2 = std::min(1.0, rt + u(rng) * 0.1);
        CHECK(estimate_throughput({sw, hw, rt2}) <= e * (1 + 1e-12));
        CHECK(estimate_throughput({sw, hw * 2, rt}) >= e);
        CHECK(estimate_throughput({sw * 2, hw, rt}) >= e);
    }
}

TEST_CASE("profile json round trip and format errors") {
    const auto g = aql::compile(fixtures::demo_query("T2").aql);
    const auto p = profile_of(g, fixtures::demo_corpus(5, 512, 1));
    const auto back = ProfileReport::from_json(nlohmann::json::parse(p.to_json().dump()));
    CHECK(back.per_node == p.per_node);
    CHECK(back.per_kind == p.per_kind);
    CHECK(back.bytes == p.bytes);
    CHECK(back.total_s == p.total_s);
    CHECK(back.bytes == 5 * 512);
    CHECK_THROWS_AS(ProfileReport::from_json(nlohmann::json::parse(R"({"total_s":1})")), FormatError);
    CHECK_THROWS_AS(ProfileReport::from_json(nlohmann::json::parse(
                        R"({"total_s":1,"bytes":1,"threads":1,"per_node":{},"per_kind":{"Frob":1}})")),
                    FormatError);
}

TEST_CASE("speedup report") {
    const auto g = aql::compile(fixtures::demo_query("T1").aql);
    const auto p = profile_of(g, fixtures::demo_corpus(40, 1024, 2));
    const auto plans = partition::scenario_plans(g, CapabilitySet::defaults());
    const auto sw = partition::software_plan(g);
    const auto rows = speedup_report(p, {&sw, &plans[0], &plans[1], &plans[2]}, accel::CostModel{}, 1024);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].rt_sw == 1.0);
    CHECK(rows[0].no_benefit);
    CHECK(rows[3].speedup >= rows[1].speedup);
    CHECK(rows[3].accounting == "optimistic");
    CHECK(rows[1].accounting == "pessimistic");
    for (const auto& r : rows) {
        CHECK(r.tp_hw == accel::model_throughput(accel::CostModel{}, 1024));
        CHECK(r.tp_est <= std::min(r.tp_hw, r.rt_sw > 0 ? r.tp_sw / r.rt_sw : r.tp_hw) * (1 + 1e-12));
    }
    const std::string csv = report_csv(rows);
    CHECK(csv.rfind("scenario,rt_sw,tp_sw,tp_hw,tp_est,speedup,accounting\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
    CHECK_FALSE(report_table(rows).empty());
    CHECK(distribution_csv(p).rfind("kind,seconds,fraction\n", 0) == 0);

    const auto other = aql::compile(fixtures::demo_query("T5").aql);
    const auto foreign = partition::scenario_plan(other, CapabilitySet::defaults(), 3);
    ProfileReport tiny;
    tiny.per_node = {{0, 1.0}};
    tiny.bytes = 1;
    tiny.total_s = 1;
    CHECK_THROWS_AS(estimate_scenario(tiny, foreign, accel::CostModel{}, 1024), Error);
}

TEST_CASE("extraction dominates T1") {
    const auto g = aql::compile(fixtures::demo_query("T1").aql);
    const auto p = profile_of(g, fixtures::demo_corpus(60, 2048, 4));
    const double f = extraction_fraction(relative_distribution(p));
    CHECK(f >= 0.6);
    CHECK(f <= 0.95);
}

TEST_CASE("throughput scan") {
    const auto g = aql::compile(fixtures::demo_query("T3").aql);
    const auto plan = partition::scenario_plan(g, CapabilitySet::defaults(), 3);
    const auto docs = fixtures::demo_corpus(30, 512, 6);
    const auto rows = throughput_scan(plan, docs, {1}, {}, {});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].threads == 1);
    CHECK(rows[0].bytes == 30 * 512);
    CHECK(rows[0].throughput > 0);
    const auto multi = throughput_scan(plan, docs, {1, 2, 4}, {}, {});
    CHECK(multi.size() == 3);
    const auto empty = throughput_scan(plan, {}, {2}, {}, {});
    CHECK(empty[0].bytes == 0);
    CHECK(empty[0].throughput == 0);
    CHECK(scan_csv(rows).rfind("threads,bytes,seconds,bytes_per_s\n", 0) == 0);
}

TEST_CASE("profiling overhead is small") {
    const auto g = aql::compile(fixtures::demo_query("T1").aql);
    const auto docs = fixtures::demo_corpus(150, 2048, 8);
    const auto plan = partition::software_plan(g);
    dispatch::DispatchConfig c;
    c.worker_threads = 1;
    double on = 1e9, off = 1e9;
    for (int i = 0; i < 5; ++i) {
        dispatch::RunOptions o;
        o.profile = true;
        on = std::min(on, dispatch::run_corpus(plan, docs, c, o).profile.total_s);
        o.profile = false;
        off = std::min(off, dispatch::run_corpus(plan, docs, c, o).profile.total_s);
    }
    CHECK(on < off * 1.10);
}
