#include <doctest.h>

#include "spanforge/config.hpp"
#include "spanforge/error.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using spanforge::Error;
using spanforge::RunConfig;

namespace {

struct Outcome {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path workdir() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / "spanforge_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

Outcome cli(const std::string& args, const std::string& env = "") {
    const fs::path out = workdir() / "stdout.txt";
    const fs::path err = workdir() / "stderr.txt";
    const std::string cmd = "cd '" + workdir().string() + "' && env -u SPANFORGE_PEAK_BW " + env + " '" +
                            SPANFORGE_CLI + "' " + args + " >'" + out.string() + "' 2>'" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    Outcome o;
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    o.out = slurp(out);
    o.err = slurp(err);
    return o;
}

std::string query(const std::string& name) { return std::string(SPANFORGE_QUERY_DIR) + "/" + name + ".aql"; }

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

void make_docs() {
    const fs::path docs = workdir() / "docs";
    fs::create_directories(docs);
    write(docs / "a.txt", "Dr. Smith of Acme Corp called 555-867-5309 on March 3, 2021 about $4 million.");
    write(docs / "b.txt", "Mary Jones (212) 555-0199 visited Paris and wrote to jones@example.com.");
    write(docs / "c.txt", "nothing to see here");
}

} // namespace

TEST_CASE("compile, partition, run, profile and estimate") {
    make_docs();
    auto c = cli("compile '" + query("T1") + "' -o t1.graph.json");
    REQUIRE_MESSAGE(c.code == 0, c.err);
    CHECK(fs::file_size(workdir() / "t1.graph.json") > 0);

    c = cli("partition t1.graph.json --scenario 3 -o t1.plan.json");
    REQUIRE_MESSAGE(c.code == 0, c.err);
    c = cli("partition t1.graph.json --scenario 1 --caps extraction-only -o t1.plan1.json");
    REQUIRE_MESSAGE(c.code == 0, c.err);

    c = cli("run t1.plan.json --docs docs -o run1.jsonl --threads 1");
    REQUIRE_MESSAGE(c.code == 0, c.err);
    c = cli("run t1.plan.json --docs docs -o run2.jsonl --threads 4 --max-docs 2 --trace trace.csv");
    REQUIRE_MESSAGE(c.code == 0, c.err);
    CHECK(slurp(workdir() / "run1.jsonl") == slurp(workdir() / "run2.jsonl"));
    CHECK_FALSE(slurp(workdir() / "run1.jsonl").empty());
    CHECK(slurp(workdir() / "trace.csv").find("stage,cycles") != std::string::npos);

    c = cli("run t1.graph.json --docs docs -o host.jsonl");
    REQUIRE_MESSAGE(c.code == 0, c.err);
    CHECK(slurp(workdir() / "host.jsonl") == slurp(workdir() / "run1.jsonl"));

    c = cli("profile t1.graph.json --docs docs --profile t1.profile.json");
    REQUIRE_MESSAGE(c.code == 0, c.err);
    c = cli("estimate --profile t1.profile.json --plan t1.plan1.json --plan t1.plan.json --csv");
    REQUIRE_MESSAGE(c.code == 0, c.err);
    CHECK(c.out.rfind("scenario,rt_sw", 0) == 0);
    CHECK(std::count(c.out.begin(), c.out.end(), '\n') == 3);

    c = cli("run t1.plan.json --docs docs -o - --thread-scan 1,2 --scan-out scan.csv");
    REQUIRE_MESSAGE(c.code == 0, c.err);
    CHECK(std::count(c.out.begin(), c.out.end(), '\n') > 0);
    CHECK(slurp(workdir() / "scan.csv").rfind("threads,bytes,seconds,bytes_per_s\n", 0) == 0);
}

TEST_CASE("compile output is deterministic") {
    REQUIRE(cli("compile '" + query("T5") + "' -o a.json").code == 0);
    REQUIRE(cli("compile '" + query("T5") + "' -o b.json").code == 0);
    CHECK(slurp(workdir() / "a.json") == slurp(workdir() / "b.json"));
    const auto out = cli("compile '" + query("T5") + "' -o -");
    CHECK(out.out == slurp(workdir() / "a.json"));
}

TEST_CASE("errors exit with status 1 and a message") {
    REQUIRE(cli("compile '" + query("T2") + "' -o t2.graph.json").code == 0);
    auto c = cli("run t2.graph.json --docs /no/such/corpus");
    CHECK(c.code == 1);
    CHECK(c.err.find("corpus not found") != std::string::npos);

    write(workdir() / "bad.aql", "create view X as extract regex /a+/ on D.text from Document D;\noutput view Y;\n");
    c = cli("compile bad.aql -o bad.json");
    CHECK(c.code == 1);
    CHECK(c.err.find("Y") != std::string::npos);

    c = cli("frobnicate");
    CHECK(c.code == 1);
    c = cli("compile '" + query("T2") + "' --no-such-flag");
    CHECK(c.code == 1);
    c = cli("partition t2.graph.json --scenario 7");
    CHECK(c.code == 1);
    c = cli("run t2.graph.json --docs docs --threads 0");
    CHECK(c.code == 1);
    CHECK(c.err.find("threads") != std::string::npos);
}

TEST_CASE("help on every subcommand") {
    CHECK(cli("--help").code == 0);
    for (const char* sub : {"compile", "partition", "run", "profile", "estimate", "demo", "corpus"}) {
        const auto c = cli(std::string(sub) + " --help");
        CHECK_MESSAGE(c.code == 0, sub);
        CHECK_MESSAGE(!c.out.empty(), sub);
    }
}

TEST_CASE("settings precedence: file, then environment, then flags") {
    make_docs();
    REQUIRE(cli("compile '" + query("T1") + "' -o p.graph.json").code == 0);
    REQUIRE(cli("partition p.graph.json --scenario 3 -o p.plan.json").code == 0);
    REQUIRE(cli("profile p.graph.json --docs docs --profile p.profile.json").code == 0);
    write(workdir() / "settings.conf", "# test\n[estimate]\npeak_bw = 1e8\n");

    const std::string base = "estimate --profile p.profile.json --plan p.plan.json --csv --config settings.conf";
    auto tp_hw = [](const std::string& csv) {
        const std::string row = csv.substr(csv.find('\n') + 1);
        std::vector<std::string> cells;
        std::stringstream ss(row);
        for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
        return cells.at(3);
    };
    auto c = cli(base);
    REQUIRE_MESSAGE(c.code == 0, c.err);
    CHECK(tp_hw(c.out) == "1e+08");
    c = cli(base, "SPANFORGE_PEAK_BW=2e8");
    REQUIRE_MESSAGE(c.code == 0, c.err);
    CHECK(tp_hw(c.out) == "2e+08");
    c = cli(base + " --peak-bw 3e8", "SPANFORGE_PEAK_BW=2e8");
    REQUIRE_MESSAGE(c.code == 0, c.err);
    CHECK(tp_hw(c.out) == "3e+08");

    c = cli(base, "SPANFORGE_PEAK_BW=-4");
    CHECK(c.code == 1);
    CHECK(c.err.find("SPANFORGE_PEAK_BW") != std::string::npos);
    write(workdir() / "broken.conf", "peak_bw = 1e8\nwarp = 9\n");
    c = cli("estimate --profile p.profile.json --plan p.plan.json --config broken.conf");
    CHECK(c.code == 1);
    CHECK(c.err.find("broken.conf:2") != std::string::npos);
}

TEST_CASE("demo and corpus commands") {
    auto c = cli("corpus -n 4 --sizes 100,200 --seed 3 -o small.jsonl");
    REQUIRE_MESSAGE(c.code == 0, c.err);
    const std::string jsonl = slurp(workdir() / "small.jsonl");
    CHECK(std::count(jsonl.begin(), jsonl.end(), '\n') == 4);

    c = cli("demo --query T2 --documents 20");
    REQUIRE_MESSAGE(c.code == 0, c.err);
    CHECK(c.out.find("T2") != std::string::npos);
    CHECK(c.out.find("scenario 3 output matches software output") != std::string::npos);
    c = cli("demo --query T3 --documents 20 --csv");
    REQUIRE_MESSAGE(c.code == 0, c.err);
    CHECK(c.out.rfind("query,scenario,rt_sw", 0) == 0);
    CHECK(std::count(c.out.begin(), c.out.end(), '\n') == 4);
}

TEST_CASE("RunConfig layers and ranges") {
    RunConfig cfg;
    cfg.set("threads", "3");
    cfg.set("max_docs", "5");
    cfg.set("flush_us", "\"250\"");
    cfg.set("lane_mode", "threaded");
    CHECK(cfg.dispatch.worker_threads == 3);
    CHECK(cfg.dispatch.max_docs_per_package == 5);
    CHECK(cfg.cost.docs_per_package == 5);
    CHECK(cfg.dispatch.flush_timeout == std::chrono::microseconds(250));
    CHECK(cfg.lane_mode == spanforge::accel::LaneMode::Threaded);
    CHECK_THROWS_AS(cfg.set("threads", "0"), Error);
    CHECK_THROWS_AS(cfg.set("threads", "two"), Error);
    CHECK_THROWS_AS(cfg.set("peak_bw", "0"), Error);
    CHECK_THROWS_AS(cfg.set("lane_mode", "warp"), Error);
    CHECK_THROWS_AS(cfg.set("nope", "1"), Error);
    CHECK_THROWS_AS(cfg.load_file("/no/such/file.conf"), Error);
    for (const auto& key : RunConfig::keys()) CHECK_FALSE(key.empty());
    RunConfig missing;
    missing.set("caps", "/no/such/caps.json");
    CHECK_THROWS_AS(missing.run_options(), Error);
}
