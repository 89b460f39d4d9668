#include "spanforge/aql.hpp"
#include "spanforge/config.hpp"
#include "spanforge/corpus.hpp"
#include "spanforge/dispatch.hpp"
#include "spanforge/error.hpp"
#include "spanforge/executor.hpp"
#include "spanforge/fixtures.hpp"
#include "spanforge/partitioner.hpp"
#include "spanforge/profiler.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using namespace spanforge;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read '" + path.string() + "'");
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// "-" writes to stdout.
void write_file(const std::string& path, const std::string& text) {
    if (path == "-") {
        std::cout << text;
        std::cout.flush();
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << text;
    if (!out) throw Error("write failed for '" + path + "'");
}

fs::path base_dir_of(const fs::path& p) { return p.has_parent_path() ? p.parent_path() : fs::path("."); }

struct Settings {
    std::string config;
    std::map<std::string, std::string> flags;
};

// Registers --flag-name for each config key on `cmd`.
void add_setting_flags(CLI::App* cmd, Settings& s, const std::vector<std::string>& keys) {
    cmd->add_option("--config", s.config, "key = value settings file");
    for (const auto& key : keys) {
        std::string flag = "--" + key;
        for (auto& c : flag) {
            if (c == '_') c = '-';
        }
        cmd->add_option_function<std::string>(flag, [&s, key](const std::string& v) { s.flags[key] = v; },
                                               "overrides setting '" + key + "'");
    }
}

RunConfig resolve(const Settings& s) {
    RunConfig cfg;
    if (!s.config.empty()) cfg.load_file(s.config);
    cfg.load_env();
    for (const auto& [k, v] : s.flags) cfg.set(k, v, "--" + k);
    cfg.dispatch.validate();
    cfg.cost.validate();
    return cfg;
}

void report_failures(const std::vector<DocumentAnnotations>& docs) {
    std::size_t failed = 0;
    for (const auto& d : docs) {
        if (d.error) {
            ++failed;
            std::cerr << "document " << d.doc << " failed: " << *d.error << '\n';
        }
    }
    if (failed) std::cerr << failed << " of " << docs.size() << " documents failed\n";
}

std::string traces_csv(const partition::PartitionPlan& plan, const dispatch::RunOptions& options,
                       const dispatch::DispatchStats& stats) {
    const auto pipelines = dispatch::build_pipelines(plan, options);
    std::string out;
    for (const auto& [id, pipeline] : pipelines) {
        auto it = stats.trace.find(id);
        std::string csv = accel::trace_csv(pipeline, it == stats.trace.end() ? std::vector<accel::StageTrace>{} : it->second);
        if (!out.empty()) csv.erase(0, csv.find('\n') + 1);
        out += csv;
    }
    if (out.empty()) out = "stage,cycles,tuples_in,tuples_out\n";
    return out;
}

std::vector<std::size_t> parse_thread_list(const std::string& list) {
    std::vector<std::size_t> out;
    std::stringstream in(list);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            std::size_t pos = 0;
            const unsigned long v = std::stoul(item, &pos);
            if (pos != item.size() || v == 0) throw std::invalid_argument(item);
            out.push_back(v);
        } catch (const std::logic_error&) {
            throw Error("--thread-scan expects a comma-separated list of positive integers");
        }
    }
    if (out.empty()) throw Error("--thread-scan list is empty");
    return out;
}

int run_demo(const std::string& which, std::size_t documents, const RunConfig& cfg, std::uint64_t seed, bool csv) {
    const auto doc_size = static_cast<std::size_t>(cfg.doc_size);
    const corpus::Corpus docs = fixtures::demo_corpus(documents, doc_size, seed);
    const dispatch::RunOptions options = cfg.run_options();
    int status = 0;
    for (const auto& q : fixtures::demo_queries()) {
        if (which != "all" && which != q.name) continue;
        const OperatorGraph graph = aql::compile(q.aql);
        const auto software = dispatch::run_corpus(partition::software_plan(graph), docs, cfg.dispatch, options);
        const auto plans = partition::scenario_plans(graph, options.caps);
        dispatch::RunOptions accel_opts = options;
        accel_opts.profile = false;
        const auto offloaded = dispatch::run_corpus(plans[2], docs, cfg.dispatch, accel_opts);
        const bool identical = to_jsonl(offloaded.documents) == to_jsonl(software.documents);

        const auto rows = profile::speedup_report(software.profile, {&plans[0], &plans[1], &plans[2]}, cfg.cost,
                                                  cfg.doc_size);
        const auto dist = profile::relative_distribution(software.profile);
        if (csv) {
            std::string body = profile::report_csv(rows);
            std::istringstream lines(body);
            std::string line;
            std::getline(lines, line);
            if (q.name == "T1" || which != "all") std::cout << "query," << line << '\n';
            while (std::getline(lines, line)) std::cout << q.name << ',' << line << '\n';
        } else {
            char head[256];
            std::snprintf(head, sizeof head, "%s: %s (%zu docs x %zu B, extraction %.1f%%, relational %.1f%%)\n",
                          q.name.c_str(), q.title.c_str(), documents, doc_size,
                          100 * profile::extraction_fraction(dist), 100 * profile::relational_fraction(dist));
            std::cout << head << profile::report_table(rows)
                      << "scenario 3 output " << (identical ? "matches" : "DIFFERS FROM") << " software output\n\n";
        }
        if (!identical) {
            std::cerr << q.name << ": accelerated output differs from software output\n";
            status = 2;
        }
    }
    return status;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"spanforge: span extraction with simulated accelerator offload"};
    app.require_subcommand(1);
    const auto& keys = RunConfig::keys();
    const std::vector<std::string> dispatch_keys = {"threads", "byte_threshold", "max_docs", "flush_us", "lanes",
                                                    "clock", "peak_bw", "package_rate", "channel_capacity",
                                                    "sort_capacity", "lane_mode", "caps"};
    const std::vector<std::string> cost_keys = {"lanes", "clock", "peak_bw", "package_rate", "max_docs", "doc_size"};

    // compile
    std::string query_path, out_path = "-";
    auto* compile = app.add_subcommand("compile", "Compile an AQL rule program into an operator graph (JSON)");
    compile->add_option("query", query_path, "AQL source file")->required()->check(CLI::ExistingFile);
    compile->add_option("-o,--output", out_path, "graph file ('-' for stdout)");

    // partition
    std::string graph_path, caps_spec = "default";
    int scenario = 3;
    auto* part = app.add_subcommand("partition", "Split a graph into host and accelerator subgraphs");
    part->add_option("graph", graph_path, "graph JSON")->required()->check(CLI::ExistingFile);
    part->add_option("--caps", caps_spec, "default | extraction-only | capabilities JSON file");
    part->add_option("--scenario", scenario, "1, 2 or 3 (0 keeps everything on the host)")
        ->check(CLI::Range(0, 3));
    part->add_option("-o,--output", out_path, "plan file ('-' for stdout)");

    // run
    std::string plan_path, docs_path, profile_path, trace_path, scan_list, scan_out = "-";
    Settings run_settings;
    auto* run = app.add_subcommand("run", "Run a plan over a corpus");
    run->add_option("plan", plan_path, "plan JSON (a plain graph runs host-only)")->required();
    run->add_option("--docs", docs_path, "directory of .txt files or JSON Lines corpus")->required();
    run->add_option("-o,--output", out_path, "annotations as JSON Lines ('-' for stdout)");
    run->add_option("--profile", profile_path, "write the profile report (JSON)");
    run->add_option("--trace", trace_path, "write per-stage accelerator cycles (CSV)");
    run->add_option("--thread-scan", scan_list, "comma-separated worker counts for a throughput scan");
    run->add_option("--scan-out", scan_out, "throughput scan CSV ('-' for stdout)");
    add_setting_flags(run, run_settings, dispatch_keys);

    // profile
    Settings prof_settings;
    auto* prof = app.add_subcommand("profile", "Software-only run emitting a profile report");
    prof->add_option("graph", graph_path, "graph JSON")->required();
    prof->add_option("--docs", docs_path, "directory of .txt files or JSON Lines corpus")->required();
    prof->add_option("-o,--output", out_path, "annotations as JSON Lines");
    prof->add_option("--profile", profile_path, "profile report path ('-' for stdout)")->required();
    add_setting_flags(prof, prof_settings, {"threads"});

    // estimate
    std::vector<std::string> plan_paths;
    bool as_csv = false;
    Settings est_settings;
    auto* est = app.add_subcommand("estimate", "Project throughput for offload plans from a software profile");
    est->add_option("--profile", profile_path, "profile report JSON")->required()->check(CLI::ExistingFile);
    est->add_option("--plan", plan_paths, "plan JSON (repeatable)")->required()->check(CLI::ExistingFile);
    est->add_flag("--csv", as_csv, "emit CSV instead of a table");
    add_setting_flags(est, est_settings, cost_keys);

    // demo
    std::string demo_query = "all";
    std::size_t demo_docs = fixtures::kDemoDocuments;
    std::uint64_t demo_seed = fixtures::kDemoSeed;
    Settings demo_settings;
    auto* demo = app.add_subcommand("demo", "Compile, partition (scenario 3), run and report the bundled queries");
    demo->add_option("--query", demo_query, "T1..T5 or all")->check(CLI::IsMember({"all", "T1", "T2", "T3", "T4", "T5"}));
    demo->add_option("--documents", demo_docs, "synthetic documents")->check(CLI::PositiveNumber);
    demo->add_option("--seed", demo_seed, "corpus seed");
    demo->add_flag("--csv", as_csv, "emit CSV instead of tables");
    add_setting_flags(demo, demo_settings, keys);

    // corpus
    std::size_t gen_docs = fixtures::kDemoDocuments;
    std::vector<std::size_t> gen_sizes = {fixtures::kDemoDocSize};
    auto* gen = app.add_subcommand("corpus", "Write a synthetic JSON Lines corpus");
    gen->add_option("-n,--documents", gen_docs, "number of documents")->check(CLI::PositiveNumber);
    gen->add_option("--sizes", gen_sizes, "document sizes in bytes, cycled")->delimiter(',');
    gen->add_option("--seed", demo_seed, "seed");
    gen->add_option("-o,--output", out_path, "corpus path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*compile) {
            const OperatorGraph g = aql::compile(read_file(query_path), base_dir_of(query_path));
            write_file(out_path, serialize_aog(g));
        } else if (*part) {
            const OperatorGraph g = deserialize_aog(read_file(graph_path), base_dir_of(graph_path));
            const auto caps = partition::CapabilitySet::load(caps_spec);
            const auto plan = scenario == 0 ? partition::software_plan(g) : partition::scenario_plan(g, caps, scenario);
            write_file(out_path, partition::serialize_plan(plan));
        } else if (*run) {
            const RunConfig cfg = resolve(run_settings);
            const auto plan = partition::deserialize_plan(read_file(plan_path), base_dir_of(plan_path));
            partition::validate_plan(plan);
            const corpus::Corpus docs = corpus::load_corpus(docs_path);
            const auto options = cfg.run_options();
            const auto result = dispatch::run_corpus(plan, docs, cfg.dispatch, options);
            report_failures(result.documents);
            write_file(out_path, to_jsonl(result.documents));
            if (!profile_path.empty()) write_file(profile_path, result.profile.to_json().dump(2) + "\n");
            if (!trace_path.empty()) write_file(trace_path, traces_csv(plan, options, result.stats));
            if (!scan_list.empty()) {
                const auto rows = profile::throughput_scan(plan, docs, parse_thread_list(scan_list), cfg.dispatch, options);
                write_file(scan_out, profile::scan_csv(rows));
            }
        } else if (*prof) {
            const RunConfig cfg = resolve(prof_settings);
            const OperatorGraph g = deserialize_aog(read_file(graph_path), base_dir_of(graph_path));
            const corpus::Corpus docs = corpus::load_corpus(docs_path);
            const auto result = dispatch::run_corpus(partition::software_plan(g), docs, cfg.dispatch, cfg.run_options());
            report_failures(result.documents);
            if (out_path != "-") write_file(out_path, to_jsonl(result.documents));
            write_file(profile_path, result.profile.to_json().dump(2) + "\n");
        } else if (*est) {
            const RunConfig cfg = resolve(est_settings);
            nlohmann::json pj;
            try {
                pj = nlohmann::json::parse(read_file(profile_path));
            } catch (const nlohmann::json::parse_error& e) {
                throw FormatError(std::string("malformed profile: ") + e.what());
            }
            const auto report = profile::ProfileReport::from_json(pj);
            std::vector<partition::PartitionPlan> plans;
            for (const auto& p : plan_paths) plans.push_back(partition::deserialize_plan(read_file(p), base_dir_of(p)));
            std::vector<const partition::PartitionPlan*> refs;
            for (const auto& p : plans) refs.push_back(&p);
            const auto rows = profile::speedup_report(report, refs, cfg.cost, cfg.doc_size);
            std::cout << (as_csv ? profile::report_csv(rows) : profile::report_table(rows));
        } else if (*demo) {
            return run_demo(demo_query, demo_docs, resolve(demo_settings), demo_seed, as_csv);
        } else if (*gen) {
            corpus::write_jsonl(corpus::synthetic_corpus(gen_docs, gen_sizes, demo_seed), out_path);
        }
    } catch (const InvariantViolation& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
