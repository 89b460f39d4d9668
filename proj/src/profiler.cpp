#include "spanforge/profiler.hpp"

#include "spanforge/dispatch.hpp"
#include "spanforge/error.hpp"

#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace spanforge::profile {

ProfileReport ProfileReport::from_clock(const CompiledGraph& graph, const NodeClock& clock) {
    ProfileReport r;
    for (std::size_t i = 0; i < graph.node_count(); ++i) {
        const OperatorNode& node = graph.graph().node(graph.order()[i]);
        const double s = i < clock.seconds.size() ? clock.seconds[i] : 0.0;
        r.per_node[node.id] = s;
        r.per_kind[std::string(to_string(node.kind))] += s;
    }
    return r;
}

double ProfileReport::profiled_seconds() const noexcept {
    double t = 0;
    for (const auto& [id, s] : per_node) t += s;
    return t;
}

nlohmann::ordered_json ProfileReport::to_json() const {
    nlohmann::ordered_json j;
    j["total_s"] = total_s;
    j["bytes"] = bytes;
    j["threads"] = threads;
    nlohmann::ordered_json nodes = nlohmann::ordered_json::object();
    for (const auto& [id, s] : per_node) nodes[std::to_string(id)] = s;
    j["per_node"] = std::move(nodes);
    nlohmann::ordered_json kinds = nlohmann::ordered_json::object();
    for (const auto& [k, s] : per_kind) kinds[k] = s;
    j["per_kind"] = std::move(kinds);
    return j;
}

ProfileReport ProfileReport::from_json(const nlohmann::json& j) {
    ProfileReport r;
    try {
        r.total_s = j.at("total_s").get<double>();
        r.bytes = j.at("bytes").get<std::uint64_t>();
        r.threads = j.at("threads").get<std::size_t>();
        for (const auto& [id, s] : j.at("per_node").items()) r.per_node[std::stoi(id)] = s.get<double>();
        for (const auto& [k, s] : j.at("per_kind").items()) {
            if (!parse_operator_kind(k)) throw FormatError("unknown operator kind '" + k + "' in profile");
            r.per_kind[k] = s.get<double>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed profile: ") + e.what());
    } catch (const std::logic_error&) {
        throw FormatError("malformed profile: bad node id");
    }
    return r;
}

std::map<std::string, double> relative_distribution(const ProfileReport& report) {
    double total = 0;
    for (const auto& [k, s] : report.per_kind) total += s;
    if (!(total > 0)) throw Error("empty profile: no operator time recorded");
    std::map<std::string, double> out;
    for (const auto& [k, s] : report.per_kind) out[k] = s / total;
    return out;
}

namespace {

double fraction_where(const std::map<std::string, double>& d, bool (*pred)(OperatorKind)) {
    double f = 0;
    for (const auto& [k, v] : d) {
        auto kind = parse_operator_kind(k);
        if (kind && pred(*kind)) f += v;
    }
    return f;
}

} // namespace

double extraction_fraction(const std::map<std::string, double>& distribution) {
    return fraction_where(distribution, &is_extraction);
}

double relational_fraction(const std::map<std::string, double>& distribution) {
    return fraction_where(distribution, &is_relational);
}

void EstimateInput::validate() const {
    if (!(tp_sw > 0) || !(tp_hw > 0)) throw Error("throughputs must be positive");
    if (!(rt_sw >= 0 && rt_sw <= 1)) throw Error("rt_SW must lie in [0, 1]");
}

double estimate_throughput(const EstimateInput& in) {
    in.validate();
    return 1.0 / (1.0 / in.tp_hw + in.rt_sw / in.tp_sw);
}

ScenarioEstimate estimate_scenario(const ProfileReport& profile, const partition::PartitionPlan& plan,
                                   const accel::CostModel& cost, double doc_size) {
    const double total = profile.profiled_seconds();
    if (!(total > 0)) throw Error("empty profile: no operator time recorded");
    double offloaded = 0;
    for (NodeId id : plan.offloaded_nodes()) {
        auto it = profile.per_node.find(id);
        if (it == profile.per_node.end()) {
            throw Error("plan offloads node " + std::to_string(id) + " which the profile does not contain");
        }
        offloaded += it->second;
    }
    ScenarioEstimate e;
    e.scenario = plan.scenario;
    e.rt_sw = std::clamp(1.0 - offloaded / total, 0.0, 1.0);
    e.tp_sw = profile.throughput();
    if (!(e.tp_sw > 0)) throw Error("profile has no measured throughput");
    e.tp_hw = accel::model_throughput(cost, doc_size);
    e.tp_est = estimate_throughput({e.tp_sw, e.tp_hw, e.rt_sw});
    e.speedup = e.tp_est / e.tp_sw;
    e.accounting = plan.scenario == 3 ? "optimistic" : "pessimistic";
    e.no_benefit = e.speedup <= 1.0;
    return e;
}

std::vector<ScenarioEstimate> speedup_report(const ProfileReport& profile,
                                             const std::vector<const partition::PartitionPlan*>& plans,
                                             const accel::CostModel& cost, double doc_size) {
    std::vector<ScenarioEstimate> rows;
    for (const auto* plan : plans) rows.push_back(estimate_scenario(profile, *plan, cost, doc_size));
    return rows;
}

namespace {

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

} // namespace

std::string report_csv(const std::vector<ScenarioEstimate>& rows) {
    std::ostringstream out;
    out << "scenario,rt_sw,tp_sw,tp_hw,tp_est,speedup,accounting\n";
    for (const auto& r : rows) {
        out << r.scenario << ',' << num(r.rt_sw) << ',' << num(r.tp_sw) << ',' << num(r.tp_hw) << ','
            << num(r.tp_est) << ',' << num(r.speedup) << ',' << r.accounting << (r.no_benefit ? " (no benefit)" : "")
            << '\n';
    }
    return out.str();
}

std::string report_table(const std::vector<ScenarioEstimate>& rows) {
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof line, "%-9s %8s %12s %12s %12s %9s  %s\n", "scenario", "rt_sw", "tp_sw MB/s",
                  "tp_hw MB/s", "tp_est MB/s", "speedup", "accounting");
    out << line;
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%-9d %8.4f %12.2f %12.2f %12.2f %8.2fx  %s%s\n", r.scenario, r.rt_sw,
                      r.tp_sw / 1e6, r.tp_hw / 1e6, r.tp_est / 1e6, r.speedup, r.accounting.c_str(),
                      r.no_benefit ? " (no benefit)" : "");
        out << line;
    }
    return out.str();
}

std::string distribution_csv(const ProfileReport& report) {
    const auto dist = relative_distribution(report);
    std::ostringstream out;
    out << "kind,seconds,fraction\n";
    for (const auto& [k, s] : report.per_kind) out << k << ',' << num(s) << ',' << num(dist.at(k)) << '\n';
    return out.str();
}

std::vector<ScanRow> throughput_scan(const partition::PartitionPlan& plan, const corpus::Corpus& corpus,
                                     const std::vector<std::size_t>& thread_counts,
                                     const dispatch::DispatchConfig& config, const dispatch::RunOptions& options) {
    std::vector<ScanRow> rows;
    for (std::size_t t : thread_counts) {
        dispatch::DispatchConfig cfg = config;
        cfg.worker_threads = t;
        dispatch::RunOptions opts = options;
        opts.profile = false;
        const auto run = dispatch::run_corpus(plan, corpus, cfg, opts);
        ScanRow row;
        row.threads = t;
        row.bytes = run.profile.bytes;
        row.seconds = run.profile.total_s;
        row.throughput = row.bytes == 0 ? 0.0 : run.profile.throughput();
        rows.push_back(row);
    }
    return rows;
}

std::string scan_csv(const std::vector<ScanRow>& rows) {
    std::ostringstream out;
    out << "threads,bytes,seconds,bytes_per_s\n";
    for (const auto& r : rows) out << r.threads << ',' << r.bytes << ',' << num(r.seconds) << ',' << num(r.throughput) << '\n';
    return out.str();
}

} // namespace spanforge::profile
