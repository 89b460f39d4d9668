#include "spanforge/config.hpp"

#include "spanforge/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>

namespace spanforge {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::uint64_t parse_count(std::string_view key, std::string_view value, std::string_view origin, std::uint64_t min) {
    std::uint64_t v = 0;
    const auto* end = value.data() + value.size();
    auto [p, ec] = std::from_chars(value.data(), end, v);
    if (ec != std::errc{} || p != end) {
        throw Error(std::string(origin) + ": " + std::string(key) + " expects an integer, got '" + std::string(value) + "'");
    }
    if (v < min) {
        throw Error(std::string(origin) + ": " + std::string(key) + " must be at least " + std::to_string(min));
    }
    return v;
}

double parse_positive(std::string_view key, std::string_view value, std::string_view origin) {
    const std::string s(value);
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) {
        throw Error(std::string(origin) + ": " + std::string(key) + " expects a number, got '" + s + "'");
    }
    if (!(v > 0) || v > 1e300) throw Error(std::string(origin) + ": " + std::string(key) + " must be positive");
    return v;
}

} // namespace

const std::vector<std::string>& RunConfig::keys() {
    static const std::vector<std::string> k = {
        "threads",  "byte_threshold", "max_docs",         "flush_us",      "lanes",      "clock",
        "peak_bw",  "package_rate",   "channel_capacity", "sort_capacity", "lane_mode",  "caps",
        "doc_size",
    };
    return k;
}

void RunConfig::set(std::string_view key, std::string_view raw, std::string_view origin) {
    std::string value = trim(raw);
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front()) {
        value = value.substr(1, value.size() - 2);
    }
    if (key == "threads") {
        dispatch.worker_threads = parse_count(key, value, origin, 1);
    } else if (key == "byte_threshold") {
        dispatch.byte_threshold = parse_count(key, value, origin, 1);
    } else if (key == "max_docs") {
        dispatch.max_docs_per_package = parse_count(key, value, origin, 1);
        cost.docs_per_package = dispatch.max_docs_per_package;
    } else if (key == "flush_us") {
        dispatch.flush_timeout = std::chrono::microseconds(parse_count(key, value, origin, 1));
    } else if (key == "lanes") {
        cost.lanes = parse_count(key, value, origin, 1);
    } else if (key == "clock") {
        cost.clock_hz = parse_positive(key, value, origin);
    } else if (key == "peak_bw") {
        cost.peak_bandwidth = parse_positive(key, value, origin);
    } else if (key == "package_rate") {
        cost.package_rate = parse_positive(key, value, origin);
    } else if (key == "channel_capacity") {
        pipeline.channel_capacity = parse_count(key, value, origin, 1);
    } else if (key == "sort_capacity") {
        pipeline.sort_capacity = parse_count(key, value, origin, 1);
    } else if (key == "lane_mode") {
        if (value == "simulated") {
            lane_mode = accel::LaneMode::Simulated;
        } else if (value == "threaded") {
            lane_mode = accel::LaneMode::Threaded;
        } else {
            throw Error(std::string(origin) + ": lane_mode must be 'simulated' or 'threaded'");
        }
    } else if (key == "caps") {
        if (value.empty()) throw Error(std::string(origin) + ": caps must not be empty");
        caps = value;
    } else if (key == "doc_size") {
        doc_size = parse_positive(key, value, origin);
    } else {
        throw Error(std::string(origin) + ": unknown setting '" + std::string(key) + "'");
    }
}

void RunConfig::load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read config file '" + path.string() + "'");
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string t = trim(line);
        if (t.empty() || (t.front() == '[' && t.back() == ']')) continue;
        const auto eq = t.find('=');
        const std::string origin = path.filename().string() + ":" + std::to_string(n);
        if (eq == std::string::npos) throw Error(origin + ": expected 'key = value'");
        set(trim(std::string_view(t).substr(0, eq)), std::string_view(t).substr(eq + 1), origin);
    }
}

void RunConfig::load_env() {
    for (const auto& key : keys()) {
        std::string name = "SPANFORGE_" + key;
        std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::toupper(c); });
        if (const char* v = std::getenv(name.c_str())) set(key, v, name);
    }
}

dispatch::RunOptions RunConfig::run_options() const {
    dispatch::RunOptions o;
    o.caps = partition::CapabilitySet::load(caps);
    o.pipeline = pipeline;
    o.cost = cost;
    o.lane_mode = lane_mode;
    return o;
}

} // namespace spanforge
