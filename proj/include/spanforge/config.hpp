#pragma once

#include "spanforge/accel.hpp"
#include "spanforge/dispatch.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace spanforge {

/// Settings shared by the run/profile/estimate/demo commands. Layers apply in
/// the order defaults, config file, SPANFORGE_* environment, flags.
struct RunConfig {
    dispatch::DispatchConfig dispatch;
    accel::CostModel cost;
    accel::PipelineOptions pipeline;
    accel::LaneMode lane_mode = accel::LaneMode::Simulated;
    std::string caps = "default";
    double doc_size = 2048;

    /// Recognized keys, e.g. "threads", "byte_threshold", "peak_bw".
    static const std::vector<std::string>& keys();

    /// Throws Error naming `origin` for unknown keys or out-of-range values.
    void set(std::string_view key, std::string_view value, std::string_view origin = "flag");
    /// `key = value` lines; '#' comments; `[section]` headers are allowed and ignored.
    void load_file(const std::filesystem::path& path);
    /// SPANFORGE_<KEY> for every recognized key.
    void load_env();

    dispatch::RunOptions run_options() const;
};

} // namespace spanforge
