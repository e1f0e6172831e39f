#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "cbm/channel.hpp"
#include "cbm/session.hpp"
#include "cbm/stats.hpp"
#include "cbm/stimuli.hpp"

namespace cbm {

struct AnalysisConfig {
    double criterion = 0.5;
    double exclusion_threshold = 0.5;
    bool include_training = false;
    bool censor_clamped = true;
    bool normalized = false;
    AggregationMode aggregation = AggregationMode::fit_to_average;
    ShapeBiasMode shape_bias_mode = ShapeBiasMode::all_images;
    double alpha = 0.05;
    std::size_t bonferroni_m = 18;
};

/// Toolkit-wide settings. Loaded from JSON (missing keys keep defaults,
/// unknown keys are rejected) and validated before any subcommand runs.
struct ToolkitConfig {
    StimulusSettings stimuli;
    BlockPlan plan;
    AnalysisConfig analysis;
    std::uint64_t master_seed = 0;
    double network_timeout_s = 60.0;
    std::string instructions = "Click the cross to see an image, then pick the category that best describes it.";
    std::filesystem::path mapping_path;

    void validate() const;
    nlohmann::json to_json() const;
    static ToolkitConfig from_json(const nlohmann::json& j);
    static ToolkitConfig load(const std::filesystem::path& path);
};

}  // namespace cbm
