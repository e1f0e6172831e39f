#include "cbm/config.hpp"

#include <set>

#include "cbm/error.hpp"
#include "cbm/provenance.hpp"

namespace cbm {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
    if (!j.is_object()) throw ValidationError(where + " must be a JSON object");
    const std::set<std::string> allowed(known.begin(), known.end());
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key)) throw ValidationError(where + ": unknown key '" + key + "'");
}

json analysis_to_json(const AnalysisConfig& a) {
    return {{"criterion", a.criterion},
            {"exclusion_threshold", a.exclusion_threshold},
            {"include_training", a.include_training},
            {"censor_clamped", a.censor_clamped},
            {"normalized", a.normalized},
            {"aggregation", std::string(to_string(a.aggregation))},
            {"shape_bias_mode", std::string(to_string(a.shape_bias_mode))},
            {"alpha", a.alpha},
            {"bonferroni_m", a.bonferroni_m}};
}

AnalysisConfig analysis_from_json(const json& j) {
    reject_unknown(j,
                   {"criterion", "exclusion_threshold", "include_training", "censor_clamped", "normalized",
                    "aggregation", "shape_bias_mode", "alpha", "bonferroni_m"},
                   "analysis");
    AnalysisConfig a;
    a.criterion = j.value("criterion", a.criterion);
    a.exclusion_threshold = j.value("exclusion_threshold", a.exclusion_threshold);
    a.include_training = j.value("include_training", a.include_training);
    a.censor_clamped = j.value("censor_clamped", a.censor_clamped);
    a.normalized = j.value("normalized", a.normalized);
    if (j.contains("aggregation")) a.aggregation = parse_aggregation_mode(j.at("aggregation").get<std::string>());
    if (j.contains("shape_bias_mode"))
        a.shape_bias_mode = parse_shape_bias_mode(j.at("shape_bias_mode").get<std::string>());
    a.alpha = j.value("alpha", a.alpha);
    a.bonferroni_m = j.value("bonferroni_m", a.bonferroni_m);
    return a;
}

}  // namespace

void ToolkitConfig::validate() const {
    stimuli.preprocess.validate();
    const auto& a = analysis;
    if (!(a.criterion > 0.0 && a.criterion < 1.0)) throw ValidationError("analysis.criterion must lie in (0,1)");
    if (!(a.exclusion_threshold >= 0.0 && a.exclusion_threshold <= 1.0))
        throw ValidationError("analysis.exclusion_threshold must lie in [0,1]");
    if (!(a.alpha > 0.0 && a.alpha < 1.0)) throw ValidationError("analysis.alpha must lie in (0,1)");
    if (a.bonferroni_m == 0) throw ValidationError("analysis.bonferroni_m must be positive");
    if (!(network_timeout_s > 0.0)) throw ValidationError("network_timeout_s must be positive");
    if (plan.test_blocks == 0 || plan.trials_per_test_block == 0)
        throw ValidationError("plan needs at least one non-empty test block");
}

json ToolkitConfig::to_json() const {
    return {{"stimuli", stimuli.to_json()},
            {"plan", plan.to_json()},
            {"analysis", analysis_to_json(analysis)},
            {"master_seed", master_seed},
            {"network_timeout_s", network_timeout_s},
            {"instructions", instructions},
            {"mapping_path", mapping_path.string()}};
}

ToolkitConfig ToolkitConfig::from_json(const json& j) {
    reject_unknown(j, {"stimuli", "plan", "analysis", "master_seed", "network_timeout_s", "instructions", "mapping_path"},
                   "config");
    // Nested sections are strict too; a misspelled key must not silently keep its default.
    if (j.contains("plan"))
        reject_unknown(j.at("plan"), {"training_trials", "test_blocks", "trials_per_test_block", "feedback_in_training"},
                       "plan");
    if (j.contains("stimuli")) {
        const json& s = j.at("stimuli");
        reject_unknown(s, {"preprocess", "noise"}, "stimuli");
        if (s.contains("preprocess"))
            reject_unknown(s.at("preprocess"),
                           {"resize_short_side", "crop", "contrast_factor", "contrast_pivot", "grayscale_weights",
                            "resampling"},
                           "stimuli.preprocess");
        // size, filter and sd_definition are descriptive; they are written by to_json and accepted back.
        if (s.contains("noise")) {
            const json& n = s.at("noise");
            reject_unknown(n, {"band_convention", "sd_ladder", "size", "filter", "sd_definition"}, "stimuli.noise");
            const json fixed = StimulusSettings{}.to_json().at("noise");
            for (const char* key : {"size", "filter", "sd_definition"})
                if (n.contains(key) && n.at(key) != fixed.at(key))
                    throw ValidationError(std::string("stimuli.noise.") + key + " is fixed at " + fixed.at(key).dump());
        }
    }
    ToolkitConfig c;
    try {
        if (j.contains("stimuli")) c.stimuli = StimulusSettings::from_json(j.at("stimuli"));
        if (j.contains("plan")) c.plan = BlockPlan::from_json(j.at("plan"));
        if (j.contains("analysis")) c.analysis = analysis_from_json(j.at("analysis"));
        c.master_seed = j.value("master_seed", c.master_seed);
        c.network_timeout_s = j.value("network_timeout_s", c.network_timeout_s);
        c.instructions = j.value("instructions", c.instructions);
        if (j.contains("mapping_path")) c.mapping_path = j.at("mapping_path").get<std::string>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

ToolkitConfig ToolkitConfig::load(const std::filesystem::path& path) {
    const std::string text = read_text(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    return from_json(j);
}

}  // namespace cbm
