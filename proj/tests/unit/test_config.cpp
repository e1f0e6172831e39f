#include <gtest/gtest.h>

#include <fstream>

#include "cbm/config.hpp"
#include "cbm/error.hpp"
#include "fixtures.hpp"

using namespace cbm;
using nlohmann::json;

TEST(Config, DefaultsAreValidAndRoundTrip) {
    const ToolkitConfig d;
    EXPECT_NO_THROW(d.validate());
    EXPECT_EQ(d.analysis.criterion, 0.5);
    EXPECT_EQ(d.analysis.bonferroni_m, 18u);
    EXPECT_EQ(d.stimuli.preprocess.crop, 224u);
    EXPECT_EQ(ToolkitConfig::from_json(d.to_json()).to_json(), d.to_json());
    EXPECT_EQ(ToolkitConfig::from_json(json::object()).to_json(), d.to_json());
}

TEST(Config, PartialOverridesKeepOtherDefaults) {
    const ToolkitConfig c = ToolkitConfig::from_json(json::parse(R"({
        "master_seed": 42,
        "plan": {"training_trials": 10},
        "analysis": {"alpha": 0.01, "aggregation": "average_of_fits", "shape_bias_mode": "shape_or_texture_only"},
        "stimuli": {"noise": {"band_convention": "lower_edge_octave", "sd_ladder": [0.03, 0.06, 0.12, 0.24]}}
    })"));
    EXPECT_EQ(c.master_seed, 42u);
    EXPECT_EQ(c.plan.training_trials, 10u);
    EXPECT_EQ(c.plan.test_blocks, BlockPlan{}.test_blocks);
    EXPECT_EQ(c.analysis.alpha, 0.01);
    EXPECT_EQ(c.analysis.criterion, 0.5);
    EXPECT_EQ(c.analysis.aggregation, AggregationMode::average_of_fits);
    EXPECT_EQ(c.analysis.shape_bias_mode, ShapeBiasMode::shape_or_texture_only);
    EXPECT_EQ(c.stimuli.convention, BandConvention::lower_edge_octave);
    EXPECT_EQ(c.stimuli.sd_ladder[3], 0.24);
    EXPECT_EQ(ToolkitConfig::from_json(c.to_json()).to_json(), c.to_json());
}

TEST(Config, UnknownKeysAreRejectedAtEveryLevel) {
    for (const char* bad : {R"({"seed": 1})", R"({"analysis": {"criterio": 0.5}})", R"({"plan": {"training_trails": 3}})",
                            R"({"stimuli": {"prep": {}}})", R"({"stimuli": {"preprocess": {"cropp": 200}}})",
                            R"({"stimuli": {"noise": {"sd": 0.1}}})"}) {
        try {
            ToolkitConfig::from_json(json::parse(bad));
            ADD_FAILURE() << bad;
        } catch (const ValidationError& e) {
            EXPECT_NE(std::string(e.what()).find("unknown key"), std::string::npos) << e.what();
        }
    }
}

TEST(Config, OutOfRangeAndMistypedValues) {
    for (const char* bad : {R"({"analysis": {"criterion": 1.0}})", R"({"analysis": {"alpha": 0}})",
                            R"({"analysis": {"bonferroni_m": 0}})", R"({"analysis": {"exclusion_threshold": 1.5}})",
                            R"({"analysis": {"aggregation": "median"}})", R"({"network_timeout_s": -1})",
                            R"({"plan": {"test_blocks": 0}})", R"({"master_seed": "seven"})",
                            R"({"stimuli": {"preprocess": {"resampling": "bicubic"}}})",
                            R"({"stimuli": {"noise": {"size": 256}}})", R"({"stimuli": {"noise": {"sd_ladder": [0.1]}}})",
                            R"([1, 2])"})
        EXPECT_THROW(ToolkitConfig::from_json(json::parse(bad)), ValidationError) << bad;
}

TEST(Config, LoadFromFile) {
    cbm::testing::TempDir dir;
    std::ofstream(dir.path() / "ok.json") << R"({"master_seed": 9})";
    EXPECT_EQ(ToolkitConfig::load(dir.path() / "ok.json").master_seed, 9u);
    std::ofstream(dir.path() / "broken.json") << "{";
    EXPECT_THROW(ToolkitConfig::load(dir.path() / "broken.json"), ValidationError);
    EXPECT_THROW(ToolkitConfig::load(dir.path() / "absent.json"), IoError);
}
