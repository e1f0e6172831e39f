#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "cbm/channel.hpp"
#include "cbm/stats.hpp"

namespace cbm::svg {

// Small hand-written SVG documents. Output is deterministic so it can be
// diffed in tests; `provenance` is embedded in <metadata>.

std::string heatmap(const AccuracyHeatmap& map, const std::string& title, const nlohmann::json& provenance);

std::string channel_curve(const ThresholdProfile& profile, const ChannelFit& fit, const std::string& title,
                          const nlohmann::json& provenance);

/// One panel: property on x, target on y, one colour per group and a dashed
/// line for each significant fit.
std::string scatter(const std::vector<ObserverSummary>& rows, ChannelProperty property, RegressionTarget target,
                    const RegressionReport& report, const nlohmann::json& provenance);

}  // namespace cbm::svg
