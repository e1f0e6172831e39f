#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cbm/categories.hpp"
#include "cbm/records.hpp"

namespace cbm {

enum class ObserverGroup { adversarial, non_adversarial, human };
std::string_view to_string(ObserverGroup g);
ObserverGroup parse_observer_group(std::string_view s);

/// human kind -> human; a network tagged adversarial_training_eps > 0 ->
/// adversarial; any other network -> non_adversarial.
ObserverGroup group_of(const ObserverDescriptor& d);

enum class ChannelProperty { bandwidth, center_frequency, peak_noise_sensitivity };
inline constexpr std::array<ChannelProperty, 3> kChannelProperties = {
    ChannelProperty::bandwidth, ChannelProperty::center_frequency, ChannelProperty::peak_noise_sensitivity};
std::string_view to_string(ChannelProperty p);

enum class RegressionTarget { shape_bias, whitebox };
std::string_view to_string(RegressionTarget t);

struct ObserverSummary {
    std::string observer_id;
    double bandwidth = 0.0;
    double center_frequency = 0.0;
    double peak_noise_sensitivity = 0.0;
    std::optional<double> shape_bias;
    std::optional<double> whitebox_accuracy;
    ObserverGroup group = ObserverGroup::non_adversarial;

    double property(ChannelProperty p) const;
    std::optional<double> target(RegressionTarget t) const;
};

inline constexpr std::string_view kSummariesCsvHeader =
    "observer_id,bandwidth,center_frequency,peak_noise_sensitivity,shape_bias,whitebox_accuracy,group";

std::vector<ObserverSummary> read_summaries(const std::filesystem::path& path);
void write_summaries(const std::filesystem::path& path, const std::vector<ObserverSummary>& rows);

struct CueConflictRecord {
    std::string image_id;
    Category shape;
    Category texture;
    Category response;
};

inline constexpr std::string_view kCueConflictCsvHeader = "image_id,shape_category,texture_category,response_category";
std::vector<CueConflictRecord> read_cue_conflict(const std::filesystem::path& path);

enum class ShapeBiasMode { all_images, shape_or_texture_only };
std::string_view to_string(ShapeBiasMode m);
ShapeBiasMode parse_shape_bias_mode(std::string_view s);

double shape_bias(std::span<const CueConflictRecord> records, ShapeBiasMode mode = ShapeBiasMode::all_images);

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
    double p_value = 1.0;  // two-sided t test on the slope, n - 2 dof
    double r_squared = 0.0;
    std::size_t n = 0;

    nlohmann::json to_json() const;
};

/// Closed-form simple regression. Rejects n < 3 and constant x.
LineFit ols(std::span<const double> x, std::span<const double> y);

/// Two-sided p-value of a t statistic with `dof` degrees of freedom.
double two_sided_t_pvalue(double t, double dof);

/// R^2 of least squares with intercept on an n x k design. Rejects n < k + 2
/// and rank deficiency (message names the collinear column).
double multiple_r2(const Eigen::MatrixXd& predictors, std::span<const double> y);

/// Bonferroni gate: p < alpha / m, strictly.
bool bonferroni_significant(double p, double alpha, std::size_t m);

enum class RegressionGroup { all_networks, adversarial, non_adversarial };
inline constexpr std::array<RegressionGroup, 3> kRegressionGroups = {
    RegressionGroup::all_networks, RegressionGroup::adversarial, RegressionGroup::non_adversarial};
std::string_view to_string(RegressionGroup g);

struct GroupedLineFit {
    RegressionGroup group;
    ChannelProperty property;
    LineFit fit;
    bool significant = false;
};

struct GroupedR2 {
    RegressionGroup group;
    double r_squared = 0.0;
    std::size_t n = 0;
};

struct RegressionReport {
    RegressionTarget target = RegressionTarget::shape_bias;
    double alpha = 0.05;
    std::size_t m = 18;
    std::vector<GroupedLineFit> fits;
    std::vector<GroupedR2> multiple_r2;
    std::vector<std::string> skipped;   // groups/fits not computed, with reason
    std::vector<std::string> warnings;  // observers missing the target

    nlohmann::json to_json() const;
};

/// 3 properties x 3 network groups line fits plus a 3-predictor R^2 per
/// group. Groups with fewer than 3 observers carrying the target are skipped.
RegressionReport correlate(const std::vector<ObserverSummary>& summaries, RegressionTarget target,
                           double alpha = 0.05, std::size_t m = 18);

}  // namespace cbm
