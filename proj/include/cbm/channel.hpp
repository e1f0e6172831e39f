#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cbm/noise.hpp"
#include "cbm/records.hpp"

namespace cbm {

/// Threshold index of a nonzero SD: log2(0.32 / sd), so 0.16 -> 1 ... 0.02 -> 4.
double threshold_index_of_sd(double sd);
double sd_of_threshold_index(double index);

/// Percent-correct per noise condition. The noise-free condition has one
/// shared cell (the baseline); the rest is a 4 x 7 grid indexed by
/// (sd_level - 1, band).
struct AccuracyHeatmap {
    std::size_t baseline_correct = 0;
    std::size_t baseline_count = 0;
    std::array<std::array<std::size_t, kNumBands>, kNumSdLevels - 1> correct{};
    std::array<std::array<std::size_t, kNumBands>, kNumSdLevels - 1> count{};
    std::array<double, kNumSdLevels - 1> sd_ladder = kDefaultSdLadder;

    void add(const NoiseCondition& c, bool is_correct);

    /// NaN for cells without trials. Level 0 returns the baseline for every band.
    double accuracy(std::size_t sd_level, std::size_t band) const;
    std::size_t trials(std::size_t sd_level, std::size_t band) const;
    double baseline_accuracy() const;
    std::size_t total_trials() const;

    /// Count-wise sum: the result's proportions are trial-weighted averages.
    AccuracyHeatmap& operator+=(const AccuracyHeatmap& other);

    nlohmann::json to_json() const;
    std::string to_csv() const;
};

struct HeatmapOptions {
    bool include_training = false;
};

AccuracyHeatmap heatmap(std::span<const ResponseRecord> records, const HeatmapOptions& options = {},
                        const std::array<double, kNumSdLevels - 1>& ladder = kDefaultSdLadder);

enum class ThresholdFlag { interpolated, clamped_at_0, clamped_at_4, undefined };
std::string_view to_string(ThresholdFlag f);

struct ThresholdProfile {
    std::array<double, kNumBands> threshold_index{};
    std::array<ThresholdFlag, kNumBands> flags{};

    std::size_t defined_bands() const;
    std::size_t interpolated_bands() const;

    nlohmann::json to_json() const;
    std::string to_csv() const;

    /// A profile whose every band is flagged interpolated.
    static ThresholdProfile from_values(const std::array<double, kNumBands>& values);
};

/// 50%-accuracy crossing per band, linear in threshold-index space between
/// adjacent measured SD levels, walking from the least to the most noise.
ThresholdProfile thresholds(const AccuracyHeatmap& map, double criterion = 0.5);

/// Same, after dividing every cell by the baseline accuracy.
ThresholdProfile normalized_thresholds(const AccuracyHeatmap& map, double criterion = 0.5);

/// f(x) = A exp(-(x - mu)^2 / (2 sigma^2)), x = band index.
double gaussian_channel(double x, double amplitude, double mu, double sigma);

struct FitOptions {
    /// Clamped bands only say the threshold lies at or below index 1
    /// (clamped_at_0) or at or above index 4 (clamped_at_4). When set they
    /// contribute a residual only if the curve leaves that interval; when
    /// cleared they are fitted as the literal values 0 and 4.
    bool censor_clamped = true;
    std::size_t max_iterations = 5000;
    std::array<double, 3> sigma_starts = {0.5, 1.0, 2.0};
};

struct ChannelFit {
    double amplitude = 0.0;  // A, peak threshold index
    double mu = 0.0;         // band-index units
    double sigma = 0.0;      // band-index units
    double se_amplitude = 0.0;
    double se_mu = 0.0;
    double se_sigma = 0.0;
    double rss = 0.0;
    std::size_t bands_used = 0;
    std::size_t iterations = 0;
    bool converged = false;
    bool censored = false;
    /// True when the data cannot pin down an inverted U: fewer than three
    /// interpolated bands, a parameter on its bound, or a singular Jacobian.
    bool degenerate = false;
    std::string diagnostics;

    nlohmann::json to_json() const;
};

class FitError : public std::runtime_error {
public:
    FitError(const std::string& what, ChannelFit best) : std::runtime_error(what), best_(std::move(best)) {}
    const ChannelFit& best_so_far() const noexcept { return best_; }

private:
    ChannelFit best_;
};

/// Bounded Levenberg-Marquardt from several starts; keeps the lowest RSS.
/// Needs at least four defined bands (ValidationError otherwise).
ChannelFit fit_channel(const ThresholdProfile& profile, const FitOptions& options = {});

struct ChannelProperties {
    double bandwidth = 0.0;               // octaves, 2 sigma sqrt(ln 4)
    double center_frequency = 0.0;        // cycles/image, 1.75 * 2^mu
    double peak_noise_sensitivity = 0.0;  // 2^(A - 4)

    nlohmann::json to_json() const;
};

ChannelProperties channel_properties(const ChannelFit& fit);
ChannelProperties channel_properties(double amplitude, double mu, double sigma);

enum class AggregationMode { fit_to_average, average_of_fits };
std::string_view to_string(AggregationMode m);
AggregationMode parse_aggregation_mode(std::string_view s);

struct PropertySummary {
    double mean = 0.0;
    double sd = 0.0;  // sample SD (n - 1); 0 for a single value
};

struct AggregateResult {
    AggregationMode mode = AggregationMode::fit_to_average;
    std::vector<std::string> observers;
    std::optional<ChannelFit> pooled_fit;               // fit_to_average
    std::vector<ChannelFit> per_observer_fits;          // average_of_fits
    PropertySummary bandwidth, center_frequency, peak_noise_sensitivity;

    nlohmann::json to_json() const;
};

/// Pools several observers' test-block records into one channel estimate.
AggregateResult aggregate_humans(const std::vector<std::vector<ResponseRecord>>& per_observer, AggregationMode mode,
                                 const FitOptions& options = {});

}  // namespace cbm
