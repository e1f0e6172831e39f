#include "cbm/channel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

#include "cbm/error.hpp"

namespace cbm {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

double threshold_index_of_sd(double sd) {
    if (!(sd > 0.0)) throw ValidationError("threshold index needs a positive SD");
    return std::log2(0.32 / sd);
}

double sd_of_threshold_index(double index) { return 0.32 * std::exp2(-index); }

// ---------------------------------------------------------------------------
// heatmap

void AccuracyHeatmap::add(const NoiseCondition& c, bool is_correct) {
    c.validate();
    if (c.is_noise_free()) {
        ++baseline_count;
        baseline_correct += is_correct ? 1 : 0;
        return;
    }
    ++count[c.sd_level - 1][*c.band_index];
    correct[c.sd_level - 1][*c.band_index] += is_correct ? 1 : 0;
}

double AccuracyHeatmap::accuracy(std::size_t sd_level, std::size_t band) const {
    if (sd_level == 0) return baseline_accuracy();
    const std::size_t n = count.at(sd_level - 1).at(band);
    return n ? static_cast<double>(correct[sd_level - 1][band]) / static_cast<double>(n) : kNaN;
}

std::size_t AccuracyHeatmap::trials(std::size_t sd_level, std::size_t band) const {
    return sd_level == 0 ? baseline_count : count.at(sd_level - 1).at(band);
}

double AccuracyHeatmap::baseline_accuracy() const {
    return baseline_count ? static_cast<double>(baseline_correct) / static_cast<double>(baseline_count) : kNaN;
}

std::size_t AccuracyHeatmap::total_trials() const {
    std::size_t t = baseline_count;
    for (const auto& row : count)
        for (std::size_t n : row) t += n;
    return t;
}

AccuracyHeatmap& AccuracyHeatmap::operator+=(const AccuracyHeatmap& other) {
    baseline_correct += other.baseline_correct;
    baseline_count += other.baseline_count;
    for (std::size_t l = 0; l < count.size(); ++l)
        for (std::size_t b = 0; b < kNumBands; ++b) {
            correct[l][b] += other.correct[l][b];
            count[l][b] += other.count[l][b];
        }
    return *this;
}

json AccuracyHeatmap::to_json() const {
    json grid = json::array();
    for (std::size_t l = 0; l < kNumSdLevels; ++l) {
        json row = json::array();
        for (std::size_t b = 0; b < kNumBands; ++b) row.push_back(number_or_null(accuracy(l, b)));
        grid.push_back(row);
    }
    json counts = json::array();
    counts.push_back(std::vector<std::size_t>(kNumBands, baseline_count));
    for (const auto& row : count) counts.push_back(row);
    json sds = json::array({0.0});
    for (double s : sd_ladder) sds.push_back(s);
    std::vector<double> centers;
    for (std::size_t b = 0; b < kNumBands; ++b) centers.push_back(band_center(b));
    return {{"sd_levels", sds},
            {"band_centers", centers},
            {"accuracy", grid},
            {"counts", counts},
            {"baseline", {{"correct", baseline_correct}, {"count", baseline_count},
                          {"accuracy", number_or_null(baseline_accuracy())}}},
            {"total_trials", total_trials()}};
}

std::string AccuracyHeatmap::to_csv() const {
    std::ostringstream os;
    os << "sd_level,sd,band_index,band_center,correct,count,accuracy\n";
    auto acc = [](double a) { return std::isfinite(a) ? std::to_string(a) : std::string(); };
    os << "0,0,-1,," << baseline_correct << ',' << baseline_count << ',' << acc(baseline_accuracy()) << '\n';
    for (std::size_t l = 1; l < kNumSdLevels; ++l)
        for (std::size_t b = 0; b < kNumBands; ++b)
            os << l << ',' << sd_ladder[l - 1] << ',' << b << ',' << band_center(b) << ',' << correct[l - 1][b] << ','
               << count[l - 1][b] << ',' << acc(accuracy(l, b)) << '\n';
    return os.str();
}

AccuracyHeatmap heatmap(std::span<const ResponseRecord> records, const HeatmapOptions& options,
                        const std::array<double, kNumSdLevels - 1>& ladder) {
    AccuracyHeatmap map;
    map.sd_ladder = ladder;
    for (const auto& r : records) {
        if (r.block == Block::training && !options.include_training) continue;
        map.add(r.condition, r.correct);
    }
    return map;
}

// ---------------------------------------------------------------------------
// thresholds

std::string_view to_string(ThresholdFlag f) {
    switch (f) {
        case ThresholdFlag::interpolated: return "interpolated";
        case ThresholdFlag::clamped_at_0: return "clamped_at_0";
        case ThresholdFlag::clamped_at_4: return "clamped_at_4";
        case ThresholdFlag::undefined: return "undefined";
    }
    return "undefined";
}

std::size_t ThresholdProfile::defined_bands() const {
    return static_cast<std::size_t>(std::count_if(flags.begin(), flags.end(), [](auto f) { return f != ThresholdFlag::undefined; }));
}

std::size_t ThresholdProfile::interpolated_bands() const {
    return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), ThresholdFlag::interpolated));
}

json ThresholdProfile::to_json() const {
    json bands = json::array();
    for (std::size_t b = 0; b < kNumBands; ++b) {
        const double idx = threshold_index[b];
        bands.push_back({{"band_index", b},
                         {"band_center", band_center(b)},
                         {"threshold_index", number_or_null(idx)},
                         {"threshold_sd", std::isfinite(idx) && flags[b] != ThresholdFlag::clamped_at_0
                                              ? number_or_null(sd_of_threshold_index(idx))
                                              : json(nullptr)},
                         {"flag", std::string(to_string(flags[b]))}});
    }
    return {{"bands", bands}};
}

std::string ThresholdProfile::to_csv() const {
    std::ostringstream os;
    os.precision(12);
    os << "band_index,band_center,threshold_index,flag\n";
    for (std::size_t b = 0; b < kNumBands; ++b) {
        os << b << ',' << band_center(b) << ',';
        if (std::isfinite(threshold_index[b])) os << threshold_index[b];
        os << ',' << to_string(flags[b]) << '\n';
    }
    return os.str();
}

ThresholdProfile ThresholdProfile::from_values(const std::array<double, kNumBands>& values) {
    ThresholdProfile p;
    p.threshold_index = values;
    p.flags.fill(ThresholdFlag::interpolated);
    return p;
}

namespace {

ThresholdProfile crossings(const AccuracyHeatmap& map, double criterion, double scale) {
    ThresholdProfile prof;
    for (std::size_t b = 0; b < kNumBands; ++b) {
        struct Point {
            double index, acc;
        };
        std::vector<Point> pts;
        for (std::size_t l = 1; l < kNumSdLevels; ++l)
            if (map.trials(l, b)) pts.push_back({threshold_index_of_sd(map.sd_ladder[l - 1]), map.accuracy(l, b) / scale});
        // Least noise (highest index) first.
        std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& c) { return a.index > c.index; });

        if (pts.empty()) {
            prof.threshold_index[b] = kNaN;
            prof.flags[b] = ThresholdFlag::undefined;
            continue;
        }
        if (pts.front().acc < criterion) {
            prof.threshold_index[b] = pts.front().index;
            prof.flags[b] = ThresholdFlag::clamped_at_4;
            continue;
        }
        prof.threshold_index[b] = 0.0;
        prof.flags[b] = ThresholdFlag::clamped_at_0;
        for (std::size_t i = 1; i < pts.size(); ++i) {
            const Point& above = pts[i - 1];
            const Point& below = pts[i];
            if (below.acc < criterion) {
                prof.threshold_index[b] =
                    above.index - (above.acc - criterion) / (above.acc - below.acc) * (above.index - below.index);
                prof.flags[b] = ThresholdFlag::interpolated;
                break;
            }
        }
    }
    return prof;
}

}  // namespace

ThresholdProfile thresholds(const AccuracyHeatmap& map, double criterion) { return crossings(map, criterion, 1.0); }

ThresholdProfile normalized_thresholds(const AccuracyHeatmap& map, double criterion) {
    const double base = map.baseline_accuracy();
    if (!(base > 0.0)) throw ValidationError("normalized thresholds need a positive baseline accuracy");
    return crossings(map, criterion, base);
}

// ---------------------------------------------------------------------------
// Gaussian fit

double gaussian_channel(double x, double amplitude, double mu, double sigma) {
    const double z = (x - mu) / sigma;
    return amplitude * std::exp(-0.5 * z * z);
}

namespace {

constexpr std::array<double, 3> kLower = {0.0, -2.0, 0.05};
constexpr std::array<double, 3> kUpper = {8.0, 8.0, 10.0};

// Interval limits implied by a clamped band.
constexpr double kClampedLowCeiling = 1.0;
constexpr double kClampedHighFloor = 4.0;

struct Problem {
    std::vector<double> x;
    std::vector<double> y;
    std::vector<ThresholdFlag> flag;
    bool censor = true;

    std::size_t size() const { return x.size(); }

    /// Residuals and Jacobian (rows for inactive censored bands are zero).
    double evaluate(const Eigen::Vector3d& p, Eigen::VectorXd& r, Eigen::MatrixXd& J) const {
        r.resize(static_cast<Eigen::Index>(size()));
        J.setZero(static_cast<Eigen::Index>(size()), 3);
        for (std::size_t i = 0; i < size(); ++i) {
            const auto row = static_cast<Eigen::Index>(i);
            const double z = (x[i] - p[1]) / p[2];
            const double e = std::exp(-0.5 * z * z);
            const double f = p[0] * e;
            const Eigen::RowVector3d grad(e, f * z / p[2], f * z * z / p[2]);
            double res = f - y[i];
            bool active = true;
            if (censor && flag[i] == ThresholdFlag::clamped_at_0) {
                res = f - kClampedLowCeiling;
                active = res > 0.0;
            } else if (censor && flag[i] == ThresholdFlag::clamped_at_4) {
                res = f - kClampedHighFloor;
                active = res < 0.0;
            }
            r[row] = active ? res : 0.0;
            if (active) J.row(row) = grad;
        }
        return r.squaredNorm();
    }

    double rss(const Eigen::Vector3d& p) const {
        Eigen::VectorXd r;
        Eigen::MatrixXd J;
        return evaluate(p, r, J);
    }
};

Eigen::Vector3d clamp_to_bounds(Eigen::Vector3d p) {
    for (int i = 0; i < 3; ++i) p[i] = std::clamp(p[i], kLower[static_cast<std::size_t>(i)], kUpper[static_cast<std::size_t>(i)]);
    return p;
}

struct Run {
    Eigen::Vector3d p;
    double rss = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

Run levenberg_marquardt(const Problem& prob, Eigen::Vector3d p, std::size_t max_iterations) {
    Run run;
    p = clamp_to_bounds(p);
    Eigen::VectorXd r;
    Eigen::MatrixXd J;
    double rss = prob.evaluate(p, r, J);
    double lambda = 1e-3;
    std::size_t it = 0;
    for (; it < max_iterations; ++it) {
        const Eigen::Matrix3d H = J.transpose() * J;
        const Eigen::Vector3d g = J.transpose() * r;
        if (g.norm() <= 1e-15 * (1.0 + rss) || rss <= 1e-30) {
            run.converged = true;
            break;
        }
        Eigen::Matrix3d damped = H;
        for (int i = 0; i < 3; ++i) damped(i, i) += lambda * std::max(H(i, i), 1e-12);
        const Eigen::Vector3d step = damped.ldlt().solve(-g);
        const Eigen::Vector3d candidate = clamp_to_bounds(p + step);
        Eigen::VectorXd r_new;
        Eigen::MatrixXd J_new;
        const double rss_new = prob.evaluate(candidate, r_new, J_new);
        if (std::isfinite(rss_new) && rss_new < rss) {
            const double moved = (candidate - p).norm();
            const double gain = rss - rss_new;
            p = candidate;
            r = std::move(r_new);
            J = std::move(J_new);
            rss = rss_new;
            lambda = std::max(lambda * 0.1, 1e-15);
            if (moved <= 1e-10 * (1.0 + p.norm()) || gain <= 1e-12 * rss) {
                run.converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if (lambda > 1e16) {
                // No descent direction left inside the box: a (constrained) minimum.
                run.converged = true;
                break;
            }
        }
    }
    run.p = p;
    run.rss = rss;
    run.iterations = it;
    return run;
}

}  // namespace

ChannelFit fit_channel(const ThresholdProfile& profile, const FitOptions& options) {
    Problem prob;
    prob.censor = options.censor_clamped;
    for (std::size_t b = 0; b < kNumBands; ++b) {
        if (profile.flags[b] == ThresholdFlag::undefined) continue;
        if (!std::isfinite(profile.threshold_index[b])) throw ValidationError("non-finite threshold in a defined band");
        prob.x.push_back(static_cast<double>(b));
        prob.y.push_back(profile.threshold_index[b]);
        prob.flag.push_back(profile.flags[b]);
    }
    if (prob.size() < 4)
        throw ValidationError("channel fit needs at least 4 defined bands, got " + std::to_string(prob.size()));

    const auto peak = std::max_element(prob.y.begin(), prob.y.end());
    const double a0 = *peak;
    const double mu0 = prob.x[static_cast<std::size_t>(peak - prob.y.begin())];

    std::optional<Run> best;
    for (double s0 : options.sigma_starts) {
        Run run = levenberg_marquardt(prob, Eigen::Vector3d(a0, mu0, s0), options.max_iterations);
        if (!best || (run.converged && !best->converged) ||
            (run.converged == best->converged && run.rss < best->rss))
            best = run;
    }

    ChannelFit fit;
    fit.amplitude = best->p[0];
    fit.mu = best->p[1];
    fit.sigma = best->p[2];
    fit.rss = best->rss;
    fit.iterations = best->iterations;
    fit.converged = best->converged;
    fit.censored = options.censor_clamped;
    fit.bands_used = prob.size();

    // Standard errors from the linearized covariance at the optimum.
    Eigen::VectorXd r;
    Eigen::MatrixXd J;
    prob.evaluate(best->p, r, J);
    const Eigen::Matrix3d H = J.transpose() * J;
    const double dof = static_cast<double>(prob.size()) - 3.0;
    const Eigen::Vector3d eig = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(H, Eigen::EigenvaluesOnly).eigenvalues();
    const double smax = eig[2];
    const double smin = eig[0];
    const bool singular = !(smax > 0.0) || smin <= 1e-12 * smax;
    if (singular || dof <= 0.0) {
        fit.se_amplitude = fit.se_mu = fit.se_sigma = kNaN;
    } else {
        const Eigen::Matrix3d cov = H.inverse() * (fit.rss / dof);
        fit.se_amplitude = std::sqrt(std::max(cov(0, 0), 0.0));
        fit.se_mu = std::sqrt(std::max(cov(1, 1), 0.0));
        fit.se_sigma = std::sqrt(std::max(cov(2, 2), 0.0));
    }

    std::vector<std::string> reasons;
    if (profile.interpolated_bands() < 3)
        reasons.push_back("only " + std::to_string(profile.interpolated_bands()) + " interpolated band(s)");
    static constexpr const char* names[] = {"A", "mu", "sigma"};
    for (int i = 0; i < 3; ++i) {
        const auto k = static_cast<std::size_t>(i);
        if (std::abs(best->p[i] - kLower[k]) <= 1e-9 || std::abs(best->p[i] - kUpper[k]) <= 1e-9)
            reasons.push_back(std::string(names[i]) + " on its bound");
    }
    if (singular) reasons.push_back("singular Jacobian at the optimum");
    fit.degenerate = !reasons.empty();
    for (std::size_t i = 0; i < reasons.size(); ++i) fit.diagnostics += (i ? "; " : "") + reasons[i];

    if (!fit.converged) {
        fit.diagnostics += std::string(fit.diagnostics.empty() ? "" : "; ") + "no start converged within " +
                           std::to_string(options.max_iterations) + " iterations";
        throw FitError("Gaussian channel fit did not converge", fit);
    }
    return fit;
}

json ChannelFit::to_json() const {
    return {{"A", amplitude},
            {"mu", mu},
            {"sigma", sigma},
            {"se_A", number_or_null(se_amplitude)},
            {"se_mu", number_or_null(se_mu)},
            {"se_sigma", number_or_null(se_sigma)},
            {"rss", rss},
            {"bands_used", bands_used},
            {"iterations", iterations},
            {"converged", converged},
            {"censored_clamped_bands", censored},
            {"degenerate", degenerate},
            {"diagnostics", diagnostics}};
}

ChannelProperties channel_properties(double amplitude, double mu, double sigma) {
    if (!(sigma > 0.0)) throw ValidationError("channel sigma must be positive");
    ChannelProperties p;
    p.bandwidth = 2.0 * sigma * std::sqrt(std::log(4.0));
    p.center_frequency = kLowestBandCenter * std::exp2(mu);
    p.peak_noise_sensitivity = std::exp2(amplitude - 4.0);
    return p;
}

ChannelProperties channel_properties(const ChannelFit& fit) {
    return channel_properties(fit.amplitude, fit.mu, fit.sigma);
}

json ChannelProperties::to_json() const {
    return {{"bandwidth_octaves", bandwidth},
            {"center_frequency_cpi", center_frequency},
            {"peak_noise_sensitivity", peak_noise_sensitivity}};
}

// ---------------------------------------------------------------------------
// aggregation

std::string_view to_string(AggregationMode m) {
    return m == AggregationMode::fit_to_average ? "fit_to_average" : "average_of_fits";
}

AggregationMode parse_aggregation_mode(std::string_view s) {
    if (s == "fit_to_average") return AggregationMode::fit_to_average;
    if (s == "average_of_fits") return AggregationMode::average_of_fits;
    throw ValidationError("unknown aggregation mode '" + std::string(s) + "'");
}

namespace {

PropertySummary summarize(const std::vector<double>& v) {
    PropertySummary s;
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return s;
}

json summary_json(const PropertySummary& s) { return {{"mean", s.mean}, {"sd", s.sd}}; }

}  // namespace

AggregateResult aggregate_humans(const std::vector<std::vector<ResponseRecord>>& per_observer, AggregationMode mode,
                                 const FitOptions& options) {
    if (per_observer.size() < 2) throw ValidationError("aggregation needs at least 2 observers");
    AggregateResult out;
    out.mode = mode;
    for (const auto& recs : per_observer) out.observers.push_back(recs.empty() ? std::string() : recs.front().observer_id);

    if (mode == AggregationMode::fit_to_average) {
        AccuracyHeatmap pooled;
        for (const auto& recs : per_observer) pooled += heatmap(recs);
        out.pooled_fit = fit_channel(thresholds(pooled), options);
        const ChannelProperties p = channel_properties(*out.pooled_fit);
        out.bandwidth = {p.bandwidth, 0.0};
        out.center_frequency = {p.center_frequency, 0.0};
        out.peak_noise_sensitivity = {p.peak_noise_sensitivity, 0.0};
        return out;
    }

    std::vector<double> bw, cf, pns;
    for (const auto& recs : per_observer) {
        ChannelFit f = fit_channel(thresholds(heatmap(recs)), options);
        const ChannelProperties p = channel_properties(f);
        bw.push_back(p.bandwidth);
        cf.push_back(p.center_frequency);
        pns.push_back(p.peak_noise_sensitivity);
        out.per_observer_fits.push_back(std::move(f));
    }
    out.bandwidth = summarize(bw);
    out.center_frequency = summarize(cf);
    out.peak_noise_sensitivity = summarize(pns);
    return out;
}

json AggregateResult::to_json() const {
    json j = {{"mode", std::string(to_string(mode))},
              {"observers", observers},
              {"bandwidth_octaves", summary_json(bandwidth)},
              {"center_frequency_cpi", summary_json(center_frequency)},
              {"peak_noise_sensitivity", summary_json(peak_noise_sensitivity)}};
    if (pooled_fit) j["pooled_fit"] = pooled_fit->to_json();
    if (!per_observer_fits.empty()) {
        json fits = json::array();
        for (const auto& f : per_observer_fits) fits.push_back(f.to_json());
        j["per_observer_fits"] = fits;
    }
    return j;
}

}  // namespace cbm
