#include "cbm/stats.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "cbm/error.hpp"
#include "cbm/provenance.hpp"

namespace cbm {

using nlohmann::json;

std::string_view to_string(ObserverGroup g) {
    switch (g) {
        case ObserverGroup::adversarial: return "adversarial";
        case ObserverGroup::non_adversarial: return "non_adversarial";
        case ObserverGroup::human: return "human";
    }
    return "non_adversarial";
}

ObserverGroup parse_observer_group(std::string_view s) {
    if (s == "adversarial") return ObserverGroup::adversarial;
    if (s == "non_adversarial") return ObserverGroup::non_adversarial;
    if (s == "human") return ObserverGroup::human;
    throw ValidationError("unknown observer group '" + std::string(s) + "'");
}

ObserverGroup group_of(const ObserverDescriptor& d) {
    if (d.kind == ObserverKind::human) return ObserverGroup::human;
    const auto it = d.tags.find("adversarial_training_eps");
    if (it == d.tags.end() || it->second.empty()) return ObserverGroup::non_adversarial;
    double eps = 0.0;
    try {
        std::size_t used = 0;
        eps = std::stod(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
        throw ValidationError("observer '" + d.observer_id + "': adversarial_training_eps '" + it->second +
                              "' is not a number");
    }
    return eps > 0.0 ? ObserverGroup::adversarial : ObserverGroup::non_adversarial;
}

std::string_view to_string(ChannelProperty p) {
    switch (p) {
        case ChannelProperty::bandwidth: return "bandwidth";
        case ChannelProperty::center_frequency: return "center_frequency";
        case ChannelProperty::peak_noise_sensitivity: return "peak_noise_sensitivity";
    }
    return "bandwidth";
}

std::string_view to_string(RegressionTarget t) { return t == RegressionTarget::shape_bias ? "shape_bias" : "whitebox"; }

std::string_view to_string(RegressionGroup g) {
    switch (g) {
        case RegressionGroup::all_networks: return "all_networks";
        case RegressionGroup::adversarial: return "adversarial";
        case RegressionGroup::non_adversarial: return "non_adversarial";
    }
    return "all_networks";
}

double ObserverSummary::property(ChannelProperty p) const {
    switch (p) {
        case ChannelProperty::bandwidth: return bandwidth;
        case ChannelProperty::center_frequency: return center_frequency;
        case ChannelProperty::peak_noise_sensitivity: return peak_noise_sensitivity;
    }
    return bandwidth;
}

std::optional<double> ObserverSummary::target(RegressionTarget t) const {
    return t == RegressionTarget::shape_bias ? shape_bias : whitebox_accuracy;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

double parse_real(const std::string& s, const std::string& what, std::size_t line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size() && std::isfinite(v)) return v;
    } catch (const std::exception&) {
    }
    throw ValidationError("line " + std::to_string(line) + ": " + what + " '" + s + "' is not a finite number");
}

std::optional<double> parse_unit_interval(const std::string& s, const std::string& what, std::size_t line) {
    if (s.empty()) return std::nullopt;
    const double v = parse_real(s, what, line);
    if (v < 0.0 || v > 1.0) throw ValidationError("line " + std::to_string(line) + ": " + what + " outside [0,1]");
    return v;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path, std::string_view header) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open", path);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != header) throw ValidationError(path.string() + ": unexpected header, want '" + std::string(header) + "'");
    const std::size_t columns = split_csv_line(header).size();
    std::vector<std::vector<std::string>> rows;
    std::size_t n = 1;
    while (std::getline(in, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != columns)
            throw ValidationError(path.string() + " line " + std::to_string(n) + ": expected " +
                                  std::to_string(columns) + " fields, got " + std::to_string(fields.size()));
        rows.push_back(std::move(fields));
    }
    return rows;
}

std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::vector<ObserverSummary> read_summaries(const std::filesystem::path& path) {
    std::vector<ObserverSummary> out;
    std::size_t line = 1;
    for (const auto& f : read_csv(path, kSummariesCsvHeader)) {
        ++line;
        ObserverSummary s;
        s.observer_id = f[0];
        if (s.observer_id.empty()) throw ValidationError("line " + std::to_string(line) + ": empty observer_id");
        s.bandwidth = parse_real(f[1], "bandwidth", line);
        s.center_frequency = parse_real(f[2], "center_frequency", line);
        s.peak_noise_sensitivity = parse_real(f[3], "peak_noise_sensitivity", line);
        s.shape_bias = parse_unit_interval(f[4], "shape_bias", line);
        s.whitebox_accuracy = parse_unit_interval(f[5], "whitebox_accuracy", line);
        s.group = parse_observer_group(f[6]);
        out.push_back(std::move(s));
    }
    return out;
}

void write_summaries(const std::filesystem::path& path, const std::vector<ObserverSummary>& rows) {
    std::ostringstream os;
    os << kSummariesCsvHeader << '\n';
    for (const auto& r : rows) {
        os << csv_escape(r.observer_id) << ',' << format_real(r.bandwidth) << ',' << format_real(r.center_frequency)
           << ',' << format_real(r.peak_noise_sensitivity) << ',' << (r.shape_bias ? format_real(*r.shape_bias) : "")
           << ',' << (r.whitebox_accuracy ? format_real(*r.whitebox_accuracy) : "") << ',' << to_string(r.group)
           << '\n';
    }
    write_text(path, os.str());
}

std::vector<CueConflictRecord> read_cue_conflict(const std::filesystem::path& path) {
    std::vector<CueConflictRecord> out;
    std::size_t line = 1;
    for (const auto& f : read_csv(path, kCueConflictCsvHeader)) {
        ++line;
        CueConflictRecord r{f[0], parse_category(f[1]), parse_category(f[2]), parse_category(f[3])};
        if (r.shape == r.texture)
            throw ValidationError("line " + std::to_string(line) + ": shape and texture category are both '" +
                                  std::string(r.shape.label()) + "'");
        out.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------
// shape bias

std::string_view to_string(ShapeBiasMode m) {
    return m == ShapeBiasMode::all_images ? "all_images" : "shape_or_texture_only";
}

ShapeBiasMode parse_shape_bias_mode(std::string_view s) {
    if (s == "all_images") return ShapeBiasMode::all_images;
    if (s == "shape_or_texture_only") return ShapeBiasMode::shape_or_texture_only;
    throw ValidationError("unknown shape-bias mode '" + std::string(s) + "'");
}

double shape_bias(std::span<const CueConflictRecord> records, ShapeBiasMode mode) {
    if (records.empty()) throw ValidationError("shape bias of an empty record set");
    std::size_t shape = 0, texture = 0;
    for (const auto& r : records) {
        if (r.shape == r.texture) throw ValidationError("cue-conflict record '" + r.image_id + "' has shape == texture");
        shape += r.response == r.shape;
        texture += r.response == r.texture;
    }
    if (mode == ShapeBiasMode::all_images) return static_cast<double>(shape) / static_cast<double>(records.size());
    if (shape + texture == 0) throw ValidationError("no response matched either shape or texture");
    return static_cast<double>(shape) / static_cast<double>(shape + texture);
}

// ---------------------------------------------------------------------------
// regression

double two_sided_t_pvalue(double t, double dof) {
    if (!(dof > 0.0)) throw ValidationError("t test needs positive degrees of freedom");
    if (std::isnan(t)) throw ValidationError("t statistic is NaN");
    if (std::isinf(t)) return 0.0;
    const boost::math::students_t dist(dof);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

LineFit ols(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ValidationError("ols: x and y differ in length");
    const std::size_t n = x.size();
    if (n < 3) throw ValidationError("ols needs at least 3 points, got " + std::to_string(n));
    bool constant = true;
    for (double v : x) constant = constant && v == x[0];
    if (constant) throw ValidationError("ols: x is constant");

    double xbar = 0.0, ybar = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        xbar += x[i];
        ybar += y[i];
    }
    xbar /= static_cast<double>(n);
    ybar /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - xbar, dy = y[i] - ybar;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }

    LineFit f;
    f.n = n;
    f.slope = sxy / sxx;
    f.intercept = ybar - f.slope * xbar;
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = y[i] - (f.intercept + f.slope * x[i]);
        rss += e * e;
    }
    const double dof = static_cast<double>(n - 2);
    f.slope_se = std::sqrt(rss / dof / sxx);
    if (f.slope_se > 0.0)
        f.p_value = two_sided_t_pvalue(f.slope / f.slope_se, dof);
    else
        f.p_value = f.slope == 0.0 ? 1.0 : 0.0;
    f.r_squared = syy > 0.0 ? std::clamp(1.0 - rss / syy, 0.0, 1.0) : 0.0;
    return f;
}

json LineFit::to_json() const {
    return {{"slope", slope}, {"intercept", intercept}, {"slope_se", slope_se},
            {"p_value", p_value}, {"r_squared", r_squared}, {"n", n}};
}

double multiple_r2(const Eigen::MatrixXd& predictors, std::span<const double> y) {
    const auto n = predictors.rows();
    const auto k = predictors.cols();
    if (static_cast<std::size_t>(n) != y.size()) throw ValidationError("multiple_r2: rows and y differ in length");
    if (n < k + 2)
        throw ValidationError("multiple_r2 needs at least " + std::to_string(k + 2) + " observations, got " +
                              std::to_string(n));

    Eigen::MatrixXd design(n, k + 1);
    design.col(0).setOnes();
    design.rightCols(k) = predictors;
    const Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);

    // Add columns one at a time so a rank drop names the column that caused it.
    for (Eigen::Index j = 1; j <= k; ++j) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design.leftCols(j + 1));
        qr.setThreshold(1e-10);
        if (qr.rank() < j + 1)
            throw ValidationError("multiple_r2: predictor column " + std::to_string(j - 1) +
                                  " is collinear with the intercept and earlier columns");
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    const Eigen::VectorXd beta = qr.solve(yv);
    const double rss = (yv - design * beta).squaredNorm();
    const double tss = (yv.array() - yv.mean()).matrix().squaredNorm();
    if (!(tss > 0.0)) return 0.0;
    return std::clamp(1.0 - rss / tss, 0.0, 1.0);
}

bool bonferroni_significant(double p, double alpha, std::size_t m) {
    if (m == 0) throw ValidationError("Bonferroni family size must be positive");
    return p < alpha / static_cast<double>(m);
}

namespace {

bool in_group(const ObserverSummary& s, RegressionGroup g) {
    switch (g) {
        case RegressionGroup::all_networks: return s.group != ObserverGroup::human;
        case RegressionGroup::adversarial: return s.group == ObserverGroup::adversarial;
        case RegressionGroup::non_adversarial: return s.group == ObserverGroup::non_adversarial;
    }
    return false;
}

}  // namespace

RegressionReport correlate(const std::vector<ObserverSummary>& summaries, RegressionTarget target, double alpha,
                           std::size_t m) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0,1)");
    if (m == 0) throw ValidationError("Bonferroni family size must be positive");
    RegressionReport report;
    report.target = target;
    report.alpha = alpha;
    report.m = m;

    for (const auto& s : summaries)
        if (s.group != ObserverGroup::human && !s.target(target))
            report.warnings.push_back(s.observer_id + ": no " + std::string(to_string(target)) + " value, skipped");

    for (RegressionGroup g : kRegressionGroups) {
        std::vector<const ObserverSummary*> rows;
        for (const auto& s : summaries)
            if (in_group(s, g) && s.target(target)) rows.push_back(&s);
        const std::string gname(to_string(g));
        if (rows.size() < 3) {
            report.skipped.push_back(gname + ": " + std::to_string(rows.size()) +
                                     " observer(s) with the target, need at least 3");
            continue;
        }
        std::vector<double> y;
        for (const auto* r : rows) y.push_back(*r->target(target));

        for (ChannelProperty p : kChannelProperties) {
            std::vector<double> x;
            for (const auto* r : rows) x.push_back(r->property(p));
            try {
                GroupedLineFit gf{g, p, ols(x, y), false};
                gf.significant = bonferroni_significant(gf.fit.p_value, alpha, m);
                report.fits.push_back(gf);
            } catch (const ValidationError& e) {
                report.skipped.push_back(gname + "/" + std::string(to_string(p)) + ": " + e.what());
            }
        }

        Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), 3);
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t c = 0; c < 3; ++c)
                X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i]->property(kChannelProperties[c]);
        try {
            report.multiple_r2.push_back({g, multiple_r2(X, y), rows.size()});
        } catch (const ValidationError& e) {
            report.skipped.push_back(gname + "/multiple_r2: " + e.what());
        }
    }
    return report;
}

json RegressionReport::to_json() const {
    json fits_j = json::array();
    for (const auto& f : fits) {
        json j = f.fit.to_json();
        j["group"] = std::string(to_string(f.group));
        j["property"] = std::string(to_string(f.property));
        j["significant"] = f.significant;
        fits_j.push_back(j);
    }
    json r2 = json::array();
    for (const auto& r : multiple_r2)
        r2.push_back({{"group", std::string(to_string(r.group))}, {"r_squared", r.r_squared}, {"n", r.n}});
    return {{"target", std::string(to_string(target))},
            {"alpha", alpha},
            {"m", m},
            {"p_threshold", alpha / static_cast<double>(m)},
            {"fits", fits_j},
            {"multiple_r2", r2},
            {"skipped", skipped},
            {"warnings", warnings}};
}

}  // namespace cbm
