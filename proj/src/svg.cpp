#include "cbm/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace cbm::svg {

namespace {

std::string escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string open(int w, int h, const std::string& title, const nlohmann::json& provenance) {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 "
       << w << ' ' << h << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    os << "<metadata>" << escape(provenance.dump()) << "</metadata>\n";
    os << "<title>" << escape(title) << "</title>\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << w / 2 << "\" y=\"16\" text-anchor=\"middle\" font-size=\"13\">" << escape(title)
       << "</text>\n";
    return os.str();
}

// Linear map from [lo, hi] onto [a, b].
struct Scale {
    double lo, hi, a, b;
    double operator()(double v) const { return hi == lo ? (a + b) / 2 : a + (v - lo) / (hi - lo) * (b - a); }
};

std::string grey(double acc) {
    // Saturated for high accuracy, white for zero, grey for empty cells.
    if (!std::isfinite(acc)) return "#dddddd";
    const int v = static_cast<int>(std::lround(255.0 * (1.0 - std::clamp(acc, 0.0, 1.0))));
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", v, v, 255);
    return buf;
}

}  // namespace

std::string heatmap(const AccuracyHeatmap& map, const std::string& title, const nlohmann::json& provenance) {
    const int cell = 48, left = 70, top = 40;
    const int w = left + cell * static_cast<int>(kNumBands) + 20;
    const int h = top + cell * static_cast<int>(kNumSdLevels) + 50;
    std::ostringstream os;
    os << open(w, h, title, provenance);
    for (std::size_t l = 0; l < kNumSdLevels; ++l) {
        const int y = top + cell * static_cast<int>(kNumSdLevels - 1 - l);
        const double sd = l == 0 ? 0.0 : map.sd_ladder[l - 1];
        os << "<text x=\"" << left - 6 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"end\">" << fmt(sd)
           << "</text>\n";
        for (std::size_t b = 0; b < kNumBands; ++b) {
            const int x = left + cell * static_cast<int>(b);
            const double acc = map.accuracy(l, b);
            os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
               << "\" fill=\"" << grey(acc) << "\" stroke=\"white\"/>";
            if (std::isfinite(acc))
                os << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"middle\" fill=\""
                   << (acc > 0.5 ? "white" : "black") << "\">" << fmt(acc) << "</text>";
            os << '\n';
        }
    }
    const int base = top + cell * static_cast<int>(kNumSdLevels);
    for (std::size_t b = 0; b < kNumBands; ++b)
        os << "<text x=\"" << left + cell * static_cast<int>(b) + cell / 2 << "\" y=\"" << base + 14
           << "\" text-anchor=\"middle\">" << fmt(band_center(b)) << "</text>\n";
    os << "<text x=\"" << left + cell * static_cast<int>(kNumBands) / 2 << "\" y=\"" << base + 34
       << "\" text-anchor=\"middle\">band center (cycles/image)</text>\n";
    os << "<text x=\"14\" y=\"" << top + cell * static_cast<int>(kNumSdLevels) / 2
       << "\" transform=\"rotate(-90 14 " << top + cell * static_cast<int>(kNumSdLevels) / 2
       << ")\" text-anchor=\"middle\">noise SD</text>\n";
    os << "</svg>\n";
    return os.str();
}

std::string channel_curve(const ThresholdProfile& profile, const ChannelFit& fit, const std::string& title,
                          const nlohmann::json& provenance) {
    const int w = 420, h = 300, left = 50, right = 20, top = 36, bottom = 44;
    const Scale sx{0.0, static_cast<double>(kNumBands - 1), static_cast<double>(left), static_cast<double>(w - right)};
    const Scale sy{0.0, 5.0, static_cast<double>(h - bottom), static_cast<double>(top)};
    std::ostringstream os;
    os << open(w, h, title, provenance);
    os << "<line x1=\"" << left << "\" y1=\"" << h - bottom << "\" x2=\"" << w - right << "\" y2=\"" << h - bottom
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << h - bottom
       << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t)
        os << "<text x=\"" << left - 6 << "\" y=\"" << fmt(sy(t) + 4) << "\" text-anchor=\"end\">" << t << "</text>\n";
    for (std::size_t b = 0; b < kNumBands; ++b)
        os << "<text x=\"" << fmt(sx(static_cast<double>(b))) << "\" y=\"" << h - bottom + 14
           << "\" text-anchor=\"middle\">" << fmt(band_center(b)) << "</text>\n";

    os << "<polyline fill=\"none\" stroke=\"crimson\" stroke-width=\"1.5\" points=\"";
    for (int i = 0; i <= 120; ++i) {
        const double x = static_cast<double>(kNumBands - 1) * i / 120.0;
        const double y = std::clamp(gaussian_channel(x, fit.amplitude, fit.mu, fit.sigma), 0.0, 5.0);
        os << (i ? " " : "") << fmt(sx(x)) << ',' << fmt(sy(y));
    }
    os << "\"/>\n";
    for (std::size_t b = 0; b < kNumBands; ++b) {
        if (profile.flags[b] == ThresholdFlag::undefined) continue;
        const bool clamped = profile.flags[b] != ThresholdFlag::interpolated;
        os << "<circle cx=\"" << fmt(sx(static_cast<double>(b))) << "\" cy=\"" << fmt(sy(profile.threshold_index[b]))
           << "\" r=\"4\" fill=\"" << (clamped ? "white" : "black") << "\" stroke=\"black\"/>\n";
    }
    const ChannelProperties p = channel_properties(fit);
    os << "<text x=\"" << w - right << "\" y=\"" << top + 10 << "\" text-anchor=\"end\">bandwidth " << fmt(p.bandwidth)
       << " oct, center " << fmt(p.center_frequency) << " c/img, peak " << fmt(p.peak_noise_sensitivity)
       << (fit.degenerate ? " (degenerate)" : "") << "</text>\n";
    os << "<text x=\"" << (left + w - right) / 2 << "\" y=\"" << h - 8
       << "\" text-anchor=\"middle\">band center (cycles/image)</text>\n";
    os << "</svg>\n";
    return os.str();
}

std::string scatter(const std::vector<ObserverSummary>& rows, ChannelProperty property, RegressionTarget target,
                    const RegressionReport& report, const nlohmann::json& provenance) {
    const int w = 420, h = 320, left = 50, right = 20, top = 36, bottom = 44;
    double xlo = INFINITY, xhi = -INFINITY;
    for (const auto& r : rows)
        if (r.target(target)) {
            xlo = std::min(xlo, r.property(property));
            xhi = std::max(xhi, r.property(property));
        }
    if (!std::isfinite(xlo)) xlo = 0.0, xhi = 1.0;
    const double pad = xhi > xlo ? 0.05 * (xhi - xlo) : 0.5;
    const Scale sx{xlo - pad, xhi + pad, static_cast<double>(left), static_cast<double>(w - right)};
    const Scale sy{0.0, 1.0, static_cast<double>(h - bottom), static_cast<double>(top)};

    const std::string title = std::string(to_string(target)) + " vs " + std::string(to_string(property));
    std::ostringstream os;
    os << open(w, h, title, provenance);
    os << "<line x1=\"" << left << "\" y1=\"" << h - bottom << "\" x2=\"" << w - right << "\" y2=\"" << h - bottom
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << h - bottom
       << "\" stroke=\"black\"/>\n";
    auto colour = [](ObserverGroup g) {
        switch (g) {
            case ObserverGroup::adversarial: return "steelblue";
            case ObserverGroup::non_adversarial: return "crimson";
            case ObserverGroup::human: return "black";
        }
        return "gray";
    };
    for (const auto& r : rows) {
        const auto y = r.target(target);
        if (!y) continue;
        os << "<circle cx=\"" << fmt(sx(r.property(property))) << "\" cy=\"" << fmt(sy(*y)) << "\" r=\"3\" fill=\""
           << colour(r.group) << "\"><title>" << escape(r.observer_id) << "</title></circle>\n";
    }
    for (const auto& f : report.fits) {
        if (f.property != property || !f.significant) continue;
        const char* c = f.group == RegressionGroup::all_networks ? "gray"
                        : f.group == RegressionGroup::adversarial ? "steelblue"
                                                                  : "crimson";
        const double x0 = xlo - pad, x1 = xhi + pad;
        os << "<line x1=\"" << fmt(sx(x0)) << "\" y1=\"" << fmt(sy(f.fit.intercept + f.fit.slope * x0)) << "\" x2=\""
           << fmt(sx(x1)) << "\" y2=\"" << fmt(sy(f.fit.intercept + f.fit.slope * x1)) << "\" stroke=\"" << c
           << "\" stroke-dasharray=\"4 3\"/>\n";
    }
    os << "<text x=\"" << (left + w - right) / 2 << "\" y=\"" << h - 8 << "\" text-anchor=\"middle\">"
       << to_string(property) << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

}  // namespace cbm::svg
