#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "cbm/channel.hpp"
#include "cbm/error.hpp"
#include "cbm/session.hpp"
#include "fixtures.hpp"

using namespace cbm;

namespace {

NoiseCondition cell(std::size_t level, std::size_t band) { return {level, band}; }

// Heatmap with `n` trials in every cell and exactly round(acc * n) correct.
AccuracyHeatmap heatmap_from(const std::array<std::array<double, kNumBands>, 4>& acc, std::size_t n = 100) {
    AccuracyHeatmap m;
    for (std::size_t l = 1; l <= 4; ++l)
        for (std::size_t b = 0; b < kNumBands; ++b) {
            const auto k = static_cast<std::size_t>(std::lround(acc[l - 1][b] * static_cast<double>(n)));
            for (std::size_t i = 0; i < n; ++i) m.add(cell(l, b), i < k);
        }
    for (std::size_t i = 0; i < n; ++i) m.add({0, std::nullopt}, true);
    return m;
}

std::array<double, kNumBands> curve(double a, double mu, double sigma) {
    std::array<double, kNumBands> v{};
    for (std::size_t b = 0; b < kNumBands; ++b) v[b] = gaussian_channel(static_cast<double>(b), a, mu, sigma);
    return v;
}

}  // namespace

TEST(ThresholdIndex, LadderEndpoints) {
    EXPECT_DOUBLE_EQ(threshold_index_of_sd(0.16), 1.0);
    EXPECT_DOUBLE_EQ(threshold_index_of_sd(0.08), 2.0);
    EXPECT_DOUBLE_EQ(threshold_index_of_sd(0.04), 3.0);
    EXPECT_DOUBLE_EQ(threshold_index_of_sd(0.02), 4.0);
    EXPECT_DOUBLE_EQ(sd_of_threshold_index(2.5), 0.32 / std::exp2(2.5));
    EXPECT_THROW(threshold_index_of_sd(0.0), ValidationError);
}

TEST(Heatmap, CountsAndTrainingFilter) {
    const StimulusManifest m = cbm::testing::synthetic_manifest(2, 5);
    std::vector<ResponseRecord> recs;
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        const auto& e = m.entries[i];
        recs.push_back(make_record("o", e, i % 3 ? e.category : Category{(e.category.index + 1) % 16},
                                   i < 10 ? Block::training : Block::test));
    }
    const AccuracyHeatmap test_only = heatmap(recs);
    EXPECT_EQ(test_only.total_trials(), recs.size() - 10);
    const AccuracyHeatmap all = heatmap(recs, {true});
    EXPECT_EQ(all.total_trials(), recs.size());

    // Brute-force accuracy per cell.
    for (std::size_t id = 0; id < kNumConditions; ++id) {
        const NoiseCondition c = NoiseCondition::from_id(id);
        std::size_t n = 0, k = 0;
        for (const auto& r : recs)
            if (r.condition == c) ++n, k += r.correct;
        const double want = static_cast<double>(k) / static_cast<double>(n);
        EXPECT_DOUBLE_EQ(all.accuracy(c.sd_level, c.band_index.value_or(0)), want) << id;
    }
}

TEST(Heatmap, EmptyCellIsNaN) {
    AccuracyHeatmap m;
    EXPECT_TRUE(std::isnan(m.accuracy(2, 3)));
    EXPECT_TRUE(std::isnan(m.baseline_accuracy()));
    m.add(cell(2, 3), true);
    EXPECT_DOUBLE_EQ(m.accuracy(2, 3), 1.0);
}

TEST(Heatmap, SumIsTrialWeighted) {
    AccuracyHeatmap a, b;
    for (int i = 0; i < 4; ++i) a.add(cell(1, 0), i < 1);   // 1/4
    for (int i = 0; i < 12; ++i) b.add(cell(1, 0), i < 9);  // 9/12
    a += b;
    EXPECT_DOUBLE_EQ(a.accuracy(1, 0), 10.0 / 16.0);
}

TEST(Thresholds, InterpolatesBetweenAdjacentLevels) {
    // 0.60 at index 4 and 0.40 at index 3 cross halfway.
    std::array<std::array<double, kNumBands>, 4> acc{};
    for (auto& row : acc) row.fill(1.0);
    acc[0].fill(0.60);  // level 1: sd 0.02, index 4
    acc[1].fill(0.40);  // sd 0.04, index 3
    acc[2].fill(0.3);   // sd 0.08, index 2
    acc[3].fill(0.2);   // sd 0.16, index 1
    const ThresholdProfile p = thresholds(heatmap_from(acc));
    for (std::size_t b = 0; b < kNumBands; ++b) {
        EXPECT_EQ(p.flags[b], ThresholdFlag::interpolated);
        EXPECT_NEAR(p.threshold_index[b], 3.5, 1e-12);
    }
}

TEST(Thresholds, ClampedAndUndefined) {
    AccuracyHeatmap m;
    for (std::size_t l = 1; l <= 4; ++l) {
        m.add(cell(l, 0), true);   // never below 50%
        m.add(cell(l, 1), false);  // below 50% already at the least noise
    }
    const ThresholdProfile p = thresholds(m);
    EXPECT_EQ(p.flags[0], ThresholdFlag::clamped_at_0);
    EXPECT_EQ(p.threshold_index[0], 0.0);
    EXPECT_EQ(p.flags[1], ThresholdFlag::clamped_at_4);
    EXPECT_EQ(p.threshold_index[1], 4.0);
    EXPECT_EQ(p.flags[2], ThresholdFlag::undefined);
    EXPECT_TRUE(std::isnan(p.threshold_index[2]));
    EXPECT_EQ(p.defined_bands(), 2u);
}

TEST(Thresholds, SkipsMissingLevels) {
    AccuracyHeatmap m;
    for (int i = 0; i < 10; ++i) {
        m.add(cell(1, 0), i < 8);  // 0.8 at index 4
        m.add(cell(3, 0), i < 2);  // 0.2 at index 2; index 3 missing
    }
    const ThresholdProfile p = thresholds(m);
    EXPECT_EQ(p.flags[0], ThresholdFlag::interpolated);
    EXPECT_NEAR(p.threshold_index[0], 4.0 - 0.3 / 0.6 * 2.0, 1e-12);
}

TEST(Thresholds, NormalizedDividesByBaseline) {
    AccuracyHeatmap m;
    for (int i = 0; i < 10; ++i) {
        m.add({0, std::nullopt}, i < 8);  // baseline 0.8
        m.add(cell(1, 0), i < 6);        // 0.75 after normalizing
        m.add(cell(2, 0), i < 2);        // 0.25 after normalizing
    }
    const ThresholdProfile raw = thresholds(m);
    const ThresholdProfile norm = normalized_thresholds(m);
    EXPECT_NEAR(raw.threshold_index[0], 4.0 - 0.1 / 0.4, 1e-12);
    EXPECT_NEAR(norm.threshold_index[0], 3.5, 1e-12);

    AccuracyHeatmap zero;
    zero.add({0, std::nullopt}, false);
    EXPECT_THROW(normalized_thresholds(zero), ValidationError);
}

TEST(Thresholds, MoreCorrectResponsesNeverRaiseTheIndex) {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<std::size_t> trials(1, 8), lvl(1, 4), band(0, kNumBands - 1);
    for (int rep = 0; rep < 2000; ++rep) {
        AccuracyHeatmap m;
        for (std::size_t l = 1; l <= 4; ++l)
            for (std::size_t b = 0; b < kNumBands; ++b) {
                const std::size_t n = trials(rng);
                for (std::size_t i = 0; i < n; ++i) m.add(cell(l, b), rng() % 2 == 0);
            }
        const ThresholdProfile before = thresholds(m);
        const std::size_t l = lvl(rng), b = band(rng);
        m.add(cell(l, b), true);
        const ThresholdProfile after = thresholds(m);
        ASSERT_LE(after.threshold_index[b], before.threshold_index[b] + 1e-12) << "rep " << rep;
        for (std::size_t o = 0; o < kNumBands; ++o)
            if (o != b) ASSERT_EQ(after.threshold_index[o], before.threshold_index[o]);
    }
}

TEST(ChannelProperties, HumanFitIdentities) {
    const ChannelProperties p = channel_properties(4.00, 4.50, 0.42);
    // Independent: FWHM of a Gaussian in band units, one band per octave.
    EXPECT_NEAR(p.bandwidth, 2.0 * std::sqrt(2.0 * std::log(2.0)) * 0.42, 1e-12);
    EXPECT_NEAR(p.bandwidth, 0.989, 0.001);
    EXPECT_NEAR(p.center_frequency, 39.60, 0.01);
    EXPECT_EQ(p.peak_noise_sensitivity, 1.0);
}

TEST(ChannelProperties, Resnet50Chain) {
    const ChannelProperties p = channel_properties(3.51, 4.49, 1.69);
    EXPECT_NEAR(p.bandwidth, 3.98, 0.01);
    EXPECT_GE(p.bandwidth / 0.99, 2.0);
    EXPECT_LE(p.bandwidth / 0.99, 4.1);
    EXPECT_NEAR(p.peak_noise_sensitivity, std::exp2(-0.49), 1e-12);
}

TEST(ChannelFit, RecoversNoiseFreeCurves) {
    for (auto [a, mu, s] : {std::tuple{4.00, 4.50, 0.42}, std::tuple{3.51, 4.49, 1.69}, std::tuple{3.0, 3.2, 1.1}}) {
        const ChannelFit f = fit_channel(ThresholdProfile::from_values(curve(a, mu, s)));
        EXPECT_TRUE(f.converged);
        EXPECT_NEAR(f.amplitude, a, 1e-6);
        EXPECT_NEAR(f.mu, mu, 1e-6);
        EXPECT_NEAR(f.sigma, s, 1e-6);
        EXPECT_LT(f.rss, 1e-18);
    }
}

TEST(ChannelFit, StandardErrorsCoverTruth) {
    // Gaussian noise on the thresholds; the linearized SE should give roughly
    // nominal 3-SE coverage for each parameter.
    const double a = 3.5, mu = 4.2, s = 1.6, noise = 0.15;
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> eps(0.0, noise);
    std::array<int, 3> covered{};
    const int runs = 1000;
    for (int r = 0; r < runs; ++r) {
        auto v = curve(a, mu, s);
        for (double& x : v) x += eps(rng);
        const ChannelFit f = fit_channel(ThresholdProfile::from_values(v));
        covered[0] += std::abs(f.amplitude - a) <= 3 * f.se_amplitude;
        covered[1] += std::abs(f.mu - mu) <= 3 * f.se_mu;
        covered[2] += std::abs(f.sigma - s) <= 3 * f.se_sigma;
    }
    for (int k = 0; k < 3; ++k) EXPECT_GE(covered[static_cast<std::size_t>(k)], 950) << "parameter " << k;
}

TEST(ChannelFit, OracleObserverIsDegenerate) {
    ThresholdProfile p;
    p.threshold_index.fill(0.0);
    p.flags.fill(ThresholdFlag::clamped_at_0);
    const ChannelFit f = fit_channel(p);
    EXPECT_TRUE(f.degenerate);
    EXPECT_FALSE(f.diagnostics.empty());
}

TEST(ChannelFit, NeedsFourDefinedBands) {
    ThresholdProfile p = ThresholdProfile::from_values(curve(3, 3, 1));
    for (std::size_t b : {0u, 1u, 2u, 3u}) {
        p.flags[b] = ThresholdFlag::undefined;
        p.threshold_index[b] = NAN;
    }
    EXPECT_THROW(fit_channel(p), ValidationError);
}

TEST(ChannelFit, CensoringIgnoresSatisfiedClampedBands) {
    // Bands 0 and 1 clamp at 0 although the true curve is slightly above 0 there.
    auto v = curve(3.5, 4.5, 1.7);
    ThresholdProfile p = ThresholdProfile::from_values(v);
    for (std::size_t b : {0u, 1u}) {
        ASSERT_LT(v[b], 1.0);
        p.threshold_index[b] = 0.0;
        p.flags[b] = ThresholdFlag::clamped_at_0;
    }
    const ChannelFit censored = fit_channel(p);
    EXPECT_NEAR(censored.sigma, 1.7, 1e-6);
    FitOptions literal;
    literal.censor_clamped = false;
    const ChannelFit plain = fit_channel(p, literal);
    EXPECT_GT(std::abs(plain.sigma - 1.7), 0.01);
}

TEST(ChannelFit, DegenerateWhenFewInterpolatedBands) {
    ThresholdProfile p = ThresholdProfile::from_values(curve(4, 4.5, 0.42));
    for (std::size_t b : {0u, 1u, 2u, 6u}) {
        p.threshold_index[b] = 0.0;
        p.flags[b] = ThresholdFlag::clamped_at_0;
    }
    p.threshold_index[3] = 0.0;
    p.flags[3] = ThresholdFlag::clamped_at_0;
    const ChannelFit f = fit_channel(p);
    EXPECT_TRUE(f.degenerate);
    EXPECT_NE(f.diagnostics.find("interpolated"), std::string::npos);
}

TEST(Aggregate, ModesAndSampleSd) {
    const StimulusManifest m = cbm::testing::synthetic_manifest(40, 3);
    std::vector<std::vector<ResponseRecord>> obs;
    const std::array<double, 3> sigmas = {1.2, 1.5, 1.9};
    for (std::size_t o = 0; o < sigmas.size(); ++o) {
        std::mt19937_64 rng(o + 1);
        std::vector<ResponseRecord> recs;
        for (const auto& e : m.entries) {
            double p = 0.95;
            if (!e.condition.is_noise_free()) {
                const double t = gaussian_channel(static_cast<double>(*e.condition.band_index), 3.5, 4.0, sigmas[o]);
                p = threshold_index_of_sd(e.condition.sd()) > t ? 0.9 : 0.1;
            }
            const bool ok = std::uniform_real_distribution<double>(0, 1)(rng) < p;
            recs.push_back(make_record("obs" + std::to_string(o), e, ok ? e.category : Category{(e.category.index + 1) % 16},
                                       Block::test));
        }
        obs.push_back(std::move(recs));
    }
    const AggregateResult avg = aggregate_humans(obs, AggregationMode::average_of_fits);
    ASSERT_EQ(avg.per_observer_fits.size(), 3u);
    std::vector<double> bw;
    for (const auto& f : avg.per_observer_fits) bw.push_back(channel_properties(f).bandwidth);
    const double mean = (bw[0] + bw[1] + bw[2]) / 3;
    double ss = 0;
    for (double x : bw) ss += (x - mean) * (x - mean);
    EXPECT_NEAR(avg.bandwidth.mean, mean, 1e-12);
    EXPECT_NEAR(avg.bandwidth.sd, std::sqrt(ss / 2), 1e-12);

    const AggregateResult pooled = aggregate_humans(obs, AggregationMode::fit_to_average);
    ASSERT_TRUE(pooled.pooled_fit.has_value());
    EXPECT_EQ(pooled.bandwidth.sd, 0.0);
    EXPECT_EQ(pooled.observers, (std::vector<std::string>{"obs0", "obs1", "obs2"}));

    EXPECT_THROW(aggregate_humans({obs[0]}, AggregationMode::fit_to_average), ValidationError);
}

TEST(Serialization, ProfileAndFitJson) {
    const ThresholdProfile p = ThresholdProfile::from_values(curve(3.51, 4.49, 1.69));
    const auto j = p.to_json();
    ASSERT_EQ(j["bands"].size(), kNumBands);
    EXPECT_EQ(j["bands"][4]["flag"], "interpolated");
    const ChannelFit f = fit_channel(p);
    const auto fj = f.to_json();
    EXPECT_NEAR(fj["sigma"].get<double>(), 1.69, 1e-6);
    EXPECT_TRUE(fj.contains("degenerate"));
    EXPECT_NE(p.to_csv().find("band_index,band_center,threshold_index,flag"), std::string::npos);
}

TEST(ChannelFit, SmallPerturbationCoverage) {
    // The narrow human triple is left out: with two informative bands A and
    // sigma trade off along a ridge and Wald intervals undercover.
    for (auto [a, mu, s] : {std::tuple{3.51, 4.49, 1.69}, std::tuple{3.0, 3.0, 1.2}}) {
        std::mt19937_64 rng(77);
        std::normal_distribution<double> eps(0.0, 0.05);
        std::array<int, 3> covered{};
        for (int r = 0; r < 1000; ++r) {
            auto v = curve(a, mu, s);
            for (double& x : v) x += eps(rng);
            const ChannelFit f = fit_channel(ThresholdProfile::from_values(v));
            covered[0] += std::abs(f.amplitude - a) <= 3 * f.se_amplitude;
            covered[1] += std::abs(f.mu - mu) <= 3 * f.se_mu;
            covered[2] += std::abs(f.sigma - s) <= 3 * f.se_sigma;
        }
        for (int k = 0; k < 3; ++k) EXPECT_GE(covered[static_cast<std::size_t>(k)], 950) << "sigma " << s << " parameter " << k;
    }
}

TEST(ChannelProperties, IdentitiesHoldForEveryFit) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> A(0.5, 5), M(0, 6), S(0.3, 3);
    for (int i = 0; i < 200; ++i) {
        const ChannelFit f = fit_channel(ThresholdProfile::from_values(curve(A(rng), M(rng), S(rng))));
        const ChannelProperties p = channel_properties(f);
        EXPECT_NEAR(p.bandwidth, 2 * f.sigma * std::sqrt(std::log(4.0)), 1e-12);
        EXPECT_NEAR(p.center_frequency, 1.75 * std::pow(2.0, f.mu), 1e-12 * p.center_frequency);
        EXPECT_NEAR(p.peak_noise_sensitivity, std::pow(2.0, f.amplitude - 4), 1e-12);
    }
}

TEST(Heatmap, OracleAndFixedAnswerObservers) {
    // 32 stimuli per condition: exactly two of each category per condition.
    StimulusManifest m;
    for (std::size_t id = 0; id < kNumConditions; ++id)
        for (std::size_t k = 0; k < 32; ++k) {
            ManifestEntry e;
            e.stimulus_id = "s" + std::to_string(id * 32 + k);
            e.category = Category{k % 16};
            e.condition = NoiseCondition::from_id(id);
            m.entries.push_back(e);
        }
    std::vector<ResponseRecord> oracle, dog;
    for (const auto& e : m.entries) {
        oracle.push_back(make_record("o", e, e.category, Block::test));
        dog.push_back(make_record("d", e, Category{10}, Block::test));
    }
    const AccuracyHeatmap ho = heatmap(oracle), hd = heatmap(dog);
    for (std::size_t l = 0; l < kNumSdLevels; ++l)
        for (std::size_t b = 0; b < kNumBands; ++b) {
            EXPECT_EQ(ho.accuracy(l, b), 1.0);
            EXPECT_EQ(hd.accuracy(l, b), 0.0625);
        }
}

TEST(Thresholds, MonotoneProfilesHaveOneCrossing) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0, 1);
    for (int rep = 0; rep < 500; ++rep) {
        // Accuracy falling with SD; the crossing must lie between the two
        // levels that straddle 0.5.
        std::array<double, 4> acc;
        for (double& a : acc) a = u(rng);
        std::sort(acc.begin(), acc.end(), std::greater<>());
        AccuracyHeatmap m;
        for (std::size_t l = 1; l <= 4; ++l)
            for (int i = 0; i < 1000; ++i) m.add(cell(l, 0), i < std::lround(acc[l - 1] * 1000));
        const ThresholdProfile p = thresholds(m);
        int above = 0;
        for (std::size_t l = 1; l <= 4; ++l) above += m.accuracy(l, 0) >= 0.5;
        if (above == 0) {
            EXPECT_EQ(p.flags[0], ThresholdFlag::clamped_at_4);
        } else if (above == 4) {
            EXPECT_EQ(p.flags[0], ThresholdFlag::clamped_at_0);
        } else {
            EXPECT_EQ(p.flags[0], ThresholdFlag::interpolated);
            EXPECT_LE(p.threshold_index[0], 5.0 - above);
            EXPECT_GE(p.threshold_index[0], 4.0 - above);
        }
    }
}

TEST(Thresholds, NormalizationCases) {
    AccuracyHeatmap m;
    for (int i = 0; i < 100; ++i) {
        m.add({0, std::nullopt}, true);
        for (std::size_t l = 1; l <= 4; ++l) m.add(cell(l, 0), i < 90 - 20 * static_cast<int>(l));
    }
    const ThresholdProfile raw = thresholds(m), norm = normalized_thresholds(m);
    for (std::size_t b = 0; b < kNumBands; ++b) {
        EXPECT_EQ(raw.flags[b], norm.flags[b]);
        if (raw.flags[b] != ThresholdFlag::undefined) EXPECT_EQ(raw.threshold_index[b], norm.threshold_index[b]);
    }

    AccuracyHeatmap b;  // baseline 0.8; 0.48 at SD 0.02 normalizes to 0.60
    for (int i = 0; i < 100; ++i) {
        b.add({0, std::nullopt}, i < 80);
        b.add(cell(1, 0), i < 48);
        b.add(cell(2, 0), i < 20);
    }
    EXPECT_EQ(thresholds(b).flags[0], ThresholdFlag::clamped_at_4);
    const ThresholdProfile nb = normalized_thresholds(b);
    EXPECT_EQ(nb.flags[0], ThresholdFlag::interpolated);
    EXPECT_LT(nb.threshold_index[0], 4.0);

    AccuracyHeatmap low;  // baseline 0.45 still yields a profile
    for (int i = 0; i < 100; ++i) {
        low.add({0, std::nullopt}, i < 45);
        low.add(cell(1, 0), i < 40);
        low.add(cell(2, 0), i < 10);
    }
    EXPECT_EQ(normalized_thresholds(low).flags[0], ThresholdFlag::interpolated);
}

TEST(Aggregate, IdenticalObserversAgreeAcrossModes) {
    const StimulusManifest m = cbm::testing::synthetic_manifest(20, 9);
    std::vector<ResponseRecord> recs;
    for (const auto& e : m.entries) {
        bool ok = true;
        if (!e.condition.is_noise_free())
            ok = threshold_index_of_sd(e.condition.sd()) >
                 gaussian_channel(static_cast<double>(*e.condition.band_index), 3.5, 4.0, 1.5);
        recs.push_back(make_record("x", e, ok ? e.category : Category{(e.category.index + 3) % 16}, Block::test));
    }
    const std::vector<std::vector<ResponseRecord>> two = {recs, recs};
    const AggregateResult a = aggregate_humans(two, AggregationMode::fit_to_average);
    const AggregateResult b = aggregate_humans(two, AggregationMode::average_of_fits);
    EXPECT_DOUBLE_EQ(a.bandwidth.mean, b.bandwidth.mean);
    EXPECT_DOUBLE_EQ(a.center_frequency.mean, b.center_frequency.mean);
    EXPECT_DOUBLE_EQ(a.peak_noise_sensitivity.mean, b.peak_noise_sensitivity.mean);
    EXPECT_EQ(b.bandwidth.sd, 0.0);
}

TEST(Aggregate, AverageOfFitsSdTracksJitter) {
    // Accuracy is linear in the threshold index around each planted crossing,
    // so interpolation recovers the planted thresholds exactly and the spread
    // of fitted bandwidths should match the planted spread.
    std::mt19937_64 rng(12);
    std::normal_distribution<double> jitter(0.0, 0.15);
    std::vector<std::vector<ResponseRecord>> cohort;
    std::vector<double> planted_bw;
    constexpr int kPerCell = 400;
    for (int o = 0; o < 12; ++o) {
        const double s = 1.5 + jitter(rng);
        planted_bw.push_back(2 * s * std::sqrt(std::log(4.0)));
        std::vector<ResponseRecord> recs;
        std::size_t serial = 0;
        for (std::size_t id = 0; id < kNumConditions; ++id) {
            const NoiseCondition c = NoiseCondition::from_id(id);
            double acc = 0.9;
            if (!c.is_noise_free()) {
                const double t = gaussian_channel(static_cast<double>(*c.band_index), 3.5, 4.0, s);
                acc = std::clamp(0.5 + 0.2 * (threshold_index_of_sd(c.sd()) - t), 0.0, 1.0);
            }
            const int correct = static_cast<int>(std::lround(acc * kPerCell));
            for (int k = 0; k < kPerCell; ++k) {
                ManifestEntry e;
                e.stimulus_id = "s" + std::to_string(serial++);
                e.category = Category{static_cast<std::size_t>(k) % 16};
                e.condition = c;
                recs.push_back(make_record("o" + std::to_string(o), e,
                                           k < correct ? e.category : Category{(e.category.index + 1) % 16}, Block::test));
            }
        }
        cohort.push_back(recs);
    }
    const AggregateResult r = aggregate_humans(cohort, AggregationMode::average_of_fits);
    double mean = 0, ss = 0;
    for (double v : planted_bw) mean += v;
    mean /= static_cast<double>(planted_bw.size());
    for (double v : planted_bw) ss += (v - mean) * (v - mean);
    const double planted_sd = std::sqrt(ss / static_cast<double>(planted_bw.size() - 1));
    // Per-cell rounding to 1/400 leaves a small residual error.
    EXPECT_NEAR(r.bandwidth.mean, mean, 0.03 * mean);
    EXPECT_NEAR(r.bandwidth.sd, planted_sd, 0.1 * planted_sd);
}
