#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "cbm/categories.hpp"
#include "cbm/stimuli.hpp"
#include "cbm/transport.hpp"

namespace cbm {

/// A synthetic observer with a planted Gaussian channel. The threshold index
/// in band b is T(b) = A exp(-(b - mu)^2 / (2 sigma^2)); on a trial at noise
/// SD s it answers correctly with probability
///   chance + (base - chance) * Phi(c0 + slope * (index(s) - T(b)))
/// where c0 puts the 50% point exactly at index(s) == T(b). Noise-free
/// trials are correct with probability `base`.
struct ChannelObserverModel {
    double amplitude = 4.0;
    double mu = 4.5;
    double sigma = 0.42;
    double base = 0.95;
    double chance = 1.0 / 16.0;
    double slope = 2.0;  // psychometric slope per threshold-index unit

    double p_correct(const NoiseCondition& c) const;
};

enum class SyntheticPolicy { oracle, fixed_answer, channel };

/// Answers stimulus messages by looking the stimulus up in the manifest.
class SyntheticObserver {
public:
    SyntheticObserver(const StimulusManifest& manifest, SyntheticPolicy policy, std::uint64_t seed,
                      std::string observer_id = "synthetic", std::string kind = "network");

    void set_fixed_answer(Category c) { fixed_ = c; }
    void set_model(const ChannelObserverModel& m) { model_ = m; }

    std::string hello_line() const;

    /// Protocol handler: one response line per stimulus, nothing for bye.
    std::vector<std::string> handle(const std::string& line);

    Category answer(const ManifestEntry& entry);

private:
    std::unordered_map<std::string, const ManifestEntry*> index_;
    SyntheticPolicy policy_;
    std::mt19937_64 rng_;
    std::string observer_id_;
    std::string kind_;
    Category fixed_{10};
    ChannelObserverModel model_;
};

/// In-process endpoint wired to a SyntheticObserver through the wire codec.
InProcessEndpoint make_in_process_endpoint(SyntheticObserver& observer);

}  // namespace cbm
