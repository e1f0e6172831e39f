#include "cbm/simulated_observer.hpp"

#include <boost/math/distributions/normal.hpp>

#include "cbm/channel.hpp"
#include "cbm/error.hpp"
#include "cbm/protocol.hpp"

namespace cbm {

double ChannelObserverModel::p_correct(const NoiseCondition& c) const {
    if (c.is_noise_free()) return base;
    const boost::math::normal_distribution<double> unit;
    const double c0 = boost::math::quantile(unit, (0.5 - chance) / (base - chance));
    const double idx = threshold_index_of_sd(c.sd());
    const double t = gaussian_channel(static_cast<double>(*c.band_index), amplitude, mu, sigma);
    return chance + (base - chance) * boost::math::cdf(unit, c0 + slope * (idx - t));
}

SyntheticObserver::SyntheticObserver(const StimulusManifest& manifest, SyntheticPolicy policy, std::uint64_t seed,
                                     std::string observer_id, std::string kind)
    : policy_(policy), rng_(seed), observer_id_(std::move(observer_id)), kind_(std::move(kind)) {
    for (const auto& e : manifest.entries) index_.emplace(e.stimulus_id, &e);
}

std::string SyntheticObserver::hello_line() const {
    return protocol::encode(protocol::Hello{observer_id_, kind_, nlohmann::json::object()});
}

Category SyntheticObserver::answer(const ManifestEntry& entry) {
    switch (policy_) {
        case SyntheticPolicy::oracle: return entry.category;
        case SyntheticPolicy::fixed_answer: return fixed_;
        case SyntheticPolicy::channel: break;
    }
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (u(rng_) < model_.p_correct(entry.condition)) return entry.category;
    // A uniformly chosen wrong category.
    std::uniform_int_distribution<std::size_t> pick(0, kNumCategories - 2);
    std::size_t k = pick(rng_);
    if (k >= entry.category.index) ++k;
    return Category{k};
}

std::vector<std::string> SyntheticObserver::handle(const std::string& line) {
    const protocol::Message m = protocol::decode(line);
    const auto* stim = std::get_if<protocol::Stimulus>(&m);
    if (!stim) return {};
    const auto it = index_.find(stim->stimulus_id);
    if (it == index_.end())
        return {protocol::encode(protocol::ErrorMessage{stim->stimulus_id, "unknown stimulus"})};
    const Category c = answer(*it->second);
    return {protocol::encode(protocol::Response{stim->stimulus_id, std::string(c.label())})};
}

InProcessEndpoint make_in_process_endpoint(SyntheticObserver& observer) {
    return InProcessEndpoint({observer.hello_line()}, [&observer](const std::string& line) { return observer.handle(line); });
}

}  // namespace cbm
