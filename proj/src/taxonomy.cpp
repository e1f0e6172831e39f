#include "cbm/taxonomy.hpp"

#include <cmath>
#include <string>

#include "cbm/error.hpp"
#include "cbm/provenance.hpp"

namespace cbm {

using nlohmann::json;

ClassMapping ClassMapping::from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("class mapping must be a JSON object {fine_index: coarse_label}");
    ClassMapping m;
    for (const auto& [key, value] : j.items()) {
        std::size_t pos = 0;
        unsigned long idx = 0;
        try {
            idx = std::stoul(key, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != key.size() || key.empty()) throw ValidationError("class mapping key '" + key + "' is not an index");
        if (idx >= kNumFineClasses) throw ValidationError("fine class index " + key + " out of range");
        if (!value.is_string()) throw ValidationError("class mapping value for " + key + " must be a label");
        const Category c = parse_category(value.get<std::string>());
        m.entries_[idx] = c;
    }
    for (std::size_t i = 0; i < kNumFineClasses; ++i)
        if (m.entries_[i]) m.members_[m.entries_[i]->index].push_back(i);
    for (std::size_t c = 0; c < kNumCategories; ++c)
        if (m.members_[c].empty())
            throw ValidationError("category '" + std::string(kCategoryLabels[c]) + "' has no fine classes");
    return m;
}

ClassMapping ClassMapping::load(const std::filesystem::path& path) {
    try {
        return from_json(json::parse(read_text(path)));
    } catch (const json::parse_error& e) {
        throw ValidationError("class mapping is not valid JSON (" + path.string() + "): " + e.what());
    }
}

std::array<std::size_t, kNumCategories> ClassMapping::member_counts() const {
    std::array<std::size_t, kNumCategories> out{};
    for (std::size_t c = 0; c < kNumCategories; ++c) out[c] = members_[c].size();
    return out;
}

json ClassMapping::to_json() const {
    json j = json::object();
    for (std::size_t i = 0; i < kNumFineClasses; ++i)
        if (entries_[i]) j[std::to_string(i)] = std::string(entries_[i]->label());
    return j;
}

std::array<double, kNumCategories> coarse_scores(std::span<const double> fine_probs, const ClassMapping& mapping) {
    if (fine_probs.size() != kNumFineClasses)
        throw ValidationError("expected 1000 fine probabilities, got " + std::to_string(fine_probs.size()));
    for (double p : fine_probs)
        if (!(p >= 0.0)) throw ValidationError("fine probabilities must be non-negative");
    std::array<double, kNumCategories> scores{};
    for (std::size_t c = 0; c < kNumCategories; ++c) {
        const auto& members = mapping.members(Category{c});
        // Running mean: equal inputs give exactly that value, so uniform
        // probabilities tie across categories of different sizes.
        double mean = 0.0;
        std::size_t k = 0;
        for (std::size_t i : members) mean += (fine_probs[i] - mean) / static_cast<double>(++k);
        scores[c] = mean;
    }
    return scores;
}

Category decide(std::span<const double> scores) {
    if (scores.size() != kNumCategories) throw ValidationError("expected 16 coarse scores");
    std::size_t best = 0;
    for (std::size_t c = 0; c < scores.size(); ++c) {
        if (std::isnan(scores[c])) throw ValidationError("NaN coarse score");
        if (scores[c] > scores[best]) best = c;
    }
    return Category{best};
}

}  // namespace cbm
