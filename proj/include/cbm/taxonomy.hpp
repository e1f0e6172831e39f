#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "cbm/categories.hpp"

namespace cbm {

inline constexpr std::size_t kNumFineClasses = 1000;

/// Fine ImageNet class index (0..999) -> optional coarse category.
class ClassMapping {
public:
    ClassMapping() = default;

    /// Validates: indices in range, labels known, every category populated.
    static ClassMapping from_json(const nlohmann::json& j);
    static ClassMapping load(const std::filesystem::path& path);

    std::optional<Category> coarse_of(std::size_t fine_index) const { return entries_.at(fine_index); }
    const std::vector<std::size_t>& members(Category c) const { return members_.at(c.index); }
    std::array<std::size_t, kNumCategories> member_counts() const;

    nlohmann::json to_json() const;

private:
    std::array<std::optional<Category>, kNumFineClasses> entries_{};
    std::array<std::vector<std::size_t>, kNumCategories> members_{};
};

/// score[c] = mean of fine_probs over the members of c. Unmapped classes are
/// ignored and nothing is renormalized.
std::array<double, kNumCategories> coarse_scores(std::span<const double> fine_probs, const ClassMapping& mapping);

/// Argmax; ties go to the earliest category in the fixed order.
Category decide(std::span<const double> scores);

}  // namespace cbm
