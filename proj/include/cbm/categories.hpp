#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace cbm {

inline constexpr std::size_t kNumCategories = 16;

/// The 16 coarse categories in their fixed order. Tie-breaks and button
/// layouts follow this order.
inline constexpr std::array<std::string_view, kNumCategories> kCategoryLabels = {
    "airplane", "bear",  "bicycle",  "bird",     "boat",     "bottle", "car",   "cat",
    "chair",    "clock", "dog",      "elephant", "keyboard", "knife",  "oven",  "truck",
};

/// Index into kCategoryLabels, strongly typed so it cannot be mixed up with
/// fine ImageNet class indices.
struct Category {
    std::size_t index = 0;

    std::string_view label() const { return kCategoryLabels.at(index); }
    friend bool operator==(Category, Category) = default;
    friend auto operator<=>(Category, Category) = default;
};

std::optional<Category> find_category(std::string_view label);

/// Throws ValidationError for labels outside the fixed set.
Category parse_category(std::string_view label);

}  // namespace cbm
