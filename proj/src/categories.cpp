#include "cbm/categories.hpp"

#include <algorithm>

#include "cbm/error.hpp"

namespace cbm {

std::optional<Category> find_category(std::string_view label) {
    auto it = std::find(kCategoryLabels.begin(), kCategoryLabels.end(), label);
    if (it == kCategoryLabels.end()) return std::nullopt;
    return Category{static_cast<std::size_t>(it - kCategoryLabels.begin())};
}

Category parse_category(std::string_view label) {
    if (auto c = find_category(label)) return *c;
    throw ValidationError("unknown category label '" + std::string(label) + "'");
}

}  // namespace cbm
