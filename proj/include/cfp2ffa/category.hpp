#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cfp2ffa {

/// Disease category attached to a CFP/FFA pair. `None` disables the category
/// prior in the generator and is never a dataset label.
enum class CategoryLabel : std::uint8_t { None = 0, Normal, DR, RVO, AMD, CSC };

inline constexpr std::size_t kNumCategoryLabels = 6;
inline constexpr std::size_t kNumDiseaseClasses = 5;

/// The five dataset categories in canonical order (class index 0..4).
inline constexpr std::array<CategoryLabel, kNumDiseaseClasses> kDiseaseCategories = {
    CategoryLabel::Normal, CategoryLabel::DR, CategoryLabel::RVO, CategoryLabel::AMD,
    CategoryLabel::CSC};

constexpr std::string_view to_string(CategoryLabel label) {
  switch (label) {
    case CategoryLabel::None: return "none";
    case CategoryLabel::Normal: return "normal";
    case CategoryLabel::DR: return "dr";
    case CategoryLabel::RVO: return "rvo";
    case CategoryLabel::AMD: return "amd";
    case CategoryLabel::CSC: return "csc";
  }
  return "none";
}

inline std::optional<CategoryLabel> try_parse_category(std::string_view text) {
  for (std::size_t i = 0; i < kNumCategoryLabels; ++i) {
    auto label = static_cast<CategoryLabel>(i);
    if (to_string(label) == text) return label;
  }
  return std::nullopt;
}

inline CategoryLabel parse_category(std::string_view text) {
  if (auto label = try_parse_category(text)) return *label;
  throw std::invalid_argument("unknown category '" + std::string(text) + "'");
}

/// Class index in [0, 5) used by the diagnosis classifier. Throws for `None`.
inline std::int64_t class_index(CategoryLabel label) {
  if (label == CategoryLabel::None) {
    throw std::invalid_argument("category 'none' has no class index");
  }
  return static_cast<std::int64_t>(label) - 1;
}

inline CategoryLabel category_from_class_index(std::int64_t index) {
  if (index < 0 || index >= static_cast<std::int64_t>(kNumDiseaseClasses)) {
    throw std::out_of_range("class index out of range");
  }
  return kDiseaseCategories[static_cast<std::size_t>(index)];
}

}  // namespace cfp2ffa
