#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "welfare/error.hpp"

namespace welfare {

// The seven wealth categories, in mosaic order.
enum class Category { kBathrooms, kBedrooms, kLivingRooms, kPlacesForDinner, kRoofs, kShowers, kStoves };

inline constexpr std::size_t kCategoryCount = 7;

inline constexpr std::array<Category, kCategoryCount> kCategoryOrder = {
    Category::kBathrooms, Category::kBedrooms, Category::kLivingRooms, Category::kPlacesForDinner,
    Category::kRoofs,     Category::kShowers,  Category::kStoves};

inline constexpr std::array<std::string_view, kCategoryCount> kCategorySlugs = {
    "bathrooms", "bedrooms", "living-rooms", "places-for-dinner", "roofs", "showers", "stoves"};

inline constexpr std::size_t category_index(Category c) { return static_cast<std::size_t>(c); }

inline constexpr std::string_view slug(Category c) { return kCategorySlugs[category_index(c)]; }

inline std::optional<Category> try_parse_category(std::string_view s) {
  for (std::size_t i = 0; i < kCategoryCount; ++i)
    if (kCategorySlugs[i] == s) return kCategoryOrder[i];
  return std::nullopt;
}

inline Category parse_category(std::string_view s) {
  if (auto c = try_parse_category(s)) return *c;
  throw PreconditionError("unknown category slug '" + std::string(s) + "'");
}

}  // namespace welfare
