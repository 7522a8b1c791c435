#pragma once

#include <array>
#include <cmath>
#include <string>
#include <string_view>

#include "welfare/error.hpp"
#include "welfare/preprocess/household.hpp"

namespace welfare::preprocess {

inline constexpr int kDaysPerMonth = 30;

struct PovertyPolicy {
  enum class Mode { kUniform, kByIncomeGroup };

  Mode mode = Mode::kUniform;
  std::array<double, 4> daily_lines_usd{1.9, 1.9, 1.9, 1.9};  // indexed by IncomeGroup
  int days_per_month = kDaysPerMonth;

  static PovertyPolicy uniform(double daily_line_usd = 1.9) {
    if (!(daily_line_usd > 0)) throw DomainError("poverty line must be positive");
    return {Mode::kUniform, {daily_line_usd, daily_line_usd, daily_line_usd, daily_line_usd}, kDaysPerMonth};
  }

  // World Bank lines for LIC, LMIC, UMIC, HIC.
  static PovertyPolicy by_income_group() { return {Mode::kByIncomeGroup, {1.9, 3.2, 5.5, 21.7}, kDaysPerMonth}; }

  static PovertyPolicy parse(std::string_view name) {
    if (name == "uniform") return uniform();
    if (name == "by-group" || name == "by_income_group") return by_income_group();
    throw PreconditionError("unknown poverty policy '" + std::string(name) + "'");
  }

  std::string_view name() const { return mode == Mode::kUniform ? "uniform" : "by-group"; }

  /// Monthly threshold in USD. Computed in whole cents so preset lines give
  /// exact values (1.9 * 30 = 57, 21.7 * 30 = 651).
  double monthly_threshold(IncomeGroup g) const {
    const auto cents = std::llround(daily_lines_usd[static_cast<std::size_t>(g)] * 100.0);
    return static_cast<double>(cents * days_per_month) / 100.0;
  }
};

/// 1 iff monthly consumption does not exceed the applicable monthly line.
inline int label_poverty(const HouseholdRecord& record, const PovertyPolicy& policy) {
  IncomeGroup g = IncomeGroup::kLIC;
  if (policy.mode == PovertyPolicy::Mode::kByIncomeGroup) {
    if (!record.income_group)
      throw PreconditionError("household " + record.family_id + " has no income group for by-group labeling");
    g = *record.income_group;
  }
  return record.monthly_consumption_usd <= policy.monthly_threshold(g) ? 1 : 0;
}

}  // namespace welfare::preprocess
