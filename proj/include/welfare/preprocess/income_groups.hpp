#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "welfare/error.hpp"
#include "welfare/ingestion/filename.hpp"
#include "welfare/preprocess/household.hpp"

namespace welfare::preprocess {

#ifdef WELFARE_DATA_DIR
inline const std::filesystem::path kDefaultIncomeGroupsFile =
    std::filesystem::path(WELFARE_DATA_DIR) / "income_groups_fy2022.csv";
#else
inline const std::filesystem::path kDefaultIncomeGroupsFile = "data/income_groups_fy2022.csv";
#endif

// Lookup key: filename-sanitized, lower-case, so "Côte d'Ivoire" and
// "Cote-dIvoire" meet.
inline std::string country_key(std::string_view name) {
  std::string k = ingestion::sanitize_country(name);
  std::transform(k.begin(), k.end(), k.begin(), [](unsigned char c) { return std::tolower(c); });
  return k;
}

inline std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

class IncomeGroupTable {
 public:
  IncomeGroupTable() = default;

  void add(const std::string& country, IncomeGroup group) {
    const auto key = country_key(country);
    entries_[key] = group;
    display_.emplace(key, country);
  }

  std::size_t size() const { return entries_.size(); }

  /// Parses a `country,group` CSV with a header row. Fields may be quoted.
  static IncomeGroupTable from_csv_text(const std::string& text) {
    IncomeGroupTable t;
    std::size_t line_start = 0;
    bool header = true;
    std::size_t lineno = 0;
    while (line_start < text.size()) {
      auto line_end = text.find('\n', line_start);
      if (line_end == std::string::npos) line_end = text.size();
      std::string line = text.substr(line_start, line_end - line_start);
      line_start = line_end + 1;
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto fields = split_csv_line(line, lineno);
      if (fields.size() != 2) throw ParseError("income group csv: expected 2 columns on line " + std::to_string(lineno), lineno);
      if (header) {
        header = false;
        if (fields[0] != "country" || fields[1] != "group")
          throw ParseError("income group csv: header must be 'country,group'", 0);
        continue;
      }
      t.add(fields[0], parse_income_group(fields[1]));
    }
    return t;
  }

  static IncomeGroupTable load(const std::filesystem::path& path = kDefaultIncomeGroupsFile) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataUnavailableError("cannot read income group table " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_csv_text(text);
  }

  /// Throws UnknownCountryError with up to three nearest names.
  IncomeGroup lookup(std::string_view country) const {
    std::string key;
    try {
      key = country_key(country);
    } catch (const PreconditionError&) {
      throw UnknownCountryError(std::string(country), {});
    }
    if (auto it = entries_.find(key); it != entries_.end()) return it->second;
    std::vector<std::pair<std::size_t, std::string>> scored;
    for (const auto& [k, display] : display_) scored.emplace_back(edit_distance(key, k), display);
    std::sort(scored.begin(), scored.end());
    std::vector<std::string> candidates;
    for (std::size_t i = 0; i < std::min<std::size_t>(3, scored.size()); ++i) candidates.push_back(scored[i].second);
    throw UnknownCountryError(std::string(country), std::move(candidates));
  }

 private:
  static std::vector<std::string> split_csv_line(const std::string& line, std::size_t lineno) {
    std::vector<std::string> out(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char c = line[i];
      if (quoted) {
        if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
          out.back().push_back('"');
          ++i;
        } else if (c == '"') {
          quoted = false;
        } else {
          out.back().push_back(c);
        }
      } else if (c == '"') {
        quoted = true;
      } else if (c == ',') {
        out.emplace_back();
      } else {
        out.back().push_back(c);
      }
    }
    if (quoted) throw ParseError("income group csv: unterminated quote", lineno);
    return out;
  }

  std::map<std::string, IncomeGroup> entries_;
  std::multimap<std::string, std::string> display_;
};

inline IncomeGroup assign_income_group(std::string_view country, const IncomeGroupTable& lookup) {
  return lookup.lookup(country);
}

}  // namespace welfare::preprocess
