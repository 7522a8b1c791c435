#pragma once

// Canonical asset filenames:
//   {consumption:.2f}__{country}__{family_id}__{category}__{index:02d}.jpg
// Consumption and country travel in the name so a directory of images is
// self-describing without the manifest.

#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <string>
#include <string_view>
#include <utility>

#include "welfare/category.hpp"
#include "welfare/error.hpp"
#include "welfare/ingestion/types.hpp"

namespace welfare::ingestion {

struct AssetName {
  double consumption = 0;
  std::string country;
  std::string family_id;
  Category category = Category::kBathrooms;
  int index = 0;

  bool operator==(const AssetName&) const = default;
};

namespace detail {

inline bool is_token_char(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-';
}

// Latin-1 supplement letters (U+00C0..U+00FF) folded to ASCII; empty means no fold.
inline std::string_view fold_latin1(unsigned code) {
  static constexpr std::string_view kTable[64] = {
      "A", "A", "A", "A", "A", "A", "AE", "C", "E", "E", "E", "E", "I", "I", "I", "I",
      "D", "N", "O", "O", "O", "O", "O", "",  "O", "U", "U", "U", "U", "Y", "TH", "ss",
      "a", "a", "a", "a", "a", "a", "ae", "c", "e", "e", "e", "e", "i", "i", "i", "i",
      "d", "n", "o", "o", "o", "o", "o", "",  "o", "u", "u", "u", "u", "y", "th", "y"};
  if (code < 0xC0 || code > 0xFF) return {};
  return kTable[code - 0xC0];
}

}  // namespace detail

/// Country name as it appears in filenames: ASCII-folded, spaces to
/// hyphens, apostrophes and periods dropped. Throws if anything else
/// outside [A-Za-z0-9-] remains.
inline std::string sanitize_country(std::string_view country) {
  std::string out;
  for (std::size_t i = 0; i < country.size(); ++i) {
    const auto c = static_cast<unsigned char>(country[i]);
    if (c < 0x80) {
      if (c == ' ' || c == '_') {
        if (!out.empty() && out.back() != '-') out.push_back('-');
      } else if (c == '\'' || c == '.' || c == ',') {
        continue;
      } else if (detail::is_token_char(static_cast<char>(c)) ) {
        out.push_back(static_cast<char>(c));
      } else {
        throw PreconditionError(fmt::format("country: character '{}' cannot be represented in a filename",
                                            static_cast<char>(c)));
      }
      continue;
    }
    // Two-byte UTF-8 sequences cover Latin-1; anything else is rejected.
    if ((c & 0xE0) == 0xC0 && i + 1 < country.size()) {
      const unsigned code = ((c & 0x1Fu) << 6) | (static_cast<unsigned char>(country[i + 1]) & 0x3Fu);
      const auto folded = detail::fold_latin1(code);
      if (!folded.empty()) {
        out.append(folded);
        ++i;
        continue;
      }
    }
    throw PreconditionError("country: non-ASCII character cannot be folded for a filename");
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  if (out.empty()) throw PreconditionError("country: empty after sanitization");
  return out;
}

inline std::string encode_asset_filename(const HouseholdMeta& meta, Category category, int index) {
  if (!(meta.monthly_consumption_usd > 0) || !std::isfinite(meta.monthly_consumption_usd))
    throw PreconditionError("consumption: must be a positive finite number");
  if (index < 0 || index > 99) throw PreconditionError("index: must be in [0, 99]");
  if (meta.family_id.empty()) throw PreconditionError("family_id: empty");
  for (char c : meta.family_id)
    if (!detail::is_token_char(c))
      throw PreconditionError(fmt::format("family_id: character '{}' cannot be represented in a filename", c));
  return fmt::format("{:.2f}__{}__{}__{}__{:02d}.jpg", meta.monthly_consumption_usd,
                     sanitize_country(meta.country), meta.family_id, slug(category), index);
}

inline std::string encode_asset_filename(const AssetName& n) {
  return encode_asset_filename(HouseholdMeta{n.family_id, n.country, n.consumption}, n.category, n.index);
}

inline AssetName parse_asset_filename(std::string_view name) {
  constexpr std::string_view kSep = "__";
  constexpr std::string_view kExt = ".jpg";
  if (name.size() < kExt.size() || name.substr(name.size() - kExt.size()) != kExt)
    throw ParseError("asset filename must end in .jpg", name.size());
  const std::string_view body = name.substr(0, name.size() - kExt.size());

  std::string_view fields[5];
  std::size_t offsets[5];
  std::size_t pos = 0;
  for (int f = 0; f < 5; ++f) {
    const std::size_t end = f < 4 ? body.find(kSep, pos) : body.size();
    if (end == std::string_view::npos) throw ParseError("asset filename has fewer than 5 fields", body.size());
    fields[f] = body.substr(pos, end - pos);
    offsets[f] = pos;
    pos = end + kSep.size();
  }
  if (fields[4].find(kSep) != std::string_view::npos)
    throw ParseError("asset filename has more than 5 fields", offsets[4] + fields[4].find(kSep));

  AssetName out;
  {
    const auto s = fields[0];
    const auto dot = s.find('.');
    bool ok = dot != std::string_view::npos && dot > 0 && s.size() - dot - 1 == 2;
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == dot) || (s[i] >= '0' && s[i] <= '9');
    if (!ok) throw ParseError("consumption field must look like 123.45", offsets[0]);
    out.consumption = std::stod(std::string(s));
    if (!(out.consumption > 0)) throw ParseError("consumption must be positive", offsets[0]);
  }
  for (int f : {1, 2}) {
    if (fields[f].empty()) throw ParseError("empty field", offsets[f]);
    for (std::size_t i = 0; i < fields[f].size(); ++i)
      if (!detail::is_token_char(fields[f][i])) throw ParseError("invalid character", offsets[f] + i);
  }
  out.country = std::string(fields[1]);
  out.family_id = std::string(fields[2]);
  const auto cat = try_parse_category(fields[3]);
  if (!cat) throw ParseError("unknown category '" + std::string(fields[3]) + "'", offsets[3]);
  out.category = *cat;
  const auto idx = fields[4];
  if (idx.size() != 2 || idx[0] < '0' || idx[0] > '9' || idx[1] < '0' || idx[1] > '9')
    throw ParseError("index must be two digits", offsets[4]);
  out.index = (idx[0] - '0') * 10 + (idx[1] - '0');
  return out;
}

}  // namespace welfare::ingestion
