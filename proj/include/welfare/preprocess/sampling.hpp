#pragma once

// Seeded undersampling and train/validation splitting. Both are generic
// over the element type; the label is read through a projection.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "welfare/error.hpp"

namespace welfare::preprocess {

// Unbiased integer in [0, n) from the raw engine output. mt19937_64 is fully
// specified by the standard, so sequences are portable across toolchains
// (unlike std::uniform_int_distribution).
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do x = rng(); while (x >= limit);
  return x % n;
}

template <typename T>
void seeded_shuffle(std::vector<T>& v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_below(rng, i)]);
}

/// Keeps every minority-class element plus an equally sized seeded uniform
/// sample of the majority class. Input order is preserved.
template <typename T, typename LabelFn>
std::vector<T> balance_classes(std::span<const T> records, LabelFn&& label_of, std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const int y = label_of(records[i]);
    if (y == 1)
      pos.push_back(i);
    else if (y == 0)
      neg.push_back(i);
    else
      throw PreconditionError("balance_classes: labels must be 0 or 1");
  }
  if (pos.empty() || neg.empty()) throw PreconditionError("balance_classes: both classes must be non-empty");
  auto& majority = pos.size() > neg.size() ? pos : neg;
  const auto keep = std::min(pos.size(), neg.size());
  seeded_shuffle(majority, seed);
  majority.resize(keep);

  std::vector<bool> chosen(records.size(), false);
  for (auto i : pos) chosen[i] = true;
  for (auto i : neg) chosen[i] = true;
  std::vector<T> out;
  out.reserve(2 * keep);
  for (std::size_t i = 0; i < records.size(); ++i)
    if (chosen[i]) out.push_back(records[i]);
  return out;
}

template <typename T, typename LabelFn>
std::vector<T> balance_classes(const std::vector<T>& records, LabelFn&& label_of, std::uint64_t seed) {
  return balance_classes(std::span<const T>(records), std::forward<LabelFn>(label_of), seed);
}

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  bool stratify = false;

  std::size_t valid_size(std::size_t n) const {
    return static_cast<std::size_t>(std::floor((1.0 - train_fraction) * static_cast<double>(n) + 1e-9));
  }
};

template <typename T>
struct Split {
  std::vector<T> train;
  std::vector<T> valid;
};

/// Returns the sorted indices that go to validation.
inline std::vector<std::size_t> validation_indices(std::size_t n, const SplitSpec& spec,
                                                   std::span<const int> strata = {}) {
  if (n < 2) throw PreconditionError("split_dataset: need at least 2 records");
  if (!(spec.train_fraction > 0 && spec.train_fraction < 1))
    throw PreconditionError("split_dataset: train_fraction must be in (0,1)");
  const auto n_valid = spec.valid_size(n);
  std::vector<std::size_t> chosen;
  if (!spec.stratify || strata.empty()) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    seeded_shuffle(idx, spec.seed);
    chosen.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_valid));
  } else {
    if (strata.size() != n) throw PreconditionError("split_dataset: strata length mismatch");
    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < n; ++i) groups[strata[i]].push_back(i);
    // Largest-remainder allocation keeps the total at exactly n_valid.
    std::vector<std::pair<double, int>> remainders;
    std::map<int, std::size_t> quota;
    std::size_t assigned = 0;
    for (const auto& [key, members] : groups) {
      const double exact = static_cast<double>(n_valid) * static_cast<double>(members.size()) / static_cast<double>(n);
      quota[key] = static_cast<std::size_t>(std::floor(exact));
      assigned += quota[key];
      remainders.emplace_back(-(exact - std::floor(exact)), key);
    }
    std::sort(remainders.begin(), remainders.end());
    for (std::size_t k = 0; assigned < n_valid; ++k, ++assigned) ++quota[remainders[k % remainders.size()].second];
    std::uint64_t s = spec.seed;
    for (auto& [key, members] : groups) {
      seeded_shuffle(members, s++);
      chosen.insert(chosen.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(quota[key]));
    }
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

/// Seeded disjoint split; |valid| = floor((1 - train_fraction) * n). Both
/// halves keep input order.
template <typename T>
Split<T> split_dataset(const std::vector<T>& records, const SplitSpec& spec, std::span<const int> strata = {}) {
  const auto valid_idx = validation_indices(records.size(), spec, strata);
  std::vector<bool> is_valid(records.size(), false);
  for (auto i : valid_idx) is_valid[i] = true;
  Split<T> out;
  for (std::size_t i = 0; i < records.size(); ++i) (is_valid[i] ? out.valid : out.train).push_back(records[i]);
  return out;
}

}  // namespace welfare::preprocess
