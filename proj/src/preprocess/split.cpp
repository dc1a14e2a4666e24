/*
 * Copyright 2026 The tmjx Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tmjx/preprocess.hpp"

namespace tmjx {

std::vector<std::size_t> split_sizes(std::size_t n, const std::vector<double>& fractions) {
  if (fractions.empty()) throw ValidationError("no split fractions given");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw ValidationError("split fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("split fractions must sum to 1");

  std::vector<std::size_t> sizes(fractions.size());
  std::vector<double> remainder(fractions.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const double quota = static_cast<double>(n) * fractions[i];
    // Snap quotas that are integral up to rounding noise.
    const double snapped = std::abs(quota - std::round(quota)) < 1e-9 ? std::round(quota) : quota;
    sizes[i] = static_cast<std::size_t>(std::floor(snapped));
    remainder[i] = snapped - std::floor(snapped);
    assigned += sizes[i];
  }
  std::vector<std::size_t> order(fractions.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (std::abs(remainder[a] - remainder[b]) > 1e-9) return remainder[a] > remainder[b];
    return a > b;
  });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[order[k % order.size()]];
  return sizes;
}

std::vector<std::vector<std::size_t>> split_units(std::size_t n, const std::vector<double>& fractions,
                                                  std::uint64_t seed) {
  const auto sizes = split_sizes(n, fractions);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<std::size_t>> parts(sizes.size());
  std::size_t pos = 0;
  for (std::size_t p = 0; p < sizes.size(); ++p) {
    parts[p].assign(perm.begin() + pos, perm.begin() + pos + sizes[p]);
    std::sort(parts[p].begin(), parts[p].end());
    pos += sizes[p];
  }
  return parts;
}

SplitAssignment split_patients(const Cohort& cohort, const std::vector<double>& fractions,
                               std::uint64_t seed) {
  if (fractions.size() != 3) throw ValidationError("patient split needs three fractions");
  if (cohort.patients.size() < 3) {
    throw ValidationError("need at least 3 patients to split, have " +
                          std::to_string(cohort.patients.size()));
  }
  std::vector<std::string> ids;
  for (const auto& p : cohort.patients) ids.push_back(p.patient_id);
  std::sort(ids.begin(), ids.end());
  const auto parts = split_units(ids.size(), fractions, seed);
  SplitAssignment out;
  out.seed = seed;
  auto collect = [&](const std::vector<std::size_t>& idx, std::vector<std::string>& dst) {
    for (std::size_t i : idx) dst.push_back(ids[i]);
  };
  collect(parts[0], out.train_ids);
  collect(parts[1], out.calib_ids);
  collect(parts[2], out.test_ids);
  return out;
}

}  // namespace tmjx
