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

// Path-dependent TreeSHAP for the TMJ1 probability. The value function is
// v(S) = E[f(x) | x_S], where unknown splits are averaged by node cover.

#ifndef TMJX_EXPLAIN_HPP_
#define TMJX_EXPLAIN_HPP_

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tmjx/common.hpp"
#include "tmjx/forest.hpp"

namespace tmjx {

inline constexpr std::size_t kBruteForceMaxFeatures = 15;
inline constexpr double kLocalAccuracyTol = 1e-9;

struct Attribution {
  std::vector<double> per_feature;
  double base_value = 0.0;
  double output = 0.0;

  // |base + sum - output|
  double local_accuracy_gap() const;
};

// Cover-weighted mean leaf p1, i.e. v(empty set).
double tree_expected_value(const Tree& tree);

Attribution tree_shap(const Tree& tree, std::span<const double> x);

// Enumerates all 2^d subsets; refuses d > kBruteForceMaxFeatures.
Attribution brute_force_shap(const Tree& tree, std::span<const double> x);

// Mean of the per-tree attributions.
Attribution forest_shap(const Forest& forest, std::span<const double> x);

struct SummaryData {
  std::vector<std::string> feature_names;
  std::vector<double> mean_abs_shap;  // per feature
  std::vector<std::size_t> ranking;   // feature indices, mean |SHAP| descending
  Matrix shap_values;                 // rows x features
  Matrix feature_values;              // same shape
  std::vector<std::size_t> row_index;  // source row of each point row

  nlohmann::json to_json() const;
  void write_rank_csv(const std::filesystem::path& path) const;
  void write_points_csv(const std::filesystem::path& path) const;
  // Rebuilds a summary from a long-form points CSV.
  static SummaryData read_points_csv(const std::filesystem::path& path);
};

// Ranks by mean |SHAP| (ties: lower index first).
std::vector<std::size_t> rank_features(const std::vector<double>& mean_abs_shap);

SummaryData summarize(const Forest& forest, const Matrix& x, int threads = 1);

// Renders a beeswarm-style SVG: one lane per feature in rank order, points
// at their SHAP value, coloured by the feature value's rank within the lane.
std::string render_summary_svg(const SummaryData& summary, std::size_t max_features = 20);

}  // namespace tmjx

#endif  // TMJX_EXPLAIN_HPP_
