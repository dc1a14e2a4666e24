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

// Split-conformal prediction sets with the RAPS score.
//
// With classes sorted by descending probability (ties: TMJ0 first) and r
// the 1-based rank of a label,
//   s(r) = sum_{j<=r} p_(j) + lambda * max(0, r - k_reg) - u * p_(r)
// where u is 0 unless the config is randomized.

#ifndef TMJX_CONFORMAL_HPP_
#define TMJX_CONFORMAL_HPP_

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tmjx/common.hpp"
#include "tmjx/forest.hpp"

namespace tmjx {

inline constexpr const char* kRapsScoreVersion = "raps-v1";
// tau_hat when the quantile index exceeds the calibration size.
inline constexpr double kTauCap = std::numeric_limits<double>::max();

struct ConformalConfig {
  double alpha = 0.1;
  double lambda_reg = 0.01;
  int k_reg = 1;
  bool randomized = false;
  bool allow_empty_sets = false;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static ConformalConfig from_json(const nlohmann::json& j);
};

struct CalibratedThreshold {
  double tau_hat = kTauCap;
  int n_calib = 0;
  std::string score_definition_version = kRapsScoreVersion;
  double alpha = 0.1;
  double lambda_reg = 0.01;
  int k_reg = 1;
  bool randomized = false;
  // Sorted ascending; kept so the threshold can be recomputed for another
  // alpha without the calibration rows.
  std::vector<double> calib_scores;

  bool capped() const { return tau_hat == kTauCap; }
  nlohmann::json to_json() const;
  static CalibratedThreshold from_json(const nlohmann::json& j);
};

struct PredictionSet {
  std::vector<Label> labels;            // prefix of `order`
  std::array<Label, 2> order{};         // labels by descending probability
  std::array<double, 2> sorted_probs{};  // probabilities in `order`
  int set_size = 0;

  bool contains(Label l) const;
  nlohmann::json to_json() const;
};

// Descending-probability order; an exact tie puts TMJ0 first.
std::array<Label, 2> probability_order(const std::array<double, 2>& probs);

// Throws ValidationError when probs are off the simplex beyond 1e-9.
void check_simplex(const std::array<double, 2>& probs);

double raps_score(const std::array<double, 2>& probs, Label label, const ConformalConfig& cfg,
                  double u = 0.0);

// k-th smallest score with k = ceil((1 - alpha)(n + 1)); kTauCap if k > n.
CalibratedThreshold calibrate_scores(std::vector<double> scores, const ConformalConfig& cfg);

// Scores each calibration row (u drawn from cfg.seed when randomized).
std::vector<double> calibration_scores(const std::vector<std::array<double, 2>>& probs,
                                       const std::vector<Label>& y, const ConformalConfig& cfg);

CalibratedThreshold calibrate(const Forest& forest, const Matrix& x_calib,
                              const std::vector<Label>& y_calib, const ConformalConfig& cfg);

// Rebuilds the threshold for another alpha from the stored scores.
CalibratedThreshold recalibrate(const CalibratedThreshold& t, double alpha);

PredictionSet predict_set_from_proba(const std::array<double, 2>& probs,
                                     const CalibratedThreshold& threshold,
                                     const ConformalConfig& cfg, double u = 0.0);

PredictionSet predict_set(const Forest& forest, const CalibratedThreshold& threshold,
                          std::span<const double> x, const ConformalConfig& cfg, double u = 0.0);

// Throws InvariantError if `set` is not a prefix of its order, or is empty
// while empty sets are disallowed.
void check_prediction_set(const PredictionSet& set, bool allow_empty_sets);

struct SetDiagnostics {
  std::array<double, 2> coverage = {0.0, 0.0};  // conditioned on the true class
  std::array<double, 2> mean_set_size = {0.0, 0.0};
  std::array<std::size_t, 2> count = {0, 0};
  double marginal_coverage = 0.0;
  double mean_set_size_overall = 0.0;

  nlohmann::json to_json() const;
};

SetDiagnostics evaluate_sets(const std::vector<PredictionSet>& sets, const std::vector<Label>& y_true);

}  // namespace tmjx

#endif  // TMJX_CONFORMAL_HPP_
