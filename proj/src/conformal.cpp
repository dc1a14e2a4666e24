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

#include "tmjx/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace tmjx {

namespace {

constexpr double kSimplexTol = 1e-9;

double rank_penalty(const ConformalConfig& cfg, int rank) {
  return cfg.lambda_reg * std::max(0, rank - cfg.k_reg);
}

void check_compatible(const CalibratedThreshold& t, const ConformalConfig& cfg) {
  if (t.score_definition_version != kRapsScoreVersion || t.lambda_reg != cfg.lambda_reg ||
      t.k_reg != cfg.k_reg || t.randomized != cfg.randomized) {
    throw ValidationError("conformal threshold was calibrated with a different score definition (" +
                          t.score_definition_version + ")");
  }
}

}  // namespace

void ConformalConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must be in (0, 1)");
  if (!(lambda_reg >= 0.0) || !std::isfinite(lambda_reg)) {
    throw ValidationError("lambda_reg must be a finite value >= 0");
  }
  if (k_reg < 0) throw ValidationError("k_reg must be >= 0");
}

nlohmann::json ConformalConfig::to_json() const {
  return {{"alpha", alpha},
          {"lambda_reg", lambda_reg},
          {"k_reg", k_reg},
          {"randomized", randomized},
          {"allow_empty_sets", allow_empty_sets},
          {"seed", seed}};
}

ConformalConfig ConformalConfig::from_json(const nlohmann::json& j) {
  ConformalConfig cfg;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "alpha") {
        cfg.alpha = value.get<double>();
      } else if (key == "lambda_reg") {
        cfg.lambda_reg = value.get<double>();
      } else if (key == "k_reg") {
        cfg.k_reg = value.get<int>();
      } else if (key == "randomized") {
        cfg.randomized = value.get<bool>();
      } else if (key == "allow_empty_sets") {
        cfg.allow_empty_sets = value.get<bool>();
      } else if (key == "seed") {
        cfg.seed = value.get<std::uint64_t>();
      } else {
        throw ValidationError("unknown conformal field '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed conformal config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

nlohmann::json CalibratedThreshold::to_json() const {
  return {{"tau_hat", tau_hat},
          {"capped", capped()},
          {"n_calib", n_calib},
          {"score_definition_version", score_definition_version},
          {"alpha", alpha},
          {"lambda_reg", lambda_reg},
          {"k_reg", k_reg},
          {"randomized", randomized},
          {"calib_scores", calib_scores}};
}

CalibratedThreshold CalibratedThreshold::from_json(const nlohmann::json& j) {
  CalibratedThreshold t;
  try {
    t.tau_hat = j.at("capped").get<bool>() ? kTauCap : j.at("tau_hat").get<double>();
    t.n_calib = j.at("n_calib").get<int>();
    t.score_definition_version = j.at("score_definition_version").get<std::string>();
    t.alpha = j.at("alpha").get<double>();
    t.lambda_reg = j.at("lambda_reg").get<double>();
    t.k_reg = j.at("k_reg").get<int>();
    t.randomized = j.at("randomized").get<bool>();
    t.calib_scores = j.at("calib_scores").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed conformal threshold: ") + e.what());
  }
  if (t.n_calib < 1) throw ValidationError("conformal threshold has n_calib < 1");
  if (!std::isfinite(t.tau_hat)) throw ValidationError("conformal threshold is not finite");
  return t;
}

bool PredictionSet::contains(Label l) const {
  return std::find(labels.begin(), labels.end(), l) != labels.end();
}

nlohmann::json PredictionSet::to_json() const {
  nlohmann::json names = nlohmann::json::array();
  for (Label l : labels) names.push_back(label_name(l));
  return {{"labels", names},
          {"set_size", set_size},
          {"order", {label_name(order[0]), label_name(order[1])}},
          {"sorted_probs", sorted_probs}};
}

std::array<Label, 2> probability_order(const std::array<double, 2>& probs) {
  if (probs[1] > probs[0]) return {Label::kTmj1, Label::kTmj0};
  return {Label::kTmj0, Label::kTmj1};
}

void check_simplex(const std::array<double, 2>& probs) {
  for (double p : probs) {
    if (!std::isfinite(p) || p < -kSimplexTol || p > 1.0 + kSimplexTol) {
      throw ValidationError("class probabilities are off the simplex");
    }
  }
  if (std::abs(probs[0] + probs[1] - 1.0) > kSimplexTol) {
    throw ValidationError("class probabilities do not sum to 1");
  }
}

double raps_score(const std::array<double, 2>& probs, Label label, const ConformalConfig& cfg,
                  double u) {
  check_simplex(probs);
  const auto order = probability_order(probs);
  double cumulative = 0.0;
  for (int r = 1; r <= 2; ++r) {
    const double p = probs[label_index(order[r - 1])];
    cumulative += p;
    if (order[r - 1] == label) {
      const double jitter = cfg.randomized ? u * p : 0.0;
      return std::max(0.0, cumulative + rank_penalty(cfg, r) - jitter);
    }
  }
  throw ValidationError("invalid label");
}

CalibratedThreshold calibrate_scores(std::vector<double> scores, const ConformalConfig& cfg) {
  cfg.validate();
  if (scores.empty()) throw ValidationError("empty calibration set");
  std::sort(scores.begin(), scores.end());
  const std::size_t n = scores.size();
  double q = (1.0 - cfg.alpha) * static_cast<double>(n + 1);
  // Snap products that are integral up to rounding noise.
  if (std::abs(q - std::round(q)) < 1e-9) q = std::round(q);
  const auto k = static_cast<std::size_t>(std::ceil(q));
  CalibratedThreshold t;
  t.tau_hat = (k > n) ? kTauCap : scores[std::max<std::size_t>(k, 1) - 1];
  t.n_calib = static_cast<int>(n);
  t.alpha = cfg.alpha;
  t.lambda_reg = cfg.lambda_reg;
  t.k_reg = cfg.k_reg;
  t.randomized = cfg.randomized;
  t.calib_scores = std::move(scores);
  return t;
}

std::vector<double> calibration_scores(const std::vector<std::array<double, 2>>& probs,
                                       const std::vector<Label>& y, const ConformalConfig& cfg) {
  if (probs.size() != y.size()) throw ValidationError("calibration probabilities and labels differ in length");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> scores(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double u = cfg.randomized ? unit(rng) : 0.0;
    scores[i] = raps_score(probs[i], y[i], cfg, u);
  }
  return scores;
}

CalibratedThreshold calibrate(const Forest& forest, const Matrix& x_calib,
                              const std::vector<Label>& y_calib, const ConformalConfig& cfg) {
  if (x_calib.rows() == 0) throw ValidationError("empty calibration set");
  if (x_calib.rows() != y_calib.size()) throw ValidationError("calibration rows and labels differ in length");
  std::vector<std::array<double, 2>> probs(x_calib.rows());
  for (std::size_t i = 0; i < x_calib.rows(); ++i) probs[i] = forest.predict_proba(x_calib.row(i));
  return calibrate_scores(calibration_scores(probs, y_calib, cfg), cfg);
}

CalibratedThreshold recalibrate(const CalibratedThreshold& t, double alpha) {
  if (t.calib_scores.empty()) throw ValidationError("threshold carries no calibration scores");
  ConformalConfig cfg;
  cfg.alpha = alpha;
  cfg.lambda_reg = t.lambda_reg;
  cfg.k_reg = t.k_reg;
  cfg.randomized = t.randomized;
  auto out = calibrate_scores(t.calib_scores, cfg);
  out.score_definition_version = t.score_definition_version;
  return out;
}

PredictionSet predict_set_from_proba(const std::array<double, 2>& probs,
                                     const CalibratedThreshold& threshold,
                                     const ConformalConfig& cfg, double u) {
  check_compatible(threshold, cfg);
  check_simplex(probs);
  PredictionSet set;
  set.order = probability_order(probs);
  set.sorted_probs = {probs[label_index(set.order[0])], probs[label_index(set.order[1])]};
  const double tau = threshold.tau_hat;
  double cumulative = 0.0;
  for (int r = 1; r <= 2; ++r) {
    const double p = set.sorted_probs[r - 1];
    cumulative += p;
    const double s = cumulative + rank_penalty(cfg, r);
    bool include = false;
    if (cfg.randomized) {
      include = s - u * p <= tau;
    } else {
      // Include the rank while the mass ahead of it is below tau, or its own
      // score fits under tau.
      include = (s - p < tau) || (s <= tau);
    }
    if (!include) break;
    set.labels.push_back(set.order[r - 1]);
  }
  if (set.labels.empty() && !cfg.allow_empty_sets) set.labels.push_back(set.order[0]);
  set.set_size = static_cast<int>(set.labels.size());
  return set;
}

PredictionSet predict_set(const Forest& forest, const CalibratedThreshold& threshold,
                          std::span<const double> x, const ConformalConfig& cfg, double u) {
  return predict_set_from_proba(forest.predict_proba(x), threshold, cfg, u);
}

void check_prediction_set(const PredictionSet& set, bool allow_empty_sets) {
  if (set.set_size != static_cast<int>(set.labels.size())) {
    throw InvariantError("prediction set size does not match its labels");
  }
  if (set.labels.size() > 2) throw InvariantError("prediction set has more than two labels");
  for (std::size_t i = 0; i < set.labels.size(); ++i) {
    if (set.labels[i] != set.order[i]) {
      throw InvariantError("prediction set is not a prefix of the probability ordering");
    }
  }
  if (set.labels.empty() && !allow_empty_sets) throw InvariantError("empty prediction set");
}

nlohmann::json SetDiagnostics::to_json() const {
  nlohmann::json per_class = nlohmann::json::object();
  for (int c = 0; c < 2; ++c) {
    per_class[label_name(label_from_index(c))] = {{"coverage", coverage[c]},
                                                  {"mean_set_size", mean_set_size[c]},
                                                  {"count", count[c]}};
  }
  return {{"per_class", per_class},
          {"marginal_coverage", marginal_coverage},
          {"mean_set_size", mean_set_size_overall}};
}

SetDiagnostics evaluate_sets(const std::vector<PredictionSet>& sets, const std::vector<Label>& y_true) {
  if (sets.size() != y_true.size()) throw ValidationError("prediction sets and labels differ in length");
  SetDiagnostics d;
  std::array<std::size_t, 2> covered = {0, 0};
  std::array<std::size_t, 2> size_sum = {0, 0};
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const int c = label_index(y_true[i]);
    ++d.count[c];
    if (sets[i].contains(y_true[i])) ++covered[c];
    size_sum[c] += sets[i].labels.size();
  }
  const std::size_t n = sets.size();
  for (int c = 0; c < 2; ++c) {
    if (d.count[c] == 0) continue;
    d.coverage[c] = static_cast<double>(covered[c]) / static_cast<double>(d.count[c]);
    d.mean_set_size[c] = static_cast<double>(size_sum[c]) / static_cast<double>(d.count[c]);
  }
  if (n > 0) {
    d.marginal_coverage = static_cast<double>(covered[0] + covered[1]) / static_cast<double>(n);
    d.mean_set_size_overall = static_cast<double>(size_sum[0] + size_sum[1]) / static_cast<double>(n);
  }
  return d;
}

}  // namespace tmjx
