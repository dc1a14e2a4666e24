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

// Classification metrics, the end-to-end experiment pipeline and the
// strategy comparison harness.

#ifndef TMJX_EVAL_HPP_
#define TMJX_EVAL_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "tmjx/cohort.hpp"
#include "tmjx/conformal.hpp"
#include "tmjx/explain.hpp"
#include "tmjx/forest.hpp"
#include "tmjx/model.hpp"
#include "tmjx/preprocess.hpp"
#include "tmjx/sampling.hpp"

namespace tmjx {

inline constexpr int kReportSchemaVersion = 1;

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
};

// Zero denominators yield 0 and set the matching degenerate flag.
struct PerClassMetrics {
  double precision = 0.0;
  double sensitivity = 0.0;
  double f1 = 0.0;
  Confusion confusion;
  bool precision_degenerate = false;
  bool sensitivity_degenerate = false;
  bool f1_degenerate = false;
};

struct ClassMetrics {
  std::array<PerClassMetrics, 2> per_class;
  double macro_f1 = 0.0;
  std::size_t n = 0;

  nlohmann::json to_json() const;
};

PerClassMetrics metrics_from_confusion(const Confusion& c);
ClassMetrics compute_metrics(const std::vector<Label>& y_true, const std::vector<Label>& y_pred);

struct ExperimentConfig {
  StrategyTag strategy = StrategyTag::iid();
  std::string feature_subset = "expert";
  ForestHyperparams hp;
  ConformalConfig conformal;
  PreprocessOptions preprocess;
  std::vector<double> split_fractions = kDefaultSplitFractions;
  std::uint64_t split_seed = 0;
  // Test rows explained for the SHAP summary; 0 means all.
  std::size_t shap_max_rows = 200;
  int threads = 1;

  nlohmann::json to_json() const;
  // Unknown keys are rejected by name.
  static ExperimentConfig from_json(const nlohmann::json& j);
};

struct ExperimentReport {
  std::string strategy;
  std::size_t n = 0;         // rows in the strategy's sample set
  std::size_t d = 0;         // raw columns of the sample set
  std::size_t d_encoded = 0;  // design-matrix columns after encoding
  std::size_t n_train = 0;
  std::size_t n_calib = 0;
  std::size_t n_test = 0;
  ClassMetrics metrics;
  SetDiagnostics sets;
  double tau_hat = 0.0;
  bool tau_capped = false;
  std::optional<double> oob_accuracy;
  nlohmann::json shap_ranking = nlohmann::json::array();
  nlohmann::json config;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

struct ExperimentResult {
  ExperimentReport report;
  TrainedModel model;
  SummaryData summary;
  std::vector<PredictionSet> test_sets;
  Design test_design;
};

// Row indices of `samples` grouped by the patient partition.
struct PartitionedRows {
  std::vector<std::size_t> train;
  std::vector<std::size_t> calib;
  std::vector<std::size_t> test;
};
PartitionedRows partition_rows(const SampleSet& samples, const SplitAssignment& split);

// split -> encoders (train) -> forest (train) -> calibrate (calib) ->
// evaluate + explain (test). Throws ValidationError("empty segment ...")
// when a partition has no rows.
ExperimentResult run_experiment(const Cohort& cohort, const ExperimentConfig& cfg);

// Scores a trained model on the test partition of `cohort` under `split`.
ExperimentResult evaluate_model(const TrainedModel& model, const Cohort& cohort,
                                const SplitAssignment& split, const ExperimentConfig& cfg);

// A temporal strategy with param < 0 expands to every segment.
std::vector<StrategyTag> expand_strategy(const StrategyTag& tag);

// All configs share the first config's split seed.
std::vector<ExperimentReport> compare_strategies(const Cohort& cohort,
                                                 const std::vector<ExperimentConfig>& configs);

nlohmann::json reports_to_json(const std::vector<ExperimentReport>& reports);
// Plain-text table: Strategy, N, d, Class, Precision, Sensitivity, F1m,
// Coverage, Set size.
std::string render_report_table(const std::vector<ExperimentReport>& reports);

}  // namespace tmjx

#endif  // TMJX_EVAL_HPP_
