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
#include <cstdio>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include "spdlog/spdlog.h"
#include "tmjx/eval.hpp"

namespace tmjx {

namespace {

constexpr std::uint64_t kShapSampleStream = 0x5AA9;
constexpr std::uint64_t kConformalDrawStream = 1;

// Overlays `patch` on `base`, rejecting keys `base` does not have.
nlohmann::json overlay(const nlohmann::json& base, const nlohmann::json& patch, const std::string& where) {
  if (!patch.is_object()) throw ValidationError(where + " must be a JSON object");
  nlohmann::json out = base;
  for (const auto& [key, value] : patch.items()) {
    if (!base.contains(key)) throw ValidationError("unknown field '" + key + "' in " + where);
    out[key] = value;
  }
  return out;
}

StrategyTag parse_strategy_spec(const std::string& s) {
  if (s == "temporal") return StrategyTag::temporal(-1);
  return StrategyTag::parse(s);
}

std::string strategy_spec(const StrategyTag& t) {
  if (t.kind == StrategyTag::Kind::kTemporal && t.param < 0) return "temporal";
  return t.to_string();
}

std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

// Evaluates `model` on the given rows and fills the test-side report.
void evaluate_rows(const TrainedModel& model, const SampleSet& test_rows, const ExperimentConfig& cfg,
                   ExperimentResult& result) {
  ExperimentReport& rep = result.report;
  result.test_design = transform(test_rows, model.encoder, model.schema);
  const Design& test = result.test_design;
  rep.n_test = test.x.rows();

  std::mt19937_64 rng(substream_seed(model.conformal.seed, kConformalDrawStream));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Label> pred(test.x.rows());
  result.test_sets.clear();
  result.test_sets.reserve(test.x.rows());
  for (std::size_t i = 0; i < test.x.rows(); ++i) {
    const auto probs = model.forest.predict_proba(test.x.row(i));
    pred[i] = label_from_proba(probs);
    const double u = model.conformal.randomized ? unit(rng) : 0.0;
    auto set = predict_set_from_proba(probs, model.threshold, model.conformal, u);
    check_prediction_set(set, model.conformal.allow_empty_sets);
    result.test_sets.push_back(std::move(set));
  }
  rep.metrics = compute_metrics(test.y, pred);
  rep.sets = evaluate_sets(result.test_sets, test.y);
  for (int c = 0; c < 2; ++c) {
    const auto& m = rep.metrics.per_class[c];
    if (m.precision_degenerate || m.sensitivity_degenerate) {
      rep.warnings.push_back(std::string("degenerate metrics for class ") +
                             std::string(label_name(label_from_index(c))));
    }
  }

  // SHAP summary on a seeded subsample of the test rows.
  std::vector<std::size_t> rows(test.x.rows());
  std::iota(rows.begin(), rows.end(), 0);
  if (cfg.shap_max_rows > 0 && rows.size() > cfg.shap_max_rows) {
    std::mt19937_64 pick(substream_seed(cfg.split_seed, kShapSampleStream));
    std::shuffle(rows.begin(), rows.end(), pick);
    rows.resize(cfg.shap_max_rows);
    std::sort(rows.begin(), rows.end());
  }
  result.summary = summarize(model.forest, test.x.select_rows(rows), cfg.threads);
  result.summary.row_index = rows;
  rep.shap_ranking = result.summary.to_json().at("ranking");
}

ExperimentReport base_report(const SampleSet& samples, const TrainedModel& model, const ExperimentConfig& cfg,
                             const PartitionedRows& parts) {
  ExperimentReport rep;
  rep.strategy = samples.strategy.to_string();
  rep.n = samples.size();
  rep.d = samples.d();
  rep.d_encoded = model.encoder.d();
  rep.n_train = parts.train.size();
  rep.n_calib = parts.calib.size();
  rep.tau_hat = model.threshold.tau_hat;
  rep.tau_capped = model.threshold.capped();
  rep.oob_accuracy = model.forest.oob_estimate();
  rep.config = cfg.to_json();
  rep.config["strategy"] = samples.strategy.to_string();
  rep.config.erase("threads");
  rep.warnings = model.encoder.warnings;
  return rep;
}

void require_rows(const PartitionedRows& parts, const StrategyTag& strategy) {
  const auto check = [&](const std::vector<std::size_t>& rows, const char* name) {
    if (rows.empty()) {
      throw ValidationError("empty segment: strategy '" + strategy.to_string() + "' has no " + name + " rows");
    }
  };
  check(parts.train, "training");
  check(parts.calib, "calibration");
  check(parts.test, "test");
}

}  // namespace

nlohmann::json ExperimentConfig::to_json() const {
  return {{"strategy", strategy_spec(strategy)},
          {"feature_subset", feature_subset},
          {"hyperparams", hp.to_json()},
          {"conformal", conformal.to_json()},
          {"preprocess", preprocess.to_json()},
          {"split_fractions", split_fractions},
          {"split_seed", split_seed},
          {"shap_max_rows", shap_max_rows},
          {"threads", threads}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  const ExperimentConfig defaults;
  const nlohmann::json merged = overlay(defaults.to_json(), j, "experiment config");
  ExperimentConfig cfg;
  try {
    cfg.strategy = parse_strategy_spec(merged.at("strategy").get<std::string>());
    cfg.feature_subset = merged.at("feature_subset").get<std::string>();
    cfg.hp = ForestHyperparams::from_json(
        overlay(defaults.hp.to_json(), merged.at("hyperparams"), "hyperparams"));
    cfg.conformal = ConformalConfig::from_json(merged.at("conformal"));
    cfg.preprocess = PreprocessOptions::from_json(
        overlay(defaults.preprocess.to_json(), merged.at("preprocess"), "preprocess"));
    cfg.split_fractions = merged.at("split_fractions").get<std::vector<double>>();
    cfg.split_seed = merged.at("split_seed").get<std::uint64_t>();
    cfg.shap_max_rows = merged.at("shap_max_rows").get<std::size_t>();
    cfg.threads = merged.at("threads").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed experiment config: ") + e.what());
  }
  if (cfg.threads < 1) throw ValidationError("threads must be >= 1");
  return cfg;
}

nlohmann::json ExperimentReport::to_json() const {
  nlohmann::json per_class = nlohmann::json::object();
  for (int c = 0; c < 2; ++c) {
    const auto& m = metrics.per_class[c];
    per_class[label_name(label_from_index(c))] = {{"precision", m.precision},
                                                  {"sensitivity", m.sensitivity},
                                                  {"f1", m.f1},
                                                  {"coverage", sets.coverage[c]},
                                                  {"set_size", sets.mean_set_size[c]},
                                                  {"support", sets.count[c]}};
  }
  return {{"schema_version", kReportSchemaVersion},
          {"strategy", strategy},
          {"N", n},
          {"d", d},
          {"d_encoded", d_encoded},
          {"n_train", n_train},
          {"n_calib", n_calib},
          {"n_test", n_test},
          {"per_class", per_class},
          {"macro_f1", metrics.macro_f1},
          {"metrics", metrics.to_json()},
          {"conformal", sets.to_json()},
          {"tau_hat", tau_hat},
          {"tau_capped", tau_capped},
          {"oob_accuracy", oob_accuracy ? nlohmann::json(*oob_accuracy) : nlohmann::json(nullptr)},
          {"shap_ranking", shap_ranking},
          {"config", config},
          {"warnings", warnings}};
}

PartitionedRows partition_rows(const SampleSet& samples, const SplitAssignment& split) {
  std::unordered_map<std::string, int> where;
  for (const auto& id : split.train_ids) where[id] = 0;
  for (const auto& id : split.calib_ids) where[id] = 1;
  for (const auto& id : split.test_ids) where[id] = 2;
  PartitionedRows parts;
  for (std::size_t i = 0; i < samples.rows.size(); ++i) {
    const auto it = where.find(samples.rows[i].provenance.patient_id);
    if (it == where.end()) {
      throw ValidationError("patient '" + samples.rows[i].provenance.patient_id + "' is not in the split");
    }
    (it->second == 0 ? parts.train : it->second == 1 ? parts.calib : parts.test).push_back(i);
  }
  return parts;
}

ExperimentResult run_experiment(const Cohort& cohort, const ExperimentConfig& cfg) {
  cfg.hp.validate();
  cfg.conformal.validate();
  const SplitAssignment split = split_patients(cohort, cfg.split_fractions, cfg.split_seed);
  const auto subset = resolve_feature_subset(cohort.schema, cfg.feature_subset);
  const SampleSet samples = make_samples(cohort, cfg.strategy, subset);
  const PartitionedRows parts = partition_rows(samples, split);
  require_rows(parts, cfg.strategy);

  const SampleSet train_rows = samples.subset(parts.train);
  const SampleSet calib_rows = samples.subset(parts.calib);

  TrainedModel model;
  model.schema = cohort.schema;
  model.strategy = cfg.strategy;
  model.conformal = cfg.conformal;
  model.encoder = fit_encoders(train_rows, cohort.schema, cfg.preprocess);
  const Design train = transform(train_rows, model.encoder, cohort.schema);
  const Design calib = transform(calib_rows, model.encoder, cohort.schema);
  model.forest = fit_forest(train.x, train.y, cfg.hp, train.feature_names, cfg.threads);
  model.threshold = calibrate(model.forest, calib.x, calib.y, cfg.conformal);
  model.train_report = {{"strategy", cfg.strategy.to_string()},
                        {"n_train", parts.train.size()},
                        {"n_calib", parts.calib.size()},
                        {"d", samples.d()},
                        {"d_encoded", model.encoder.d()},
                        {"split_seed", cfg.split_seed},
                        {"split_fractions", cfg.split_fractions},
                        {"forest_seed", cfg.hp.seed},
                        {"oob_accuracy", model.forest.oob_estimate() ? nlohmann::json(*model.forest.oob_estimate())
                                                                     : nlohmann::json(nullptr)},
                        {"tau_hat", model.threshold.tau_hat},
                        {"tau_capped", model.threshold.capped()}};

  ExperimentResult result;
  result.report = base_report(samples, model, cfg, parts);
  evaluate_rows(model, samples.subset(parts.test), cfg, result);
  result.model = std::move(model);
  return result;
}

ExperimentResult evaluate_model(const TrainedModel& model, const Cohort& cohort, const SplitAssignment& split,
                                const ExperimentConfig& cfg) {
  if (cohort.schema.hash() != model.schema_hash()) {
    throw ValidationError("cohort schema does not match the model's schema");
  }
  const SampleSet samples = make_samples(cohort, model.strategy, model.encoder.feature_subset);
  const PartitionedRows parts = partition_rows(samples, split);
  if (parts.test.empty()) {
    throw ValidationError("empty segment: strategy '" + model.strategy.to_string() + "' has no test rows");
  }
  ExperimentResult result;
  result.report = base_report(samples, model, cfg, parts);
  evaluate_rows(model, samples.subset(parts.test), cfg, result);
  result.model = model;
  return result;
}

std::vector<StrategyTag> expand_strategy(const StrategyTag& tag) {
  if (tag.kind == StrategyTag::Kind::kTemporal && tag.param < 0) {
    std::vector<StrategyTag> out;
    for (std::size_t s = 0; s < kDefaultSegmentBoundaries.size(); ++s) {
      out.push_back(StrategyTag::temporal(static_cast<int>(s)));
    }
    return out;
  }
  return {tag};
}

std::vector<ExperimentReport> compare_strategies(const Cohort& cohort, const std::vector<ExperimentConfig>& configs) {
  if (configs.empty()) throw ValidationError("compare_strategies needs at least one config");
  const std::uint64_t shared_seed = configs.front().split_seed;
  std::vector<ExperimentReport> out;
  for (const auto& base : configs) {
    for (const auto& tag : expand_strategy(base.strategy)) {
      ExperimentConfig cfg = base;
      cfg.strategy = tag;
      cfg.split_seed = shared_seed;
      spdlog::info("running experiment: {}", tag.to_string());
      out.push_back(run_experiment(cohort, cfg).report);
    }
  }
  return out;
}

nlohmann::json reports_to_json(const std::vector<ExperimentReport>& reports) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) arr.push_back(r.to_json());
  return {{"schema_version", kReportSchemaVersion}, {"tool_version", kVersion}, {"reports", arr}};
}

std::string render_report_table(const std::vector<ExperimentReport>& reports) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-22s %6s %4s  %-5s %9s %11s %7s %8s %8s\n", "Strategy", "N", "d", "Class",
                "Precision", "Sensitivity", "F1m", "Coverage", "Set size");
  out << line << std::string(88, '-') << '\n';
  for (const auto& r : reports) {
    for (int c = 0; c < 2; ++c) {
      const auto& m = r.metrics.per_class[c];
      const bool first = c == 0;
      std::snprintf(line, sizeof(line), "%-22s %6s %4s  %-5s %9s %11s %7s %8s %8s\n", first ? r.strategy.c_str() : "",
                    first ? std::to_string(r.n).c_str() : "", first ? std::to_string(r.d).c_str() : "",
                    std::string(label_name(label_from_index(c))).c_str(), fmt4(m.precision).c_str(),
                    fmt4(m.sensitivity).c_str(), first ? fmt4(r.metrics.macro_f1).c_str() : "",
                    fmt4(r.sets.coverage[c]).c_str(), fmt4(r.sets.mean_set_size[c]).c_str());
      out << line;
    }
  }
  return out.str();
}

}  // namespace tmjx
