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

// Serialized model bundle (schema + encoders + forest + conformal
// threshold) and single-row prediction shared by the CLI and the service.

#ifndef TMJX_MODEL_HPP_
#define TMJX_MODEL_HPP_

#include <array>
#include <string>
#include <vector>

#include "json.hpp"
#include "tmjx/cohort.hpp"
#include "tmjx/conformal.hpp"
#include "tmjx/explain.hpp"
#include "tmjx/forest.hpp"
#include "tmjx/preprocess.hpp"
#include "tmjx/sampling.hpp"

namespace tmjx {

inline constexpr int kModelFormatVersion = 1;

struct TrainedModel {
  FeatureSchema schema;
  StrategyTag strategy;
  std::vector<double> segment_boundaries = kDefaultSegmentBoundaries;
  EncoderState encoder;
  Forest forest;
  ConformalConfig conformal;
  CalibratedThreshold threshold;
  // Training-side facts only (sizes, OOB, tau); never test-partition data.
  nlohmann::json train_report = nlohmann::json::object();
  std::string tool_version = kVersion;

  std::string schema_hash() const { return schema.hash(); }
  std::string train_report_digest() const;
  int previous_exams_required() const { return strategy.blocks() - 1; }

  nlohmann::json to_json() const;
  static TrainedModel from_json(const nlohmann::json& j);
  // Canonical serialization: sorted keys, 2-space indent, trailing newline.
  std::string serialize() const;
  void save(const std::string& path) const;
  static TrainedModel load(const std::string& path);
};

struct ExamInput {
  RawValues values;
  double age_years = 0.0;
};

// One row to score: the current exam plus, for lagged models, the previous
// exams most recent first.
struct PredictInput {
  Gender gender = Gender::kFemale;
  ExamInput current;
  std::vector<ExamInput> previous;
};

struct Prediction {
  std::array<double, 2> probs = {0.0, 0.0};
  Label point = Label::kTmj0;
  PredictionSet set;
  Attribution attribution;
  EncodedRow encoded;
};

SampleRow to_sample_row(const PredictInput& input);

// Encodes, predicts, forms the conformal set and explains. Throws
// InvariantError if the set or attribution breaks its contract.
Prediction predict_one(const TrainedModel& model, const SampleRow& row);

}  // namespace tmjx

#endif  // TMJX_MODEL_HPP_
