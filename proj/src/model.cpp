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

#include "tmjx/model.hpp"

#include <fstream>
#include <sstream>

namespace tmjx {

std::string TrainedModel::train_report_digest() const { return hex64(fnv1a64(train_report.dump())); }

nlohmann::json TrainedModel::to_json() const {
  nlohmann::json j;
  j["format_version"] = kModelFormatVersion;
  j["tool_version"] = tool_version;
  j["schema"] = schema.to_json();
  j["schema_hash"] = schema_hash();
  j["strategy"] = strategy.to_string();
  j["segment_boundaries"] = segment_boundaries;
  j["encoder"] = encoder.to_json();
  j["forest"] = forest.to_json();
  j["conformal"] = conformal.to_json();
  j["threshold"] = threshold.to_json();
  j["train_report"] = train_report;
  return j;
}

TrainedModel TrainedModel::from_json(const nlohmann::json& j) {
  TrainedModel m;
  try {
    if (j.at("format_version").get<int>() != kModelFormatVersion) {
      throw ValidationError("unsupported model format_version");
    }
    m.tool_version = j.at("tool_version").get<std::string>();
    m.schema = FeatureSchema::from_json(j.at("schema"));
    if (j.at("schema_hash").get<std::string>() != m.schema_hash()) {
      throw ValidationError("model schema hash does not match its embedded schema");
    }
    m.strategy = StrategyTag::parse(j.at("strategy").get<std::string>());
    m.segment_boundaries = j.at("segment_boundaries").get<std::vector<double>>();
    m.encoder = EncoderState::from_json(j.at("encoder"));
    m.forest = Forest::from_json(j.at("forest"));
    m.conformal = ConformalConfig::from_json(j.at("conformal"));
    m.threshold = CalibratedThreshold::from_json(j.at("threshold"));
    m.train_report = j.at("train_report");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model file: ") + e.what());
  }
  if (m.encoder.d() != m.forest.d()) throw ValidationError("encoder and forest disagree on d");
  if (m.encoder.blocks != m.strategy.blocks()) {
    throw ValidationError("encoder block count does not match the strategy");
  }
  return m;
}

std::string TrainedModel::serialize() const { return to_json().dump(2) + "\n"; }

void TrainedModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model file " + path);
  out << serialize();
  if (!out) throw IoError("failed writing model file " + path);
}

TrainedModel TrainedModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read model file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("model file " + path + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

SampleRow to_sample_row(const PredictInput& input) {
  SampleRow row;
  row.provenance = {"request", static_cast<int>(input.previous.size())};
  row.gender = input.gender;
  row.blocks.push_back({input.current.age_years, input.current.values});
  for (const auto& prev : input.previous) row.blocks.push_back({prev.age_years, prev.values});
  return row;
}

Prediction predict_one(const TrainedModel& model, const SampleRow& row) {
  Prediction p;
  p.encoded = transform_row(row, model.encoder, model.schema);
  const std::span<const double> x(p.encoded.values);
  p.probs = model.forest.predict_proba(x);
  p.point = label_from_proba(p.probs);
  p.set = predict_set_from_proba(p.probs, model.threshold, model.conformal);
  check_prediction_set(p.set, model.conformal.allow_empty_sets);
  p.attribution = forest_shap(model.forest, x);
  if (!(p.attribution.local_accuracy_gap() <= kLocalAccuracyTol)) {
    throw InvariantError("attribution breaks local accuracy");
  }
  return p;
}

}  // namespace tmjx
