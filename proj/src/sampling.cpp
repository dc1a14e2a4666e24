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

#include "tmjx/sampling.hpp"

#include <algorithm>
#include <ostream>
#include <set>

#include "spdlog/spdlog.h"

namespace tmjx {

namespace {

ExamBlock block_of(const ExamRecord& rec, const std::vector<std::string>& subset) {
  ExamBlock b;
  b.age_at_exam = rec.age_at_exam;
  for (const auto& name : subset) {
    if (auto it = rec.values.find(name); it != rec.values.end()) b.values.emplace(name, it->second);
  }
  return b;
}

SampleRow row_of(const Patient& p, std::size_t exam_index, int lags,
                 const std::vector<std::string>& subset) {
  SampleRow row;
  row.provenance = {p.patient_id, static_cast<int>(exam_index)};
  row.gender = p.gender;
  row.exam_time = p.exams[exam_index].exam_time;
  row.label = p.exams[exam_index].label;
  for (int j = 0; j <= lags; ++j) row.blocks.push_back(block_of(p.exams[exam_index - j], subset));
  return row;
}

void check_subset(const FeatureSchema& schema, const std::vector<std::string>& subset) {
  std::set<std::string> seen;
  for (const auto& name : subset) {
    if (!schema.contains(name)) throw ValidationError("unknown feature '" + name + "' in subset");
    if (!seen.insert(name).second) throw ValidationError("feature '" + name + "' listed twice");
  }
}

std::vector<std::string> lagged_names(const std::vector<std::string>& base, int lags) {
  std::vector<std::string> out;
  for (int j = 0; j <= lags; ++j) {
    for (const auto& name : base) out.push_back(name + lag_suffix(j));
  }
  return out;
}

}  // namespace

std::string StrategyTag::to_string() const {
  switch (kind) {
    case Kind::kIid: return "iid";
    case Kind::kTemporal: return "temporal segment " + std::to_string(param);
    case Kind::kLagged: return "lagged k=" + std::to_string(param);
  }
  return "iid";
}

StrategyTag StrategyTag::parse(const std::string& s) {
  if (s == "iid") return iid();
  const std::string temporal_prefix = "temporal segment ";
  const std::string lagged_prefix = "lagged k=";
  try {
    if (s.rfind(temporal_prefix, 0) == 0) return temporal(std::stoi(s.substr(temporal_prefix.size())));
    if (s.rfind(lagged_prefix, 0) == 0) return lagged(std::stoi(s.substr(lagged_prefix.size())));
  } catch (const std::exception&) {
  }
  throw ValidationError("unknown strategy tag '" + s + "'");
}

std::vector<Label> SampleSet::labels() const {
  std::vector<Label> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.label);
  return out;
}

void SampleSet::validate() const {
  std::set<Provenance> seen;
  const std::size_t blocks = static_cast<std::size_t>(strategy.blocks());
  if (feature_names.size() != base_features.size() * blocks) {
    throw InvariantError("sample set feature names do not match block layout");
  }
  for (const auto& r : rows) {
    if (!seen.insert(r.provenance).second) {
      throw InvariantError("duplicate row for patient '" + r.provenance.patient_id + "' exam " +
                           std::to_string(r.provenance.exam_index));
    }
    if (r.blocks.size() != blocks) throw InvariantError("sample row has the wrong block count");
  }
}

SampleSet SampleSet::subset(const std::vector<std::size_t>& indices) const {
  SampleSet out;
  out.strategy = strategy;
  out.base_features = base_features;
  out.feature_names = feature_names;
  out.rows.reserve(indices.size());
  for (std::size_t i : indices) out.rows.push_back(rows.at(i));
  return out;
}

std::vector<std::string> all_features(const FeatureSchema& schema) {
  std::vector<std::string> out;
  for (const auto& e : schema.entries()) {
    if (e.name != kTargetAdjacentFeature) out.push_back(e.name);
  }
  return out;
}

std::vector<std::string> expert_features(const FeatureSchema& schema) {
  std::vector<std::string> out;
  for (const auto& e : schema.entries()) {
    if (e.expert && e.name != kTargetAdjacentFeature) out.push_back(e.name);
  }
  return out;
}

std::vector<std::string> resolve_feature_subset(const FeatureSchema& schema,
                                                const std::string& selector) {
  if (selector == "all") return all_features(schema);
  if (selector == "expert") return expert_features(schema);
  // Comma-separated explicit list.
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= selector.size()) {
    std::size_t end = selector.find(',', start);
    if (end == std::string::npos) end = selector.size();
    if (end > start) out.push_back(selector.substr(start, end - start));
    start = end + 1;
  }
  check_subset(schema, out);
  if (out.empty()) throw ValidationError("empty feature subset '" + selector + "'");
  return out;
}

std::string lag_suffix(int lag) { return lag == 0 ? std::string() : "_lag" + std::to_string(lag); }

SampleSet make_iid(const Cohort& cohort, const std::vector<std::string>& feature_subset) {
  check_subset(cohort.schema, feature_subset);
  SampleSet out;
  out.strategy = StrategyTag::iid();
  out.base_features = feature_subset;
  out.feature_names = feature_subset;
  for (const auto& p : cohort.patients) {
    for (std::size_t i = 0; i < p.exams.size(); ++i) out.rows.push_back(row_of(p, i, 0, feature_subset));
  }
  return out;
}

int temporal_segment_of(double exam_time, const std::vector<double>& boundaries_years) {
  const int last = static_cast<int>(boundaries_years.size()) - 1;
  for (int s = 0; s < last; ++s) {
    if (exam_time < boundaries_years[s]) return s;
  }
  return last;
}

TemporalSegments make_temporal_segments(const Cohort& cohort,
                                        const std::vector<double>& boundaries_years,
                                        const std::vector<std::string>& feature_subset) {
  if (boundaries_years.empty()) throw ValidationError("no segment boundaries given");
  for (std::size_t i = 0; i < boundaries_years.size(); ++i) {
    if (!(boundaries_years[i] > (i == 0 ? 0.0 : boundaries_years[i - 1]))) {
      throw ValidationError("segment boundaries must be positive and strictly increasing");
    }
  }
  check_subset(cohort.schema, feature_subset);
  TemporalSegments out;
  out.segments.resize(boundaries_years.size());
  for (std::size_t s = 0; s < out.segments.size(); ++s) {
    out.segments[s].strategy = StrategyTag::temporal(static_cast<int>(s));
    out.segments[s].base_features = feature_subset;
    out.segments[s].feature_names = feature_subset;
  }
  for (const auto& p : cohort.patients) {
    for (std::size_t i = 0; i < p.exams.size(); ++i) {
      const double t = p.exams[i].exam_time;
      if (t >= boundaries_years.back()) ++out.clamped;
      const int s = temporal_segment_of(t, boundaries_years);
      out.segments[s].rows.push_back(row_of(p, i, 0, feature_subset));
    }
  }
  if (out.clamped > 0) {
    spdlog::info("{} exams beyond {} years folded into the last segment", out.clamped,
                 boundaries_years.back());
  }
  return out;
}

SampleSet make_lagged(const Cohort& cohort, int k, const std::vector<std::string>& feature_subset) {
  if (k < 1) throw ValidationError("lag count must be >= 1");
  check_subset(cohort.schema, feature_subset);
  SampleSet out;
  out.strategy = StrategyTag::lagged(k);
  out.base_features = feature_subset;
  out.feature_names = lagged_names(feature_subset, k);
  for (const auto& p : cohort.patients) {
    for (std::size_t i = static_cast<std::size_t>(k); i < p.exams.size(); ++i) {
      out.rows.push_back(row_of(p, i, k, feature_subset));
    }
  }
  return out;
}

SampleSet make_samples(const Cohort& cohort, const StrategyTag& strategy,
                       const std::vector<std::string>& feature_subset) {
  switch (strategy.kind) {
    case StrategyTag::Kind::kIid:
      return make_iid(cohort, feature_subset);
    case StrategyTag::Kind::kLagged:
      return make_lagged(cohort, strategy.param, feature_subset);
    case StrategyTag::Kind::kTemporal: {
      const int n = static_cast<int>(kDefaultSegmentBoundaries.size());
      if (strategy.param < 0 || strategy.param >= n) {
        throw ValidationError("temporal segment must be in [0, " + std::to_string(n - 1) + "]");
      }
      auto segs = make_temporal_segments(cohort, kDefaultSegmentBoundaries, feature_subset);
      return std::move(segs.segments[strategy.param]);
    }
  }
  throw InvariantError("unhandled strategy");
}

void write_sample_set_csv(std::ostream& out, const SampleSet& samples) {
  out << "__patient_id,__exam_index,label";
  for (const auto& name : samples.feature_names) out << ',' << name;
  out << '\n';
  for (const auto& r : samples.rows) {
    out << r.provenance.patient_id << ',' << r.provenance.exam_index << ','
        << label_index(r.label);
    for (const auto& block : r.blocks) {
      for (const auto& name : samples.base_features) {
        out << ',';
        if (auto it = block.values.find(name); it != block.values.end()) {
          out << raw_value_to_string(it->second);
        }
      }
    }
    out << '\n';
  }
}

}  // namespace tmjx
