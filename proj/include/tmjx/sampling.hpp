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

// Sampling strategies that flatten a longitudinal cohort into rows:
//   iid       one row per examination
//   temporal  rows partitioned by time since the first examination
//   lagged    each row carries the k previous examinations as extra blocks
// Rows keep raw values; encoding happens in preprocess.

#ifndef TMJX_SAMPLING_HPP_
#define TMJX_SAMPLING_HPP_

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "tmjx/cohort.hpp"

namespace tmjx {

struct StrategyTag {
  enum class Kind { kIid, kTemporal, kLagged };
  Kind kind = Kind::kIid;
  int param = 0;  // segment index (temporal) or lag count (lagged)

  static StrategyTag iid() { return {Kind::kIid, 0}; }
  static StrategyTag temporal(int segment) { return {Kind::kTemporal, segment}; }
  static StrategyTag lagged(int k) { return {Kind::kLagged, k}; }

  // Number of examination blocks per row (1 + lag count).
  int blocks() const { return kind == Kind::kLagged ? param + 1 : 1; }
  // "iid", "temporal segment 0", "lagged k=1".
  std::string to_string() const;
  static StrategyTag parse(const std::string& s);

  friend bool operator==(const StrategyTag&, const StrategyTag&) = default;
};

// One examination's values as seen by a sample row.
struct ExamBlock {
  double age_at_exam = 0.0;
  RawValues values;

  friend bool operator==(const ExamBlock&, const ExamBlock&) = default;
};

struct Provenance {
  std::string patient_id;
  int exam_index = 0;

  friend bool operator==(const Provenance&, const Provenance&) = default;
  friend auto operator<=>(const Provenance&, const Provenance&) = default;
};

struct SampleRow {
  Provenance provenance;
  Gender gender = Gender::kFemale;
  double exam_time = 0.0;
  // blocks[0] is the labelled examination, blocks[j] the j-th previous one.
  std::vector<ExamBlock> blocks;
  Label label = Label::kTmj0;

  friend bool operator==(const SampleRow&, const SampleRow&) = default;
};

// Raw-valued sample set. `feature_names` lists the raw columns the rows
// expose: the base feature subset, then the subset suffixed _lag1.._lagk.
struct SampleSet {
  StrategyTag strategy;
  std::vector<std::string> base_features;
  std::vector<std::string> feature_names;
  std::vector<SampleRow> rows;

  std::size_t size() const { return rows.size(); }
  std::size_t d() const { return feature_names.size(); }
  std::vector<Label> labels() const;
  // Throws InvariantError on duplicate provenance or ragged blocks.
  void validate() const;
  SampleSet subset(const std::vector<std::size_t>& indices) const;
};

// Raw feature subset selectors. Both exclude the target-adjacent feature.
std::vector<std::string> all_features(const FeatureSchema& schema);
std::vector<std::string> expert_features(const FeatureSchema& schema);
std::vector<std::string> resolve_feature_subset(const FeatureSchema& schema,
                                                const std::string& selector);

std::string lag_suffix(int lag);

SampleSet make_iid(const Cohort& cohort, const std::vector<std::string>& feature_subset);

struct TemporalSegments {
  std::vector<SampleSet> segments;
  std::size_t clamped = 0;  // exams beyond the last boundary folded into the last segment
};

// Segment s holds exams with exam_time in [b[s-1], b[s]) with b[-1] = 0;
// the last segment is open-ended.
TemporalSegments make_temporal_segments(const Cohort& cohort,
                                        const std::vector<double>& boundaries_years,
                                        const std::vector<std::string>& feature_subset);
inline const std::vector<double> kDefaultSegmentBoundaries = {2.0, 5.0, 15.0};
int temporal_segment_of(double exam_time, const std::vector<double>& boundaries_years);

SampleSet make_lagged(const Cohort& cohort, int k, const std::vector<std::string>& feature_subset);

// Dispatches on `strategy`; the temporal variant returns one segment.
SampleSet make_samples(const Cohort& cohort, const StrategyTag& strategy,
                       const std::vector<std::string>& feature_subset);

// Raw export: __patient_id,__exam_index,label,<feature_names...>.
void write_sample_set_csv(std::ostream& out, const SampleSet& samples);

}  // namespace tmjx

#endif  // TMJX_SAMPLING_HPP_
