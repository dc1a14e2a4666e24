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
#include <map>
#include <set>
#include <sstream>

#include "gtest/gtest.h"
#include "test_util.hpp"

namespace tmjx {
namespace {

using testing::patient_with_times;

Cohort cohort_of(std::vector<Patient> patients) {
  Cohort c;
  c.schema = default_schema();
  c.patients = std::move(patients);
  for (auto& p : c.patients) {
    for (std::size_t i = 0; i < p.exams.size(); ++i) {
      p.exams[i].values["overjet"] = static_cast<double>(i) + 0.5;
      p.exams[i].values["profile"] = std::string(i % 2 ? "convex" : "straight");
    }
  }
  return c;
}

TEST(Subsets, ExpertAndAll) {
  const FeatureSchema s = default_schema();
  const auto expert = expert_features(s);
  EXPECT_EQ(expert.size(), 26u);
  const auto all = all_features(s);
  EXPECT_EQ(all.size(), 91u);
  EXPECT_EQ(std::count(all.begin(), all.end(), kTargetAdjacentFeature), 0);
  EXPECT_EQ(resolve_feature_subset(s, "expert"), expert);
  EXPECT_EQ(resolve_feature_subset(s, "overjet,profile"),
            (std::vector<std::string>{"overjet", "profile"}));
  EXPECT_THROW(resolve_feature_subset(s, "overjet,bogus"), ValidationError);
}

TEST(Iid, OneRowPerExam) {
  const Cohort c = cohort_of({patient_with_times("a", {0, 1, 2}), patient_with_times("b", {0, 1, 2, 3, 4})});
  const SampleSet s = make_iid(c, {"overjet"});
  EXPECT_EQ(s.size(), 8u);
  EXPECT_EQ(s.d(), 1u);
  EXPECT_NO_THROW(s.validate());
  EXPECT_EQ(make_iid(cohort_of({}), {"overjet"}).size(), 0u);
}

TEST(Iid, ExpertWidth) {
  SynthesisConfig cfg = default_synthesis_config();
  cfg.n_patients = 20;
  const Cohort c = generate_synthetic_cohort(cfg);
  const SampleSet s = make_iid(c, expert_features(c.schema));
  EXPECT_EQ(s.d(), 26u);
  EXPECT_EQ(s.size(), c.record_count());
}

TEST(Temporal, BoundaryRule) {
  EXPECT_EQ(temporal_segment_of(0.0, kDefaultSegmentBoundaries), 0);
  EXPECT_EQ(temporal_segment_of(1.9, kDefaultSegmentBoundaries), 0);
  EXPECT_EQ(temporal_segment_of(2.0, kDefaultSegmentBoundaries), 1);
  EXPECT_EQ(temporal_segment_of(4.999, kDefaultSegmentBoundaries), 1);
  EXPECT_EQ(temporal_segment_of(5.0, kDefaultSegmentBoundaries), 2);
  EXPECT_EQ(temporal_segment_of(16.2, kDefaultSegmentBoundaries), 2);
}

TEST(Temporal, ClampCounter) {
  const Cohort c = cohort_of({patient_with_times("a", {0.0, 1.9, 2.0, 16.2})});
  const TemporalSegments t = make_temporal_segments(c, kDefaultSegmentBoundaries, {"overjet"});
  ASSERT_EQ(t.segments.size(), 3u);
  EXPECT_EQ(t.segments[0].size(), 2u);
  EXPECT_EQ(t.segments[1].size(), 1u);
  EXPECT_EQ(t.segments[2].size(), 1u);
  EXPECT_EQ(t.clamped, 1u);
  EXPECT_EQ(t.segments[1].strategy, StrategyTag::temporal(1));
  EXPECT_THROW(make_temporal_segments(c, {5.0, 2.0}, {"overjet"}), ValidationError);
}

TEST(Lagged, RowCounts) {
  const Cohort c = cohort_of({patient_with_times("a", {0, 1, 2}), patient_with_times("b", {0, 1})});
  EXPECT_EQ(make_lagged(c, 1, {"overjet"}).size(), 3u);
  const SampleSet k2 = make_lagged(c, 2, {"overjet"});
  EXPECT_EQ(k2.size(), 1u);
  EXPECT_EQ(k2.rows[0].provenance.patient_id, "a");
  EXPECT_EQ(k2.rows[0].provenance.exam_index, 2);
  EXPECT_THROW(make_lagged(c, 0, {"overjet"}), ValidationError);
}

TEST(Lagged, ColumnNamesAndWidth) {
  const Cohort c = cohort_of({patient_with_times("a", {0, 1, 2})});
  const SampleSet s = make_lagged(c, 2, {"overjet", "profile"});
  EXPECT_EQ(s.feature_names, (std::vector<std::string>{"overjet", "profile", "overjet_lag1", "profile_lag1",
                                                       "overjet_lag2", "profile_lag2"}));
  const auto expert = expert_features(c.schema);
  EXPECT_EQ(make_lagged(c, 1, expert).d(), 52u);
  EXPECT_EQ(make_lagged(c, 2, expert).d(), 78u);
}

TEST(Lagged, BlocksMatchPreviousExams) {
  SynthesisConfig cfg = default_synthesis_config();
  cfg.n_patients = 60;
  const Cohort c = generate_synthetic_cohort(cfg);
  const auto subset = expert_features(c.schema);
  const SampleSet iid = make_iid(c, subset);
  std::map<Provenance, const SampleRow*> by_prov;
  for (const auto& r : iid.rows) by_prov[r.provenance] = &r;
  for (int k = 1; k <= 2; ++k) {
    const SampleSet lag = make_lagged(c, k, subset);
    for (const auto& r : lag.rows) {
      ASSERT_EQ(r.blocks.size(), static_cast<std::size_t>(k + 1));
      EXPECT_EQ(r.label, by_prov.at(r.provenance)->label);
      for (int j = 0; j <= k; ++j) {
        const Provenance prev{r.provenance.patient_id, r.provenance.exam_index - j};
        EXPECT_EQ(r.blocks[j], by_prov.at(prev)->blocks[0]);
      }
    }
  }
}

TEST(Strategy, TagStringsRoundTrip) {
  for (const auto& t : {StrategyTag::iid(), StrategyTag::temporal(0), StrategyTag::temporal(2),
                        StrategyTag::lagged(1), StrategyTag::lagged(2)}) {
    EXPECT_EQ(StrategyTag::parse(t.to_string()), t);
  }
  EXPECT_EQ(StrategyTag::temporal(0).to_string(), "temporal segment 0");
  EXPECT_EQ(StrategyTag::lagged(2).blocks(), 3);
  EXPECT_THROW(StrategyTag::parse("lagged"), ValidationError);
}

TEST(Strategy, DispatchAndSegmentRange) {
  const Cohort c = cohort_of({patient_with_times("a", {0, 3, 6})});
  EXPECT_EQ(make_samples(c, StrategyTag::temporal(1), {"overjet"}).size(), 1u);
  EXPECT_EQ(make_samples(c, StrategyTag::lagged(1), {"overjet"}).size(), 2u);
  EXPECT_THROW(make_samples(c, StrategyTag::temporal(3), {"overjet"}), ValidationError);
}

TEST(SampleSetValidate, DuplicateProvenance) {
  const Cohort c = cohort_of({patient_with_times("a", {0, 1})});
  SampleSet s = make_iid(c, {"overjet"});
  s.rows.push_back(s.rows[0]);
  EXPECT_THROW(s.validate(), InvariantError);
}

TEST(Export, CsvLayout) {
  const Cohort c = cohort_of({patient_with_times("a", {0, 1})});
  std::ostringstream out;
  write_sample_set_csv(out, make_lagged(c, 1, {"overjet", "profile"}));
  EXPECT_EQ(out.str(),
            "__patient_id,__exam_index,label,overjet,profile,overjet_lag1,profile_lag1\n"
            "a,1,0,1.5,convex,0.5,straight\n");
}

}  // namespace
}  // namespace tmjx
