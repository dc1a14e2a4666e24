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

#include "tmjx/cohort.hpp"

#include <cmath>
#include <sstream>

#include "gtest/gtest.h"
#include "test_util.hpp"

namespace tmjx {
namespace {

using testing::exam;
using testing::patient_with_times;

std::string two_patient_csv() {
  return "patient_id,gender,exam_time_years,age_years,label,krepitationleft,krepitationright,profile,openingmm\n"
         "p1,female,0,9.5,0,0,0,straight,44.5\n"
         "p1,female,1.25,10.75,1,1,0,convex,41\n"
         "p2,male,0,12,0,,,,\n"
         "p2,male,0.5,12.5,0,0,1,concave,47.25\n"
         "p2,male,3,15,1,1,1,straight,39\n";
}

TEST(Schema, DefaultShape) {
  const FeatureSchema s = default_schema();
  EXPECT_EQ(s.size(), 92u);
  EXPECT_EQ(s.expert_names().size(), 26u);
  EXPECT_TRUE(s.contains("involvementstatus"));
  for (const auto& e : s.entries()) {
    if (e.side == Side::kNone) continue;
    ASSERT_TRUE(e.mirror_of.has_value()) << e.name;
    const FeatureSpec& partner = s.at(*e.mirror_of);
    EXPECT_EQ(partner.mirror_of.value(), e.name);
    EXPECT_EQ(partner.kind, e.kind);
    EXPECT_NE(partner.side, e.side);
  }
}

TEST(Schema, JsonRoundTripAndHash) {
  const FeatureSchema s = default_schema();
  const FeatureSchema back = FeatureSchema::from_json(s.to_json());
  EXPECT_EQ(back, s);
  EXPECT_EQ(back.hash(), s.hash());
  auto entries = s.entries();
  entries.pop_back();
  EXPECT_NE(FeatureSchema(entries).hash(), s.hash());
}

TEST(Schema, RejectsBrokenMirror) {
  FeatureSpec l{.name = "xleft", .side = Side::kLeft, .mirror_of = "xright"};
  EXPECT_THROW(FeatureSchema({l}), ValidationError);
  FeatureSpec dup{.name = "a"};
  EXPECT_THROW(FeatureSchema({dup, dup}), ValidationError);
}

TEST(Schema, MergedName) {
  const FeatureSchema s = default_schema();
  EXPECT_EQ(merged_feature_name(s.at("krepitationleft")), "krepitation");
  EXPECT_EQ(merged_feature_name(s.at("laterotrusionleftmm")), "laterotrusionmm");
}

TEST(CohortCsv, TwoPatients) {
  std::istringstream in(two_patient_csv());
  const Cohort c = read_cohort_csv(in, default_schema());
  ASSERT_EQ(c.patients.size(), 2u);
  EXPECT_EQ(c.patients[0].exams.size(), 2u);
  EXPECT_EQ(c.patients[1].exams.size(), 3u);
  EXPECT_EQ(c.patients[1].gender, Gender::kMale);
  EXPECT_TRUE(c.patients[1].exams[0].values.empty());
  EXPECT_EQ(std::get<std::string>(c.patients[0].exams[1].values.at("profile")), "convex");
  EXPECT_EQ(std::get<double>(c.patients[0].exams[1].values.at("openingmm")), 41.0);
  EXPECT_EQ(c.patients[0].exams[1].label, Label::kTmj1);
}

TEST(CohortCsv, UnknownFeatureNamed) {
  std::istringstream in("patient_id,gender,exam_time_years,age_years,label,nonexistent\n"
                        "p1,female,0,9,0,1\n");
  try {
    read_cohort_csv(in, default_schema());
    FAIL() << "expected a schema violation";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("nonexistent"), std::string::npos);
  }
}

TEST(CohortCsv, DuplicateExamTimeIsOrderingViolation) {
  std::istringstream in("patient_id,gender,exam_time_years,age_years,label\n"
                        "p1,female,0,9,0\n"
                        "p1,female,0,9,0\n");
  try {
    read_cohort_csv(in, default_schema());
    FAIL() << "expected an ordering violation";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("ordering violation"), std::string::npos);
  }
}

TEST(CohortCsv, BadTokenReportsLine) {
  std::istringstream in("patient_id,gender,exam_time_years,age_years,label,krepitationleft\n"
                        "p1,female,0,9,0,1\n"
                        "p1,female,1,10,0,7\n");
  try {
    read_cohort_csv(in, default_schema());
    FAIL();
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("krepitationleft"), std::string::npos) << msg;
  }
}

TEST(CohortCsv, LenientUnknownCategory) {
  std::istringstream in("patient_id,gender,exam_time_years,age_years,label,profile\n"
                        "p1,female,0,9,0,weird\n"
                        "p1,female,1,10,0,convex\n");
  LoadStats stats;
  const Cohort c = read_cohort_csv(in, default_schema(), {.strict = false}, &stats);
  EXPECT_EQ(stats.unknown_tokens, 1u);
  EXPECT_EQ(std::get<std::string>(c.patients[0].exams[0].values.at("profile")), kUnknownCategory);
  std::istringstream strict_in("patient_id,gender,exam_time_years,age_years,label,profile\n"
                               "p1,female,0,9,0,weird\n"
                               "p1,female,1,10,0,convex\n");
  EXPECT_THROW(read_cohort_csv(strict_in, default_schema()), ValidationError);
}

TEST(CohortCsv, ValidColumnDropsRows) {
  std::istringstream in("patient_id,gender,exam_time_years,age_years,label,valid\n"
                        "p1,female,0,9,0,1\n"
                        "p1,female,1,10,0,1\n"
                        "p2,female,0,9,0,1\n"
                        "p2,female,1,10,0,0\n");
  LoadStats stats;
  const Cohort c = read_cohort_csv(in, default_schema(), {}, &stats);
  EXPECT_EQ(stats.rows_dropped_invalid, 1u);
  EXPECT_EQ(stats.patients_dropped_short, 1u);
  ASSERT_EQ(c.patients.size(), 1u);
}

TEST(CohortCsv, SaveLoadRoundTrip) {
  SynthesisConfig cfg = default_synthesis_config();
  cfg.n_patients = 40;
  const Cohort c = generate_synthetic_cohort(cfg);
  std::stringstream buf;
  write_cohort_csv(buf, c);
  const Cohort back = read_cohort_csv(buf, c.schema);
  ASSERT_EQ(back.patients.size(), c.patients.size());
  for (std::size_t i = 0; i < c.patients.size(); ++i) {
    const auto& a = c.patients[i];
    const auto& b = back.patients[i];
    ASSERT_EQ(a.exams.size(), b.exams.size());
    EXPECT_EQ(a.gender, b.gender);
    for (std::size_t k = 0; k < a.exams.size(); ++k) {
      EXPECT_EQ(a.exams[k].label, b.exams[k].label);
      EXPECT_NEAR(a.exams[k].exam_time, b.exams[k].exam_time, 1e-12);
      EXPECT_EQ(a.exams[k].values.size(), b.exams[k].values.size());
      for (const auto& [name, v] : a.exams[k].values) {
        const RawValue& w = b.exams[k].values.at(name);
        if (const auto* s = std::get_if<std::string>(&v)) {
          EXPECT_EQ(*s, std::get<std::string>(w));
        } else {
          EXPECT_NEAR(std::get<double>(v), std::get<double>(w), 1e-12);
        }
      }
    }
  }
  EXPECT_EQ(back.patients, c.patients);
}

TEST(CohortValidate, RejectsTooFewExams) {
  Cohort c;
  c.schema = default_schema();
  c.patients.push_back(patient_with_times("a", {0.0}));
  EXPECT_THROW(c.validate(), ValidationError);
  c.patients[0] = patient_with_times("a", {0.0, 1.0});
  EXPECT_NO_THROW(c.validate());
}

TEST(Generator, DefaultCohortShape) {
  const SynthesisConfig cfg = default_synthesis_config();
  EXPECT_EQ(cfg.n_patients, 1035);
  EXPECT_EQ(cfg.rng_seed, 7u);
  const Cohort c = generate_synthetic_cohort(cfg);
  const CohortSummary s = cohort_summary(c);
  EXPECT_EQ(s.patients, 1035u);
  EXPECT_NEAR(static_cast<double>(s.female), 690.0, 1.0);
  EXPECT_GE(s.records, 2u * 1035u);
  EXPECT_LE(s.records, 17u * 1035u);
  for (const auto& p : c.patients) {
    EXPECT_GE(p.exams.size(), 2u);
    EXPECT_LE(p.exams.size(), 17u);
    EXPECT_EQ(p.exams.front().exam_time, 0.0);
    for (std::size_t k = 1; k < p.exams.size(); ++k) {
      EXPECT_GT(p.exams[k].exam_time, p.exams[k - 1].exam_time);
      // Persistence: TMJ1 never reverts.
      if (p.exams[k - 1].label == Label::kTmj1) EXPECT_EQ(p.exams[k].label, Label::kTmj1);
    }
    EXPECT_LE(p.exams.back().exam_time, cfg.horizon_years);
  }
  EXPECT_NO_THROW(c.validate());
}

TEST(Generator, Deterministic) {
  SynthesisConfig cfg = default_synthesis_config();
  cfg.n_patients = 60;
  EXPECT_EQ(generate_synthetic_cohort(cfg).patients, generate_synthetic_cohort(cfg).patients);
  SynthesisConfig other = cfg;
  other.rng_seed = 8;
  EXPECT_NE(generate_synthetic_cohort(cfg).patients, generate_synthetic_cohort(other).patients);
}

TEST(Generator, DegenerateDynamicsAllNegative) {
  SynthesisConfig cfg = default_synthesis_config();
  cfg.n_patients = 200;
  cfg.label_dynamics.baseline_prevalence = 0.0;
  cfg.label_dynamics.onset_hazard_per_year = 0.0;
  const CohortSummary s = cohort_summary(generate_synthetic_cohort(cfg));
  EXPECT_EQ(s.tmj1_records, 0u);
  EXPECT_EQ(s.prevalence, 0.0);
}

TEST(Generator, SignalAndSideCorrelation) {
  const Cohort c = generate_synthetic_cohort(default_synthesis_config());
  double sum[2] = {0, 0};
  double n[2] = {0, 0};
  double sl = 0, sr = 0, sll = 0, srr = 0, slr = 0, m = 0;
  for (const auto& p : c.patients) {
    for (const auto& e : p.exams) {
      const int y = label_index(e.label);
      // First exams only: later exams confound the label with age growth.
      auto it = e.values.find("openingmm");
      if (e.exam_time == 0.0 && it != e.values.end()) {
        sum[y] += std::get<double>(it->second);
        n[y] += 1;
      }
      auto l = e.values.find("laterotrusionleftmm");
      auto r = e.values.find("laterotrusionrightmm");
      if (l != e.values.end() && r != e.values.end()) {
        const double a = std::get<double>(l->second);
        const double b = std::get<double>(r->second);
        sl += a; sr += b; sll += a * a; srr += b * b; slr += a * b; m += 1;
      }
    }
  }
  // openingmm carries a negative effect.
  EXPECT_LT(sum[1] / n[1], sum[0] / n[0]);
  const double cov = slr / m - (sl / m) * (sr / m);
  const double corr = cov / std::sqrt((sll / m - sl * sl / (m * m)) * (srr / m - sr * sr / (m * m)));
  EXPECT_GT(corr, 0.5);
}

TEST(Generator, InvalidConfig) {
  SynthesisConfig cfg = default_synthesis_config();
  cfg.n_patients = -1;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = default_synthesis_config();
  cfg.exams_per_patient.min = 5;
  cfg.exams_per_patient.max = 3;
  EXPECT_THROW(cfg.validate(), ValidationError);
  EXPECT_THROW(SynthesisConfig::from_json({{"n_patiens", 3}}), ValidationError);
  try {
    SynthesisConfig::from_json({{"female_fraction", "lots"}});
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("female_fraction"), std::string::npos);
  }
}

TEST(Generator, ConfigJsonRoundTrip) {
  const SynthesisConfig cfg = high_signal_synthesis_config();
  const SynthesisConfig back = SynthesisConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.to_json(), cfg.to_json());
}

TEST(Summary, HandCohort) {
  Cohort c;
  c.schema = default_schema();
  Patient p;
  p.patient_id = "a";
  p.exams = {exam("a", 0.0, Label::kTmj0), exam("a", 1.0, Label::kTmj0), exam("a", 3.0, Label::kTmj1)};
  c.patients.push_back(p);
  const CohortSummary s = cohort_summary(c);
  EXPECT_EQ(s.patients, 1u);
  EXPECT_EQ(s.records, 3u);
  EXPECT_EQ(s.female, 1u);
  EXPECT_DOUBLE_EQ(s.prevalence, 1.0 / 3.0);
  EXPECT_EQ(s.exam_count_histogram.at(3), 1u);
  EXPECT_EQ(s.prevalence_by_time[0].records, 2u);
  EXPECT_EQ(s.prevalence_by_time[1].tmj1, 1u);
}

TEST(Summary, EmptyCohort) {
  const CohortSummary s = cohort_summary(Cohort{});
  EXPECT_EQ(s.patients, 0u);
  EXPECT_EQ(s.records, 0u);
  EXPECT_EQ(s.prevalence, 0.0);
  EXPECT_TRUE(s.exam_count_histogram.empty());
}

}  // namespace
}  // namespace tmjx
