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

#include "tmjx/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <functional>
#include <numeric>
#include <set>

#include "gtest/gtest.h"
#include "test_util.hpp"
#include "tmjx/drug.hpp"
#include "tmjx/sampling.hpp"

namespace tmjx {
namespace {

using testing::exam;

// Patients with two exams each; exam values come from the callback.
Cohort hand_cohort(std::size_t n_patients,
                   const std::function<RawValues(std::size_t, int, Label&)>& values_for) {
  Cohort c;
  c.schema = default_schema();
  for (std::size_t i = 0; i < n_patients; ++i) {
    Patient p;
    p.patient_id = "p" + std::to_string(i);
    p.gender = i % 3 == 0 ? Gender::kMale : Gender::kFemale;
    for (int k = 0; k < 2; ++k) {
      Label y = Label::kTmj0;
      RawValues v = values_for(i, k, y);
      p.exams.push_back(exam(p.patient_id, k, y, std::move(v), 8.0 + static_cast<double>(i % 7)));
    }
    c.patients.push_back(std::move(p));
  }
  return c;
}

TEST(Drug, SpecExamples) {
  const DrugMap& m = default_drug_map();
  EXPECT_EQ(m.classify(""), DrugClass::kNone);
  EXPECT_EQ(m.classify("ibuprofen"), DrugClass::kNsaid);
  EXPECT_EQ(m.classify("etanercept+methotrexate"), DrugClass::kBiologicalDmard);
  EXPECT_EQ(m.table().size(), 55u);
}

TEST(Drug, EveryShippedTokenResolvesIdempotently) {
  const DrugMap& m = default_drug_map();
  for (const auto& token : m.tokens()) {
    const DrugClass c = m.classify(token);
    EXPECT_EQ(m.classify(token), c) << token;
    EXPECT_EQ(parse_drug_class(std::string(drug_class_name(c))), c);
  }
}

TEST(Drug, PrecedenceOracle) {
  const DrugMap& m = default_drug_map();
  std::vector<std::string> singles;
  for (const auto& t : m.tokens()) {
    if (t.find('+') == std::string::npos && t != "none") singles.push_back(t);
  }
  ASSERT_GT(singles.size(), 10u);
  for (const auto& a : singles) {
    for (const auto& b : singles) {
      if (a == b) continue;
      const int expect = std::max(static_cast<int>(m.classify(a)), static_cast<int>(m.classify(b)));
      EXPECT_EQ(static_cast<int>(m.classify(a + "+" + b)), expect) << a << "+" << b;
    }
  }
}

TEST(Drug, UnknownTokens) {
  const DrugMap& m = default_drug_map();
  EXPECT_THROW(m.classify("aspirin-x"), ValidationError);
  EXPECT_THROW(m.classify("ibuprofen+aspirin-x"), ValidationError);
  EXPECT_EQ(m.classify("aspirin-x", false), DrugClass::kNone);
  EXPECT_EQ(DrugMap::from_json(m.to_json()).table(), m.table());
}

TEST(MergeSides, SpecExamples) {
  const FeatureSchema s = default_schema();
  RawValues v = {{"krepitationleft", 1.0}, {"krepitationright", 1.0},
                 {"painmoveleft", 0.0},    {"painmoveright", 2.0},
                 {"laterotrusionleftmm", 7.0}, {"laterotrusionrightmm", 5.5},
                 {"overjet", 3.0}};
  const RawValues m = merge_sides(v, s);
  EXPECT_EQ(std::get<double>(m.at("krepitation")), 1.0);
  EXPECT_EQ(std::get<double>(m.at("painmove")), 2.0);
  EXPECT_EQ(std::get<double>(m.at("laterotrusionmm")), 7.0);
  EXPECT_EQ(std::get<double>(m.at("overjet")), 3.0);
  EXPECT_FALSE(m.count("krepitationleft"));
  EXPECT_FALSE(m.count("painmoveright"));
}

TEST(MergeSides, MissingSideDefers) {
  const FeatureSchema s = default_schema();
  const RawValues m = merge_sides({{"painmoveright", 1.0}}, s);
  EXPECT_EQ(std::get<double>(m.at("painmove")), 1.0);
  EXPECT_TRUE(merge_sides({}, s).empty());
}

TEST(MergeSides, CommutesUnderSideSwap) {
  const FeatureSchema s = default_schema();
  SynthesisConfig cfg = default_synthesis_config();
  cfg.n_patients = 50;
  const Cohort c = generate_synthetic_cohort(cfg);
  std::size_t checked = 0;
  for (const auto& p : c.patients) {
    for (const auto& e : p.exams) {
      RawValues swapped;
      for (const auto& [name, v] : e.values) {
        const FeatureSpec& spec = s.at(name);
        swapped[spec.side == Side::kNone ? name : *spec.mirror_of] = v;
      }
      EXPECT_EQ(merge_sides(swapped, s), merge_sides(e.values, s));
      ++checked;
    }
  }
  EXPECT_GT(checked, 100u);
}

TEST(Deviation, BucketAndFallback) {
  std::vector<std::tuple<Gender, double, double>> samples;
  for (int i = 0; i < 5; ++i) samples.emplace_back(Gender::kFemale, 12.3, 45.0);
  for (int i = 0; i < 5; ++i) samples.emplace_back(Gender::kMale, 9.0, 43.0);
  samples.emplace_back(Gender::kMale, 15.5, 44.0);
  // Global mean: (225 + 215 + 44) / 11 = 44.
  const ReferenceTable t = ReferenceTable::fit(samples, 5);
  EXPECT_DOUBLE_EQ(t.global_mean, 44.0);
  EXPECT_DOUBLE_EQ(age_gender_deviation(45.0, Gender::kFemale, 12.9, t), 0.0);
  EXPECT_DOUBLE_EQ(age_gender_deviation(40.0, Gender::kFemale, 12.0, t), -5.0);
  // (male, 15) has one sample, below the minimum.
  EXPECT_DOUBLE_EQ(age_gender_deviation(46.0, Gender::kMale, 15.2, t), 2.0);
  const ReferenceTable back = ReferenceTable::from_json(t.to_json());
  EXPECT_DOUBLE_EQ(back.mean_for(Gender::kMale, 9.99), 43.0);
}

TEST(Encoders, ProfileHasThreeEmbeddings) {
  const std::vector<std::string> cats = {"straight", "convex", "concave"};
  const Cohort c = hand_cohort(60, [&](std::size_t i, int k, Label& y) {
    y = (i + k) % 2 ? Label::kTmj1 : Label::kTmj0;
    return RawValues{{"profile", cats[(i + k) % 3]}, {"overjet", static_cast<double>(i % 5)}};
  });
  const SampleSet rows = make_iid(c, {"profile", "overjet"});
  const EncoderState st = fit_encoders(rows, c.schema);
  EXPECT_EQ(st.label_maps.at("profile").size(), 3u);
  EXPECT_EQ(st.embeddings.at("profile").size(), 3u);
  EXPECT_EQ(st.layout.front().encoding, ColumnEncoding::kEmbedding);
}

TEST(Encoders, ConstantFeatureDropped) {
  const Cohort c = hand_cohort(30, [](std::size_t i, int, Label& y) {
    y = i % 2 ? Label::kTmj1 : Label::kTmj0;
    return RawValues{{"deepbite", 1.0}, {"overjet", static_cast<double>(i)}};
  });
  const EncoderState st = fit_encoders(make_iid(c, {"deepbite", "overjet"}), c.schema);
  EXPECT_EQ(st.dropped, std::vector<std::string>{"deepbite"});
  EXPECT_EQ(st.feature_names(), std::vector<std::string>{"overjet"});
}

TEST(Encoders, EmbeddingFollowsCategoryLabelMeans) {
  // convex: 90% TMJ1, straight: 10% TMJ1.
  const Cohort c = hand_cohort(100, [](std::size_t i, int k, Label& y) {
    const bool convex = i % 2 == 0;
    const std::size_t r = (i / 2 * 2 + static_cast<std::size_t>(k)) % 10;
    y = convex ? (r == 0 ? Label::kTmj0 : Label::kTmj1) : (r == 0 ? Label::kTmj1 : Label::kTmj0);
    return RawValues{{"profile", std::string(convex ? "convex" : "straight")}};
  });
  const EncoderState st = fit_encoders(make_iid(c, {"profile"}), c.schema);
  const auto& emb = st.embeddings.at("profile");
  EXPECT_GT(emb.at("convex"), emb.at("straight"));
}

TEST(Encoders, SingleClassFallsBackToCodes) {
  const std::vector<std::string> cats = {"straight", "convex"};
  const Cohort c = hand_cohort(20, [&](std::size_t i, int, Label& y) {
    y = Label::kTmj0;
    return RawValues{{"profile", cats[i % 2]}};
  });
  const EncoderState st = fit_encoders(make_iid(c, {"profile"}), c.schema);
  EXPECT_EQ(st.layout.front().encoding, ColumnEncoding::kOrdinalCode);
  EXPECT_FALSE(st.warnings.empty());
}

TEST(Encoders, RejectsEmptyAndTargetAdjacent) {
  SampleSet empty;
  EXPECT_THROW(fit_encoders(empty, default_schema()), ValidationError);
  const Cohort c = hand_cohort(4, [](std::size_t, int, Label&) { return RawValues{}; });
  SampleSet rows = make_iid(c, {"overjet"});
  rows.base_features = {kTargetAdjacentFeature};
  EXPECT_THROW(fit_encoders(rows, c.schema), ValidationError);
}

class FittedTransform : public ::testing::Test {
 protected:
  void SetUp() override {
    cohort_ = hand_cohort(80, [](std::size_t i, int k, Label& y) {
      y = (i * 7 + k) % 3 == 0 ? Label::kTmj1 : Label::kTmj0;
      const double a = static_cast<double>((i * 13 + k * 5) % 17);
      return RawValues{{"overjet", a},
                       {"overbite", 2.0 + 0.5 * static_cast<double>((i + k) % 4)},
                       {"openingmm", 38.0 + a},
                       {"painmoveleft", static_cast<double>(i % 3)},
                       {"painmoveright", static_cast<double>(k)},
                       {"profile", std::string(i % 2 ? "convex" : "straight")},
                       {"drug", std::string(i % 4 == 0 ? "methotrexate" : "ibuprofen")}};
    });
    subset_ = {"overjet", "overbite", "openingmm", "painmoveleft", "painmoveright", "profile", "drug"};
    rows_ = make_iid(cohort_, subset_);
    st_ = fit_encoders(rows_, cohort_.schema);
  }
  Cohort cohort_;
  std::vector<std::string> subset_;
  SampleSet rows_;
  EncoderState st_;
};

TEST_F(FittedTransform, TrainColumnsAreStandardized) {
  const Design d = transform(rows_, st_, cohort_.schema);
  ASSERT_EQ(d.x.cols(), 6u);  // painmove merged
  for (std::size_t c = 0; c < d.x.cols(); ++c) {
    double m = 0, ss = 0;
    for (std::size_t r = 0; r < d.x.rows(); ++r) m += d.x(r, c);
    m /= static_cast<double>(d.x.rows());
    for (std::size_t r = 0; r < d.x.rows(); ++r) ss += (d.x(r, c) - m) * (d.x(r, c) - m);
    const double sd = std::sqrt(ss / static_cast<double>(d.x.rows()));
    EXPECT_LT(std::abs(m), 1e-9) << d.feature_names[c];
    EXPECT_LT(std::abs(sd - 1.0), 1e-9) << d.feature_names[c];
  }
}

TEST_F(FittedTransform, PipelineOrderAndNames) {
  EXPECT_EQ(st_.feature_names(),
            (std::vector<std::string>{"overjet", "overbite", "openingmm", "painmove", "profile", "drug"}));
  EXPECT_TRUE(st_.reference_tables.count("openingmm"));
  EXPECT_TRUE(st_.embeddings.at("drug").count("ConventionalDMARD") ||
              st_.label_maps.at("drug").count("ConventionalDMARD"));
}

TEST_F(FittedTransform, MeanRowAndUnseenCategoryMapToZero) {
  double sum = 0;
  for (const auto& r : rows_.rows) sum += std::get<double>(r.blocks[0].values.at("overjet"));
  SampleRow probe = rows_.rows[0];
  probe.blocks[0].values["overjet"] = sum / static_cast<double>(rows_.size());
  probe.blocks[0].values["profile"] = std::string("concave");
  const EncodedRow enc = transform_row(probe, st_, cohort_.schema);
  EXPECT_NEAR(enc.values[0], 0.0, 1e-12);
  EXPECT_EQ(enc.values[4], 0.0);
  probe.blocks[0].values.clear();
  for (double v : transform_row(probe, st_, cohort_.schema).values) EXPECT_EQ(v, 0.0);
}

TEST_F(FittedTransform, JsonRoundTripPreservesTransform) {
  const EncoderState back = EncoderState::from_json(st_.to_json());
  EXPECT_EQ(back.to_json(), st_.to_json());
  const Design a = transform(rows_, st_, cohort_.schema);
  const Design b = transform(rows_, back, cohort_.schema);
  EXPECT_EQ(a.x.data(), b.x.data());
}

TEST_F(FittedTransform, DeterministicFit) {
  EXPECT_EQ(fit_encoders(rows_, cohort_.schema).to_json().dump(), st_.to_json().dump());
}

TEST_F(FittedTransform, TestRowsNeverInfluenceEachOther) {
  const SampleSet test = make_iid(hand_cohort(10, [](std::size_t i, int k, Label& y) {
    y = Label::kTmj0;
    return RawValues{{"overjet", static_cast<double>(i * k)}, {"profile", std::string("concave")}};
  }), subset_);
  const Design full = transform(test, st_, cohort_.schema);
  std::vector<std::size_t> perm(test.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(3);
  std::shuffle(perm.begin(), perm.end(), rng);
  perm.resize(perm.size() / 2);
  const Design part = transform(test.subset(perm), st_, cohort_.schema);
  for (std::size_t r = 0; r < perm.size(); ++r) {
    for (std::size_t c = 0; c < full.x.cols(); ++c) EXPECT_EQ(part.x(r, c), full.x(perm[r], c));
  }
}

TEST(Split, LargestRemainderSizes) {
  EXPECT_EQ(split_sizes(1035, kDefaultSplitFractions), (std::vector<std::size_t>{828, 103, 104}));
  EXPECT_EQ(split_sizes(10, kDefaultSplitFractions), (std::vector<std::size_t>{8, 1, 1}));
  EXPECT_THROW(split_sizes(10, {0.5, 0.6}), ValidationError);
}

TEST(Split, LargestRemainderOracle) {
  // Exact integer apportionment: quota_i = n * w_i / W, leftovers go to the
  // largest remainders, later index first on ties.
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 3 + rng() % 2000;
    const std::vector<std::size_t> w = {1 + rng() % 9, 1 + rng() % 9, 1 + rng() % 9};
    const std::size_t total = w[0] + w[1] + w[2];
    std::vector<std::size_t> expect(3);
    std::vector<std::pair<std::size_t, int>> rem;
    std::size_t used = 0;
    for (int i = 0; i < 3; ++i) {
      expect[i] = n * w[i] / total;
      used += expect[i];
      rem.emplace_back(n * w[i] % total, i);
    }
    std::sort(rem.begin(), rem.end(), [](auto a, auto b) {
      return a.first != b.first ? a.first > b.first : a.second > b.second;
    });
    for (std::size_t k = 0; k < n - used; ++k) ++expect[rem[k].second];
    std::vector<double> fractions;
    for (auto x : w) fractions.push_back(static_cast<double>(x) / static_cast<double>(total));
    EXPECT_EQ(split_sizes(n, fractions), expect) << n;
  }
}

TEST(Split, PatientLevelAndDeterministic) {
  SynthesisConfig cfg = default_synthesis_config();
  const Cohort c = generate_synthetic_cohort(cfg);
  const SplitAssignment a = split_patients(c, kDefaultSplitFractions, 5);
  const SplitAssignment b = split_patients(c, kDefaultSplitFractions, 5);
  EXPECT_EQ(a.train_ids, b.train_ids);
  EXPECT_EQ(a.test_ids, b.test_ids);
  EXPECT_EQ(a.train_ids.size(), 828u);
  EXPECT_EQ(a.calib_ids.size(), 103u);
  EXPECT_EQ(a.test_ids.size(), 104u);
  std::set<std::string> all(a.train_ids.begin(), a.train_ids.end());
  all.insert(a.calib_ids.begin(), a.calib_ids.end());
  all.insert(a.test_ids.begin(), a.test_ids.end());
  EXPECT_EQ(all.size(), 1035u);
  EXPECT_NE(split_patients(c, kDefaultSplitFractions, 6).train_ids, a.train_ids);
}

TEST(Split, TooFewPatients) {
  Cohort c;
  c.schema = default_schema();
  c.patients.push_back(testing::patient_with_times("a", {0, 1}));
  c.patients.push_back(testing::patient_with_times("b", {0, 1}));
  EXPECT_THROW(split_patients(c), ValidationError);
}

}  // namespace
}  // namespace tmjx
