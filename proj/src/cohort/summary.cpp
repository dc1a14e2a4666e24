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

#include <cmath>
#include <limits>

#include "tmjx/cohort.hpp"

namespace tmjx {

CohortSummary cohort_summary(const Cohort& cohort) {
  CohortSummary s;
  const double inf = std::numeric_limits<double>::infinity();
  s.prevalence_by_time = {{0.0, 2.0, 0, 0}, {2.0, 5.0, 0, 0}, {5.0, inf, 0, 0}};
  for (const auto& p : cohort.patients) {
    ++s.patients;
    (p.gender == Gender::kFemale ? s.female : s.male) += 1;
    ++s.exam_count_histogram[static_cast<int>(p.exams.size())];
    for (const auto& e : p.exams) {
      ++s.records;
      const bool positive = e.label == Label::kTmj1;
      if (positive) ++s.tmj1_records;
      for (auto& b : s.prevalence_by_time) {
        if (e.exam_time >= b.lower && e.exam_time < b.upper) {
          ++b.records;
          if (positive) ++b.tmj1;
          break;
        }
      }
    }
  }
  s.prevalence = s.records == 0 ? 0.0 : static_cast<double>(s.tmj1_records) / s.records;
  return s;
}

nlohmann::json CohortSummary::to_json() const {
  nlohmann::json j;
  j["patients"] = patients;
  j["records"] = records;
  j["female"] = female;
  j["male"] = male;
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [count, n] : exam_count_histogram) hist[std::to_string(count)] = n;
  j["exam_count_histogram"] = hist;
  j["tmj1_records"] = tmj1_records;
  j["prevalence"] = prevalence;
  nlohmann::json buckets = nlohmann::json::array();
  for (const auto& b : prevalence_by_time) {
    buckets.push_back({{"lower_years", b.lower},
                       {"upper_years", std::isinf(b.upper) ? nlohmann::json(nullptr)
                                                           : nlohmann::json(b.upper)},
                       {"records", b.records},
                       {"tmj1", b.tmj1},
                       {"prevalence", b.records ? static_cast<double>(b.tmj1) / b.records : 0.0}});
  }
  j["prevalence_by_time"] = buckets;
  return j;
}

}  // namespace tmjx
