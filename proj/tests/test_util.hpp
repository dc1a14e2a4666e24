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

#ifndef TMJX_TESTS_TEST_UTIL_HPP_
#define TMJX_TESTS_TEST_UTIL_HPP_

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tmjx/cohort.hpp"

namespace tmjx::testing {

// Fresh, empty scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const std::filesystem::path p = std::filesystem::path(TMJX_TEST_TMP) / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

inline ExamRecord exam(const std::string& id, double t, Label label, RawValues values = {},
                       double age = 10.0) {
  ExamRecord e;
  e.patient_id = id;
  e.exam_time = t;
  e.age_at_exam = age + t;
  e.values = std::move(values);
  e.label = label;
  return e;
}

// Patient with exams at the given times, all TMJ0 and otherwise empty.
inline Patient patient_with_times(const std::string& id, const std::vector<double>& times,
                                  Gender g = Gender::kFemale) {
  Patient p;
  p.patient_id = id;
  p.gender = g;
  for (double t : times) p.exams.push_back(exam(id, t, Label::kTmj0));
  return p;
}

}  // namespace tmjx::testing

#endif  // TMJX_TESTS_TEST_UTIL_HPP_
