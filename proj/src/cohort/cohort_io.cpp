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
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "spdlog/spdlog.h"
#include "tmjx/cohort.hpp"

namespace tmjx {

namespace {

constexpr const char* kFixedColumns[] = {"patient_id", "gender", "exam_time_years", "age_years",
                                         "label"};
constexpr std::size_t kNumFixed = 5;

std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  if (quoted) {
    throw ValidationError("line " + std::to_string(line_no) + ": unterminated quoted field");
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

[[noreturn]] void fail_at(std::size_t line_no, const std::string& what) {
  throw ValidationError("line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

std::size_t Cohort::record_count() const {
  std::size_t n = 0;
  for (const auto& p : patients) n += p.exams.size();
  return n;
}

const Patient* Cohort::find_patient(std::string_view id) const {
  for (const auto& p : patients) {
    if (p.patient_id == id) return &p;
  }
  return nullptr;
}

void Cohort::validate() const {
  std::set<std::string> ids;
  for (const auto& p : patients) {
    if (!ids.insert(p.patient_id).second) {
      throw ValidationError("duplicate patient '" + p.patient_id + "'");
    }
    const int n = static_cast<int>(p.exams.size());
    if (n < kMinExamsPerPatient || n > kMaxExamsPerPatient) {
      throw ValidationError("patient '" + p.patient_id + "' has " + std::to_string(n) +
                            " exams, expected 2-17");
    }
    for (std::size_t i = 0; i < p.exams.size(); ++i) {
      const auto& e = p.exams[i];
      if (e.patient_id != p.patient_id) {
        throw ValidationError("exam of patient '" + p.patient_id + "' carries id '" +
                              e.patient_id + "'");
      }
      if (!std::isfinite(e.exam_time) || e.exam_time < 0 || !std::isfinite(e.age_at_exam)) {
        throw ValidationError("patient '" + p.patient_id + "' has an invalid exam time or age");
      }
      if (i > 0 && !(e.exam_time > p.exams[i - 1].exam_time)) {
        throw ValidationError("patient '" + p.patient_id +
                              "': exam times not strictly increasing at " +
                              format_real(e.exam_time));
      }
      for (const auto& [name, value] : e.values) validate_raw_value(schema.at(name), value);
    }
  }
}

Cohort read_cohort_csv(std::istream& in, const FeatureSchema& schema, const LoadOptions& opts,
                       LoadStats* stats) {
  LoadStats local;
  LoadStats& st = stats ? *stats : local;
  st = LoadStats{};

  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ValidationError("empty cohort file (no header)");
  ++line_no;
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
  const auto header = split_csv_line(line, line_no);
  if (header.size() < kNumFixed) fail_at(line_no, "header has fewer than 5 columns");
  for (std::size_t i = 0; i < kNumFixed; ++i) {
    if (header[i] != kFixedColumns[i]) {
      fail_at(line_no, "expected column '" + std::string(kFixedColumns[i]) + "', found '" +
                           header[i] + "'");
    }
  }
  std::optional<std::size_t> valid_col;
  std::vector<const FeatureSpec*> columns(header.size(), nullptr);
  std::set<std::string> seen_cols;
  for (std::size_t i = kNumFixed; i < header.size(); ++i) {
    if (!seen_cols.insert(header[i]).second) fail_at(line_no, "duplicate column '" + header[i] + "'");
    if (header[i] == "valid") {
      valid_col = i;
      continue;
    }
    const FeatureSpec* spec = schema.find(header[i]);
    if (spec == nullptr) {
      throw ValidationError("schema violation: unknown feature '" + header[i] + "' in header");
    }
    columns[i] = spec;
  }

  struct Pending {
    Gender gender;
    std::vector<std::pair<ExamRecord, bool>> exams;  // (record, valid)
  };
  std::vector<std::string> order;
  std::map<std::string, Pending> by_patient;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line, line_no);
    if (fields.size() != header.size()) {
      fail_at(line_no, "expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(fields.size()));
    }
    ++st.rows_read;
    ExamRecord rec;
    rec.patient_id = fields[0];
    if (rec.patient_id.empty()) fail_at(line_no, "empty patient_id");
    Gender gender;
    try {
      gender = parse_gender(fields[1]);
    } catch (const ValidationError& e) {
      fail_at(line_no, e.what());
    }
    auto t = parse_real(fields[2]);
    auto age = parse_real(fields[3]);
    if (!t || !std::isfinite(*t) || *t < 0) fail_at(line_no, "bad exam_time_years '" + fields[2] + "'");
    if (!age || !std::isfinite(*age) || *age < 0) fail_at(line_no, "bad age_years '" + fields[3] + "'");
    rec.exam_time = *t;
    rec.age_at_exam = *age;
    if (fields[4] == "0") {
      rec.label = Label::kTmj0;
    } else if (fields[4] == "1") {
      rec.label = Label::kTmj1;
    } else {
      fail_at(line_no, "label must be 0 or 1, found '" + fields[4] + "'");
    }
    bool valid = true;
    if (valid_col) {
      const auto& v = fields[*valid_col];
      if (v == "0") {
        valid = false;
      } else if (v != "1" && !v.empty()) {
        fail_at(line_no, "valid must be 0 or 1");
      }
    }
    for (std::size_t i = kNumFixed; i < fields.size(); ++i) {
      if (columns[i] == nullptr) continue;
      try {
        auto value = parse_raw_value(*columns[i], fields[i], opts.strict);
        if (value) {
          if (const auto* s = std::get_if<std::string>(&*value); s && *s == kUnknownCategory &&
                                                                  fields[i] != kUnknownCategory) {
            ++st.unknown_tokens;
          }
          rec.values.emplace(columns[i]->name, std::move(*value));
        }
      } catch (const ValidationError& e) {
        fail_at(line_no, std::string("schema violation: ") + e.what());
      }
    }
    auto [it, inserted] = by_patient.try_emplace(rec.patient_id, Pending{gender, {}});
    if (inserted) {
      order.push_back(rec.patient_id);
    } else if (it->second.gender != gender) {
      fail_at(line_no, "patient '" + rec.patient_id + "' changes gender");
    }
    it->second.exams.emplace_back(std::move(rec), valid);
  }
  if (st.unknown_tokens > 0) {
    spdlog::warn("{} unknown categorical tokens mapped to {}", st.unknown_tokens, kUnknownCategory);
  }

  Cohort cohort;
  cohort.schema = schema;
  for (const auto& id : order) {
    auto& pending = by_patient.at(id);
    auto& exams = pending.exams;
    std::stable_sort(exams.begin(), exams.end(), [](const auto& a, const auto& b) {
      return a.first.exam_time < b.first.exam_time;
    });
    for (std::size_t i = 1; i < exams.size(); ++i) {
      if (exams[i].first.exam_time == exams[i - 1].first.exam_time) {
        throw ValidationError("ordering violation: patient '" + id + "' has two exams at time " +
                              format_real(exams[i].first.exam_time));
      }
    }
    if (exams.front().first.exam_time != 0.0) {
      throw ValidationError("patient '" + id + "': first exam must be at time 0");
    }
    const int n = static_cast<int>(exams.size());
    if (n < kMinExamsPerPatient || n > kMaxExamsPerPatient) {
      throw ValidationError("patient '" + id + "' has " + std::to_string(n) +
                            " exams, expected 2-17");
    }
    Patient p;
    p.patient_id = id;
    p.gender = pending.gender;
    for (auto& [rec, valid] : exams) {
      if (valid) {
        p.exams.push_back(std::move(rec));
      } else {
        ++st.rows_dropped_invalid;
      }
    }
    // Cleaning may leave a patient below the longitudinal minimum.
    if (static_cast<int>(p.exams.size()) < kMinExamsPerPatient) {
      ++st.patients_dropped_short;
      continue;
    }
    cohort.patients.push_back(std::move(p));
  }
  return cohort;
}

Cohort load_cohort(const std::string& path, const FeatureSchema& schema, const LoadOptions& opts,
                   LoadStats* stats) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open cohort '" + path + "'");
  try {
    return read_cohort_csv(in, schema, opts, stats);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

void write_cohort_csv(std::ostream& out, const Cohort& cohort) {
  const auto& entries = cohort.schema.entries();
  out << "patient_id,gender,exam_time_years,age_years,label";
  for (const auto& e : entries) out << ',' << csv_escape(e.name);
  out << '\n';
  for (const auto& p : cohort.patients) {
    for (const auto& e : p.exams) {
      out << csv_escape(p.patient_id) << ',' << gender_name(p.gender) << ','
          << format_real(e.exam_time) << ',' << format_real(e.age_at_exam) << ','
          << label_index(e.label);
      for (const auto& spec : entries) {
        out << ',';
        auto it = e.values.find(spec.name);
        if (it != e.values.end()) out << csv_escape(raw_value_to_string(it->second));
      }
      out << '\n';
    }
  }
}

void save_cohort(const std::string& path, const Cohort& cohort) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write cohort '" + path + "'");
  write_cohort_csv(out, cohort);
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace tmjx
