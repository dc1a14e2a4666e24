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

// Longitudinal cohort data model: feature schema, examination records,
// CSV ingestion and the synthetic cohort generator.

#ifndef TMJX_COHORT_HPP_
#define TMJX_COHORT_HPP_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "json.hpp"
#include "tmjx/common.hpp"

namespace tmjx {

enum class FeatureKind : std::uint8_t { kBinary, kOrdinal, kNominal, kContinuous };
enum class Side : std::uint8_t { kNone, kLeft, kRight };

std::string_view kind_name(FeatureKind k);
std::string_view side_name(Side s);

// Category token used for unrecognised nominal values in lenient ingestion.
inline constexpr const char* kUnknownCategory = "__unknown__";

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::kBinary;
  int levels = 2;                       // ordinal only; binary is fixed at 2
  std::vector<std::string> categories;  // nominal only, declared order
  std::string unit;                     // continuous only
  Side side = Side::kNone;
  bool expert = false;
  std::optional<std::string> mirror_of;

  bool is_categorical() const { return kind != FeatureKind::kContinuous; }
  // Index of `token` in `categories`, or -1.
  int category_index(std::string_view token) const;

  friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

// Name of the single feature a left/right mirror pair collapses into: the
// left entry's name with its last "left" removed.
std::string merged_feature_name(const FeatureSpec& left_entry);

class FeatureSchema {
 public:
  FeatureSchema() = default;
  // Validates names, kinds and mirror pairing; throws ValidationError.
  explicit FeatureSchema(std::vector<FeatureSpec> entries);

  const std::vector<FeatureSpec>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const FeatureSpec* find(std::string_view name) const;
  const FeatureSpec& at(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name) != nullptr; }

  std::vector<std::string> all_names() const;
  std::vector<std::string> expert_names() const;

  nlohmann::json to_json() const;
  static FeatureSchema from_json(const nlohmann::json& j);
  static FeatureSchema load(const std::string& path);
  void save(const std::string& path) const;

  // Stable digest of the canonical JSON form.
  std::string hash() const;

  friend bool operator==(const FeatureSchema& a, const FeatureSchema& b) {
    return a.entries_ == b.entries_;
  }

 private:
  std::vector<FeatureSpec> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// The shipped clinical schema: the deduplicated clinical variable list plus
// the expert-only entries, with a completed mirror partner for `painleft`.
FeatureSchema default_schema();

// Feature excluded from every design matrix because it encodes the target.
inline constexpr const char* kTargetAdjacentFeature = "involvementstatus";

// Binary/ordinal levels are held as numbers, nominal tokens as strings,
// continuous measurements as numbers.
using RawValue = std::variant<double, std::string>;
using RawValues = std::map<std::string, RawValue>;

std::string raw_value_to_string(const RawValue& v);
nlohmann::json raw_value_to_json(const RawValue& v);

struct ExamRecord {
  std::string patient_id;
  double exam_time = 0.0;  // years since the patient's first exam
  double age_at_exam = 0.0;
  RawValues values;        // absent key == missing value
  Label label = Label::kTmj0;

  friend bool operator==(const ExamRecord&, const ExamRecord&) = default;
};

struct Patient {
  std::string patient_id;
  Gender gender = Gender::kFemale;
  std::vector<ExamRecord> exams;  // strictly increasing exam_time

  friend bool operator==(const Patient&, const Patient&) = default;
};

inline constexpr int kMinExamsPerPatient = 2;
inline constexpr int kMaxExamsPerPatient = 17;

struct Cohort {
  FeatureSchema schema;
  std::vector<Patient> patients;

  std::size_t record_count() const;
  // Throws ValidationError on any broken cohort invariant.
  void validate() const;
  const Patient* find_patient(std::string_view id) const;
};

// Parses and validates one raw CSV token for `spec`. Empty tokens are
// missing and yield nullopt. Unknown nominal tokens throw when `strict`,
// otherwise map to kUnknownCategory.
std::optional<RawValue> parse_raw_value(const FeatureSpec& spec, std::string_view token,
                                        bool strict);
// Validates an already-typed value (e.g. from a JSON request).
void validate_raw_value(const FeatureSpec& spec, const RawValue& value);

struct LoadOptions {
  bool strict = true;
};

struct LoadStats {
  std::size_t rows_read = 0;
  std::size_t rows_dropped_invalid = 0;     // rows with valid=0
  std::size_t patients_dropped_short = 0;   // < 2 exams left after cleaning
  std::size_t unknown_tokens = 0;
};

// Reads the cohort CSV layout:
//   patient_id,gender,exam_time_years,age_years,label,<feature columns...>
// An optional `valid` column (0/1) marks records to drop during cleaning.
Cohort read_cohort_csv(std::istream& in, const FeatureSchema& schema,
                       const LoadOptions& opts = {}, LoadStats* stats = nullptr);
Cohort load_cohort(const std::string& path, const FeatureSchema& schema,
                   const LoadOptions& opts = {}, LoadStats* stats = nullptr);

void write_cohort_csv(std::ostream& out, const Cohort& cohort);
void save_cohort(const std::string& path, const Cohort& cohort);

struct ExamCountSpec {
  int min = kMinExamsPerPatient;
  int max = kMaxExamsPerPatient;
  double mean = 5.95;  // mean of a Poisson(mean - min) offset, truncated at max
};

struct LabelDynamics {
  double baseline_prevalence = 0.25;
  double onset_hazard_per_year = 0.12;
  bool persistence = true;
};

struct SynthesisConfig {
  int n_patients = 1035;
  double female_fraction = 0.667;
  ExamCountSpec exams_per_patient;
  double horizon_years = 25.0;
  LabelDynamics label_dynamics;
  // Feature name -> shift of the feature's latent score between TMJ0 and
  // TMJ1, in units of the latent noise. A mirror partner without its own
  // entry inherits its partner's effect.
  std::map<std::string, double> signal_spec;
  double side_correlation = 0.8;
  std::uint64_t rng_seed = 7;

  void validate() const;
  nlohmann::json to_json() const;
  static SynthesisConfig from_json(const nlohmann::json& j);
};

// Defaults matched to the clinical cohort statistics (1035 patients, two
// thirds female, 2-17 exams, 25-year horizon) with a moderate signal.
SynthesisConfig default_synthesis_config();
// Strong signal on the expert features; used as an end-to-end smoke target.
SynthesisConfig high_signal_synthesis_config();

Cohort generate_synthetic_cohort(const SynthesisConfig& cfg,
                                 const FeatureSchema& schema = default_schema());

struct CohortSummary {
  std::size_t patients = 0;
  std::size_t records = 0;
  std::size_t female = 0;
  std::size_t male = 0;
  std::map<int, std::size_t> exam_count_histogram;  // exams per patient -> patients
  std::size_t tmj1_records = 0;
  double prevalence = 0.0;  // tmj1_records / records, 0 when empty
  struct Bucket {
    double lower = 0.0;
    double upper = 0.0;  // +inf for the last bucket
    std::size_t records = 0;
    std::size_t tmj1 = 0;
  };
  std::vector<Bucket> prevalence_by_time;  // [0,2), [2,5), [5,inf)

  nlohmann::json to_json() const;
};

CohortSummary cohort_summary(const Cohort& cohort);

}  // namespace tmjx

#endif  // TMJX_COHORT_HPP_
