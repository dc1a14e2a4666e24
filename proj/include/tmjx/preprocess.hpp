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

// Feature engineering. Each examination block goes through, in order:
//   drug token -> drug class
//   left/right mirror pairs -> one merged feature (common or highest value)
//   openingmm / protrusionmm -> deviation from the (gender, age) average
//   nominal categories -> scalar entity embedding
//   z-score
// Every statistic is fitted on training rows only.

#ifndef TMJX_PREPROCESS_HPP_
#define TMJX_PREPROCESS_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tmjx/cohort.hpp"
#include "tmjx/common.hpp"
#include "tmjx/drug.hpp"
#include "tmjx/sampling.hpp"

namespace tmjx {

inline constexpr int kEncoderFormatVersion = 1;

// Collapses every mirror pair present in `values` into its merged feature.
// Equal values pass through; otherwise the higher level (ordinal/binary),
// the larger measurement (continuous) or the later declared category
// (nominal) wins. A missing side defers to the other one.
RawValues merge_sides(const RawValues& values, const FeatureSchema& schema);

// Per-(gender, whole year of age) averages of one measurement.
struct ReferenceTable {
  struct Bucket {
    double mean = 0.0;
    std::size_t count = 0;
  };
  std::map<std::pair<int, int>, Bucket> buckets;  // (gender, floor(age))
  double global_mean = 0.0;
  std::size_t min_bucket_count = 5;

  // Bucket mean when the bucket has >= min_bucket_count samples, else the
  // global mean.
  double mean_for(Gender g, double age) const;
  static ReferenceTable fit(const std::vector<std::tuple<Gender, double, double>>& samples,
                            std::size_t min_bucket_count);

  nlohmann::json to_json() const;
  static ReferenceTable from_json(const nlohmann::json& j);
};

double age_gender_deviation(double value, Gender gender, double age, const ReferenceTable& table);

struct PreprocessOptions {
  std::vector<std::string> deviation_features = {"openingmm", "protrusionmm"};
  std::size_t min_bucket_count = 5;
  int embedding_epochs = 200;
  double embedding_step = 0.1;
  double embedding_init_range = 0.01;
  bool strict_drugs = true;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static PreprocessOptions from_json(const nlohmann::json& j);
};

// How a final column is turned into a number before z-scoring.
enum class ColumnEncoding { kNumeric, kEmbedding, kOrdinalCode };

struct LayoutColumn {
  std::string name;                      // final name, lag suffix included
  std::string base;                      // merged/passthrough feature name
  int block = 0;                         // 0 = current exam, j = j-th previous
  FeatureKind kind = FeatureKind::kBinary;
  std::vector<std::string> merged_from;  // raw sources, one or two
  ColumnEncoding encoding = ColumnEncoding::kNumeric;
  std::vector<std::string> categories;   // nominal only, declared order
};

struct EncoderState {
  std::vector<std::string> feature_subset;
  int blocks = 1;
  PreprocessOptions options;
  DrugMap drug_map;
  // Candidate columns before zero-variance filtering; `layout` holds the
  // retained ones in design-matrix order.
  std::vector<LayoutColumn> candidates;
  std::vector<LayoutColumn> layout;
  std::vector<std::string> dropped;
  std::map<std::string, std::map<std::string, int>> label_maps;
  std::map<std::string, std::map<std::string, double>> embeddings;
  std::map<std::string, ReferenceTable> reference_tables;  // per deviation feature
  std::map<std::string, std::pair<double, double>> zscore;  // column -> (mean, sd)
  std::vector<std::string> warnings;

  std::vector<std::string> feature_names() const;
  std::size_t d() const { return layout.size(); }

  nlohmann::json to_json() const;
  static EncoderState from_json(const nlohmann::json& j);
};

EncoderState fit_encoders(const SampleSet& train_rows, const FeatureSchema& schema,
                          const PreprocessOptions& options = {});

// Numeric design matrix aligned with a SampleSet.
struct Design {
  Matrix x;
  std::vector<Label> y;
  std::vector<std::string> feature_names;
  std::vector<Provenance> provenance;
  StrategyTag strategy;
};

Design transform(const SampleSet& rows, const EncoderState& encoder, const FeatureSchema& schema);

// Per-column intermediate values for one row: the merged raw value (or
// missing) and the final z-scored number.
struct EncodedRow {
  std::vector<double> values;
  std::vector<std::optional<RawValue>> merged_raw;
};
EncodedRow transform_row(const SampleRow& row, const EncoderState& encoder,
                         const FeatureSchema& schema);

struct SplitAssignment {
  std::vector<std::string> train_ids;
  std::vector<std::string> calib_ids;
  std::vector<std::string> test_ids;
  std::uint64_t seed = 0;
};

// Largest-remainder apportionment of n units; ties in the fractional part
// go to the later partition.
std::vector<std::size_t> split_sizes(std::size_t n, const std::vector<double>& fractions);

// Shuffles [0, n) with `seed` and cuts it into split_sizes(n, fractions).
std::vector<std::vector<std::size_t>> split_units(std::size_t n, const std::vector<double>& fractions,
                                                  std::uint64_t seed);

inline const std::vector<double> kDefaultSplitFractions = {0.8, 0.1, 0.1};

// Patient-level split: all exams of one patient land in one partition.
SplitAssignment split_patients(const Cohort& cohort,
                               const std::vector<double>& fractions = kDefaultSplitFractions,
                               std::uint64_t seed = 0);

}  // namespace tmjx

#endif  // TMJX_PREPROCESS_HPP_
