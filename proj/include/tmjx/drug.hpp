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

#ifndef TMJX_DRUG_HPP_
#define TMJX_DRUG_HPP_

#include <array>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace tmjx {

// Medication grouping. Declaration order is the combination precedence,
// lowest first: a combination resolves to its highest-ranked component.
enum class DrugClass : int {
  kNone = 0,
  kNsaid = 1,
  kCorticosteroid = 2,
  kConventionalDmard = 3,
  kBiologicalDmard = 4,
};

inline constexpr int kNumDrugClasses = 5;

std::string_view drug_class_name(DrugClass c);
DrugClass parse_drug_class(std::string_view name);
const std::array<DrugClass, kNumDrugClasses>& all_drug_classes();

// Raw medication token (single drug or '+'-joined combination) -> class.
class DrugMap {
 public:
  DrugMap() = default;
  explicit DrugMap(std::map<std::string, DrugClass> table);

  const std::map<std::string, DrugClass>& table() const { return table_; }
  std::vector<std::string> tokens() const;

  // Empty token means no medication. Tokens not in the table are split on
  // '+' and resolved by precedence when every component is known. Anything
  // else throws ValidationError when strict, otherwise logs and yields kNone.
  DrugClass classify(std::string_view raw, bool strict = true) const;

  nlohmann::json to_json() const;
  static DrugMap from_json(const nlohmann::json& j);
  static DrugMap load(const std::string& path);

 private:
  std::map<std::string, DrugClass> table_;
};

// The shipped table: 55 distinct medication tokens observed in routine
// JIA care, grouped into the five classes.
const DrugMap& default_drug_map();

inline DrugClass classify_drug(std::string_view raw, const DrugMap& map, bool strict = true) {
  return map.classify(raw, strict);
}

}  // namespace tmjx

#endif  // TMJX_DRUG_HPP_
