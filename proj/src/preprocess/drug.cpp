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

#include "tmjx/drug.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "spdlog/spdlog.h"
#include "tmjx/common.hpp"

namespace tmjx {

namespace {

std::string normalize(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    if (c == ' ' || c == '\t') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

}  // namespace

std::string_view drug_class_name(DrugClass c) {
  switch (c) {
    case DrugClass::kNone: return "None";
    case DrugClass::kNsaid: return "NSAID";
    case DrugClass::kCorticosteroid: return "Corticosteroid";
    case DrugClass::kConventionalDmard: return "ConventionalDMARD";
    case DrugClass::kBiologicalDmard: return "BiologicalDMARD";
  }
  return "None";
}

DrugClass parse_drug_class(std::string_view name) {
  for (DrugClass c : all_drug_classes()) {
    if (drug_class_name(c) == name) return c;
  }
  throw ValidationError("unknown drug class '" + std::string(name) + "'");
}

const std::array<DrugClass, kNumDrugClasses>& all_drug_classes() {
  static const std::array<DrugClass, kNumDrugClasses> kAll = {
      DrugClass::kNone, DrugClass::kNsaid, DrugClass::kCorticosteroid,
      DrugClass::kConventionalDmard, DrugClass::kBiologicalDmard};
  return kAll;
}

DrugMap::DrugMap(std::map<std::string, DrugClass> table) {
  for (auto& [token, cls] : table) table_.emplace(normalize(token), cls);
}

std::vector<std::string> DrugMap::tokens() const {
  std::vector<std::string> out;
  out.reserve(table_.size());
  for (const auto& [token, cls] : table_) out.push_back(token);
  return out;
}

DrugClass DrugMap::classify(std::string_view raw, bool strict) const {
  const std::string token = normalize(raw);
  if (token.empty()) return DrugClass::kNone;
  if (auto it = table_.find(token); it != table_.end()) return it->second;

  DrugClass best = DrugClass::kNone;
  bool resolved = token.find('+') != std::string::npos;
  std::size_t start = 0;
  while (resolved && start <= token.size()) {
    std::size_t end = token.find('+', start);
    if (end == std::string::npos) end = token.size();
    auto it = table_.find(token.substr(start, end - start));
    if (it == table_.end()) {
      resolved = false;
      break;
    }
    best = std::max(best, it->second);
    start = end + 1;
  }
  if (resolved) return best;

  if (strict) throw ValidationError("unmapped drug token '" + std::string(raw) + "'");
  spdlog::warn("unmapped drug token '{}' treated as None", raw);
  return DrugClass::kNone;
}

nlohmann::json DrugMap::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [token, cls] : table_) j[token] = std::string(drug_class_name(cls));
  return j;
}

DrugMap DrugMap::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("drug map must be a JSON object");
  std::map<std::string, DrugClass> table;
  for (const auto& [token, cls] : j.items()) {
    if (!cls.is_string()) throw ValidationError("drug map entry '" + token + "' is not a string");
    table.emplace(token, parse_drug_class(cls.get<std::string>()));
  }
  return DrugMap(std::move(table));
}

DrugMap DrugMap::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open drug map '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("drug map '" + path + "': " + e.what());
  }
  return from_json(j);
}

const DrugMap& default_drug_map() {
  static const DrugMap kMap = [] {
    using D = DrugClass;
    const std::vector<std::string> nsaids = {"ibuprofen", "naproxen",  "diclofenac", "indometacin",
                                             "piroxicam", "meloxicam", "celecoxib"};
    const std::vector<std::string> steroids = {"prednisolone", "methylprednisolone",
                                               "triamcinolone", "dexamethasone"};
    const std::vector<std::string> conventional = {"methotrexate", "sulfasalazine", "leflunomide",
                                                   "hydroxychloroquine", "ciclosporin"};
    const std::vector<std::string> biologicals = {"etanercept", "adalimumab",  "infliximab",
                                                  "tocilizumab", "abatacept",  "anakinra",
                                                  "canakinumab", "golimumab"};
    std::map<std::string, D> t;
    t["none"] = D::kNone;
    for (const auto& d : nsaids) t[d] = D::kNsaid;
    for (const auto& d : steroids) t[d] = D::kCorticosteroid;
    for (const auto& d : conventional) t[d] = D::kConventionalDmard;
    for (const auto& d : biologicals) t[d] = D::kBiologicalDmard;
    for (const auto& d : biologicals) t[d + "+methotrexate"] = D::kBiologicalDmard;
    for (const auto& d : nsaids) t["methotrexate+" + d] = D::kConventionalDmard;
    t["methotrexate+prednisolone"] = D::kConventionalDmard;
    t["methotrexate+triamcinolone"] = D::kConventionalDmard;
    t["naproxen+prednisolone"] = D::kCorticosteroid;
    t["ibuprofen+prednisolone"] = D::kCorticosteroid;
    t["sulfasalazine+naproxen"] = D::kConventionalDmard;
    t["leflunomide+ibuprofen"] = D::kConventionalDmard;
    t["hydroxychloroquine+methotrexate"] = D::kConventionalDmard;
    t["etanercept+methotrexate+naproxen"] = D::kBiologicalDmard;
    t["adalimumab+methotrexate+ibuprofen"] = D::kBiologicalDmard;
    t["tocilizumab+methotrexate+prednisolone"] = D::kBiologicalDmard;
    t["etanercept+prednisolone"] = D::kBiologicalDmard;
    t["adalimumab+naproxen"] = D::kBiologicalDmard;
    t["infliximab+methotrexate+prednisolone"] = D::kBiologicalDmard;
    t["abatacept+methotrexate+naproxen"] = D::kBiologicalDmard;
    t["etanercept+ibuprofen"] = D::kBiologicalDmard;
    return DrugMap(std::move(t));
  }();
  return kMap;
}

}  // namespace tmjx
