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
#include <set>

#include "tmjx/cohort.hpp"
#include "tmjx/drug.hpp"

namespace tmjx {

std::string_view kind_name(FeatureKind k) {
  switch (k) {
    case FeatureKind::kBinary: return "binary";
    case FeatureKind::kOrdinal: return "ordinal";
    case FeatureKind::kNominal: return "nominal";
    case FeatureKind::kContinuous: return "continuous";
  }
  return "binary";
}

std::string_view side_name(Side s) {
  switch (s) {
    case Side::kNone: return "none";
    case Side::kLeft: return "left";
    case Side::kRight: return "right";
  }
  return "none";
}

namespace {

FeatureKind parse_kind(const std::string& s) {
  if (s == "binary") return FeatureKind::kBinary;
  if (s == "ordinal") return FeatureKind::kOrdinal;
  if (s == "nominal") return FeatureKind::kNominal;
  if (s == "continuous") return FeatureKind::kContinuous;
  throw ValidationError("unknown feature kind '" + s + "'");
}

Side parse_side(const std::string& s) {
  if (s == "none") return Side::kNone;
  if (s == "left") return Side::kLeft;
  if (s == "right") return Side::kRight;
  throw ValidationError("unknown feature side '" + s + "'");
}

bool same_kind(const FeatureSpec& a, const FeatureSpec& b) {
  return a.kind == b.kind && a.levels == b.levels && a.categories == b.categories &&
         a.unit == b.unit;
}

}  // namespace

int FeatureSpec::category_index(std::string_view token) const {
  for (std::size_t i = 0; i < categories.size(); ++i) {
    if (categories[i] == token) return static_cast<int>(i);
  }
  return -1;
}

std::string merged_feature_name(const FeatureSpec& left_entry) {
  const std::size_t pos = left_entry.name.rfind("left");
  if (pos == std::string::npos) return left_entry.name;
  return left_entry.name.substr(0, pos) + left_entry.name.substr(pos + 4);
}

FeatureSchema::FeatureSchema(std::vector<FeatureSpec> entries) : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto& e = entries_[i];
    if (e.name.empty()) throw ValidationError("schema entry " + std::to_string(i) + " has no name");
    if (!index_.emplace(e.name, i).second) {
      throw ValidationError("duplicate schema feature '" + e.name + "'");
    }
    switch (e.kind) {
      case FeatureKind::kBinary:
        e.levels = 2;
        break;
      case FeatureKind::kOrdinal:
        if (e.levels < 2) throw ValidationError("ordinal feature '" + e.name + "' needs >= 2 levels");
        break;
      case FeatureKind::kNominal: {
        if (e.categories.empty()) {
          throw ValidationError("nominal feature '" + e.name + "' declares no categories");
        }
        std::set<std::string> seen(e.categories.begin(), e.categories.end());
        if (seen.size() != e.categories.size()) {
          throw ValidationError("nominal feature '" + e.name + "' repeats a category");
        }
        break;
      }
      case FeatureKind::kContinuous:
        break;
    }
  }
  for (const auto& e : entries_) {
    if (e.side == Side::kNone) {
      if (e.mirror_of) throw ValidationError("unsided feature '" + e.name + "' has a mirror_of");
      continue;
    }
    if (!e.mirror_of) throw ValidationError("sided feature '" + e.name + "' lacks mirror_of");
    const FeatureSpec* partner = find(*e.mirror_of);
    if (partner == nullptr) {
      throw ValidationError("feature '" + e.name + "' mirrors unknown '" + *e.mirror_of + "'");
    }
    const Side want = e.side == Side::kLeft ? Side::kRight : Side::kLeft;
    if (partner->side != want || partner->mirror_of != e.name) {
      throw ValidationError("mirror pair '" + e.name + "'/'" + partner->name + "' is not reciprocal");
    }
    if (!same_kind(e, *partner)) {
      throw ValidationError("mirror pair '" + e.name + "'/'" + partner->name + "' differs in kind");
    }
  }
}

const FeatureSpec* FeatureSchema::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : &entries_[it->second];
}

const FeatureSpec& FeatureSchema::at(std::string_view name) const {
  const FeatureSpec* spec = find(name);
  if (spec == nullptr) throw ValidationError("unknown feature '" + std::string(name) + "'");
  return *spec;
}

std::vector<std::string> FeatureSchema::all_names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

std::vector<std::string> FeatureSchema::expert_names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) {
    if (e.expert) out.push_back(e.name);
  }
  return out;
}

nlohmann::json FeatureSchema::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : entries_) {
    nlohmann::json j;
    j["name"] = e.name;
    j["kind"] = std::string(kind_name(e.kind));
    if (e.kind == FeatureKind::kOrdinal) j["levels"] = e.levels;
    if (e.kind == FeatureKind::kNominal) j["categories"] = e.categories;
    if (e.kind == FeatureKind::kContinuous) j["unit"] = e.unit;
    j["side"] = std::string(side_name(e.side));
    j["expert"] = e.expert;
    j["mirror_of"] = e.mirror_of ? nlohmann::json(*e.mirror_of) : nlohmann::json(nullptr);
    arr.push_back(std::move(j));
  }
  return arr;
}

FeatureSchema FeatureSchema::from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ValidationError("schema must be a JSON list of feature specs");
  std::vector<FeatureSpec> entries;
  try {
    for (const auto& item : j) {
      FeatureSpec e;
      e.name = item.at("name").get<std::string>();
      e.kind = parse_kind(item.at("kind").get<std::string>());
      if (e.kind == FeatureKind::kOrdinal) e.levels = item.at("levels").get<int>();
      if (e.kind == FeatureKind::kNominal) {
        e.categories = item.at("categories").get<std::vector<std::string>>();
      }
      if (e.kind == FeatureKind::kContinuous) e.unit = item.value("unit", std::string());
      e.side = parse_side(item.value("side", std::string("none")));
      e.expert = item.value("expert", false);
      if (item.contains("mirror_of") && !item["mirror_of"].is_null()) {
        e.mirror_of = item["mirror_of"].get<std::string>();
      }
      entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed schema: ") + e.what());
  }
  return FeatureSchema(std::move(entries));
}

FeatureSchema FeatureSchema::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open schema '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("schema '" + path + "': " + e.what());
  }
  return from_json(j);
}

void FeatureSchema::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write schema '" + path + "'");
  out << to_json().dump(2) << '\n';
}

std::string FeatureSchema::hash() const { return hex64(fnv1a64(to_json().dump())); }

FeatureSchema default_schema() {
  using K = FeatureKind;
  struct Row {
    const char* name;
    K kind;
    int levels;
  };
  // Clinical variable list in recorded order, duplicates removed, with the
  // expert-only entries and the missing `painright` partner added.
  static const Row kRows[] = {
      {"abrasion", K::kBinary, 2},
      {"aplasia", K::kBinary, 2},
      {"asybasis", K::kOrdinal, 3},
      {"asymenton", K::kBinary, 2},
      {"asyoccl", K::kOrdinal, 3},
      {"asypupilline", K::kOrdinal, 3},
      {"asyupmid", K::kBinary, 2},
      {"asymmetrymasseterright", K::kBinary, 2},
      {"asymmetrymasseterleft", K::kBinary, 2},
      {"backbending", K::kBinary, 2},
      {"bruxism", K::kBinary, 2},
      {"chewingfunction", K::kOrdinal, 3},
      {"clickclosingright", K::kBinary, 2},
      {"clickclosingleft", K::kBinary, 2},
      {"clicklateroleftright", K::kBinary, 2},
      {"clicklateroleftleft", K::kBinary, 2},
      {"clicklaterorightright", K::kBinary, 2},
      {"clicklaterorightleft", K::kBinary, 2},
      {"clickopeningright", K::kBinary, 2},
      {"clickopeningleft", K::kBinary, 2},
      {"clickprotrusionright", K::kBinary, 2},
      {"clickprotrusionleft", K::kBinary, 2},
      {"crepitationleft", K::kBinary, 2},
      {"crepitationright", K::kBinary, 2},
      {"deepbite", K::kBinary, 2},
      {"drug", K::kNominal, 0},
      {"dualbite", K::kBinary, 2},
      {"forwardbending", K::kBinary, 2},
      {"headache", K::kOrdinal, 3},
      {"hypermobilityleft", K::kBinary, 2},
      {"hypermobilityright", K::kBinary, 2},
      {"incisaloverjet", K::kContinuous, 0},
      {"involvementstatus", K::kBinary, 2},
      {"krepitationleft", K::kBinary, 2},
      {"krepitationright", K::kBinary, 2},
      {"laterpalpleft", K::kOrdinal, 3},
      {"laterpalpright", K::kOrdinal, 3},
      {"laterotrusionleftmm", K::kContinuous, 0},
      {"laterotrusionrightmm", K::kContinuous, 0},
      {"lockleft", K::kBinary, 2},
      {"lockright", K::kBinary, 2},
      {"lips", K::kNominal, 0},
      {"lowerface", K::kOrdinal, 3},
      {"masseterleft", K::kOrdinal, 3},
      {"masseterright", K::kOrdinal, 3},
      {"micrognathism", K::kBinary, 2},
      {"morningstiffness", K::kBinary, 2},
      {"muscularpainleft", K::kOrdinal, 3},
      {"muscularpainright", K::kOrdinal, 3},
      {"neckpain", K::kBinary, 2},
      {"neckpalpation", K::kOrdinal, 3},
      {"neckstiffness", K::kBinary, 2},
      {"opening", K::kOrdinal, 3},
      {"openingfunction", K::kOrdinal, 3},
      {"openingmm", K::kContinuous, 0},
      {"overbite", K::kContinuous, 0},
      {"overjet", K::kContinuous, 0},
      {"painleft", K::kOrdinal, 3},
      {"painright", K::kOrdinal, 3},
      {"painmoveright", K::kOrdinal, 3},
      {"painmoveleft", K::kOrdinal, 3},
      {"ptext", K::kOrdinal, 3},
      {"ptint", K::kOrdinal, 3},
      {"profile", K::kNominal, 0},
      {"protrusion", K::kOrdinal, 3},
      {"protrusionmm", K::kContinuous, 0},
      {"respiration", K::kNominal, 0},
      {"rotationleft", K::kOrdinal, 3},
      {"rotationright", K::kOrdinal, 3},
      {"sagittalrelationleft", K::kOrdinal, 3},
      {"sagittalrelationright", K::kOrdinal, 3},
      {"spacerelationship", K::kNominal, 0},
      {"sternoleft", K::kOrdinal, 3},
      {"sternoright", K::kOrdinal, 3},
      {"swollenjointright", K::kBinary, 2},
      {"swollenjointleft", K::kBinary, 2},
      {"swollenleft", K::kBinary, 2},
      {"swollenright", K::kBinary, 2},
      {"temporalisleft", K::kOrdinal, 3},
      {"temporalisright", K::kOrdinal, 3},
      {"tempsenleft", K::kOrdinal, 3},
      {"tempsenright", K::kOrdinal, 3},
      {"tongue", K::kNominal, 0},
      {"tractionleft", K::kBinary, 2},
      {"tractionright", K::kBinary, 2},
      {"transversal", K::kNominal, 0},
      {"translationleft", K::kBinary, 2},
      {"translationright", K::kBinary, 2},
      {"postpalpright", K::kOrdinal, 3},
      {"postpalpleft", K::kOrdinal, 3},
      {"openbite", K::kBinary, 2},
      {"retrognathism", K::kBinary, 2},
  };
  static const std::set<std::string> kExpert = {
      "asybasis",      "asyoccl",        "asypupilline",        "chewingfunction",
      "deepbite",      "drug",           "krepitationleft",     "krepitationright",
      "laterotrusionleftmm", "laterotrusionrightmm", "laterpalpleft", "laterpalpright",
      "lowerface",     "openbite",       "opening",             "openingmm",
      "overbite",      "overjet",        "painmoveleft",        "painmoveright",
      "profile",       "protrusion",     "protrusionmm",        "retrognathism",
      "translationleft", "translationright"};
  static const std::map<std::string, std::vector<std::string>> kCategories = {
      {"profile", {"straight", "convex", "concave"}},
      {"lips", {"competent", "incompetent", "strained"}},
      {"respiration", {"nasal", "oral", "mixed"}},
      {"spacerelationship", {"normal", "crowding", "spacing"}},
      {"tongue", {"normal", "low", "interdental"}},
      {"transversal", {"normal", "crossbite", "scissorbite"}},
  };

  std::vector<FeatureSpec> entries;
  std::set<std::string> names;
  for (const auto& row : kRows) names.insert(row.name);
  auto partner_name = [&](const std::string& name, Side side) -> std::string {
    const std::string from = side == Side::kLeft ? "left" : "right";
    const std::string to = side == Side::kLeft ? "right" : "left";
    const std::size_t pos = name.rfind(from);
    return name.substr(0, pos) + to + name.substr(pos + from.size());
  };
  for (const auto& row : kRows) {
    FeatureSpec e;
    e.name = row.name;
    e.kind = row.kind;
    if (row.kind == K::kOrdinal || row.kind == K::kBinary) e.levels = row.levels;
    if (row.kind == K::kContinuous) e.unit = "mm";
    if (row.kind == K::kNominal) {
      e.categories = e.name == "drug" ? default_drug_map().tokens() : kCategories.at(e.name);
    }
    e.expert = kExpert.count(e.name) > 0;
    // A name is sided when swapping its last left/right token names another
    // entry; this keeps e.g. `clicklateroleftright` paired by joint side.
    const std::size_t l = e.name.rfind("left");
    const std::size_t r = e.name.rfind("right");
    const bool left_last = l != std::string::npos && (r == std::string::npos || l > r);
    const bool right_last = r != std::string::npos && (l == std::string::npos || r > l);
    if (left_last && names.count(partner_name(e.name, Side::kLeft))) {
      e.side = Side::kLeft;
      e.mirror_of = partner_name(e.name, Side::kLeft);
    } else if (right_last && names.count(partner_name(e.name, Side::kRight))) {
      e.side = Side::kRight;
      e.mirror_of = partner_name(e.name, Side::kRight);
    }
    entries.push_back(std::move(e));
  }
  return FeatureSchema(std::move(entries));
}

std::string raw_value_to_string(const RawValue& v) {
  if (const double* d = std::get_if<double>(&v)) return format_real(*d);
  return std::get<std::string>(v);
}

nlohmann::json raw_value_to_json(const RawValue& v) {
  if (const double* d = std::get_if<double>(&v)) return *d;
  return std::get<std::string>(v);
}

std::optional<RawValue> parse_raw_value(const FeatureSpec& spec, std::string_view token,
                                        bool strict) {
  if (token.empty()) return std::nullopt;
  if (spec.kind == FeatureKind::kNominal) {
    if (spec.category_index(token) >= 0 || token == kUnknownCategory) {
      return RawValue(std::string(token));
    }
    if (strict) {
      throw ValidationError("feature '" + spec.name + "': unknown category '" +
                            std::string(token) + "'");
    }
    return RawValue(std::string(kUnknownCategory));
  }
  auto v = parse_real(token);
  if (!v) {
    throw ValidationError("feature '" + spec.name + "': '" + std::string(token) +
                          "' is not a number");
  }
  RawValue value(*v);
  validate_raw_value(spec, value);
  return value;
}

void validate_raw_value(const FeatureSpec& spec, const RawValue& value) {
  if (spec.kind == FeatureKind::kNominal) {
    const auto* s = std::get_if<std::string>(&value);
    if (s == nullptr) throw ValidationError("feature '" + spec.name + "' expects a category token");
    if (spec.category_index(*s) < 0 && *s != kUnknownCategory) {
      throw ValidationError("feature '" + spec.name + "': unknown category '" + *s + "'");
    }
    return;
  }
  const auto* d = std::get_if<double>(&value);
  if (d == nullptr) throw ValidationError("feature '" + spec.name + "' expects a number");
  if (!std::isfinite(*d)) throw ValidationError("feature '" + spec.name + "': non-finite value");
  if (spec.kind == FeatureKind::kContinuous) return;
  const double level = *d;
  if (level != std::floor(level) || level < 0 || level >= spec.levels) {
    throw ValidationError("feature '" + spec.name + "': level " + format_real(level) +
                          " outside [0, " + std::to_string(spec.levels - 1) + "]");
  }
}

}  // namespace tmjx
