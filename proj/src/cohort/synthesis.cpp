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

// Synthetic stand-in for the clinical cohort. Each feature is driven by a
// latent score  z = effect * y + patient_effect + noise,  where y is the
// current exam's label; left/right partners share the patient effect and
// have noise correlated at `side_correlation`. The latent score is then cut
// into the feature's declared levels or scaled into millimetres.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>

#include "tmjx/cohort.hpp"
#include "tmjx/drug.hpp"

namespace tmjx {

namespace {

constexpr double kPatientEffectSd = 0.5;
constexpr double kBinaryCut = 0.8;

struct Family {
  const FeatureSpec* first = nullptr;
  const FeatureSpec* second = nullptr;  // mirror partner, if any
  double effect = 0.0;
};

double effect_for(const SynthesisConfig& cfg, const FeatureSpec& spec) {
  if (auto it = cfg.signal_spec.find(spec.name); it != cfg.signal_spec.end()) return it->second;
  if (spec.mirror_of) {
    if (auto it = cfg.signal_spec.find(*spec.mirror_of); it != cfg.signal_spec.end()) {
      return it->second;
    }
  }
  return 0.0;
}

// Millimetre measurement from a latent score; the two mouth-opening
// measures grow with age and differ slightly by gender.
double to_millimetres(const std::string& name, double z, double age, Gender g) {
  const double male = g == Gender::kMale ? 1.0 : 0.0;
  double mm;
  if (name == "openingmm") {
    mm = 34.0 + 0.9 * age + 1.5 * male + 4.0 * z;
  } else if (name == "protrusionmm") {
    mm = 5.0 + 0.2 * age + 0.5 * male + 1.2 * z;
  } else if (name == "overbite") {
    mm = 2.5 + 1.2 * z;
  } else if (name == "overjet" || name == "incisaloverjet") {
    mm = 3.0 + 1.5 * z;
  } else {
    mm = 8.0 + 1.5 * z;
  }
  return std::round(mm * 10.0) / 10.0;
}

RawValue to_raw(const FeatureSpec& spec, double z, double age, Gender g, std::mt19937_64& rng) {
  switch (spec.kind) {
    case FeatureKind::kBinary:
      return RawValue(z > kBinaryCut ? 1.0 : 0.0);
    case FeatureKind::kOrdinal: {
      int level = 0;
      for (int k = 1; k < spec.levels; ++k) {
        if (z > 0.6 + 0.8 * (k - 1)) level = k;
      }
      return RawValue(static_cast<double>(level));
    }
    case FeatureKind::kContinuous:
      return RawValue(to_millimetres(spec.name, z, age, g));
    case FeatureKind::kNominal:
      break;
  }
  const auto bucket = [&](int k) {
    const double u = std::clamp((z + 1.5) / 3.5, 0.0, 0.999999);
    return static_cast<int>(u * k);
  };
  if (spec.name == "drug") {
    const DrugMap& map = default_drug_map();
    const DrugClass cls = static_cast<DrugClass>(bucket(kNumDrugClasses));
    std::vector<std::string> tokens;
    for (const auto& [token, c] : map.table()) {
      if (c == cls && spec.category_index(token) >= 0) tokens.push_back(token);
    }
    if (tokens.empty()) return RawValue(spec.categories.front());
    std::uniform_int_distribution<std::size_t> pick(0, tokens.size() - 1);
    return RawValue(tokens[pick(rng)]);
  }
  const int k = static_cast<int>(spec.categories.size());
  return RawValue(spec.categories[bucket(k)]);
}

int draw_exam_count(const ExamCountSpec& spec, std::mt19937_64& rng) {
  const double lambda = spec.mean - spec.min;
  int extra = 0;
  if (lambda > 0) extra = std::poisson_distribution<int>(lambda)(rng);
  return std::min(spec.max, spec.min + extra);
}

}  // namespace

void SynthesisConfig::validate() const {
  auto in_unit = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
  if (n_patients < 0) throw ValidationError("n_patients must be >= 0");
  if (!in_unit(female_fraction)) throw ValidationError("female_fraction must be in [0,1]");
  if (exams_per_patient.min < kMinExamsPerPatient || exams_per_patient.max > kMaxExamsPerPatient ||
      exams_per_patient.min > exams_per_patient.max) {
    throw ValidationError("exams_per_patient must satisfy 2 <= min <= max <= 17");
  }
  if (!(exams_per_patient.mean >= exams_per_patient.min &&
        exams_per_patient.mean <= exams_per_patient.max)) {
    throw ValidationError("exams_per_patient.mean must lie in [min, max]");
  }
  if (!(std::isfinite(horizon_years) && horizon_years > 0)) {
    throw ValidationError("horizon_years must be > 0");
  }
  if (!in_unit(label_dynamics.baseline_prevalence)) {
    throw ValidationError("label_dynamics.baseline_prevalence must be in [0,1]");
  }
  if (!(std::isfinite(label_dynamics.onset_hazard_per_year) &&
        label_dynamics.onset_hazard_per_year >= 0)) {
    throw ValidationError("label_dynamics.onset_hazard_per_year must be >= 0");
  }
  if (!in_unit(side_correlation)) throw ValidationError("side_correlation must be in [0,1]");
  for (const auto& [name, effect] : signal_spec) {
    if (!std::isfinite(effect)) throw ValidationError("signal_spec." + name + " is not finite");
  }
}

nlohmann::json SynthesisConfig::to_json() const {
  nlohmann::json j;
  j["n_patients"] = n_patients;
  j["female_fraction"] = female_fraction;
  j["exams_per_patient"] = {{"min", exams_per_patient.min},
                            {"max", exams_per_patient.max},
                            {"mean", exams_per_patient.mean}};
  j["horizon_years"] = horizon_years;
  j["label_dynamics"] = {{"baseline_prevalence", label_dynamics.baseline_prevalence},
                         {"onset_hazard_per_year", label_dynamics.onset_hazard_per_year},
                         {"persistence", label_dynamics.persistence}};
  j["signal_spec"] = signal_spec;
  j["side_correlation"] = side_correlation;
  j["rng_seed"] = rng_seed;
  return j;
}

SynthesisConfig SynthesisConfig::from_json(const nlohmann::json& j) {
  SynthesisConfig cfg = default_synthesis_config();
  if (!j.is_object()) throw ValidationError("synthesis config must be a JSON object");
  static const std::set<std::string> kKnown = {
      "n_patients", "female_fraction", "exams_per_patient", "horizon_years",
      "label_dynamics", "signal_spec", "side_correlation", "rng_seed", "preset"};
  for (const auto& [key, value] : j.items()) {
    if (!kKnown.count(key)) throw ValidationError("unknown config field '" + key + "'");
  }
  auto field = [&](const char* name, auto& target, const nlohmann::json& src) {
    if (!src.contains(name)) return;
    try {
      src.at(name).get_to(target);
    } catch (const nlohmann::json::exception&) {
      throw ValidationError(std::string("config field '") + name + "' has the wrong type");
    }
  };
  if (j.contains("preset")) {
    const auto preset = j["preset"].get<std::string>();
    if (preset == "high_signal") {
      cfg = high_signal_synthesis_config();
    } else if (preset == "null" || preset == "no_signal") {
      cfg.signal_spec.clear();
    } else if (preset != "default") {
      throw ValidationError("config field 'preset': unknown preset '" + preset + "'");
    }
  }
  field("n_patients", cfg.n_patients, j);
  field("female_fraction", cfg.female_fraction, j);
  if (j.contains("exams_per_patient")) {
    const auto& e = j["exams_per_patient"];
    field("min", cfg.exams_per_patient.min, e);
    field("max", cfg.exams_per_patient.max, e);
    field("mean", cfg.exams_per_patient.mean, e);
  }
  field("horizon_years", cfg.horizon_years, j);
  if (j.contains("label_dynamics")) {
    const auto& d = j["label_dynamics"];
    field("baseline_prevalence", cfg.label_dynamics.baseline_prevalence, d);
    field("onset_hazard_per_year", cfg.label_dynamics.onset_hazard_per_year, d);
    field("persistence", cfg.label_dynamics.persistence, d);
  }
  field("signal_spec", cfg.signal_spec, j);
  field("side_correlation", cfg.side_correlation, j);
  field("rng_seed", cfg.rng_seed, j);
  cfg.validate();
  return cfg;
}

SynthesisConfig default_synthesis_config() {
  SynthesisConfig cfg;
  cfg.signal_spec = {
      {"krepitationleft", 1.0}, {"laterotrusionleftmm", -0.8}, {"painmoveleft", 0.8},
      {"translationleft", 0.8}, {"laterpalpleft", 0.6},        {"asybasis", 0.7},
      {"asyoccl", 0.6},         {"openingmm", -0.8},           {"protrusionmm", -0.5},
      {"lowerface", 0.5},       {"retrognathism", 0.6},        {"profile", 0.5},
      {"chewingfunction", 0.4}, {"drug", 0.6},                 {"opening", 0.5},
  };
  return cfg;
}

SynthesisConfig high_signal_synthesis_config() {
  SynthesisConfig cfg = default_synthesis_config();
  for (auto& [name, effect] : cfg.signal_spec) effect *= 2.5;
  return cfg;
}

Cohort generate_synthetic_cohort(const SynthesisConfig& cfg, const FeatureSchema& schema) {
  cfg.validate();
  for (const auto& [name, effect] : cfg.signal_spec) {
    if (!schema.contains(name)) {
      throw ValidationError("signal_spec names unknown feature '" + name + "'");
    }
  }

  std::vector<Family> families;
  std::set<std::string> placed;
  for (const auto& spec : schema.entries()) {
    if (placed.count(spec.name) || spec.name == kTargetAdjacentFeature) continue;
    Family f;
    f.first = &spec;
    placed.insert(spec.name);
    if (spec.mirror_of) {
      f.second = &schema.at(*spec.mirror_of);
      placed.insert(f.second->name);
    }
    f.effect = effect_for(cfg, spec);
    families.push_back(f);
  }
  const bool has_target_feature = schema.contains(kTargetAdjacentFeature);

  const int n = cfg.n_patients;
  const int n_female = static_cast<int>(std::lround(cfg.female_fraction * n));
  std::vector<Gender> genders(n, Gender::kMale);
  std::fill(genders.begin(), genders.begin() + n_female, Gender::kFemale);
  {
    std::mt19937_64 rng(substream_seed(cfg.rng_seed, 0));
    std::shuffle(genders.begin(), genders.end(), rng);
  }

  const double rho = cfg.side_correlation;
  const double rho_c = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  const auto& dyn = cfg.label_dynamics;

  Cohort cohort;
  cohort.schema = schema;
  cohort.patients.resize(n);
  for (int i = 0; i < n; ++i) {
    std::mt19937_64 rng(substream_seed(cfg.rng_seed, static_cast<std::uint64_t>(i) + 1));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    Patient& p = cohort.patients[i];
    char id[16];
    std::snprintf(id, sizeof(id), "P%05d", i + 1);
    p.patient_id = id;
    p.gender = genders[i];

    const int exams = draw_exam_count(cfg.exams_per_patient, rng);
    std::vector<double> times(exams, 0.0);
    for (int k = 1; k < exams; ++k) {
      std::exponential_distribution<double> gap(1.0 / (0.6 + 0.25 * k));
      times[k] = times[k - 1] + 0.3 + gap(rng);
    }
    if (times.back() > cfg.horizon_years) {
      const double scale = cfg.horizon_years / times.back();
      for (auto& t : times) t *= scale;
    }
    for (auto& t : times) t = std::round(t * 1000.0) / 1000.0;
    const double first_age = std::round((2.0 + 10.0 * unit(rng)) * 100.0) / 100.0;

    std::vector<double> patient_effect(families.size());
    for (auto& u : patient_effect) u = kPatientEffectSd * normal(rng);

    Label y = unit(rng) < dyn.baseline_prevalence ? Label::kTmj1 : Label::kTmj0;
    p.exams.resize(exams);
    for (int k = 0; k < exams; ++k) {
      if (k > 0) {
        const double dt = times[k] - times[k - 1];
        const double flip = 1.0 - std::exp(-dyn.onset_hazard_per_year * dt);
        const double u = unit(rng);
        if (y == Label::kTmj0 && u < flip) {
          y = Label::kTmj1;
        } else if (y == Label::kTmj1 && !dyn.persistence && u < flip) {
          y = Label::kTmj0;
        }
      }
      ExamRecord& rec = p.exams[k];
      rec.patient_id = p.patient_id;
      rec.exam_time = times[k];
      rec.age_at_exam = std::round((first_age + times[k]) * 1000.0) / 1000.0;
      rec.label = y;
      const double yv = y == Label::kTmj1 ? 1.0 : 0.0;
      for (std::size_t f = 0; f < families.size(); ++f) {
        const Family& fam = families[f];
        const double base = fam.effect * yv + patient_effect[f];
        const double e1 = normal(rng);
        rec.values.emplace(fam.first->name,
                           to_raw(*fam.first, base + e1, rec.age_at_exam, p.gender, rng));
        if (fam.second) {
          const double e2 = rho * e1 + rho_c * normal(rng);
          rec.values.emplace(fam.second->name,
                             to_raw(*fam.second, base + e2, rec.age_at_exam, p.gender, rng));
        }
      }
      if (has_target_feature) rec.values.emplace(kTargetAdjacentFeature, RawValue(yv));
    }
  }
  return cohort;
}

}  // namespace tmjx
