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
#include <limits>
#include <random>
#include <set>
#include <tuple>

#include "spdlog/spdlog.h"
#include "tmjx/preprocess.hpp"

namespace tmjx {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr const char* kDrugFeature = "drug";

std::string_view encoding_name(ColumnEncoding e) {
  switch (e) {
    case ColumnEncoding::kNumeric: return "numeric";
    case ColumnEncoding::kEmbedding: return "embedding";
    case ColumnEncoding::kOrdinalCode: return "ordinal_code";
  }
  return "numeric";
}

ColumnEncoding parse_encoding(const std::string& s) {
  if (s == "numeric") return ColumnEncoding::kNumeric;
  if (s == "embedding") return ColumnEncoding::kEmbedding;
  if (s == "ordinal_code") return ColumnEncoding::kOrdinalCode;
  throw ValidationError("unknown column encoding '" + s + "'");
}

FeatureKind parse_kind_name(const std::string& s) {
  for (auto k : {FeatureKind::kBinary, FeatureKind::kOrdinal, FeatureKind::kNominal,
                 FeatureKind::kContinuous}) {
    if (kind_name(k) == s) return k;
  }
  throw ValidationError("unknown feature kind '" + s + "'");
}

std::vector<std::string> drug_class_names() {
  std::vector<std::string> out;
  for (DrugClass c : all_drug_classes()) out.emplace_back(drug_class_name(c));
  return out;
}

// Base (per-block) columns in feature-subset order.
std::vector<LayoutColumn> base_columns(const std::vector<std::string>& subset,
                                       const FeatureSchema& schema) {
  std::vector<LayoutColumn> out;
  std::map<std::string, std::size_t> by_name;
  for (const auto& name : subset) {
    const FeatureSpec& spec = schema.at(name);
    std::string base = name;
    if (spec.side != Side::kNone) {
      const FeatureSpec& left = spec.side == Side::kLeft ? spec : schema.at(*spec.mirror_of);
      base = merged_feature_name(left);
    }
    if (auto it = by_name.find(base); it != by_name.end()) {
      out[it->second].merged_from.push_back(name);
      continue;
    }
    LayoutColumn col;
    col.name = base;
    col.base = base;
    col.kind = spec.kind;
    col.merged_from = {name};
    if (spec.kind == FeatureKind::kNominal) {
      col.categories = name == kDrugFeature ? drug_class_names() : spec.categories;
    }
    by_name.emplace(base, out.size());
    out.push_back(std::move(col));
  }
  return out;
}

// Drug classification then side merging for one block.
RawValues prepare_block(const ExamBlock& block, const EncoderState& st,
                        const FeatureSchema& schema) {
  RawValues values = block.values;
  if (auto it = values.find(kDrugFeature); it != values.end()) {
    if (const auto* token = std::get_if<std::string>(&it->second); token && *token != kUnknownCategory) {
      it->second = std::string(drug_class_name(st.drug_map.classify(*token, st.options.strict_drugs)));
    }
  }
  return merge_sides(values, schema);
}

bool is_deviation_feature(const EncoderState& st, const std::string& base) {
  return std::find(st.options.deviation_features.begin(), st.options.deviation_features.end(),
                   base) != st.options.deviation_features.end();
}

// Pre-z-score numeric value of one column (NaN when missing or unseen).
double column_number(const LayoutColumn& col, const RawValues& prepared, Gender gender, double age,
                     const EncoderState& st) {
  auto it = prepared.find(col.base);
  if (it == prepared.end()) return kNaN;
  if (col.kind == FeatureKind::kNominal) {
    const auto* token = std::get_if<std::string>(&it->second);
    if (token == nullptr) return kNaN;
    if (col.encoding == ColumnEncoding::kEmbedding) {
      const auto& emb = st.embeddings.at(col.name);
      auto e = emb.find(*token);
      return e == emb.end() ? kNaN : e->second;
    }
    const auto& codes = st.label_maps.at(col.name);
    auto c = codes.find(*token);
    return c == codes.end() ? kNaN : static_cast<double>(c->second);
  }
  const auto* v = std::get_if<double>(&it->second);
  if (v == nullptr) return kNaN;
  if (auto ref = st.reference_tables.find(col.base); ref != st.reference_tables.end()) {
    return age_gender_deviation(*v, gender, age, ref->second);
  }
  return *v;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Scalar entity embeddings: logit = b + sum_f w_f * E_f[c_f], full-batch
// gradient descent on the mean logistic loss. Reported embeddings are the
// effective contributions w_f * E_f[c].
void fit_embeddings(const std::vector<std::size_t>& columns,
                    const std::vector<std::vector<int>>& codes,  // [row][column slot]
                    const std::vector<std::size_t>& n_categories, const std::vector<Label>& y,
                    const PreprocessOptions& opt, std::vector<std::vector<double>>& out) {
  const std::size_t n = y.size();
  const std::size_t m = columns.size();
  std::mt19937_64 rng(substream_seed(opt.seed, 0xE5B));
  std::uniform_real_distribution<double> init(-opt.embedding_init_range, opt.embedding_init_range);
  std::vector<std::vector<double>> emb(m);
  for (std::size_t f = 0; f < m; ++f) {
    emb[f].resize(n_categories[f]);
    for (auto& e : emb[f]) e = init(rng);
  }
  std::vector<double> w(m, 1.0);
  double positives = 0;
  for (Label l : y) positives += l == Label::kTmj1 ? 1.0 : 0.0;
  const double prior = positives / static_cast<double>(n);
  double b = std::log(prior / (1.0 - prior));

  std::vector<double> residual(n);
  for (int epoch = 0; epoch < opt.embedding_epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) {
      double z = b;
      for (std::size_t f = 0; f < m; ++f) {
        if (codes[i][f] >= 0) z += w[f] * emb[f][codes[i][f]];
      }
      residual[i] = sigmoid(z) - (y[i] == Label::kTmj1 ? 1.0 : 0.0);
    }
    std::vector<std::vector<double>> g_emb(m);
    std::vector<double> g_w(m, 0.0);
    double g_b = 0.0;
    for (std::size_t f = 0; f < m; ++f) g_emb[f].assign(emb[f].size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      g_b += residual[i];
      for (std::size_t f = 0; f < m; ++f) {
        const int c = codes[i][f];
        if (c < 0) continue;
        g_emb[f][c] += residual[i] * w[f];
        g_w[f] += residual[i] * emb[f][c];
      }
    }
    const double scale = opt.embedding_step / static_cast<double>(n);
    b -= scale * g_b;
    for (std::size_t f = 0; f < m; ++f) {
      w[f] -= scale * g_w[f];
      for (std::size_t c = 0; c < emb[f].size(); ++c) emb[f][c] -= scale * g_emb[f][c];
    }
  }
  out.assign(m, {});
  for (std::size_t f = 0; f < m; ++f) {
    out[f].resize(emb[f].size());
    for (std::size_t c = 0; c < emb[f].size(); ++c) out[f][c] = w[f] * emb[f][c];
  }
}

}  // namespace

RawValues merge_sides(const RawValues& values, const FeatureSchema& schema) {
  RawValues out;
  for (const auto& [name, value] : values) {
    const FeatureSpec* spec = schema.find(name);
    if (spec == nullptr || spec->side == Side::kNone) {
      out.emplace(name, value);
      continue;
    }
    const FeatureSpec& left = spec->side == Side::kLeft ? *spec : schema.at(*spec->mirror_of);
    const std::string merged = merged_feature_name(left);
    auto [it, inserted] = out.try_emplace(merged, value);
    if (inserted) continue;
    RawValue& cur = it->second;
    if (cur == value) continue;
    if (spec->kind == FeatureKind::kNominal) {
      const int a = spec->category_index(std::get<std::string>(cur));
      const int b = spec->category_index(std::get<std::string>(value));
      if (b > a) cur = value;
    } else {
      cur = std::max(std::get<double>(cur), std::get<double>(value));
    }
  }
  return out;
}

double ReferenceTable::mean_for(Gender g, double age) const {
  auto it = buckets.find({static_cast<int>(g), static_cast<int>(std::floor(age))});
  if (it != buckets.end() && it->second.count >= min_bucket_count) return it->second.mean;
  return global_mean;
}

ReferenceTable ReferenceTable::fit(const std::vector<std::tuple<Gender, double, double>>& samples,
                                   std::size_t min_bucket_count) {
  ReferenceTable t;
  t.min_bucket_count = min_bucket_count;
  std::map<std::pair<int, int>, std::pair<double, std::size_t>> sums;
  double total = 0.0;
  for (const auto& [g, age, value] : samples) {
    auto& s = sums[{static_cast<int>(g), static_cast<int>(std::floor(age))}];
    s.first += value;
    ++s.second;
    total += value;
  }
  t.global_mean = samples.empty() ? 0.0 : total / static_cast<double>(samples.size());
  for (const auto& [key, s] : sums) t.buckets[key] = {s.first / static_cast<double>(s.second), s.second};
  return t;
}

nlohmann::json ReferenceTable::to_json() const {
  nlohmann::json b = nlohmann::json::array();
  for (const auto& [key, bucket] : buckets) {
    b.push_back({{"gender", std::string(gender_name(static_cast<Gender>(key.first)))},
                 {"age_year", key.second},
                 {"mean", bucket.mean},
                 {"count", bucket.count}});
  }
  return {{"buckets", b}, {"global_mean", global_mean}, {"min_bucket_count", min_bucket_count}};
}

ReferenceTable ReferenceTable::from_json(const nlohmann::json& j) {
  ReferenceTable t;
  t.global_mean = j.at("global_mean").get<double>();
  t.min_bucket_count = j.at("min_bucket_count").get<std::size_t>();
  for (const auto& b : j.at("buckets")) {
    const int g = static_cast<int>(parse_gender(b.at("gender").get<std::string>()));
    t.buckets[{g, b.at("age_year").get<int>()}] = {b.at("mean").get<double>(),
                                                   b.at("count").get<std::size_t>()};
  }
  return t;
}

double age_gender_deviation(double value, Gender gender, double age, const ReferenceTable& table) {
  return value - table.mean_for(gender, age);
}

nlohmann::json PreprocessOptions::to_json() const {
  return {{"deviation_features", deviation_features},
          {"min_bucket_count", min_bucket_count},
          {"embedding_epochs", embedding_epochs},
          {"embedding_step", embedding_step},
          {"embedding_init_range", embedding_init_range},
          {"strict_drugs", strict_drugs},
          {"seed", seed}};
}

PreprocessOptions PreprocessOptions::from_json(const nlohmann::json& j) {
  PreprocessOptions o;
  o.deviation_features = j.at("deviation_features").get<std::vector<std::string>>();
  o.min_bucket_count = j.at("min_bucket_count").get<std::size_t>();
  o.embedding_epochs = j.at("embedding_epochs").get<int>();
  o.embedding_step = j.at("embedding_step").get<double>();
  o.embedding_init_range = j.at("embedding_init_range").get<double>();
  o.strict_drugs = j.at("strict_drugs").get<bool>();
  o.seed = j.at("seed").get<std::uint64_t>();
  return o;
}

std::vector<std::string> EncoderState::feature_names() const {
  std::vector<std::string> out;
  out.reserve(layout.size());
  for (const auto& c : layout) out.push_back(c.name);
  return out;
}

EncoderState fit_encoders(const SampleSet& train_rows, const FeatureSchema& schema,
                          const PreprocessOptions& options) {
  if (train_rows.rows.empty()) throw ValidationError("cannot fit encoders on zero training rows");
  train_rows.validate();

  EncoderState st;
  st.feature_subset = train_rows.base_features;
  st.blocks = train_rows.strategy.blocks();
  st.options = options;
  st.drug_map = default_drug_map();
  for (const auto& name : st.feature_subset) {
    if (name == kTargetAdjacentFeature) {
      throw ValidationError("feature '" + name + "' is target-adjacent and cannot be encoded");
    }
  }

  const auto base = base_columns(st.feature_subset, schema);
  for (int j = 0; j < st.blocks; ++j) {
    for (auto col : base) {
      col.block = j;
      col.name = col.base + lag_suffix(j);
      if (col.kind == FeatureKind::kNominal) col.encoding = ColumnEncoding::kEmbedding;
      st.candidates.push_back(std::move(col));
    }
  }

  const std::size_t n = train_rows.rows.size();
  std::vector<std::vector<RawValues>> prepared(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& block : train_rows.rows[i].blocks) {
      prepared[i].push_back(prepare_block(block, st, schema));
    }
  }

  for (const auto& col : base) {
    if (!is_deviation_feature(st, col.base) || col.kind != FeatureKind::kContinuous) continue;
    std::vector<std::tuple<Gender, double, double>> samples;
    for (std::size_t i = 0; i < n; ++i) {
      auto it = prepared[i][0].find(col.base);
      if (it == prepared[i][0].end()) continue;
      samples.emplace_back(train_rows.rows[i].gender, train_rows.rows[i].blocks[0].age_at_exam,
                           std::get<double>(it->second));
    }
    if (!samples.empty()) st.reference_tables[col.base] = ReferenceTable::fit(samples, options.min_bucket_count);
  }

  const auto y = train_rows.labels();
  const bool both_classes = std::count(y.begin(), y.end(), Label::kTmj1) > 0 &&
                            std::count(y.begin(), y.end(), Label::kTmj0) > 0;

  // Label maps for nominal columns over categories seen in training, in
  // declared order.
  std::vector<std::size_t> embed_cols;
  for (std::size_t c = 0; c < st.candidates.size(); ++c) {
    auto& col = st.candidates[c];
    if (col.kind != FeatureKind::kNominal) continue;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < n; ++i) {
      auto it = prepared[i][col.block].find(col.base);
      if (it == prepared[i][col.block].end()) continue;
      const auto& token = std::get<std::string>(it->second);
      if (token != kUnknownCategory) seen.insert(token);
    }
    auto& codes = st.label_maps[col.name];
    for (const auto& cat : col.categories) {
      if (seen.count(cat)) codes.emplace(cat, static_cast<int>(codes.size()));
    }
    if (seen.size() <= 1) {
      col.encoding = ColumnEncoding::kOrdinalCode;
    } else if (!both_classes) {
      col.encoding = ColumnEncoding::kOrdinalCode;
      st.warnings.push_back("single-class training labels: '" + col.name +
                            "' falls back to ordinal codes");
      spdlog::warn("{}", st.warnings.back());
    } else {
      embed_cols.push_back(c);
    }
  }

  if (!embed_cols.empty()) {
    std::vector<std::vector<int>> codes(n, std::vector<int>(embed_cols.size(), -1));
    std::vector<std::size_t> n_categories;
    for (std::size_t f = 0; f < embed_cols.size(); ++f) {
      const auto& col = st.candidates[embed_cols[f]];
      const auto& map = st.label_maps.at(col.name);
      n_categories.push_back(map.size());
      for (std::size_t i = 0; i < n; ++i) {
        auto it = prepared[i][col.block].find(col.base);
        if (it == prepared[i][col.block].end()) continue;
        auto code = map.find(std::get<std::string>(it->second));
        if (code != map.end()) codes[i][f] = code->second;
      }
    }
    std::vector<std::vector<double>> learned;
    fit_embeddings(embed_cols, codes, n_categories, y, options, learned);
    for (std::size_t f = 0; f < embed_cols.size(); ++f) {
      const auto& col = st.candidates[embed_cols[f]];
      auto& emb = st.embeddings[col.name];
      for (const auto& [cat, code] : st.label_maps.at(col.name)) emb[cat] = learned[f][code];
    }
  }

  // z-score parameters over observed values; constant columns are dropped.
  for (const auto& col : st.candidates) {
    double sum = 0.0;
    std::size_t count = 0;
    std::vector<double> vals;
    vals.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& row = train_rows.rows[i];
      const double v = column_number(col, prepared[i][col.block], row.gender,
                                     row.blocks[col.block].age_at_exam, st);
      if (std::isnan(v)) continue;
      vals.push_back(v);
      sum += v;
      ++count;
    }
    if (count == 0) {
      st.dropped.push_back(col.name);
      continue;
    }
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (double v : vals) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(count));
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
      st.dropped.push_back(col.name);
      continue;
    }
    st.zscore[col.name] = {mean, sd};
    st.layout.push_back(col);
  }
  if (st.layout.empty()) throw ValidationError("every feature is constant on the training rows");
  return st;
}

EncodedRow transform_row(const SampleRow& row, const EncoderState& st, const FeatureSchema& schema) {
  if (static_cast<int>(row.blocks.size()) != st.blocks) {
    throw ValidationError("row has " + std::to_string(row.blocks.size()) + " exam blocks, encoder expects " +
                          std::to_string(st.blocks));
  }
  std::vector<RawValues> prepared;
  prepared.reserve(row.blocks.size());
  for (const auto& block : row.blocks) prepared.push_back(prepare_block(block, st, schema));
  EncodedRow out;
  out.values.resize(st.layout.size());
  out.merged_raw.resize(st.layout.size());
  for (std::size_t c = 0; c < st.layout.size(); ++c) {
    const auto& col = st.layout[c];
    const auto& p = prepared[col.block];
    if (auto it = p.find(col.base); it != p.end()) out.merged_raw[c] = it->second;
    const double v = column_number(col, p, row.gender, row.blocks[col.block].age_at_exam, st);
    // Missing and unseen values sit at the training mean.
    if (std::isnan(v)) {
      out.values[c] = 0.0;
      continue;
    }
    const auto& [mean, sd] = st.zscore.at(col.name);
    out.values[c] = (v - mean) / sd;
  }
  return out;
}

Design transform(const SampleSet& rows, const EncoderState& st, const FeatureSchema& schema) {
  Design d;
  d.strategy = rows.strategy;
  d.feature_names = st.feature_names();
  d.x = Matrix(rows.rows.size(), st.layout.size());
  d.y.reserve(rows.rows.size());
  d.provenance.reserve(rows.rows.size());
  for (std::size_t i = 0; i < rows.rows.size(); ++i) {
    const auto enc = transform_row(rows.rows[i], st, schema);
    std::copy(enc.values.begin(), enc.values.end(), d.x.row(i).begin());
    d.y.push_back(rows.rows[i].label);
    d.provenance.push_back(rows.rows[i].provenance);
  }
  return d;
}

nlohmann::json EncoderState::to_json() const {
  auto column_json = [](const LayoutColumn& c) {
    nlohmann::json j = {{"name", c.name},
                        {"base", c.base},
                        {"block", c.block},
                        {"kind", std::string(kind_name(c.kind))},
                        {"merged_from", c.merged_from},
                        {"encoding", std::string(encoding_name(c.encoding))}};
    if (!c.categories.empty()) j["categories"] = c.categories;
    return j;
  };
  nlohmann::json j;
  j["format_version"] = kEncoderFormatVersion;
  j["feature_subset"] = feature_subset;
  j["blocks"] = blocks;
  j["options"] = options.to_json();
  j["drug_map"] = drug_map.to_json();
  j["candidates"] = nlohmann::json::array();
  for (const auto& c : candidates) j["candidates"].push_back(column_json(c));
  j["layout"] = nlohmann::json::array();
  for (const auto& c : layout) j["layout"].push_back(column_json(c));
  j["dropped"] = dropped;
  j["label_maps"] = label_maps;
  j["embeddings"] = embeddings;
  j["reference_tables"] = nlohmann::json::object();
  for (const auto& [name, t] : reference_tables) j["reference_tables"][name] = t.to_json();
  j["zscore"] = nlohmann::json::object();
  for (const auto& [name, p] : zscore) j["zscore"][name] = {{"mean", p.first}, {"sd", p.second}};
  j["warnings"] = warnings;
  return j;
}

EncoderState EncoderState::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format_version").get<int>() != kEncoderFormatVersion) {
      throw ValidationError("unsupported encoder format_version");
    }
    auto column_from = [](const nlohmann::json& c) {
      LayoutColumn col;
      col.name = c.at("name").get<std::string>();
      col.base = c.at("base").get<std::string>();
      col.block = c.at("block").get<int>();
      col.kind = parse_kind_name(c.at("kind").get<std::string>());
      col.merged_from = c.at("merged_from").get<std::vector<std::string>>();
      col.encoding = parse_encoding(c.at("encoding").get<std::string>());
      if (c.contains("categories")) col.categories = c["categories"].get<std::vector<std::string>>();
      return col;
    };
    EncoderState st;
    st.feature_subset = j.at("feature_subset").get<std::vector<std::string>>();
    st.blocks = j.at("blocks").get<int>();
    st.options = PreprocessOptions::from_json(j.at("options"));
    st.drug_map = DrugMap::from_json(j.at("drug_map"));
    for (const auto& c : j.at("candidates")) st.candidates.push_back(column_from(c));
    for (const auto& c : j.at("layout")) st.layout.push_back(column_from(c));
    st.dropped = j.at("dropped").get<std::vector<std::string>>();
    j.at("label_maps").get_to(st.label_maps);
    j.at("embeddings").get_to(st.embeddings);
    for (const auto& [name, t] : j.at("reference_tables").items()) {
      st.reference_tables[name] = ReferenceTable::from_json(t);
    }
    for (const auto& [name, p] : j.at("zscore").items()) {
      st.zscore[name] = {p.at("mean").get<double>(), p.at("sd").get<double>()};
    }
    st.warnings = j.at("warnings").get<std::vector<std::string>>();
    return st;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed encoder state: ") + e.what());
  }
}

}  // namespace tmjx
