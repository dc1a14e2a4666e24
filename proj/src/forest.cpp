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

#include "tmjx/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "spdlog/spdlog.h"

namespace tmjx {

namespace {

struct SplitCandidate {
  bool found = false;
  double score = 0.0;  // sum over children of (sum_c w_c^2) / w, maximised
  int feature = -1;
  double threshold = 0.0;
};

// Grows one tree. Samples carry an in-bag multiplicity (for
// min_samples_* checks) and a class-weighted mass (for Gini and covers).
class TreeBuilder {
 public:
  TreeBuilder(const std::vector<std::vector<double>>& columns, const std::vector<Label>& y,
              const std::vector<double>& multiplicity, const std::vector<double>& mass,
              const ForestHyperparams& hp, int mtry, std::mt19937_64& rng)
      : columns_(columns),
        y_(y),
        multiplicity_(multiplicity),
        mass_(mass),
        hp_(hp),
        mtry_(mtry),
        rng_(rng),
        features_(columns.size()) {
    std::iota(features_.begin(), features_.end(), 0);
  }

  Tree build() {
    std::vector<int> all;
    for (std::size_t i = 0; i < y_.size(); ++i) {
      if (multiplicity_[i] > 0) all.push_back(static_cast<int>(i));
    }
    grow(all, 0);
    return Tree(std::move(nodes_));
  }

 private:
  int grow(const std::vector<int>& samples, int depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    double count = 0.0;
    std::array<double, 2> w = {0.0, 0.0};
    for (int i : samples) {
      count += multiplicity_[i];
      w[label_index(y_[i])] += mass_[i];
    }
    nodes_[id].cover = w[0] + w[1];

    const bool pure = w[0] == 0.0 || w[1] == 0.0;
    const bool depth_capped = hp_.max_depth && depth >= *hp_.max_depth;
    SplitCandidate best;
    if (!pure && !depth_capped && count >= hp_.min_samples_split &&
        count >= 2.0 * hp_.min_samples_leaf) {
      best = find_split(samples);
    }
    if (!best.found) {
      nodes_[id].class_counts = w;
      return id;
    }
    std::vector<int> left, right;
    const auto& col = columns_[best.feature];
    for (int i : samples) (col[i] <= best.threshold ? left : right).push_back(i);
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    TreeNode& node = nodes_[id];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  SplitCandidate find_split(const std::vector<int>& samples) {
    SplitCandidate best;
    const std::size_t d = features_.size();
    int visited = 0;
    const double min_leaf = hp_.min_samples_leaf;
    for (std::size_t k = 0; k < d && visited < mtry_; ++k) {
      // Lazy Fisher-Yates draw of the next candidate feature.
      std::uniform_int_distribution<std::size_t> pick(k, d - 1);
      std::swap(features_[k], features_[pick(rng_)]);
      const int f = features_[k];
      const auto& col = columns_[f];

      order_.clear();
      for (int i : samples) order_.emplace_back(col[i], i);
      std::sort(order_.begin(), order_.end());
      if (order_.front().first == order_.back().first) continue;  // constant here
      ++visited;

      double total_count = 0.0;
      std::array<double, 2> total = {0.0, 0.0};
      for (const auto& [v, i] : order_) {
        total_count += multiplicity_[i];
        total[label_index(y_[i])] += mass_[i];
      }
      double left_count = 0.0;
      std::array<double, 2> left = {0.0, 0.0};
      for (std::size_t j = 0; j + 1 < order_.size(); ++j) {
        const int i = order_[j].second;
        left_count += multiplicity_[i];
        left[label_index(y_[i])] += mass_[i];
        const double lo = order_[j].first;
        const double hi = order_[j + 1].first;
        if (lo == hi) continue;
        if (left_count < min_leaf || total_count - left_count < min_leaf) continue;
        const double a0 = left[0], a1 = left[1];
        const double b0 = total[0] - a0, b1 = total[1] - a1;
        const double wl = a0 + a1, wr = b0 + b1;
        if (wl <= 0.0 || wr <= 0.0) continue;
        // One rounding step, so equal exact scores compare equal.
        const double score = ((a0 * a0 + a1 * a1) * wr + (b0 * b0 + b1 * b1) * wl) / (wl * wr);
        double threshold = lo + (hi - lo) / 2.0;
        if (!(threshold < hi)) threshold = lo;
        const bool better =
            !best.found || score > best.score ||
            (score == best.score &&
             (f < best.feature || (f == best.feature && threshold < best.threshold)));
        if (better) best = {true, score, f, threshold};
      }
    }
    return best;
  }

  const std::vector<std::vector<double>>& columns_;
  const std::vector<Label>& y_;
  const std::vector<double>& multiplicity_;
  const std::vector<double>& mass_;
  const ForestHyperparams& hp_;
  const int mtry_;
  std::mt19937_64& rng_;
  std::vector<int> features_;
  std::vector<std::pair<double, int>> order_;
  std::vector<TreeNode> nodes_;
};

}  // namespace

int FeaturesPerSplit::resolve(std::size_t d) const {
  const double dd = static_cast<double>(d);
  int m = 1;
  switch (kind) {
    case Kind::kSqrt: m = static_cast<int>(std::floor(std::sqrt(dd))); break;
    case Kind::kLog2: m = static_cast<int>(std::floor(std::log2(std::max(1.0, dd)))); break;
    case Kind::kAll: m = static_cast<int>(d); break;
    case Kind::kFixed: m = value; break;
  }
  return std::clamp(m, 1, std::max(1, static_cast<int>(d)));
}

std::string FeaturesPerSplit::to_string() const {
  switch (kind) {
    case Kind::kSqrt: return "sqrt";
    case Kind::kLog2: return "log2";
    case Kind::kAll: return "all";
    case Kind::kFixed: return std::to_string(value);
  }
  return "sqrt";
}

FeaturesPerSplit FeaturesPerSplit::parse(const std::string& s) {
  if (s == "sqrt") return {Kind::kSqrt, 0};
  if (s == "log2") return {Kind::kLog2, 0};
  if (s == "all") return {Kind::kAll, 0};
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos == s.size() && v >= 1) return {Kind::kFixed, v};
  } catch (const std::exception&) {
  }
  throw ValidationError("features_per_split must be sqrt, log2, all or a positive integer");
}

void ForestHyperparams::validate() const {
  if (n_trees < 1) throw ValidationError("n_trees must be >= 1");
  if (min_samples_leaf < 1) throw ValidationError("min_samples_leaf must be >= 1");
  if (min_samples_split < 2) throw ValidationError("min_samples_split must be >= 2");
  if (max_depth && *max_depth < 0) throw ValidationError("max_depth must be >= 0");
  if (features_per_split.kind == FeaturesPerSplit::Kind::kFixed && features_per_split.value < 1) {
    throw ValidationError("features_per_split must be >= 1");
  }
}

nlohmann::json ForestHyperparams::to_json() const {
  return {{"n_trees", n_trees},
          {"max_depth", max_depth ? nlohmann::json(*max_depth) : nlohmann::json(nullptr)},
          {"min_samples_leaf", min_samples_leaf},
          {"min_samples_split", min_samples_split},
          {"features_per_split", features_per_split.to_string()},
          {"bootstrap", bootstrap},
          {"seed", seed},
          {"class_weight", class_weight == ClassWeight::kUniform ? "uniform" : "balanced"}};
}

ForestHyperparams ForestHyperparams::from_json(const nlohmann::json& j) {
  ForestHyperparams hp;
  try {
    if (j.contains("n_trees")) hp.n_trees = j["n_trees"].get<int>();
    if (j.contains("max_depth") && !j["max_depth"].is_null()) hp.max_depth = j["max_depth"].get<int>();
    if (j.contains("min_samples_leaf")) hp.min_samples_leaf = j["min_samples_leaf"].get<int>();
    if (j.contains("min_samples_split")) hp.min_samples_split = j["min_samples_split"].get<int>();
    if (j.contains("features_per_split")) {
      const auto& f = j["features_per_split"];
      hp.features_per_split =
          FeaturesPerSplit::parse(f.is_number() ? std::to_string(f.get<int>()) : f.get<std::string>());
    }
    if (j.contains("bootstrap")) hp.bootstrap = j["bootstrap"].get<bool>();
    if (j.contains("seed")) hp.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("class_weight")) {
      const auto cw = j["class_weight"].get<std::string>();
      if (cw == "uniform") {
        hp.class_weight = ClassWeight::kUniform;
      } else if (cw == "balanced") {
        hp.class_weight = ClassWeight::kBalanced;
      } else {
        throw ValidationError("class_weight must be uniform or balanced");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed forest hyperparameters: ") + e.what());
  }
  hp.validate();
  return hp;
}

int Tree::leaf_index(std::span<const double> x) const {
  int i = 0;
  while (!nodes_[i].is_leaf()) {
    const TreeNode& n = nodes_[i];
    i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return i;
}

int Tree::depth() const {
  std::vector<int> depth(nodes_.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const TreeNode& n = nodes_[i];
    best = std::max(best, depth[i]);
    if (!n.is_leaf()) {
      depth[n.left] = depth[i] + 1;
      depth[n.right] = depth[i] + 1;
    }
  }
  return best;
}

std::size_t Tree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

void Tree::check(std::size_t d) const {
  if (nodes_.empty()) throw InvariantError("empty tree");
  const int n = static_cast<int>(nodes_.size());
  for (int i = 0; i < n; ++i) {
    const TreeNode& node = nodes_[i];
    if (!(node.cover > 0.0)) throw InvariantError("tree node " + std::to_string(i) + " has zero cover");
    if (node.is_leaf()) {
      const double sum = node.class_counts[0] + node.class_counts[1];
      if (std::abs(sum - node.cover) > 1e-9 * std::max(1.0, node.cover)) {
        throw InvariantError("leaf " + std::to_string(i) + " class counts do not sum to cover");
      }
      continue;
    }
    if (node.left <= i || node.right <= i || node.left >= n || node.right >= n) {
      throw InvariantError("tree node " + std::to_string(i) + " has invalid children");
    }
    if (node.feature < 0 || static_cast<std::size_t>(node.feature) >= d) {
      throw InvariantError("tree node " + std::to_string(i) + " splits on feature out of range");
    }
    if (!std::isfinite(node.threshold)) throw InvariantError("non-finite threshold");
    const double sum = nodes_[node.left].cover + nodes_[node.right].cover;
    if (std::abs(sum - node.cover) > 1e-9 * std::max(1.0, node.cover)) {
      throw InvariantError("tree node " + std::to_string(i) + " cover != sum of child covers");
    }
  }
}

Forest::Forest(std::vector<Tree> trees, ForestHyperparams hp, std::vector<std::string> feature_names)
    : trees_(std::move(trees)), hp_(std::move(hp)), feature_names_(std::move(feature_names)) {}

std::array<double, 2> Forest::predict_proba(std::span<const double> x) const {
  if (x.size() != d()) {
    throw ValidationError("input has " + std::to_string(x.size()) + " features, model expects " +
                          std::to_string(d()));
  }
  double p1 = 0.0;
  for (const auto& t : trees_) p1 += t.predict_p1(x);
  p1 /= static_cast<double>(trees_.size());
  return {1.0 - p1, p1};
}

Label label_from_proba(const std::array<double, 2>& p) {
  return p[1] > p[0] ? Label::kTmj1 : Label::kTmj0;
}

Label Forest::predict(std::span<const double> x) const { return label_from_proba(predict_proba(x)); }

nlohmann::json Forest::to_json() const {
  nlohmann::json j;
  j["format_version"] = kForestFormatVersion;
  j["hyperparams"] = hp_.to_json();
  j["feature_names"] = feature_names_;
  j["oob_estimate"] = oob_estimate_ ? nlohmann::json(*oob_estimate_) : nlohmann::json(nullptr);
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : trees_) {
    std::vector<int> feature, left, right;
    std::vector<double> threshold, cover, n0, n1;
    for (const auto& n : t.nodes()) {
      feature.push_back(n.feature);
      left.push_back(n.left);
      right.push_back(n.right);
      threshold.push_back(n.threshold);
      cover.push_back(n.cover);
      n0.push_back(n.class_counts[0]);
      n1.push_back(n.class_counts[1]);
    }
    trees.push_back({{"feature", feature},
                     {"threshold", threshold},
                     {"left", left},
                     {"right", right},
                     {"cover", cover},
                     {"n0", n0},
                     {"n1", n1}});
  }
  j["trees"] = std::move(trees);
  return j;
}

Forest Forest::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format_version").get<int>() != kForestFormatVersion) {
      throw ValidationError("unsupported forest format_version");
    }
    auto hp = ForestHyperparams::from_json(j.at("hyperparams"));
    auto names = j.at("feature_names").get<std::vector<std::string>>();
    std::vector<Tree> trees;
    for (const auto& t : j.at("trees")) {
      const auto feature = t.at("feature").get<std::vector<int>>();
      const auto threshold = t.at("threshold").get<std::vector<double>>();
      const auto left = t.at("left").get<std::vector<int>>();
      const auto right = t.at("right").get<std::vector<int>>();
      const auto cover = t.at("cover").get<std::vector<double>>();
      const auto n0 = t.at("n0").get<std::vector<double>>();
      const auto n1 = t.at("n1").get<std::vector<double>>();
      const std::size_t n = feature.size();
      if (threshold.size() != n || left.size() != n || right.size() != n || cover.size() != n ||
          n0.size() != n || n1.size() != n) {
        throw ValidationError("ragged node arrays in forest");
      }
      std::vector<TreeNode> nodes(n);
      for (std::size_t i = 0; i < n; ++i) {
        nodes[i] = {feature[i], threshold[i], left[i], right[i], cover[i], {n0[i], n1[i]}};
      }
      Tree tree(std::move(nodes));
      tree.check(names.size());
      trees.push_back(std::move(tree));
    }
    if (trees.empty()) throw ValidationError("forest has no trees");
    Forest f(std::move(trees), hp, std::move(names));
    if (!j.at("oob_estimate").is_null()) f.oob_estimate_ = j["oob_estimate"].get<double>();
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed forest: ") + e.what());
  } catch (const InvariantError& e) {
    throw ValidationError(std::string("malformed forest: ") + e.what());
  }
}

Forest fit_forest(const Matrix& x, const std::vector<Label>& y, const ForestHyperparams& hp,
                  const std::vector<std::string>& feature_names, int threads) {
  hp.validate();
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  if (n == 0 || d == 0) throw ValidationError("cannot fit a forest on an empty design matrix");
  if (y.size() != n) throw ValidationError("label count does not match row count");
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw ValidationError("design matrix contains a non-finite value");
  }
  std::vector<std::string> names = feature_names;
  if (names.empty()) {
    for (std::size_t f = 0; f < d; ++f) names.push_back("f" + std::to_string(f));
  }
  if (names.size() != d) throw ValidationError("feature name count does not match columns");

  std::array<double, 2> class_n = {0.0, 0.0};
  for (Label l : y) class_n[label_index(l)] += 1.0;
  if (class_n[0] == 0.0 || class_n[1] == 0.0) {
    spdlog::warn("training labels contain a single class; trees will be single leaves");
  }
  std::array<double, 2> class_mass = {1.0, 1.0};
  if (hp.class_weight == ClassWeight::kBalanced) {
    for (int c = 0; c < 2; ++c) {
      class_mass[c] = class_n[c] > 0 ? static_cast<double>(n) / (2.0 * class_n[c]) : 0.0;
    }
  }

  std::vector<std::vector<double>> columns(d, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < d; ++f) columns[f][i] = x(i, f);
  }
  const int mtry = hp.features_per_split.resolve(d);

  std::vector<Tree> trees(hp.n_trees);
  std::vector<std::vector<double>> multiplicities(hp.n_trees);
  parallel_for(static_cast<std::size_t>(hp.n_trees), threads, [&](std::size_t t) {
    std::mt19937_64 rng(substream_seed(hp.seed, t));
    std::vector<double> mult(n, 1.0);
    if (hp.bootstrap) {
      std::fill(mult.begin(), mult.end(), 0.0);
      std::uniform_int_distribution<std::size_t> draw(0, n - 1);
      for (std::size_t k = 0; k < n; ++k) mult[draw(rng)] += 1.0;
    }
    std::vector<double> mass(n);
    for (std::size_t i = 0; i < n; ++i) mass[i] = mult[i] * class_mass[label_index(y[i])];
    TreeBuilder builder(columns, y, mult, mass, hp, mtry, rng);
    trees[t] = builder.build();
    multiplicities[t] = std::move(mult);
  });

  Forest forest(std::move(trees), hp, std::move(names));
  if (hp.bootstrap) {
    std::size_t scored = 0, correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double p1 = 0.0;
      int votes = 0;
      for (std::size_t t = 0; t < forest.trees().size(); ++t) {
        if (multiplicities[t][i] > 0) continue;
        p1 += forest.trees()[t].predict_p1(x.row(i));
        ++votes;
      }
      if (votes == 0) continue;
      p1 /= votes;
      ++scored;
      if (label_from_proba({1.0 - p1, p1}) == y[i]) ++correct;
    }
    if (scored > 0) forest.set_oob_estimate(static_cast<double>(correct) / static_cast<double>(scored));
  }
  return forest;
}

}  // namespace tmjx
