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

// Random Forest binary classifier: bootstrap-aggregated CART trees grown
// with the Gini criterion over a random feature subset per node.

#ifndef TMJX_FOREST_HPP_
#define TMJX_FOREST_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tmjx/common.hpp"

namespace tmjx {

inline constexpr int kForestFormatVersion = 1;

struct FeaturesPerSplit {
  enum class Kind { kSqrt, kLog2, kAll, kFixed };
  Kind kind = Kind::kSqrt;
  int value = 0;  // kFixed only

  int resolve(std::size_t d) const;
  std::string to_string() const;
  static FeaturesPerSplit parse(const std::string& s);

  friend bool operator==(const FeaturesPerSplit&, const FeaturesPerSplit&) = default;
};

enum class ClassWeight { kUniform, kBalanced };

struct ForestHyperparams {
  int n_trees = 500;
  std::optional<int> max_depth;
  int min_samples_leaf = 1;
  int min_samples_split = 2;
  FeaturesPerSplit features_per_split;
  bool bootstrap = true;
  std::uint64_t seed = 0;
  ClassWeight class_weight = ClassWeight::kUniform;

  void validate() const;
  nlohmann::json to_json() const;
  static ForestHyperparams from_json(const nlohmann::json& j);

  friend bool operator==(const ForestHyperparams&, const ForestHyperparams&) = default;
};

// Flat node. Internal nodes route x[feature] <= threshold to `left`.
// `cover` is the (weighted) training mass reaching the node; leaves keep
// their class masses in class_counts.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double cover = 0.0;
  std::array<double, 2> class_counts = {0.0, 0.0};

  bool is_leaf() const { return left < 0; }
  double leaf_p1() const { return class_counts[1] / (class_counts[0] + class_counts[1]); }

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

class Tree {
 public:
  Tree() = default;
  explicit Tree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::vector<TreeNode>& mutable_nodes() { return nodes_; }
  const TreeNode& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }

  int leaf_index(std::span<const double> x) const;
  double predict_p1(std::span<const double> x) const { return node(leaf_index(x)).leaf_p1(); }
  int depth() const;
  std::size_t leaf_count() const;
  // Throws InvariantError unless covers add up and child indices are valid.
  void check(std::size_t d) const;

  friend bool operator==(const Tree&, const Tree&) = default;

 private:
  std::vector<TreeNode> nodes_;  // nodes_[0] is the root
};

class Forest {
 public:
  Forest() = default;
  Forest(std::vector<Tree> trees, ForestHyperparams hp, std::vector<std::string> feature_names);

  const std::vector<Tree>& trees() const { return trees_; }
  const ForestHyperparams& hyperparams() const { return hp_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  std::size_t d() const { return feature_names_.size(); }
  std::optional<double> oob_estimate() const { return oob_estimate_; }
  void set_oob_estimate(std::optional<double> v) { oob_estimate_ = v; }

  // Mean of per-tree leaf class frequencies; p0 is 1 - p1.
  std::array<double, 2> predict_proba(std::span<const double> x) const;
  // Argmax of predict_proba; an exact tie goes to TMJ0.
  Label predict(std::span<const double> x) const;

  nlohmann::json to_json() const;
  static Forest from_json(const nlohmann::json& j);

 private:
  std::vector<Tree> trees_;
  ForestHyperparams hp_;
  std::vector<std::string> feature_names_;
  std::optional<double> oob_estimate_;
};

Label label_from_proba(const std::array<double, 2>& p);

// Trains on (x, y). Tree t draws from its own RNG stream derived from
// (hp.seed, t), so the result does not depend on `threads`.
Forest fit_forest(const Matrix& x, const std::vector<Label>& y, const ForestHyperparams& hp,
                  const std::vector<std::string>& feature_names = {}, int threads = 1);

}  // namespace tmjx

#endif  // TMJX_FOREST_HPP_
