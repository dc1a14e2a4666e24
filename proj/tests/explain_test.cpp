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

#include "tmjx/explain.hpp"

#include <random>

#include "gtest/gtest.h"
#include "oracles.hpp"
#include "test_util.hpp"

namespace tmjx {
namespace {

TreeNode leaf(double n0, double n1) {
  TreeNode n;
  n.cover = n0 + n1;
  n.class_counts = {n0, n1};
  return n;
}

TreeNode split(int feature, double threshold, int left, int right, double cover) {
  TreeNode n;
  n.feature = feature;
  n.threshold = threshold;
  n.left = left;
  n.right = right;
  n.cover = cover;
  return n;
}

Forest forest_of(std::vector<Tree> trees, std::size_t d) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < d; ++i) names.push_back("f" + std::to_string(i));
  return Forest(std::move(trees), ForestHyperparams{}, names);
}

TEST(TreeShap, SingleLeafIsConstant) {
  const Tree t({leaf(3, 1)});
  const std::vector<double> x = {0.3, -2.0};
  const Attribution a = tree_shap(t, x);
  EXPECT_EQ(a.per_feature, (std::vector<double>{0.0, 0.0}));
  EXPECT_DOUBLE_EQ(a.base_value, 0.25);
  EXPECT_EQ(brute_force_shap(t, x).per_feature, (std::vector<double>{0.0, 0.0}));
}

TEST(TreeShap, StumpClosedForm) {
  // Left leaf p = 0.9 (cover 10), right leaf p = 0.2 (cover 30).
  const Tree t({split(1, 0.5, 1, 2, 40), leaf(1, 9), leaf(24, 6)});
  const std::vector<double> x = {7.0, 0.1, -1.0};
  const Attribution a = tree_shap(t, x);
  const double mean = (10 * 0.9 + 30 * 0.2) / 40.0;
  EXPECT_NEAR(a.per_feature[1], 0.9 - mean, 1e-15);
  EXPECT_EQ(a.per_feature[0], 0.0);
  EXPECT_EQ(a.per_feature[2], 0.0);
  EXPECT_NEAR(a.base_value, mean, 1e-15);
  EXPECT_NEAR(tree_expected_value(t), mean, 1e-15);
}

TEST(TreeShap, SymmetricFeaturesShareCredit) {
  // f(x) = 1 iff x0 > 0 and x1 > 0, both orders of the split present.
  const Tree t({split(0, 0.0, 1, 2, 40), leaf(10, 0), split(1, 0.0, 3, 4, 20), leaf(10, 0), leaf(0, 10)});
  const Tree mirrored({split(1, 0.0, 1, 2, 40), leaf(10, 0), split(0, 0.0, 3, 4, 20), leaf(10, 0), leaf(0, 10)});
  const std::vector<double> x = {1.0, 1.0};
  const Attribution a = forest_shap(forest_of({t, mirrored}, 2), x);
  EXPECT_NEAR(a.per_feature[0], a.per_feature[1], 1e-15);
  EXPECT_NEAR(a.base_value + a.per_feature[0] + a.per_feature[1], 1.0, 1e-12);
}

TEST(TreeShap, MatchesBruteForceAndPermutationOracle) {
  std::mt19937_64 rng(17);
  double worst = 0.0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t d = 1 + rng() % 6;
    const Tree t = oracle::random_tree(rng, d, 1 + static_cast<int>(rng() % 3));
    const auto x = oracle::random_point(rng, d);
    const Attribution fast = tree_shap(t, x);
    const Attribution brute = brute_force_shap(t, x);
    const auto perm = oracle::permutation_shapley(t, x, d);
    for (std::size_t f = 0; f < d; ++f) {
      worst = std::max(worst, std::abs(fast.per_feature[f] - brute.per_feature[f]));
      EXPECT_NEAR(brute.per_feature[f], perm[f], 1e-12);
    }
    EXPECT_LE(fast.local_accuracy_gap(), kLocalAccuracyTol);
    // Efficiency: the attributions sum to v(all) - v(empty).
    double sum = 0.0;
    for (double v : brute.per_feature) sum += v;
    EXPECT_NEAR(sum, oracle::cond_expectation(t, 0, x, (1u << d) - 1) - oracle::cond_expectation(t, 0, x, 0),
                1e-12);
  }
  EXPECT_LE(worst, 1e-9);
}

TEST(TreeShap, DummyFeatureIsExactlyZero) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    Tree t = oracle::random_tree(rng, 3, 3);
    const auto x = oracle::random_point(rng, 5);  // features 3 and 4 never split on
    const Attribution a = tree_shap(t, x);
    EXPECT_EQ(a.per_feature[3], 0.0);
    EXPECT_EQ(a.per_feature[4], 0.0);
  }
}

TEST(TreeShap, BruteForceRefusesWideInputs) {
  const Tree t({leaf(1, 1)});
  const std::vector<double> x(16, 0.0);
  EXPECT_THROW(brute_force_shap(t, x), ValidationError);
  const std::vector<double> nan_x = {std::nan("")};
  EXPECT_THROW(tree_shap(Tree({split(0, 0.0, 1, 2, 2), leaf(1, 0), leaf(0, 1)}), nan_x), ValidationError);
}

TEST(ForestShap, AveragesTreesLinearly) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const Tree a = oracle::random_tree(rng, 4, 3);
    const Tree b = oracle::random_tree(rng, 4, 3);
    const auto x = oracle::random_point(rng, 4);
    const Attribution one = forest_shap(forest_of({a}, 4), x);
    EXPECT_EQ(one.per_feature, tree_shap(a, x).per_feature);
    const Attribution twin = forest_shap(forest_of({a, a}, 4), x);
    for (std::size_t f = 0; f < 4; ++f) EXPECT_NEAR(twin.per_feature[f], one.per_feature[f], 1e-15);
    const Attribution both = forest_shap(forest_of({a, b}, 4), x);
    const Attribution tb = tree_shap(b, x);
    for (std::size_t f = 0; f < 4; ++f) {
      EXPECT_NEAR(both.per_feature[f], (one.per_feature[f] + tb.per_feature[f]) / 2.0, 1e-15);
    }
    EXPECT_LE(both.local_accuracy_gap(), kLocalAccuracyTol);
    EXPECT_NEAR(both.output, forest_of({a, b}, 4).predict_proba(x)[1], 1e-15);
  }
}

TEST(ForestShap, LocalAccuracyOnFittedForest) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix x(0, 5);
  std::vector<Label> y;
  for (int i = 0; i < 300; ++i) {
    const std::vector<double> row = {n(rng), n(rng), n(rng), n(rng), n(rng)};
    x.append_row(row);
    y.push_back(row[0] - row[2] + 0.5 * n(rng) > 0 ? Label::kTmj1 : Label::kTmj0);
  }
  ForestHyperparams hp;
  hp.n_trees = 30;
  const Forest f = fit_forest(x, y, hp);
  for (std::size_t i = 0; i < 100; ++i) {
    EXPECT_LE(forest_shap(f, x.row(i)).local_accuracy_gap(), kLocalAccuracyTol);
  }
  const std::vector<double> wrong(4, 0.0);
  EXPECT_THROW(forest_shap(f, wrong), ValidationError);
}

TEST(Summary, ConstantAndStumpModels) {
  Matrix x(0, 3);
  for (int i = 0; i < 20; ++i) {
    const std::vector<double> row = {static_cast<double>(i % 4), static_cast<double>(i), -1.0 * i};
    x.append_row(row);
  }
  const SummaryData flat = summarize(forest_of({Tree({leaf(2, 2)})}, 3), x);
  for (double v : flat.mean_abs_shap) EXPECT_EQ(v, 0.0);
  const SummaryData stump = summarize(forest_of({Tree({split(2, -9.5, 1, 2, 20), leaf(1, 9), leaf(8, 2)})}, 3), x);
  EXPECT_EQ(stump.ranking.front(), 2u);
  EXPECT_GT(stump.mean_abs_shap[2], 0.0);
  EXPECT_THROW(summarize(forest_of({Tree({leaf(1, 1)})}, 3), Matrix(0, 3)), ValidationError);
}

TEST(Summary, RankingStableUnderRowPermutation) {
  std::mt19937_64 rng(29);
  std::vector<Tree> trees;
  for (int i = 0; i < 10; ++i) trees.push_back(oracle::random_tree(rng, 5, 3));
  const Forest f = forest_of(trees, 5);
  Matrix x(0, 5);
  for (int i = 0; i < 60; ++i) x.append_row(oracle::random_point(rng, 5));
  std::vector<std::size_t> perm(60);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  const SummaryData a = summarize(f, x, 1);
  const SummaryData b = summarize(f, x.select_rows(perm), 4);
  EXPECT_EQ(a.ranking, b.ranking);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(a.mean_abs_shap[k], b.mean_abs_shap[k], 1e-12);
}

TEST(Summary, RankTies) {
  EXPECT_EQ(rank_features({0.1, 0.3, 0.3, 0.0}), (std::vector<std::size_t>{1, 2, 0, 3}));
}

TEST(Summary, CsvRoundTripAndSvg) {
  std::mt19937_64 rng(41);
  std::vector<Tree> trees = {oracle::random_tree(rng, 3, 3), oracle::random_tree(rng, 3, 3)};
  const Forest f = forest_of(trees, 3);
  Matrix x(0, 3);
  for (int i = 0; i < 12; ++i) x.append_row(oracle::random_point(rng, 3));
  const SummaryData s = summarize(f, x);
  const auto dir = testing::scratch_dir("explain_csv");
  s.write_points_csv(dir / "points.csv");
  s.write_rank_csv(dir / "rank.csv");
  const SummaryData back = SummaryData::read_points_csv(dir / "points.csv");
  EXPECT_EQ(back.feature_names, s.feature_names);
  EXPECT_EQ(back.ranking, s.ranking);
  EXPECT_EQ(back.shap_values.data(), s.shap_values.data());
  EXPECT_EQ(testing::read_file(dir / "rank.csv").substr(0, 26), "feature,mean_abs_shap,rank");
  const std::string svg = render_summary_svg(s);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("f0"), std::string::npos);
  EXPECT_THROW(render_summary_svg(SummaryData{}), ValidationError);
  testing::write_file(dir / "empty.csv", "");
  EXPECT_THROW(SummaryData::read_points_csv(dir / "empty.csv"), ValidationError);
}

}  // namespace
}  // namespace tmjx
