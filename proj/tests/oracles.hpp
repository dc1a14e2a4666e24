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

// Independent reference implementations used as test oracles. Nothing here
// calls into the code under test beyond its plain data types.

#ifndef TMJX_TESTS_ORACLES_HPP_
#define TMJX_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "tmjx/forest.hpp"

namespace tmjx::oracle {

// ---------------------------------------------------------------- metrics

struct Prf {
  double precision, sensitivity, f1;
};

inline Prf prf(std::size_t tp, std::size_t fp, std::size_t fn) {
  const double p = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double s = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  const double f = p + s == 0.0 ? 0.0 : 2.0 * p * s / (p + s);
  return {p, s, f};
}

// ------------------------------------------------------- exact Gini trees

// Node of a reference tree grown with exact rational Gini comparisons.
struct RefNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  long n0 = 0;
  long n1 = 0;
};

// Rational a/b with b > 0.
struct Ratio {
  __int128 num;
  __int128 den;
  friend bool operator<(const Ratio& x, const Ratio& y) { return x.num * y.den < y.num * x.den; }
  friend bool operator==(const Ratio& x, const Ratio& y) { return x.num * y.den == y.num * x.den; }
};

class ExactGiniTree {
 public:
  ExactGiniTree(const std::vector<std::vector<double>>& rows, const std::vector<int>& y)
      : rows_(rows), y_(y) {
    std::vector<int> all(y.size());
    std::iota(all.begin(), all.end(), 0);
    grow(all);
  }
  const std::vector<RefNode>& nodes() const { return nodes_; }

 private:
  int grow(const std::vector<int>& idx) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    long n0 = 0, n1 = 0;
    for (int i : idx) (y_[i] ? n1 : n0)++;
    nodes_[id].n0 = n0;
    nodes_[id].n1 = n1;
    if (n0 == 0 || n1 == 0) return id;
    // Maximise sum_child (c0^2 + c1^2) / n_child, which minimises the
    // weighted child Gini impurity.
    bool found = false;
    Ratio best{0, 1};
    int best_f = -1;
    double best_t = 0.0;
    const std::size_t d = rows_[0].size();
    for (std::size_t f = 0; f < d; ++f) {
      std::vector<double> values;
      for (int i : idx) values.push_back(rows_[i][f]);
      std::sort(values.begin(), values.end());
      values.erase(std::unique(values.begin(), values.end()), values.end());
      for (std::size_t k = 0; k + 1 < values.size(); ++k) {
        double t = values[k] + (values[k + 1] - values[k]) / 2.0;
        if (!(t < values[k + 1])) t = values[k];
        long l0 = 0, l1 = 0;
        for (int i : idx) {
          if (rows_[i][f] <= values[k]) (y_[i] ? l1 : l0)++;
        }
        const long r0 = n0 - l0, r1 = n1 - l1;
        const long nl = l0 + l1, nr = r0 + r1;
        const Ratio score{static_cast<__int128>(l0 * l0 + l1 * l1) * nr +
                              static_cast<__int128>(r0 * r0 + r1 * r1) * nl,
                          static_cast<__int128>(nl) * nr};
        // Strictly better only; earlier (feature, threshold) wins ties.
        if (!found || best < score) {
          found = true;
          best = score;
          best_f = static_cast<int>(f);
          best_t = t;
        }
      }
    }
    if (!found) return id;
    std::vector<int> left, right;
    for (int i : idx) (rows_[i][best_f] <= best_t ? left : right).push_back(i);
    const int l = grow(left);
    const int r = grow(right);
    nodes_[id].feature = best_f;
    nodes_[id].threshold = best_t;
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  const std::vector<std::vector<double>>& rows_;
  const std::vector<int>& y_;
  std::vector<RefNode> nodes_;
};

// Structural equality between a fitted tree and the reference, walked from
// both roots.
inline bool same_tree(const Tree& t, int a, const std::vector<RefNode>& ref, int b) {
  const TreeNode& n = t.node(a);
  const RefNode& r = ref[static_cast<std::size_t>(b)];
  if (n.is_leaf() != (r.left < 0)) return false;
  if (n.cover != static_cast<double>(r.n0 + r.n1)) return false;
  if (n.is_leaf()) {
    return n.class_counts[0] == static_cast<double>(r.n0) && n.class_counts[1] == static_cast<double>(r.n1);
  }
  return n.feature == r.feature && n.threshold == r.threshold && same_tree(t, n.left, ref, r.left) &&
         same_tree(t, n.right, ref, r.right);
}

// ------------------------------------------------------------- Shapley

// Cover-weighted conditional expectation E[f(x) | x_S] of one tree, written
// independently of the library: features outside S follow both children
// weighted by cover.
inline double cond_expectation(const Tree& t, int node, std::span<const double> x,
                               std::uint32_t mask) {
  const TreeNode& n = t.node(node);
  if (n.is_leaf()) return n.leaf_p1();
  if (mask & (1u << n.feature)) {
    return cond_expectation(t, x[n.feature] <= n.threshold ? n.left : n.right, x, mask);
  }
  const TreeNode& l = t.node(n.left);
  const TreeNode& r = t.node(n.right);
  return (l.cover * cond_expectation(t, n.left, x, mask) + r.cover * cond_expectation(t, n.right, x, mask)) /
         n.cover;
}

// Shapley values as the mean marginal contribution over all d! feature
// orderings.
inline std::vector<double> permutation_shapley(const Tree& t, std::span<const double> x, std::size_t d) {
  std::vector<int> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> phi(d, 0.0);
  double perms = 0.0;
  do {
    std::uint32_t mask = 0;
    double prev = cond_expectation(t, 0, x, mask);
    for (int f : order) {
      mask |= 1u << f;
      const double cur = cond_expectation(t, 0, x, mask);
      phi[static_cast<std::size_t>(f)] += cur - prev;
      prev = cur;
    }
    perms += 1.0;
  } while (std::next_permutation(order.begin(), order.end()));
  for (auto& v : phi) v /= perms;
  return phi;
}

// Random tree with consistent covers: children split the parent cover at a
// random ratio, leaves carry random class masses summing to their cover.
inline Tree random_tree(std::mt19937_64& rng, std::size_t d, int max_depth) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> feat(0, static_cast<int>(d) - 1);
  std::vector<TreeNode> nodes;
  auto build = [&](auto&& self, double cover, int depth) -> int {
    const int id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    nodes[id].cover = cover;
    const bool leaf = depth >= max_depth || (depth > 0 && unit(rng) < 0.25);
    if (leaf) {
      const double p = unit(rng) < 0.2 ? std::round(unit(rng)) : unit(rng);
      nodes[id].class_counts = {cover * (1.0 - p), cover * p};
      return id;
    }
    const int f = feat(rng);
    const double threshold = std::round((unit(rng) * 2.0 - 1.0) * 100.0) / 100.0;
    const double share = 0.05 + 0.9 * unit(rng);
    const int l = self(self, cover * share, depth + 1);
    const int r = self(self, cover - nodes[l].cover, depth + 1);
    nodes[id].feature = f;
    nodes[id].threshold = threshold;
    nodes[id].left = l;
    nodes[id].right = r;
    return id;
  };
  build(build, 10.0 + std::floor(unit(rng) * 500.0), 0);
  return Tree(std::move(nodes));
}

inline std::vector<double> random_point(std::mt19937_64& rng, std::size_t d) {
  std::uniform_real_distribution<double> dist(-1.2, 1.2);
  std::vector<double> x(d);
  for (auto& v : x) v = std::round(dist(rng) * 100.0) / 100.0;
  return x;
}

}  // namespace tmjx::oracle

#endif  // TMJX_TESTS_ORACLES_HPP_
