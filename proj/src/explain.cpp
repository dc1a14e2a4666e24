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

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace tmjx {

namespace {

struct PathElement {
  int feature = -1;
  double zero_fraction = 0.0;
  double one_fraction = 0.0;
  double pweight = 0.0;
};

void extend_path(PathElement* path, int unique_depth, double zero_fraction, double one_fraction,
                 int feature) {
  path[unique_depth] = {feature, zero_fraction, one_fraction, unique_depth == 0 ? 1.0 : 0.0};
  for (int i = unique_depth - 1; i >= 0; --i) {
    path[i + 1].pweight += one_fraction * path[i].pweight * (i + 1) / (unique_depth + 1);
    path[i].pweight = zero_fraction * path[i].pweight * (unique_depth - i) / (unique_depth + 1);
  }
}

void unwind_path(PathElement* path, int unique_depth, int path_index) {
  const double one_fraction = path[path_index].one_fraction;
  const double zero_fraction = path[path_index].zero_fraction;
  double next_one_portion = path[unique_depth].pweight;
  for (int i = unique_depth - 1; i >= 0; --i) {
    if (one_fraction != 0.0) {
      const double tmp = path[i].pweight;
      path[i].pweight = next_one_portion * (unique_depth + 1) / ((i + 1) * one_fraction);
      next_one_portion = tmp - path[i].pweight * zero_fraction * (unique_depth - i) / (unique_depth + 1);
    } else {
      path[i].pweight = path[i].pweight * (unique_depth + 1) / (zero_fraction * (unique_depth - i));
    }
  }
  for (int i = path_index; i < unique_depth; ++i) {
    path[i].feature = path[i + 1].feature;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
}

// Total weight of the path with element `path_index` unwound, without
// modifying it.
double unwound_path_sum(const PathElement* path, int unique_depth, int path_index) {
  const double one_fraction = path[path_index].one_fraction;
  const double zero_fraction = path[path_index].zero_fraction;
  double next_one_portion = path[unique_depth].pweight;
  double total = 0.0;
  for (int i = unique_depth - 1; i >= 0; --i) {
    if (one_fraction != 0.0) {
      const double tmp = next_one_portion * (unique_depth + 1) / ((i + 1) * one_fraction);
      total += tmp;
      next_one_portion = path[i].pweight - tmp * zero_fraction * (unique_depth - i) / (unique_depth + 1);
    } else {
      total += (path[i].pweight / zero_fraction) * (unique_depth + 1) / (unique_depth - i);
    }
  }
  return total;
}

class ShapRecursion {
 public:
  ShapRecursion(const Tree& tree, std::span<const double> x, std::vector<double>& phi)
      : tree_(tree), x_(x), phi_(phi) {
    const int depth = tree.depth();
    buffer_.resize(static_cast<std::size_t>((depth + 2) * (depth + 3) / 2));
  }

  void run() { recurse(0, buffer_.data(), 0, 1.0, 1.0, -1); }

 private:
  void recurse(int node_id, PathElement* parent_path, int unique_depth, double zero_fraction,
               double one_fraction, int feature) {
    PathElement* path = parent_path + unique_depth + 1;
    if (unique_depth > 0) std::copy(parent_path, parent_path + unique_depth + 1, path);
    extend_path(path, unique_depth, zero_fraction, one_fraction, feature);

    const TreeNode& node = tree_.node(node_id);
    if (!(node.cover > 0.0)) throw InvariantError("tree node with zero cover");
    if (node.is_leaf()) {
      const double value = node.leaf_p1();
      for (int i = 1; i <= unique_depth; ++i) {
        const double w = unwound_path_sum(path, unique_depth, i);
        const PathElement& el = path[i];
        phi_[static_cast<std::size_t>(el.feature)] += w * (el.one_fraction - el.zero_fraction) * value;
      }
      return;
    }

    const bool go_left = x_[static_cast<std::size_t>(node.feature)] <= node.threshold;
    const int hot = go_left ? node.left : node.right;
    const int cold = go_left ? node.right : node.left;
    double incoming_zero = 1.0;
    double incoming_one = 1.0;
    int path_index = 0;
    for (; path_index <= unique_depth; ++path_index) {
      if (path[path_index].feature == node.feature) break;
    }
    if (path_index != unique_depth + 1) {
      incoming_zero = path[path_index].zero_fraction;
      incoming_one = path[path_index].one_fraction;
      unwind_path(path, unique_depth, path_index);
      unique_depth -= 1;
    }
    const double hot_fraction = tree_.node(hot).cover / node.cover;
    const double cold_fraction = tree_.node(cold).cover / node.cover;
    recurse(hot, path, unique_depth + 1, hot_fraction * incoming_zero, incoming_one, node.feature);
    recurse(cold, path, unique_depth + 1, cold_fraction * incoming_zero, 0.0, node.feature);
  }

  const Tree& tree_;
  std::span<const double> x_;
  std::vector<double>& phi_;
  std::vector<PathElement> buffer_;
};

// v(S) for one subset (bit f set = feature f known).
double conditional_expectation(const Tree& tree, int node_id, std::span<const double> x,
                               std::uint32_t known) {
  const TreeNode& node = tree.node(node_id);
  if (!(node.cover > 0.0)) throw InvariantError("tree node with zero cover");
  if (node.is_leaf()) return node.leaf_p1();
  if (known & (1u << node.feature)) {
    const bool go_left = x[static_cast<std::size_t>(node.feature)] <= node.threshold;
    return conditional_expectation(tree, go_left ? node.left : node.right, x, known);
  }
  const TreeNode& l = tree.node(node.left);
  const TreeNode& r = tree.node(node.right);
  return (l.cover * conditional_expectation(tree, node.left, x, known) +
          r.cover * conditional_expectation(tree, node.right, x, known)) /
         node.cover;
}

void check_input(const Tree& tree, std::span<const double> x) {
  for (const auto& node : tree.nodes()) {
    if (!node.is_leaf() && static_cast<std::size_t>(node.feature) >= x.size()) {
      throw ValidationError("input is shorter than the features used by the tree");
    }
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw ValidationError("input contains a non-finite value");
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

double Attribution::local_accuracy_gap() const {
  const double sum = std::accumulate(per_feature.begin(), per_feature.end(), 0.0);
  return std::abs(base_value + sum - output);
}

double tree_expected_value(const Tree& tree) {
  return conditional_expectation(tree, 0, {}, 0u);
}

Attribution tree_shap(const Tree& tree, std::span<const double> x) {
  check_input(tree, x);
  Attribution a;
  a.per_feature.assign(x.size(), 0.0);
  a.base_value = tree_expected_value(tree);
  a.output = tree.predict_p1(x);
  ShapRecursion(tree, x, a.per_feature).run();
  return a;
}

Attribution brute_force_shap(const Tree& tree, std::span<const double> x) {
  const std::size_t d = x.size();
  if (d > kBruteForceMaxFeatures) {
    throw ValidationError("brute-force Shapley values refuse d > " + std::to_string(kBruteForceMaxFeatures));
  }
  check_input(tree, x);
  const std::uint32_t subsets = 1u << d;
  std::vector<double> v(subsets);
  for (std::uint32_t s = 0; s < subsets; ++s) v[s] = conditional_expectation(tree, 0, x, s);

  // weight[k] = k! (d - k - 1)! / d!
  std::vector<double> weight(d == 0 ? 1 : d);
  for (std::size_t k = 0; k < d; ++k) {
    double w = 1.0 / static_cast<double>(d);
    // 1 / (d * C(d-1, k))
    for (std::size_t j = 1; j <= k; ++j) w *= static_cast<double>(j) / static_cast<double>(d - j);
    weight[k] = w;
  }
  Attribution a;
  a.per_feature.assign(d, 0.0);
  for (std::size_t f = 0; f < d; ++f) {
    const std::uint32_t bit = 1u << f;
    double phi = 0.0;
    for (std::uint32_t s = 0; s < subsets; ++s) {
      if (s & bit) continue;
      phi += weight[static_cast<std::size_t>(std::popcount(s))] * (v[s | bit] - v[s]);
    }
    a.per_feature[f] = phi;
  }
  a.base_value = v[0];
  a.output = v[subsets - 1];
  return a;
}

Attribution forest_shap(const Forest& forest, std::span<const double> x) {
  if (forest.trees().empty()) throw ValidationError("forest has no trees");
  if (x.size() != forest.d()) {
    throw ValidationError("input has " + std::to_string(x.size()) + " features, model expects " +
                          std::to_string(forest.d()));
  }
  Attribution total;
  total.per_feature.assign(x.size(), 0.0);
  for (const auto& tree : forest.trees()) {
    const Attribution a = tree_shap(tree, x);
    for (std::size_t f = 0; f < x.size(); ++f) total.per_feature[f] += a.per_feature[f];
    total.base_value += a.base_value;
  }
  const double n = static_cast<double>(forest.trees().size());
  for (double& v : total.per_feature) v /= n;
  total.base_value /= n;
  total.output = forest.predict_proba(x)[1];
  return total;
}

std::vector<std::size_t> rank_features(const std::vector<double>& mean_abs_shap) {
  std::vector<std::size_t> order(mean_abs_shap.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return mean_abs_shap[a] > mean_abs_shap[b]; });
  return order;
}

SummaryData summarize(const Forest& forest, const Matrix& x, int threads) {
  if (x.rows() == 0) throw ValidationError("cannot summarize an empty sample set");
  const std::size_t n = x.rows();
  const std::size_t d = forest.d();
  SummaryData s;
  s.feature_names = forest.feature_names();
  s.shap_values = Matrix(n, d);
  s.feature_values = Matrix(n, d);
  s.row_index.resize(n);
  std::iota(s.row_index.begin(), s.row_index.end(), 0);
  parallel_for(n, threads, [&](std::size_t i) {
    const Attribution a = forest_shap(forest, x.row(i));
    for (std::size_t f = 0; f < d; ++f) {
      s.shap_values(i, f) = a.per_feature[f];
      s.feature_values(i, f) = x(i, f);
    }
  });
  s.mean_abs_shap.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < d; ++f) s.mean_abs_shap[f] += std::abs(s.shap_values(i, f));
  }
  for (double& v : s.mean_abs_shap) v /= static_cast<double>(n);
  s.ranking = rank_features(s.mean_abs_shap);
  return s;
}

nlohmann::json SummaryData::to_json() const {
  nlohmann::json ranks = nlohmann::json::array();
  for (std::size_t r = 0; r < ranking.size(); ++r) {
    const std::size_t f = ranking[r];
    ranks.push_back({{"feature", feature_names[f]}, {"mean_abs_shap", mean_abs_shap[f]}, {"rank", r + 1}});
  }
  return {{"rows", shap_values.rows()}, {"ranking", ranks}};
}

void SummaryData::write_rank_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "feature,mean_abs_shap,rank\n";
  for (std::size_t r = 0; r < ranking.size(); ++r) {
    const std::size_t f = ranking[r];
    out << feature_names[f] << ',' << format_real(mean_abs_shap[f]) << ',' << (r + 1) << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

void SummaryData::write_points_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "feature,row_index,shap_value,feature_value\n";
  // Feature-index order, so reading the file back keeps the column layout.
  for (std::size_t f = 0; f < feature_names.size(); ++f) {
    for (std::size_t i = 0; i < shap_values.rows(); ++i) {
      out << feature_names[f] << ',' << row_index[i] << ',' << format_real(shap_values(i, f)) << ','
          << format_real(feature_values(i, f)) << '\n';
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

SummaryData SummaryData::read_points_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty summary file " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "feature,row_index,shap_value,feature_value") {
    throw ValidationError("summary file has an unexpected header: " + line);
  }
  std::vector<std::string> features;
  std::map<std::string, std::size_t> feature_pos;
  std::map<std::size_t, std::size_t> row_pos;
  std::map<std::pair<std::size_t, std::size_t>, std::pair<double, double>> cells;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cols = split_csv_line(line);
    if (cols.size() != 4) throw ValidationError("line " + std::to_string(line_no) + ": expected 4 fields");
    const auto row = parse_real(cols[1]);
    const auto shap = parse_real(cols[2]);
    const auto value = parse_real(cols[3]);
    if (!row || !shap || !value || *row < 0) {
      throw ValidationError("line " + std::to_string(line_no) + ": malformed number");
    }
    auto [it, inserted] = feature_pos.emplace(cols[0], features.size());
    if (inserted) features.push_back(cols[0]);
    const auto r = static_cast<std::size_t>(*row);
    row_pos.emplace(r, 0);
    cells[{it->second, r}] = {*shap, *value};
  }
  if (cells.empty()) throw ValidationError("summary file " + path.string() + " has no points");
  std::size_t k = 0;
  SummaryData s;
  for (auto& [r, pos] : row_pos) {
    pos = k++;
    s.row_index.push_back(r);
  }
  s.feature_names = features;
  s.shap_values = Matrix(row_pos.size(), features.size());
  s.feature_values = Matrix(row_pos.size(), features.size());
  if (cells.size() != row_pos.size() * features.size()) {
    throw ValidationError("summary file does not hold every (feature, row) pair");
  }
  for (const auto& [key, v] : cells) {
    const std::size_t i = row_pos.at(key.second);
    s.shap_values(i, key.first) = v.first;
    s.feature_values(i, key.first) = v.second;
  }
  s.mean_abs_shap.assign(features.size(), 0.0);
  for (std::size_t i = 0; i < s.shap_values.rows(); ++i) {
    for (std::size_t f = 0; f < features.size(); ++f) s.mean_abs_shap[f] += std::abs(s.shap_values(i, f));
  }
  for (double& v : s.mean_abs_shap) v /= static_cast<double>(s.shap_values.rows());
  s.ranking = rank_features(s.mean_abs_shap);
  return s;
}

std::string render_summary_svg(const SummaryData& summary, std::size_t max_features) {
  if (summary.ranking.empty() || summary.shap_values.rows() == 0) {
    throw ValidationError("cannot plot an empty summary");
  }
  const std::size_t lanes = std::min(max_features, summary.ranking.size());
  const std::size_t n = summary.shap_values.rows();
  const double lane_h = 28.0, left = 190.0, plot_w = 520.0, top = 30.0;
  const double width = left + plot_w + 40.0;
  const double height = top + lane_h * static_cast<double>(lanes) + 50.0;

  double extent = 0.0;
  for (std::size_t r = 0; r < lanes; ++r) {
    for (std::size_t i = 0; i < n; ++i) extent = std::max(extent, std::abs(summary.shap_values(i, summary.ranking[r])));
  }
  if (extent == 0.0) extent = 1.0;
  auto sx = [&](double v) { return left + plot_w * (0.5 + 0.5 * v / extent); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const double axis_y = top + lane_h * static_cast<double>(lanes);
  svg << "<line x1=\"" << sx(0) << "\" y1=\"" << top - 10 << "\" x2=\"" << sx(0) << "\" y2=\"" << axis_y
      << "\" stroke=\"#999\"/>\n";
  for (std::size_t r = 0; r < lanes; ++r) {
    const std::size_t f = summary.ranking[r];
    const double cy = top + lane_h * (static_cast<double>(r) + 0.5);
    svg << "<text x=\"" << left - 8 << "\" y=\"" << cy + 4 << "\" text-anchor=\"end\">"
        << xml_escape(summary.feature_names[f]) << "</text>\n";
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return summary.feature_values(a, f) < summary.feature_values(b, f);
    });
    std::vector<double> colour_rank(n);
    for (std::size_t k = 0; k < n; ++k) colour_rank[order[k]] = n > 1 ? static_cast<double>(k) / (n - 1) : 0.5;
    for (std::size_t i = 0; i < n; ++i) {
      // Deterministic vertical jitter from the row position.
      const double jitter = (static_cast<double>((i * 7919) % 97) / 96.0 - 0.5) * lane_h * 0.6;
      const int red = static_cast<int>(std::lround(30 + 225 * colour_rank[i]));
      const int blue = static_cast<int>(std::lround(255 - 225 * colour_rank[i]));
      svg << "<circle cx=\"" << format_real(std::round(sx(summary.shap_values(i, f)) * 100) / 100)
          << "\" cy=\"" << format_real(std::round((cy + jitter) * 100) / 100) << "\" r=\"2.5\" fill=\"rgb("
          << red << ",40," << blue << ")\" fill-opacity=\"0.7\"/>\n";
    }
  }
  svg << "<line x1=\"" << left << "\" y1=\"" << axis_y << "\" x2=\"" << left + plot_w << "\" y2=\"" << axis_y
      << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << left << "\" y=\"" << axis_y + 16 << "\">" << format_real(-extent) << "</text>\n";
  svg << "<text x=\"" << left + plot_w << "\" y=\"" << axis_y + 16 << "\" text-anchor=\"end\">"
      << format_real(extent) << "</text>\n";
  svg << "<text x=\"" << sx(0) << "\" y=\"" << axis_y + 34
      << "\" text-anchor=\"middle\">SHAP value (impact on P(TMJ1))</text>\n";
  svg << "<text x=\"" << width - 10 << "\" y=\"" << top - 12
      << "\" text-anchor=\"end\">colour: feature value low (blue) to high (red)</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace tmjx
