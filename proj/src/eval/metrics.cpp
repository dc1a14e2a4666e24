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

#include "tmjx/eval.hpp"

namespace tmjx {

PerClassMetrics metrics_from_confusion(const Confusion& c) {
  PerClassMetrics m;
  m.confusion = c;
  const auto ratio = [](std::size_t num, std::size_t den, bool& degenerate) {
    if (den == 0) {
      degenerate = true;
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  m.precision = ratio(c.tp, c.tp + c.fp, m.precision_degenerate);
  m.sensitivity = ratio(c.tp, c.tp + c.fn, m.sensitivity_degenerate);
  const double denom = m.precision + m.sensitivity;
  if (denom > 0.0) {
    m.f1 = 2.0 * m.precision * m.sensitivity / denom;
  } else {
    m.f1_degenerate = true;
  }
  return m;
}

ClassMetrics compute_metrics(const std::vector<Label>& y_true, const std::vector<Label>& y_pred) {
  if (y_true.size() != y_pred.size()) throw ValidationError("label vectors differ in length");
  if (y_true.empty()) throw ValidationError("cannot compute metrics on zero samples");
  ClassMetrics out;
  out.n = y_true.size();
  for (int c = 0; c < 2; ++c) {
    const Label cls = label_from_index(c);
    Confusion conf;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
      const bool truth = y_true[i] == cls;
      const bool pred = y_pred[i] == cls;
      if (truth && pred) ++conf.tp;
      if (!truth && pred) ++conf.fp;
      if (!truth && !pred) ++conf.tn;
      if (truth && !pred) ++conf.fn;
    }
    out.per_class[c] = metrics_from_confusion(conf);
  }
  out.macro_f1 = (out.per_class[0].f1 + out.per_class[1].f1) / 2.0;
  return out;
}

nlohmann::json ClassMetrics::to_json() const {
  nlohmann::json classes = nlohmann::json::object();
  for (int c = 0; c < 2; ++c) {
    const auto& m = per_class[c];
    classes[label_name(label_from_index(c))] = {
        {"precision", m.precision},
        {"sensitivity", m.sensitivity},
        {"f1", m.f1},
        {"confusion", {{"tp", m.confusion.tp}, {"fp", m.confusion.fp}, {"tn", m.confusion.tn}, {"fn", m.confusion.fn}}},
        {"degenerate",
         {{"precision", m.precision_degenerate},
          {"sensitivity", m.sensitivity_degenerate},
          {"f1", m.f1_degenerate}}}};
  }
  return {{"n", n}, {"macro_f1", macro_f1}, {"per_class", classes}};
}

}  // namespace tmjx
