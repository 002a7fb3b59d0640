// Copyright 2026 The Weedet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "weedet/core/errors.hpp"

namespace weedet {

// Upper 5% points of the studentized range q(k, df), k = 2..10 groups.
namespace detail {

struct QRow {
  double df;  // infinity for the asymptotic row
  std::array<double, 9> q;
};

inline const std::vector<QRow>& studentized_range_table() {
  static const std::vector<QRow> table = {
      {1, {17.969, 26.976, 32.819, 37.082, 40.408, 43.119, 45.397, 47.357, 49.071}},
      {2, {6.085, 8.331, 9.798, 10.881, 11.734, 12.435, 13.027, 13.539, 13.988}},
      {3, {4.501, 5.910, 6.825, 7.502, 8.037, 8.478, 8.852, 9.177, 9.462}},
      {4, {3.926, 5.040, 5.757, 6.287, 6.706, 7.053, 7.347, 7.602, 7.826}},
      {5, {3.635, 4.602, 5.218, 5.673, 6.033, 6.330, 6.582, 6.801, 6.995}},
      {6, {3.460, 4.339, 4.896, 5.305, 5.628, 5.895, 6.122, 6.319, 6.493}},
      {7, {3.344, 4.165, 4.681, 5.060, 5.359, 5.606, 5.815, 5.997, 6.158}},
      {8, {3.261, 4.041, 4.529, 4.886, 5.167, 5.399, 5.596, 5.767, 5.918}},
      {9, {3.199, 3.948, 4.415, 4.755, 5.024, 5.244, 5.432, 5.595, 5.738}},
      {10, {3.151, 3.877, 4.327, 4.654, 4.912, 5.124, 5.304, 5.460, 5.598}},
      {11, {3.113, 3.820, 4.256, 4.574, 4.823, 5.028, 5.202, 5.353, 5.486}},
      {12, {3.081, 3.773, 4.199, 4.508, 4.750, 4.950, 5.119, 5.265, 5.395}},
      {13, {3.055, 3.734, 4.151, 4.453, 4.690, 4.884, 5.049, 5.192, 5.318}},
      {14, {3.033, 3.701, 4.111, 4.407, 4.639, 4.829, 4.990, 5.130, 5.253}},
      {15, {3.014, 3.673, 4.076, 4.367, 4.595, 4.782, 4.940, 5.077, 5.198}},
      {16, {2.998, 3.649, 4.046, 4.333, 4.557, 4.741, 4.896, 5.031, 5.150}},
      {17, {2.984, 3.628, 4.020, 4.303, 4.524, 4.705, 4.858, 4.991, 5.108}},
      {18, {2.971, 3.609, 3.997, 4.276, 4.494, 4.673, 4.824, 4.955, 5.071}},
      {19, {2.960, 3.593, 3.977, 4.253, 4.468, 4.645, 4.794, 4.924, 5.037}},
      {20, {2.950, 3.578, 3.958, 4.232, 4.445, 4.620, 4.768, 4.895, 5.008}},
      {21, {2.941, 3.565, 3.942, 4.213, 4.424, 4.597, 4.743, 4.870, 4.981}},
      {22, {2.933, 3.553, 3.927, 4.196, 4.405, 4.577, 4.722, 4.847, 4.957}},
      {23, {2.926, 3.542, 3.914, 4.180, 4.388, 4.558, 4.702, 4.826, 4.935}},
      {24, {2.919, 3.532, 3.901, 4.166, 4.373, 4.541, 4.684, 4.807, 4.915}},
      {25, {2.913, 3.523, 3.890, 4.153, 4.358, 4.526, 4.667, 4.789, 4.897}},
      {26, {2.907, 3.514, 3.880, 4.141, 4.345, 4.511, 4.652, 4.773, 4.880}},
      {27, {2.902, 3.506, 3.870, 4.130, 4.333, 4.498, 4.638, 4.758, 4.864}},
      {28, {2.897, 3.499, 3.861, 4.120, 4.322, 4.486, 4.625, 4.745, 4.850}},
      {29, {2.892, 3.493, 3.853, 4.111, 4.311, 4.475, 4.613, 4.732, 4.837}},
      {30, {2.888, 3.486, 3.845, 4.102, 4.301, 4.464, 4.601, 4.720, 4.824}},
      {40, {2.858, 3.442, 3.791, 4.039, 4.232, 4.388, 4.521, 4.634, 4.735}},
      {60, {2.829, 3.399, 3.737, 3.977, 4.163, 4.314, 4.441, 4.550, 4.646}},
      {120, {2.800, 3.356, 3.685, 3.917, 4.096, 4.241, 4.363, 4.468, 4.560}},
      {std::numeric_limits<double>::infinity(),
       {2.772, 3.314, 3.633, 3.858, 4.030, 4.170, 4.286, 4.387, 4.474}},
  };
  return table;
}

}  // namespace detail

// Critical value q(0.05; k, df). Integer df up to 30 are exact table rows;
// larger df interpolate linearly in 1/df between rows.
inline double studentized_range_critical(int k, double df, double alpha = 0.05) {
  if (std::abs(alpha - 0.05) > 1e-12) throw ConfigError("only alpha = 0.05 critical values are tabulated");
  if (k < 2 || k > 10) throw ConfigError("studentized range table covers 2..10 groups");
  if (!(df >= 1.0)) throw ConfigError("studentized range needs df >= 1");
  const auto& t = detail::studentized_range_table();
  const auto col = static_cast<std::size_t>(k - 2);
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (df == t[i].df) return t[i].q[col];
    if (df < t[i].df) {
      const auto& lo = t[i - 1];
      const auto& hi = t[i];
      double inv = 1.0 / df, inv_lo = 1.0 / lo.df, inv_hi = std::isinf(hi.df) ? 0.0 : 1.0 / hi.df;
      double w = (inv_lo - inv) / (inv_lo - inv_hi);
      return lo.q[col] + w * (hi.q[col] - lo.q[col]);
    }
  }
  return t.back().q[col];
}

struct ReplicationTable {
  std::vector<std::string> models;
  std::string metric;
  std::vector<std::vector<double>> values;  // model x replication
};

struct PairComparison {
  std::size_t a = 0;
  std::size_t b = 0;
  double mean_diff = 0.0;
  double q = 0.0;
  bool significant = false;
};

struct TukeyResult {
  std::vector<double> means;
  double mse = 0.0;
  double df = 0.0;
  double q_critical = 0.0;
  bool exact_fallback = false;  // zero within-group variance everywhere
  std::vector<PairComparison> pairs;
  std::map<std::string, std::string> letters;
};

namespace detail {

// Insert-and-absorb compact letter display. `order` lists groups by
// descending mean; letters are handed out in that order.
inline std::vector<std::string> compact_letters(std::size_t k, const std::vector<PairComparison>& pairs,
                                                const std::vector<std::size_t>& order) {
  std::vector<std::vector<char>> cols{std::vector<char>(k, 1)};
  for (const auto& p : pairs) {
    if (!p.significant) continue;
    std::vector<std::vector<char>> next;
    for (auto& c : cols) {
      if (c[p.a] && c[p.b]) {
        auto without_a = c, without_b = c;
        without_a[p.a] = 0;
        without_b[p.b] = 0;
        next.push_back(std::move(without_a));
        next.push_back(std::move(without_b));
      } else {
        next.push_back(c);
      }
    }
    // Absorb: drop columns contained in another column (and duplicates).
    std::vector<std::vector<char>> kept;
    for (std::size_t i = 0; i < next.size(); ++i) {
      bool absorbed = false;
      for (std::size_t j = 0; j < next.size() && !absorbed; ++j) {
        if (i == j) continue;
        bool subset = true;
        for (std::size_t g = 0; g < k && subset; ++g) subset = !next[i][g] || next[j][g];
        if (subset && (next[i] != next[j] || j < i)) absorbed = true;
      }
      if (!absorbed) kept.push_back(next[i]);
    }
    cols = std::move(kept);
  }
  // Column rank: sequence of member positions in mean order, compared
  // lexicographically so the column holding the best group comes first.
  std::vector<std::size_t> rank(k);
  for (std::size_t i = 0; i < order.size(); ++i) rank[order[i]] = i;
  auto key = [&](const std::vector<char>& c) {
    std::vector<std::size_t> pos;
    for (std::size_t g = 0; g < k; ++g)
      if (c[g]) pos.push_back(rank[g]);
    std::sort(pos.begin(), pos.end());
    return pos;
  };
  std::sort(cols.begin(), cols.end(), [&](const auto& a, const auto& b) { return key(a) < key(b); });
  std::vector<std::string> out(k);
  for (std::size_t c = 0; c < cols.size(); ++c) {
    char letter = static_cast<char>('a' + static_cast<int>(c % 26));
    for (std::size_t g = 0; g < k; ++g)
      if (cols[c][g]) out[g] += letter;
  }
  return out;
}

}  // namespace detail

// One-way ANOVA error term, pairwise Tukey HSD, compact letter display.
inline TukeyResult tukey_hsd_cld(const ReplicationTable& table, double alpha = 0.05) {
  const std::size_t k = table.values.size();
  if (k < 2) throw ValidationError("Tukey HSD needs at least two groups");
  if (table.models.size() != k) throw ValidationError("model names and value rows differ");
  if (std::set<std::string>(table.models.begin(), table.models.end()).size() != k)
    throw ValidationError("model names must be unique");
  const std::size_t n = table.values[0].size();
  for (const auto& row : table.values) {
    if (row.size() != n) throw ValidationError("Tukey HSD needs balanced replications");
    for (double v : row)
      if (!std::isfinite(v)) throw ValidationError("non-finite replication value");
  }
  if (n < 2) throw ValidationError("Tukey HSD needs at least two replications per group");

  TukeyResult r;
  double ss_within = 0.0;
  for (const auto& row : table.values) {
    double m = 0.0;
    for (double v : row) m += v;
    m /= static_cast<double>(n);
    r.means.push_back(m);
    for (double v : row) ss_within += (v - m) * (v - m);
  }
  r.df = static_cast<double>(k * (n - 1));
  r.mse = ss_within / r.df;
  r.q_critical = studentized_range_critical(static_cast<int>(k), r.df, alpha);
  r.exact_fallback = r.mse == 0.0;
  const double se = std::sqrt(r.mse / static_cast<double>(n));
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a + 1; b < k; ++b) {
      PairComparison p{a, b, r.means[a] - r.means[b], 0.0, false};
      if (r.exact_fallback) {
        p.q = p.mean_diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
        p.significant = p.mean_diff != 0.0;
      } else {
        p.q = std::abs(p.mean_diff) / se;
        p.significant = p.q > r.q_critical;
      }
      r.pairs.push_back(p);
    }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return r.means[a] > r.means[b]; });
  auto letters = detail::compact_letters(k, r.pairs, order);
  for (std::size_t g = 0; g < k; ++g) r.letters[table.models[g]] = letters[g];
  return r;
}

}  // namespace weedet
