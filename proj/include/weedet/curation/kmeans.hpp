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
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "weedet/core/errors.hpp"
#include "weedet/core/parallel.hpp"
#include "weedet/core/rng.hpp"
#include "weedet/curation/embed.hpp"

namespace weedet {

struct KMeansResult {
  std::size_t d = 0;
  std::vector<double> centroids;      // clusters x d, empty clusters removed
  std::vector<int> assignment;        // parallel to the member list
  std::vector<double> distance;       // Euclidean distance to own centroid
  std::vector<double> sse_history;    // SSE after every assignment step
  int iterations = 0;

  std::size_t clusters() const { return d == 0 ? 0 : centroids.size() / d; }
};

namespace detail {

inline double sq_dist(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double t = a[j] - b[j];
    s += t * t;
  }
  return s;
}

}  // namespace detail

// Lloyd's algorithm with k-means++ seeding over a subset of rows. The
// assignment step runs in parallel per point; centroid sums are reduced in
// member order, so results do not depend on the worker count.
inline KMeansResult kmeans(const EmbeddingMatrix& emb, std::span<const std::size_t> members, int k,
                           std::uint64_t seed, int max_iters, int workers = 1) {
  if (k <= 0) throw ConfigError("k must be positive");
  if (members.empty()) throw ValidationError("k-means on empty input");
  const std::size_t d = emb.d;
  const std::size_t m = members.size();
  Rng rng = make_rng(seed, 0x6b6d);

  // k-means++ seeding; stops early when every remaining point coincides
  // with an existing centroid.
  std::vector<double> cent;
  cent.reserve(static_cast<std::size_t>(k) * d);
  auto push_centroid = [&](std::size_t member) {
    const double* r = emb.row(members[member]);
    cent.insert(cent.end(), r, r + d);
  };
  push_centroid(std::uniform_int_distribution<std::size_t>(0, m - 1)(rng));
  std::vector<double> best(m, std::numeric_limits<double>::infinity());
  for (int c = 1; c < k; ++c) {
    const double* last = cent.data() + (cent.size() - d);
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      best[i] = std::min(best[i], detail::sq_dist(emb.row(members[i]), last, d));
      total += best[i];
    }
    if (!(total > 0.0)) break;
    double r = std::uniform_real_distribution<double>(0.0, total)(rng);
    std::size_t pick = m;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < m; ++i) {
      if (best[i] <= 0.0) continue;
      last_positive = i;
      r -= best[i];
      if (r < 0.0) {
        pick = i;
        break;
      }
    }
    if (pick == m) pick = last_positive;
    push_centroid(pick);
  }
  std::size_t kc = cent.size() / d;

  KMeansResult res;
  res.d = d;
  res.assignment.assign(m, -1);
  res.distance.assign(m, 0.0);
  std::vector<double> dist2(m);
  auto assign_step = [&]() {
    bool changed = false;
    std::vector<char> moved(m, 0);
    parallel_for(m, workers, [&](std::size_t i) {
      const double* x = emb.row(members[i]);
      int arg = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < kc; ++c) {
        double v = detail::sq_dist(x, cent.data() + c * d, d);
        if (v < bd) {
          bd = v;
          arg = static_cast<int>(c);
        }
      }
      moved[i] = res.assignment[i] != arg;
      res.assignment[i] = arg;
      dist2[i] = bd;
    });
    double sse = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      sse += dist2[i];
      changed = changed || moved[i];
    }
    res.sse_history.push_back(sse);
    return changed;
  };
  auto update_step = [&]() {
    std::vector<double> sums(kc * d, 0.0);
    std::vector<std::size_t> counts(kc, 0);
    for (std::size_t i = 0; i < m; ++i) {
      auto c = static_cast<std::size_t>(res.assignment[i]);
      const double* x = emb.row(members[i]);
      for (std::size_t j = 0; j < d; ++j) sums[c * d + j] += x[j];
      ++counts[c];
    }
    bool reseeded = false;
    for (std::size_t c = 0; c < kc; ++c) {
      if (counts[c] == 0) {
        if (reseeded) continue;
        // Move the empty centroid onto the farthest point of the largest
        // cluster; at most once per iteration.
        std::size_t largest = static_cast<std::size_t>(
            std::max_element(counts.begin(), counts.end()) - counts.begin());
        std::size_t far = m;
        double fd = -1.0;
        for (std::size_t i = 0; i < m; ++i)
          if (static_cast<std::size_t>(res.assignment[i]) == largest && dist2[i] > fd) {
            fd = dist2[i];
            far = i;
          }
        if (far < m && fd > 0.0) {
          const double* x = emb.row(members[far]);
          std::copy(x, x + d, cent.begin() + static_cast<std::ptrdiff_t>(c * d));
          reseeded = true;
        }
        continue;
      }
      for (std::size_t j = 0; j < d; ++j)
        cent[c * d + j] = sums[c * d + j] / static_cast<double>(counts[c]);
    }
  };

  bool changed = assign_step();
  int it = 0;
  while (changed && it < max_iters) {
    update_step();
    changed = assign_step();
    ++it;
  }
  res.iterations = it;

  // Final centroids are member means; empty clusters are dropped and the
  // remaining ones renumbered in index order.
  std::vector<std::size_t> counts(kc, 0);
  for (int a : res.assignment) ++counts[static_cast<std::size_t>(a)];
  std::vector<int> remap(kc, -1);
  int next = 0;
  for (std::size_t c = 0; c < kc; ++c)
    if (counts[c] > 0) remap[c] = next++;
  res.centroids.assign(static_cast<std::size_t>(next) * d, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    res.assignment[i] = remap[static_cast<std::size_t>(res.assignment[i])];
    const double* x = emb.row(members[i]);
    for (std::size_t j = 0; j < d; ++j)
      res.centroids[static_cast<std::size_t>(res.assignment[i]) * d + j] += x[j];
  }
  for (std::size_t c = 0; c < kc; ++c) {
    if (remap[c] < 0) continue;
    auto cc = static_cast<std::size_t>(remap[c]);
    for (std::size_t j = 0; j < d; ++j) res.centroids[cc * d + j] /= static_cast<double>(counts[c]);
  }
  for (std::size_t i = 0; i < m; ++i)
    res.distance[i] = std::sqrt(detail::sq_dist(
        emb.row(members[i]), res.centroids.data() + static_cast<std::size_t>(res.assignment[i]) * d, d));
  return res;
}

struct PyramidLevel {
  int requested_k = 0;
  std::vector<double> centroids;  // clusters x d
  std::vector<int> assignment;    // per image
  std::vector<double> distance;   // per image, to own centroid at this level
  std::vector<int> parent;        // per cluster; empty at the top level

  std::size_t clusters(std::size_t d) const { return d == 0 ? 0 : centroids.size() / d; }
};

// Multi-level assignment tree; level 0 is the coarsest.
struct ClusterPyramid {
  std::size_t d = 0;
  std::vector<std::string> image_ids;
  std::vector<PyramidLevel> levels;

  std::size_t n() const { return image_ids.size(); }
  bool empty() const { return levels.empty() || image_ids.empty(); }
};

// Largest-remainder split of `budget` over parents by member count, with
// at least one child per non-empty parent.
inline std::vector<int> child_budgets(const std::vector<std::size_t>& sizes, int budget) {
  std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  std::vector<int> out(sizes.size(), 0);
  if (total == 0) return out;
  std::vector<std::pair<double, std::size_t>> rem;
  int assigned = 0;
  for (std::size_t p = 0; p < sizes.size(); ++p) {
    double exact = static_cast<double>(budget) * static_cast<double>(sizes[p]) / static_cast<double>(total);
    out[p] = static_cast<int>(std::floor(exact));
    assigned += out[p];
    rem.emplace_back(exact - std::floor(exact), p);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < budget && i < rem.size(); ++i, ++assigned) ++out[rem[i].second];
  for (std::size_t p = 0; p < sizes.size(); ++p)
    if (sizes[p] > 0 && out[p] == 0) out[p] = 1;
  return out;
}

// Top-down recursive k-means: level 0 clusters everything, each deeper
// level re-clusters every parent's members with a proportional budget.
inline ClusterPyramid hierarchical_kmeans(const EmbeddingMatrix& emb, const std::vector<int>& level_ks,
                                          std::uint64_t seed, int max_iters, int workers = 1) {
  if (emb.n == 0) throw ValidationError("hierarchical k-means on empty input");
  if (level_ks.empty()) throw ConfigError("level_ks must not be empty");
  for (std::size_t i = 0; i < level_ks.size(); ++i) {
    if (level_ks[i] <= 0) throw ConfigError("level k must be positive");
    if (i > 0 && level_ks[i] <= level_ks[i - 1]) throw ConfigError("level_ks must be strictly increasing");
  }
  ClusterPyramid pyr;
  pyr.d = emb.d;
  pyr.image_ids = emb.image_ids;
  const std::size_t n = emb.n;
  const std::size_t d = emb.d;

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  {
    KMeansResult top = kmeans(emb, all, level_ks[0], derive_seed(seed, 1), max_iters, workers);
    PyramidLevel lvl;
    lvl.requested_k = level_ks[0];
    lvl.centroids = std::move(top.centroids);
    lvl.assignment = std::move(top.assignment);
    lvl.distance = std::move(top.distance);
    pyr.levels.push_back(std::move(lvl));
  }
  for (std::size_t L = 1; L < level_ks.size(); ++L) {
    const PyramidLevel& up = pyr.levels.back();
    std::size_t parents = up.clusters(d);
    std::vector<std::vector<std::size_t>> groups(parents);
    for (std::size_t i = 0; i < n; ++i) groups[static_cast<std::size_t>(up.assignment[i])].push_back(i);
    std::vector<std::size_t> sizes(parents);
    for (std::size_t p = 0; p < parents; ++p) sizes[p] = groups[p].size();
    auto budgets = child_budgets(sizes, level_ks[L]);

    std::vector<KMeansResult> sub(parents);
    parallel_for(parents, workers, [&](std::size_t p) {
      if (groups[p].empty()) return;
      std::uint64_t s = derive_seed(seed, (static_cast<std::uint64_t>(L + 1) << 40) + p);
      sub[p] = kmeans(emb, groups[p], budgets[p], s, max_iters, 1);
    });

    PyramidLevel lvl;
    lvl.requested_k = level_ks[L];
    lvl.assignment.assign(n, -1);
    lvl.distance.assign(n, 0.0);
    int base = 0;
    for (std::size_t p = 0; p < parents; ++p) {
      const auto& r = sub[p];
      std::size_t kc = r.clusters();
      lvl.centroids.insert(lvl.centroids.end(), r.centroids.begin(), r.centroids.end());
      for (std::size_t c = 0; c < kc; ++c) lvl.parent.push_back(static_cast<int>(p));
      for (std::size_t j = 0; j < groups[p].size(); ++j) {
        lvl.assignment[groups[p][j]] = base + r.assignment[j];
        lvl.distance[groups[p][j]] = r.distance[j];
      }
      base += static_cast<int>(kc);
    }
    pyr.levels.push_back(std::move(lvl));
  }
  return pyr;
}

}  // namespace weedet
