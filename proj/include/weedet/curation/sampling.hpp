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
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "weedet/core/errors.hpp"
#include "weedet/core/rng.hpp"
#include "weedet/curation/kmeans.hpp"

namespace weedet {

// Indices (into pyr.image_ids, ascending) of a centroid-proximity sample of
// exactly round(fraction * n) images.
//
// Each leaf cluster first contributes its ceil(fraction * size) members
// closest to the centroid. The surplus is then trimmed globally, farthest
// first; when the target allows it, the last selected member of a cluster
// is never trimmed, so every leaf stays represented.
inline std::vector<std::size_t> sample_indices(const ClusterPyramid& pyr, double fraction,
                                               std::uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0) throw ConfigError("sample fraction must be in (0, 1]");
  if (pyr.empty()) return {};
  const std::size_t n = pyr.n();
  const PyramidLevel& leaf = pyr.levels.back();
  const std::size_t k = leaf.clusters(pyr.d);
  const auto target = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));

  // Random tie-break key so equidistant members are not ordered by id.
  Rng rng = make_rng(seed, 0x5a3b);
  std::vector<std::uint64_t> key(n);
  for (auto& v : key) v = rng();
  auto closer = [&](std::size_t a, std::size_t b) {
    if (leaf.distance[a] != leaf.distance[b]) return leaf.distance[a] < leaf.distance[b];
    if (key[a] != key[b]) return key[a] < key[b];
    return a < b;
  };

  std::vector<std::vector<std::size_t>> groups(k);
  for (std::size_t i = 0; i < n; ++i) groups[static_cast<std::size_t>(leaf.assignment[i])].push_back(i);
  std::vector<std::size_t> selected;
  std::vector<std::size_t> per_cluster(k, 0);
  std::size_t non_empty = 0;
  for (std::size_t c = 0; c < k; ++c) {
    auto& g = groups[c];
    if (g.empty()) continue;
    ++non_empty;
    std::sort(g.begin(), g.end(), closer);
    auto quota = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(g.size()) - 1e-9));
    quota = std::clamp<std::size_t>(quota, 1, g.size());
    selected.insert(selected.end(), g.begin(), g.begin() + static_cast<std::ptrdiff_t>(quota));
    per_cluster[c] = quota;
  }

  if (selected.size() > target) {
    std::vector<std::size_t> by_far = selected;
    std::sort(by_far.begin(), by_far.end(), [&](std::size_t a, std::size_t b) { return closer(b, a); });
    const bool protect = target >= non_empty;
    std::vector<char> drop(n, 0);
    std::size_t count = selected.size();
    for (std::size_t i : by_far) {
      if (count == target) break;
      auto c = static_cast<std::size_t>(leaf.assignment[i]);
      if (protect && per_cluster[c] <= 1) continue;
      drop[i] = 1;
      --per_cluster[c];
      --count;
    }
    selected.erase(std::remove_if(selected.begin(), selected.end(), [&](std::size_t i) { return drop[i] != 0; }),
                   selected.end());
  }
  std::sort(selected.begin(), selected.end());
  return selected;
}

inline std::vector<std::string> sample_from_pyramid(const ClusterPyramid& pyr, double fraction,
                                                    std::uint64_t seed) {
  std::vector<std::string> ids;
  for (std::size_t i : sample_indices(pyr, fraction, seed)) ids.push_back(pyr.image_ids[i]);
  return ids;
}

}  // namespace weedet
