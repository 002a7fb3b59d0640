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
#include <vector>

#include "weedet/dataio/labels.hpp"
#include "weedet/model/backbone.hpp"

namespace weedet {

struct LevelTargets {
  int stride = 8;
  int height = 0;
  int width = 0;
  // Per cell of [N, H, W], row-major: class id or -1 for background,
  // ltrb distances in stride units and the owning box area.
  std::vector<int> cls;
  std::vector<std::array<double, 4>> ltrb;
  std::vector<double> area;

  std::size_t cell(int n, int y, int x) const {
    return (static_cast<std::size_t>(n) * height + y) * width + x;
  }
};

struct Targets {
  int batch = 0;
  int input_size = 0;
  std::array<LevelTargets, 3> levels;
  std::vector<int> positives;  // per image

  // 1 / (N * max(positives, 1)) per image.
  double image_weight(int n) const {
    return 1.0 / (static_cast<double>(batch) * std::max(positives[static_cast<std::size_t>(n)], 1));
  }
};

// Level whose stride best matches the box size: floor(log2(max(w, h) * S / 8))
// clamped to P3..P5.
inline int target_level(const GroundTruthBox& b, int input_size) {
  const double extent = std::max(b.w, b.h) * input_size / 8.0;
  if (!(extent >= 2.0)) return 0;
  return std::clamp(static_cast<int>(std::floor(std::log2(extent))), 0, 2);
}

// Center-region assignment: a box owns the cells of its level whose centers
// fall inside its central 0.5 x 0.5 sub-box, or the cell containing its
// center when no cell qualifies. Cells claimed twice go to the smaller box.
// Boxes are normalized to the model input.
inline Targets assign_targets(const std::vector<std::vector<GroundTruthBox>>& gts, int input_size) {
  Targets t;
  t.batch = static_cast<int>(gts.size());
  t.input_size = input_size;
  t.positives.assign(gts.size(), 0);
  for (int l = 0; l < 3; ++l) {
    auto& lt = t.levels[l];
    lt.stride = kLevelStrides[l];
    lt.height = lt.width = input_size / lt.stride;
    const std::size_t cells = gts.size() * lt.height * lt.width;
    lt.cls.assign(cells, -1);
    lt.ltrb.assign(cells, {0, 0, 0, 0});
    lt.area.assign(cells, 0.0);
  }
  const double S = input_size;
  for (std::size_t n = 0; n < gts.size(); ++n) {
    for (const auto& b : gts[n]) {
      auto& lt = t.levels[target_level(b, input_size)];
      const double s = lt.stride;
      const double x1 = b.x1() * S, x2 = b.x2() * S, y1 = b.y1() * S, y2 = b.y2() * S;
      const double area = (x2 - x1) * (y2 - y1);
      const double cx = b.cx * S, cy = b.cy * S;
      const double hx = 0.25 * b.w * S, hy = 0.25 * b.h * S;
      auto claim = [&](int gx, int gy) {
        const std::size_t c = lt.cell(static_cast<int>(n), gy, gx);
        if (lt.cls[c] >= 0 && lt.area[c] <= area) return;
        const double px = (gx + 0.5) * s, py = (gy + 0.5) * s;
        lt.cls[c] = b.class_id;
        lt.area[c] = area;
        lt.ltrb[c] = {std::max(0.0, (px - x1) / s), std::max(0.0, (py - y1) / s), std::max(0.0, (x2 - px) / s),
                      std::max(0.0, (y2 - py) / s)};
      };
      const int gx0 = std::max(0, static_cast<int>(std::ceil((cx - hx) / s - 0.5)));
      const int gx1 = std::min(lt.width - 1, static_cast<int>(std::floor((cx + hx) / s - 0.5)));
      const int gy0 = std::max(0, static_cast<int>(std::ceil((cy - hy) / s - 0.5)));
      const int gy1 = std::min(lt.height - 1, static_cast<int>(std::floor((cy + hy) / s - 0.5)));
      if (gx0 > gx1 || gy0 > gy1) {
        claim(std::clamp(static_cast<int>(cx / s), 0, lt.width - 1), std::clamp(static_cast<int>(cy / s), 0, lt.height - 1));
      } else {
        for (int gy = gy0; gy <= gy1; ++gy)
          for (int gx = gx0; gx <= gx1; ++gx) claim(gx, gy);
      }
    }
  }
  for (const auto& lt : t.levels)
    for (std::size_t c = 0; c < lt.cls.size(); ++c)
      if (lt.cls[c] >= 0) ++t.positives[c / (static_cast<std::size_t>(lt.height) * lt.width)];
  return t;
}

}  // namespace weedet
