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
#include <string>
#include <vector>

#include "weedet/core/errors.hpp"
#include "weedet/dataio/image.hpp"

namespace weedet {

struct TileSpec {
  int tile_size = 518;
  double overlap_fraction = 0.2;

  int stride() const {
    return static_cast<int>(std::floor(tile_size * (1.0 - overlap_fraction)));
  }
  void validate() const {
    if (tile_size < 1) throw ConfigError("tile_size must be >= 1");
    if (!(overlap_fraction >= 0.0) || overlap_fraction >= 1.0)
      throw ConfigError("overlap_fraction must be in [0, 1)");
    if (stride() < 1) throw ConfigError("tile stride must be >= 1");
  }
};

// Offsets along one axis: multiples of the stride, plus a final offset that
// puts the last tile flush with the edge.
inline std::vector<int> tile_offsets(int extent, const TileSpec& spec) {
  if (extent <= spec.tile_size) return {0};
  int stride = spec.stride();
  int count = (extent - spec.tile_size + stride - 1) / stride + 1;
  std::vector<int> offsets;
  offsets.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i + 1 < count; ++i) offsets.push_back(i * stride);
  offsets.push_back(extent - spec.tile_size);
  return offsets;
}

inline std::vector<ImageRecord> tile_image(const ImageRecord& image, const TileSpec& spec = {}) {
  spec.validate();
  auto xs = tile_offsets(image.width, spec);
  auto ys = tile_offsets(image.height, spec);
  int tw = std::min(spec.tile_size, image.width);
  int th = std::min(spec.tile_size, image.height);
  std::vector<ImageRecord> tiles;
  tiles.reserve(xs.size() * ys.size());
  for (int y : ys) {
    for (int x : xs) {
      ImageRecord t = sub_image(image, x, y, tw, th);
      t.id = image.id + "_x" + std::to_string(x) + "_y" + std::to_string(y);
      t.provenance.parent_id = image.id;
      t.provenance.offset_x = x;
      t.provenance.offset_y = y;
      t.provenance.stage = "tile";
      tiles.push_back(std::move(t));
    }
  }
  return tiles;
}

}  // namespace weedet
