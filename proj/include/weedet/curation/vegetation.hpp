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

#include <vector>

#include "weedet/dataio/image.hpp"

namespace weedet {

// Excess-green pixel test: 2G - R - B above the threshold with G strictly
// larger than both R and B.
struct GreenRule {
  int excess_green_threshold = 20;

  bool is_green(const std::uint8_t* px) const {
    int r = px[0], g = px[1], b = px[2];
    return 2 * g - r - b > excess_green_threshold && g > r && g > b;
  }
};

inline double green_ratio(const ImageRecord& image, const GreenRule& rule = {}) {
  std::size_t n = image.pixel_count();
  if (n == 0) return 0.0;
  std::size_t green = 0;
  for (std::size_t i = 0; i < n; ++i) green += rule.is_green(image.pixels.data() + i * 3);
  return static_cast<double>(green) / static_cast<double>(n);
}

inline std::vector<ImageRecord> filter_vegetation(const std::vector<ImageRecord>& tiles,
                                                  double min_green = 0.2,
                                                  const GreenRule& rule = {}) {
  std::vector<ImageRecord> kept;
  for (const auto& t : tiles)
    if (green_ratio(t, rule) >= min_green) kept.push_back(t);
  return kept;
}

}  // namespace weedet
