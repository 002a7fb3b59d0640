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

#include "weedet/dataio/image.hpp"
#include "weedet/dataio/labels.hpp"

namespace weedet {

// Half-open pixel interval [begin, end) covered by a normalized span. A
// pixel belongs to the span when its center lies in [lo, hi).
struct PixelSpan {
  int begin = 0;
  int end = 0;
  int length() const { return std::max(0, end - begin); }
};

inline PixelSpan denormalize_span(double lo, double hi, int extent) {
  auto edge = [extent](double v) {
    double p = std::ceil(v * extent - 0.5);
    return static_cast<int>(std::clamp(p, 0.0, static_cast<double>(extent)));
  };
  return {edge(lo), edge(hi)};
}

struct CropResult {
  std::vector<ImageRecord> crops;
  std::size_t skipped = 0;
};

inline CropResult crop_bounding_boxes(const ImageRecord& image,
                                      const std::vector<GroundTruthBox>& boxes) {
  CropResult result;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto& b = boxes[i];
    PixelSpan xs = denormalize_span(b.x1(), b.x2(), image.width);
    PixelSpan ys = denormalize_span(b.y1(), b.y2(), image.height);
    if (xs.length() == 0 || ys.length() == 0) {
      ++result.skipped;
      continue;
    }
    ImageRecord crop = sub_image(image, xs.begin, ys.begin, xs.length(), ys.length());
    crop.id = image.id + "_box" + std::to_string(i);
    crop.provenance.parent_id = image.id;
    crop.provenance.class_id = b.class_id;
    crop.provenance.offset_x = xs.begin;
    crop.provenance.offset_y = ys.begin;
    crop.provenance.stage = "bbox_crop";
    result.crops.push_back(std::move(crop));
  }
  return result;
}

}  // namespace weedet
