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

#include <array>
#include <vector>

#include "weedet/model/backbone.hpp"
#include "weedet/model/config.hpp"

namespace weedet {

// Tokens [N, T, D] -> [N, D, g, g] -> resample to input_size / stride ->
// 1x1 conv to the level width.
template <typename T>
struct VitProjection {
  Conv<T> conv;
  int stride = 8;

  VitProjection() = default;
  VitProjection(int d, int channels, int stride_, Rng& rng) : conv(d, channels, 1, 1, rng, 1.0), stride(stride_) {}

  Var<T> operator()(const Var<T>& tokens, int input_size) const {
    const int g = square_grid(tokens.dim(1));
    return conv(resample(tokens_to_map(tokens, g, g), input_size / stride));
  }

  void collect(ParameterList<T>& out, const std::string& name) const { conv.collect(out, name); }
};

// Spatial tuning adapter: one token map at stride 16 fans out to P3
// (upsample + conv), P4 (conv) and P5 (strided conv).
template <typename T>
struct SpatialTuningAdapter {
  std::array<Conv<T>, 3> convs;

  SpatialTuningAdapter() = default;
  SpatialTuningAdapter(int d, const std::vector<int>& widths, Rng& rng) {
    convs = {Conv<T>(d, widths[0], 3, 1, rng), Conv<T>(d, widths[1], 3, 1, rng), Conv<T>(d, widths[2], 3, 2, rng)};
  }

  FeaturePyramid<T> operator()(const Var<T>& tokens, int input_size) const {
    const int g = square_grid(tokens.dim(1));
    Var<T> base = resample(tokens_to_map(tokens, g, g), input_size / 16);
    FeaturePyramid<T> p;
    p.levels[0] = nn::silu(convs[0](nn::upsample_nearest(base, 2)));
    p.levels[1] = nn::silu(convs[1](base));
    p.levels[2] = nn::silu(convs[2](base));
    return p;
  }

  void collect(ParameterList<T>& out, const std::string& name) const {
    for (int l = 0; l < 3; ++l) convs[l].collect(out, name + ".p" + std::to_string(l + 3));
  }
};

// Per level: conv3x3(yolo + vit).
template <typename T>
struct DualFusion {
  std::array<Conv<T>, 3> convs;

  DualFusion() = default;
  DualFusion(const std::vector<int>& widths, Rng& rng) {
    for (int l = 0; l < 3; ++l) convs[l] = Conv<T>(widths[l], widths[l], 3, 1, rng);
  }

  FeaturePyramid<T> operator()(const FeaturePyramid<T>& yolo, const FeaturePyramid<T>& vit) const {
    FeaturePyramid<T> p;
    for (int l = 0; l < 3; ++l) {
      if (yolo.levels[l].shape() != vit.levels[l].shape())
        throw ShapeError("fusion level " + std::to_string(l + 3) + ": " + nn::shape_str(yolo.levels[l].shape()) +
                         " vs " + nn::shape_str(vit.levels[l].shape()));
      p.levels[l] = convs[l](nn::add(yolo.levels[l], vit.levels[l]));
    }
    return p;
  }

  void collect(ParameterList<T>& out, const std::string& name) const {
    for (int l = 0; l < 3; ++l) convs[l].collect(out, name + ".p" + std::to_string(l + 3));
  }
};

// Sum over levels of mse(yolo_l, vit_l), unweighted.
template <typename T>
Var<T> alignment_loss(const FeaturePyramid<T>& yolo, const FeaturePyramid<T>& vit, bool detach_vit = false) {
  Var<T> total;
  for (int l = 0; l < 3; ++l) {
    if (yolo.levels[l].shape() != vit.levels[l].shape())
      throw ShapeError("alignment level " + std::to_string(l + 3) + ": " + nn::shape_str(yolo.levels[l].shape()) +
                       " vs " + nn::shape_str(vit.levels[l].shape()));
    Var<T> target = detach_vit ? nn::detach(vit.levels[l]) : vit.levels[l];
    Var<T> term = nn::mse(yolo.levels[l], target);
    total = l == 0 ? term : nn::add(total, term);
  }
  return total;
}

}  // namespace weedet
