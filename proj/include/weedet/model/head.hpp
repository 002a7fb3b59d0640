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
#include <cmath>

#include "weedet/model/backbone.hpp"
#include "weedet/model/config.hpp"

namespace weedet {

template <typename T>
struct RawPrediction {
  std::array<Var<T>, 3> cls;  // [N, K, H, W] logits
  std::array<Var<T>, 3> box;  // [N, 4, H, W] plain or [N, 4*bins, H, W] dfl
};

// Foreground prior of 1% on the class logits at init.
inline constexpr double kClassPriorBias = -4.59511985013459;

template <typename T>
struct LevelHead {
  Conv<T> cls_stem, cls_out, box_stem, box_out;

  LevelHead() = default;
  LevelHead(int ch, int classes, int box_outputs, Rng& rng)
      : cls_stem(ch, ch, 3, 1, rng),
        cls_out(ch, classes, 1, 1, rng, 0.1),
        box_stem(ch, ch, 3, 1, rng),
        box_out(ch, box_outputs, 1, 1, rng, 0.1) {
    for (auto& v : cls_out.bias.mutable_value().values()) v = static_cast<T>(kClassPriorBias);
  }

  std::pair<Var<T>, Var<T>> operator()(const Var<T>& x) const {
    return {cls_out(nn::silu(cls_stem(x))), box_out(nn::silu(box_stem(x)))};
  }

  void collect(ParameterList<T>& out, const std::string& name) const {
    cls_stem.collect(out, name + ".cls_stem");
    cls_out.collect(out, name + ".cls_out");
    box_stem.collect(out, name + ".box_stem");
    box_out.collect(out, name + ".box_out");
  }
};

// Anchor-free per-cell head, one stack per level. The optional attention
// block runs over the P5 cells before the P5 stack.
template <typename T>
struct DetectionHead {
  std::array<LevelHead<T>, 3> levels;
  bool attention = false;
  AttentionBlock<T> attn;

  DetectionHead() = default;
  DetectionHead(const DetectorConfig& cfg, Rng& rng) : attention(cfg.head_attention) {
    const auto widths = cfg.level_channels();
    const int box_outputs = cfg.head_variant == HeadVariant::kDfl ? 4 * cfg.dfl_bins : 4;
    for (int l = 0; l < 3; ++l) levels[l] = LevelHead<T>(widths[l], cfg.num_classes, box_outputs, rng);
    if (attention) attn = AttentionBlock<T>(widths[2], 4, rng);
  }

  RawPrediction<T> operator()(const FeaturePyramid<T>& p) const {
    check_pyramid(p);
    RawPrediction<T> raw;
    for (int l = 0; l < 3; ++l) {
      Var<T> x = p.levels[l];
      if (l == 2 && attention) {
        const int h = x.dim(2), w = x.dim(3);
        x = tokens_to_map(attn(map_to_tokens(x)), h, w);
      }
      auto [c, b] = levels[l](x);
      raw.cls[l] = c;
      raw.box[l] = b;
    }
    return raw;
  }

  void collect(ParameterList<T>& out, const std::string& name) const {
    if (attention) attn.collect(out, name + ".attn");
    for (int l = 0; l < 3; ++l) levels[l].collect(out, name + ".p" + std::to_string(l + 3));
  }
};

}  // namespace weedet
