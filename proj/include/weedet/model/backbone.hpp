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
#include <string>

#include "weedet/model/layers.hpp"

namespace weedet {

// Levels at strides 8, 16 and 32.
template <typename T>
struct FeaturePyramid {
  std::array<Var<T>, 3> levels;

  const Var<T>& p3() const { return levels[0]; }
  const Var<T>& p4() const { return levels[1]; }
  const Var<T>& p5() const { return levels[2]; }
};

inline constexpr std::array<int, 3> kLevelStrides = {8, 16, 32};

// Spatial dims halve between consecutive levels; throws ShapeError otherwise.
template <typename T>
void check_pyramid(const FeaturePyramid<T>& p) {
  for (int l = 0; l < 3; ++l)
    if (p.levels[l].rank() != 4) throw ShapeError("pyramid level must be rank 4");
  for (int l = 1; l < 3; ++l) {
    const auto& a = p.levels[l - 1];
    const auto& b = p.levels[l];
    if (a.dim(2) != 2 * b.dim(2) || a.dim(3) != 2 * b.dim(3) || a.dim(0) != b.dim(0))
      throw ShapeError("pyramid levels must halve in spatial size");
  }
}

// silu(x + conv(silu(conv(x)))).
template <typename T>
struct ResBlock {
  Conv<T> c1, c2;

  ResBlock() = default;
  ResBlock(int ch, Rng& rng) : c1(ch, ch, 3, 1, rng), c2(ch, ch, 3, 1, rng, 1.0) {}

  Var<T> operator()(const Var<T>& x) const { return nn::silu(nn::add(x, c2(nn::silu(c1(x))))); }

  void collect(ParameterList<T>& out, const std::string& name) const {
    c1.collect(out, name + ".c1");
    c2.collect(out, name + ".c2");
  }
};

// Strided residual conv pyramid with widths {C/4, C/2, C}.
template <typename T>
struct ConvBackbone {
  Conv<T> stem1, stem2;
  std::array<Conv<T>, 3> down;
  std::array<ResBlock<T>, 3> res;

  ConvBackbone() = default;
  ConvBackbone(int channels, Rng& rng) {
    const int c3 = channels / 4, c4 = channels / 2, c5 = channels;
    stem1 = Conv<T>(3, 8, 3, 2, rng);
    stem2 = Conv<T>(8, c3, 3, 2, rng);
    down = {Conv<T>(c3, c3, 3, 2, rng), Conv<T>(c3, c4, 3, 2, rng), Conv<T>(c4, c5, 3, 2, rng)};
    res = {ResBlock<T>(c3, rng), ResBlock<T>(c4, rng), ResBlock<T>(c5, rng)};
  }

  FeaturePyramid<T> operator()(const Var<T>& x) const {
    if (x.rank() != 4 || x.dim(2) % 32 != 0 || x.dim(3) % 32 != 0)
      throw ConfigError("backbone input must be [N, 3, S, S] with S divisible by 32");
    Var<T> h = nn::silu(stem2(nn::silu(stem1(x))));
    FeaturePyramid<T> p;
    for (int l = 0; l < 3; ++l) {
      h = res[l](nn::silu(down[l](h)));
      p.levels[l] = h;
    }
    return p;
  }

  void collect(ParameterList<T>& out, const std::string& name) const {
    stem1.collect(out, name + ".stem1");
    stem2.collect(out, name + ".stem2");
    for (int l = 0; l < 3; ++l) {
      down[l].collect(out, name + ".down" + std::to_string(l + 3));
      res[l].collect(out, name + ".res" + std::to_string(l + 3));
    }
  }
};

}  // namespace weedet
