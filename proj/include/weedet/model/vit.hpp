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
#include <vector>

#include "weedet/model/config.hpp"
#include "weedet/model/layers.hpp"

namespace weedet {

template <typename T>
struct ViTBlock {
  AttentionBlock<T> attn;
  LayerNorm<T> norm2;
  Linear<T> fc1;
  Linear<T> fc2;

  ViTBlock() = default;
  ViTBlock(const ViTConfig& c, Rng& rng)
      : attn(c.embed_dim, c.heads, rng),
        norm2(c.embed_dim),
        fc1(c.embed_dim, c.embed_dim * c.mlp_ratio, rng),
        fc2(c.embed_dim * c.mlp_ratio, c.embed_dim, rng) {}

  Var<T> operator()(const Var<T>& x) const {
    Var<T> h = attn(x);
    return nn::add(h, fc2(nn::gelu(fc1(norm2(h)))));
  }

  void collect(ParameterList<T>& out, const std::string& name) const {
    attn.collect(out, name + ".attn");
    norm2.collect(out, name + ".norm2");
    fc1.collect(out, name + ".fc1");
    fc2.collect(out, name + ".fc2");
  }
};

template <typename T>
struct ViTOutput {
  std::vector<Var<T>> taps;  // [N, T, D] patch tokens after each tap block
  Var<T> final;              // [N, T, D] patch tokens after the last block
  Var<T> cls;                // [N, D]
  int grid = 0;              // token grid side
};

// Patch-embedding ViT with a class token and learned positions. Blocks are
// pre-norm with residuals and there is no final norm, so zeroed blocks
// pass the embeddings through unchanged.
template <typename T>
struct ViT {
  ViTConfig cfg;
  int input_size = 0;
  Conv<T> patch;
  Var<T> cls_token;  // [1, D]
  Var<T> pos;        // [1 + T, D]
  std::vector<ViTBlock<T>> blocks;

  ViT() = default;
  ViT(const ViTConfig& c, int input_size_, Rng& rng) : cfg(c), input_size(input_size_) {
    c.validate();
    if (input_size % c.patch_size != 0) throw ConfigError("input size must be divisible by patch_size");
    const int D = c.embed_dim, g = input_size / c.patch_size;
    patch = Conv<T>(3, D, c.patch_size, c.patch_size, rng, 1.0);
    patch.padding = 0;
    cls_token = param_randn<T>({1, D}, 0.02, rng);
    pos = param_randn<T>({1 + g * g, D}, 0.02, rng);
    for (int i = 0; i < c.depth; ++i) blocks.emplace_back(c, rng);
  }

  int grid() const { return input_size / cfg.patch_size; }

  ViTOutput<T> operator()(const Var<T>& x) const {
    if (x.rank() != 4 || x.dim(2) % cfg.patch_size != 0 || x.dim(3) % cfg.patch_size != 0)
      throw ConfigError("ViT input must be [N, 3, S, S] with S divisible by patch_size");
    if (x.dim(2) != input_size || x.dim(3) != input_size)
      throw ShapeError("ViT built for " + std::to_string(input_size) + " px input");
    const int N = x.dim(0), D = cfg.embed_dim, g = grid(), L = g * g;
    Var<T> tokens = map_to_tokens(patch(x));  // [N, L, D]
    Var<T> cls = nn::add(nn::constant(nn::Tensor<T>({N, 1, D})), cls_token);
    Var<T> h = nn::add(nn::concat<T>({cls, tokens}, 1), pos);
    ViTOutput<T> out;
    out.grid = g;
    const auto taps = cfg.taps();
    for (int i = 0; i < cfg.depth; ++i) {
      h = blocks[static_cast<std::size_t>(i)](h);
      for (int t : taps)
        if (t == i) out.taps.push_back(nn::slice(h, 1, 1, L));
    }
    out.final = nn::slice(h, 1, 1, L);
    out.cls = nn::reshape(nn::slice(h, 1, 0, 1), {N, D});
    return out;
  }

  void collect(ParameterList<T>& out, const std::string& name) const {
    patch.collect(out, name + ".patch");
    add_param(out, name + ".cls_token", cls_token);
    add_param(out, name + ".pos", pos);
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(out, name + ".blocks." + std::to_string(i));
  }
};

}  // namespace weedet
