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

#include <cmath>
#include <optional>

#include "weedet/numerics/ops.hpp"

namespace weedet::nn {

template <typename T>
struct AttentionWeights {
  Var<T> qkv_weight;  // [3D, D]
  Var<T> qkv_bias;    // [3D]
  Var<T> out_weight;  // [D, D]
  Var<T> out_bias;    // [D]
};

template <typename T>
struct AttentionOutput {
  Var<T> output;   // [N, T, D]
  Var<T> weights;  // [N * heads, T, T], rows sum to 1
};

// softmax(Q K^T / sqrt(D / heads)) V per head, heads concatenated and
// passed through the output projection.
template <typename T>
AttentionOutput<T> multi_head_attention(const Var<T>& x, int heads, const AttentionWeights<T>& w) {
  if (x.rank() != 3) throw ShapeError("multi_head_attention: expects [N, T, D]");
  const int N = x.dim(0), L = x.dim(1), D = x.dim(2);
  if (heads <= 0 || D % heads != 0)
    throw ConfigError("multi_head_attention: embed dim " + std::to_string(D) + " not divisible by " +
                      std::to_string(heads) + " heads");
  const int dh = D / heads;
  Var<T> qkv = linear(x, w.qkv_weight, &w.qkv_bias);                  // [N, L, 3D]
  qkv = permute(reshape(qkv, {N, L, 3, heads, dh}), {2, 0, 3, 1, 4});  // [3, N, H, L, dh]
  auto part = [&](int i) { return reshape(slice(qkv, 0, i, 1), {N * heads, L, dh}); };
  Var<T> q = part(0), k = part(1), v = part(2);
  Var<T> scores = scale(bmm(q, k, false, true), T(1) / std::sqrt(static_cast<T>(dh)));
  Var<T> attn = softmax(scores);
  Var<T> ctx = bmm(attn, v);                                                      // [N*H, L, dh]
  ctx = reshape(permute(reshape(ctx, {N, heads, L, dh}), {0, 2, 1, 3}), {N, L, D});
  return {linear(ctx, w.out_weight, &w.out_bias), attn};
}

}  // namespace weedet::nn
