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
#include <string>
#include <vector>

#include "weedet/core/rng.hpp"
#include "weedet/numerics/attention.hpp"
#include "weedet/numerics/ops.hpp"
#include "weedet/numerics/optim.hpp"

namespace weedet {

template <typename T>
using Var = nn::Var<T>;
template <typename T>
using ParameterList = nn::ParameterList<T>;

template <typename T>
void add_param(ParameterList<T>& out, const std::string& name, const Var<T>& v) {
  out.push_back({name, v});
}

template <typename T>
Var<T> param_randn(nn::Shape shape, double stddev, Rng& rng) {
  return Var<T>(nn::randn<T>(std::move(shape), static_cast<T>(stddev), rng), true);
}

template <typename T>
Var<T> param_fill(nn::Shape shape, double value) {
  return Var<T>(nn::Tensor<T>(std::move(shape), static_cast<T>(value)), true);
}

// Square-kernel convolution with bias; He-normal weights.
template <typename T>
struct Conv {
  Var<T> weight;
  Var<T> bias;
  int stride = 1;
  int padding = 0;

  Conv() = default;
  Conv(int in, int out, int kernel, int stride_, Rng& rng, double gain = std::sqrt(2.0))
      : weight(param_randn<T>({out, in, kernel, kernel}, gain / std::sqrt(double(in * kernel * kernel)), rng)),
        bias(param_fill<T>({out}, 0.0)),
        stride(stride_),
        padding(kernel / 2) {}

  Var<T> operator()(const Var<T>& x) const { return nn::conv2d(x, weight, &bias, {stride, padding}); }
  int out_channels() const { return weight.dim(0); }

  void collect(ParameterList<T>& out, const std::string& name) const {
    add_param(out, name + ".weight", weight);
    add_param(out, name + ".bias", bias);
  }
};

template <typename T>
struct Linear {
  Var<T> weight;  // [out, in]
  Var<T> bias;

  Linear() = default;
  Linear(int in, int out, Rng& rng, double stddev = 0.02)
      : weight(param_randn<T>({out, in}, stddev, rng)), bias(param_fill<T>({out}, 0.0)) {}

  Var<T> operator()(const Var<T>& x) const { return nn::linear(x, weight, &bias); }

  void collect(ParameterList<T>& out, const std::string& name) const {
    add_param(out, name + ".weight", weight);
    add_param(out, name + ".bias", bias);
  }
};

template <typename T>
struct LayerNorm {
  Var<T> gamma;
  Var<T> beta;

  LayerNorm() = default;
  explicit LayerNorm(int d) : gamma(param_fill<T>({d}, 1.0)), beta(param_fill<T>({d}, 0.0)) {}

  Var<T> operator()(const Var<T>& x) const { return nn::layer_norm(x, gamma, beta); }

  void collect(ParameterList<T>& out, const std::string& name) const {
    add_param(out, name + ".gamma", gamma);
    add_param(out, name + ".beta", beta);
  }
};

// Pre-norm transformer attention sublayer: x + MHA(LN(x)).
template <typename T>
struct AttentionBlock {
  LayerNorm<T> norm;
  Linear<T> qkv;
  Linear<T> proj;
  int heads = 1;

  AttentionBlock() = default;
  AttentionBlock(int d, int heads_, Rng& rng) : norm(d), qkv(d, 3 * d, rng), proj(d, d, rng), heads(heads_) {}

  Var<T> operator()(const Var<T>& x) const {
    auto out = nn::multi_head_attention(norm(x), heads,
                                        nn::AttentionWeights<T>{qkv.weight, qkv.bias, proj.weight, proj.bias});
    return nn::add(x, out.output);
  }

  void collect(ParameterList<T>& out, const std::string& name) const {
    norm.collect(out, name + ".norm");
    qkv.collect(out, name + ".qkv");
    proj.collect(out, name + ".proj");
  }
};

// [N, C, H, W] <-> [N, H*W, C] token layout.
template <typename T>
Var<T> map_to_tokens(const Var<T>& x) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  return nn::permute(nn::reshape(x, {N, C, H * W}), {0, 2, 1});
}

template <typename T>
Var<T> tokens_to_map(const Var<T>& tokens, int h, int w) {
  const int N = tokens.dim(0), L = tokens.dim(1), C = tokens.dim(2);
  if (L != h * w) throw ShapeError("token count " + std::to_string(L) + " does not form a " + std::to_string(h) +
                                   "x" + std::to_string(w) + " grid");
  return nn::reshape(nn::permute(tokens, {0, 2, 1}), {N, C, h, w});
}

// Square token grid side, or ShapeError.
inline int square_grid(int tokens) {
  int g = static_cast<int>(std::lround(std::sqrt(static_cast<double>(tokens))));
  if (g * g != tokens) throw ShapeError("token grid of " + std::to_string(tokens) + " tokens is not square");
  return g;
}

// Resamples a square map to `out` cells per side: nearest upsampling or
// average pooling by an integer factor.
template <typename T>
Var<T> resample(const Var<T>& x, int out) {
  const int g = x.dim(2);
  if (out == g) return x;
  if (out > g) {
    if (out % g != 0) throw ShapeError("cannot upsample " + std::to_string(g) + " to " + std::to_string(out));
    return nn::upsample_nearest(x, out / g);
  }
  if (g % out != 0) throw ShapeError("cannot downsample " + std::to_string(g) + " to " + std::to_string(out));
  return nn::avg_pool2d(x, g / out, g / out);
}

}  // namespace weedet
