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

#include "weedet/curation/embed.hpp"
#include "weedet/model/detector.hpp"

namespace weedet {

enum class Pooling { kClsToken, kMeanTokens };

inline Pooling parse_pooling(const std::string& s) {
  if (s == "cls") return Pooling::kClsToken;
  if (s == "mean") return Pooling::kMeanTokens;
  throw ConfigError("unknown pooling '" + s + "'");
}

inline std::string to_string(Pooling p) { return p == Pooling::kClsToken ? "cls" : "mean"; }

// One pooled ViT feature vector per image (letterboxed to the model input).
// Runs without recording a graph, so it is safe to call concurrently.
template <typename T>
std::vector<double> vit_features(const Detector<T>& det, const ImageRecord& img, Pooling pooling = Pooling::kClsToken) {
  if (!det.config().uses_vit()) throw ConfigError("model has no ViT branch");
  nn::NoGradGuard guard;
  auto x = Var<T>(preprocess<T>(img, det.config()));
  auto out = det.vit()(x);
  std::vector<double> f;
  if (pooling == Pooling::kClsToken) {
    for (T v : out.cls.value().values()) f.push_back(static_cast<double>(v));
    return f;
  }
  const auto& tok = out.final.value();
  const int L = tok.dim(1), D = tok.dim(2);
  f.assign(static_cast<std::size_t>(D), 0.0);
  for (int t = 0; t < L; ++t)
    for (int d = 0; d < D; ++d) f[static_cast<std::size_t>(d)] += tok[static_cast<std::size_t>(t) * D + d] / L;
  return f;
}

// Curation embedder backed by a model's pooled class token.
template <typename T>
Embedder vit_embedder(std::shared_ptr<const Detector<T>> det) {
  if (!det->config().uses_vit()) throw ConfigError("model has no ViT branch");
  return [det](const ImageRecord& img) { return vit_features(*det, img, Pooling::kClsToken); };
}

}  // namespace weedet
