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

#include "weedet/eval/boxes.hpp"
#include "weedet/model/config.hpp"
#include "weedet/model/head.hpp"

namespace weedet {

inline constexpr double kMinDistance = 1e-3;  // stride units

// Expected bin index under softmax(logits).
template <typename T>
double dfl_expectation(const T* logits, int bins) {
  double mx = -INFINITY;
  for (int k = 0; k < bins; ++k) mx = std::max(mx, static_cast<double>(logits[k]));
  double z = 0.0, e = 0.0;
  for (int k = 0; k < bins; ++k) {
    const double p = std::exp(logits[k] - mx);
    z += p;
    e += p * k;
  }
  return e / z;
}

inline double sigmoid_d(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }
inline double softplus_d(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// Greedy class-wise NMS by descending confidence.
inline std::vector<Detection> greedy_nms(std::vector<Detection> dets, double iou_thr) {
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
  std::vector<Detection> kept;
  for (const auto& d : dets) {
    bool suppressed = false;
    for (const auto& k : kept)
      if (k.class_id == d.class_id && iou(k.box, d.box) > iou_thr) {
        suppressed = true;
        break;
      }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

// Per-cell decode of batch item n. Boxes are normalized to the model
// input; cells with confidence below the threshold are dropped.
template <typename T>
std::vector<Detection> decode_predictions(const RawPrediction<T>& raw, const DetectorConfig& cfg, int n,
                                          const std::string& image_id, double conf_threshold) {
  std::vector<Detection> out;
  const double S = cfg.input_size;
  const int K = cfg.num_classes;
  const bool dfl = cfg.head_variant == HeadVariant::kDfl;
  const int B = cfg.dfl_bins;
  for (int l = 0; l < 3; ++l) {
    const auto& cls = raw.cls[l].value();
    const auto& box = raw.box[l].value();
    const int H = cls.dim(2), W = cls.dim(3), HW = H * W;
    const int C = box.dim(1);
    const double stride = S / W;
    std::vector<T> bins(static_cast<std::size_t>(B));
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const int cell = y * W + x;
        int best = 0;
        double best_logit = -INFINITY;
        for (int k = 0; k < K; ++k) {
          const double v = cls[(static_cast<std::size_t>(n) * K + k) * HW + cell];
          if (v > best_logit) {
            best_logit = v;
            best = k;
          }
        }
        const double conf = sigmoid_d(best_logit);
        if (!(conf >= conf_threshold)) continue;
        double d[4];
        for (int s = 0; s < 4; ++s) {
          if (dfl) {
            for (int k = 0; k < B; ++k) bins[k] = box[(static_cast<std::size_t>(n) * C + s * B + k) * HW + cell];
            d[s] = dfl_expectation(bins.data(), B);
          } else {
            d[s] = softplus_d(box[(static_cast<std::size_t>(n) * C + s) * HW + cell]);
          }
          d[s] = std::max(d[s], kMinDistance);
        }
        const double px = (x + 0.5) * stride, py = (y + 0.5) * stride;
        Detection det;
        det.image_id = image_id;
        det.class_id = best;
        det.confidence = conf;
        det.box = {std::clamp((px - d[0] * stride) / S, 0.0, 1.0), std::clamp((py - d[1] * stride) / S, 0.0, 1.0),
                   std::clamp((px + d[2] * stride) / S, 0.0, 1.0), std::clamp((py + d[3] * stride) / S, 0.0, 1.0)};
        out.push_back(det);
      }
  }
  if (cfg.nms) out = greedy_nms(std::move(out), cfg.nms_iou);
  return out;
}

}  // namespace weedet
