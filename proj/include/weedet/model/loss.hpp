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
#include <vector>

#include "weedet/model/config.hpp"
#include "weedet/model/head.hpp"
#include "weedet/model/targets.hpp"

namespace weedet {

// Sum over rows of w_i * (1 - IoU) between predicted and target ltrb
// distances measured from the same anchor point. pred: [P, 4].
template <typename T>
Var<T> iou_loss_ltrb(const Var<T>& pred, const std::vector<std::array<double, 4>>& target,
                     const std::vector<double>& weights) {
  const std::size_t P = target.size();
  if (pred.rank() != 2 || pred.dim(1) != 4 || static_cast<std::size_t>(pred.dim(0)) != P || weights.size() != P)
    throw ShapeError("iou_loss_ltrb: pred must be [P, 4] matching the targets");
  constexpr double eps = 1e-9;
  std::vector<std::array<double, 4>> dloss(P);
  double total = 0.0;
  const auto& pv = pred.value();
  for (std::size_t i = 0; i < P; ++i) {
    const double l = pv[i * 4], t = pv[i * 4 + 1], r = pv[i * 4 + 2], b = pv[i * 4 + 3];
    const auto& g = target[i];
    const double wi = std::min(l, g[0]) + std::min(r, g[2]);
    const double hi = std::min(t, g[1]) + std::min(b, g[3]);
    const double inter = wi * hi;
    const double ap = (l + r) * (t + b), ag = (g[0] + g[2]) * (g[1] + g[3]);
    const double uni = ap + ag - inter + eps;
    const double iou = inter / uni;
    total += weights[i] * (1.0 - iou);
    // d iou = (d inter * uni - inter * d uni) / uni^2, d uni = d ap - d inter.
    const double a = (1.0 + iou) / uni, c = iou / uni;
    const double dx[4] = {l < g[0] ? hi : 0.0, 0, r < g[2] ? hi : 0.0, 0};
    const double dy[4] = {0, t < g[1] ? wi : 0.0, 0, b < g[3] ? wi : 0.0};
    const double dap[4] = {t + b, l + r, t + b, l + r};
    for (int k = 0; k < 4; ++k) dloss[i][k] = -weights[i] * (a * (dx[k] + dy[k]) - c * dap[k]);
  }
  auto pp = pred.node();
  return nn::make_op<T>(nn::Tensor<T>::scalar(static_cast<T>(total)), {pred}, [pp, dloss](const nn::Tensor<T>& g) {
    auto& gp = pp->grad_buffer();
    for (std::size_t i = 0; i < dloss.size(); ++i)
      for (int k = 0; k < 4; ++k) gp[i * 4 + k] += g[0] * static_cast<T>(dloss[i][k]);
  });
}

// Distribution focal loss over rows of bin logits [R, bins]: the
// cross-entropy against the two bins bracketing each continuous target,
// minus that two-point target's entropy so an exact fit scores zero.
// Targets must lie in [0, bins - 1).
template <typename T>
Var<T> dfl_loss(const Var<T>& logits, const std::vector<double>& target, const std::vector<double>& weights) {
  const std::size_t R = target.size();
  if (logits.rank() != 2 || static_cast<std::size_t>(logits.dim(0)) != R || weights.size() != R)
    throw ShapeError("dfl_loss: logits must be [R, bins] matching the targets");
  const int B = logits.dim(1);
  const auto& lv = logits.value();
  std::vector<double> grad(R * B, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < R; ++i) {
    const double y = target[i];
    if (!(y >= 0.0 && y < B - 1)) throw ShapeError("dfl_loss: target outside the bin range");
    const int lo = static_cast<int>(std::floor(y));
    const double wr = y - lo, wl = 1.0 - wr;
    double mx = -INFINITY;
    for (int k = 0; k < B; ++k) mx = std::max(mx, static_cast<double>(lv[i * B + k]));
    double z = 0.0;
    for (int k = 0; k < B; ++k) z += std::exp(lv[i * B + k] - mx);
    const double lse = mx + std::log(z);
    auto logp = [&](int k) { return static_cast<double>(lv[i * B + k]) - lse; };
    auto xlogx = [](double v) { return v > 0 ? v * std::log(v) : 0.0; };
    total += weights[i] * (-(wl * logp(lo) + wr * logp(lo + 1)) + xlogx(wl) + xlogx(wr));
    for (int k = 0; k < B; ++k) grad[i * B + k] = weights[i] * std::exp(logp(k));
    grad[i * B + lo] -= weights[i] * wl;
    grad[i * B + lo + 1] -= weights[i] * wr;
  }
  auto pl = logits.node();
  return nn::make_op<T>(nn::Tensor<T>::scalar(static_cast<T>(total)), {logits}, [pl, grad](const nn::Tensor<T>& g) {
    auto& gl = pl->grad_buffer();
    for (std::size_t i = 0; i < grad.size(); ++i) gl[i] += g[0] * static_cast<T>(grad[i]);
  });
}

template <typename T>
struct LossParts {
  Var<T> total;
  double cls = 0.0;
  double box = 0.0;
  double align = 0.0;
};

// Positive cells of one level as row indices into [N*H*W, ...] plus their
// targets and per-image weights.
struct LevelPositives {
  std::vector<int> rows;
  std::vector<std::array<double, 4>> ltrb;
  std::vector<double> weight;
};

inline LevelPositives level_positives(const Targets& t, int level) {
  const auto& lt = t.levels[level];
  LevelPositives p;
  const std::size_t per_image = static_cast<std::size_t>(lt.height) * lt.width;
  for (std::size_t c = 0; c < lt.cls.size(); ++c) {
    if (lt.cls[c] < 0) continue;
    p.rows.push_back(static_cast<int>(c));
    p.ltrb.push_back(lt.ltrb[c]);
    p.weight.push_back(t.image_weight(static_cast<int>(c / per_image)));
  }
  return p;
}

// Rows [N*H*W, C] of an [N, C, H, W] map.
template <typename T>
Var<T> cell_rows(const Var<T>& x) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  return nn::reshape(nn::permute(x, {0, 2, 3, 1}), {N * H * W, C});
}

// Weighted BCE over every cell and class plus the box term on positives.
// Each image contributes with weight 1 / (N * max(positives, 1)).
// `align` may be empty (no alignment term).
template <typename T>
LossParts<T> detection_loss(const RawPrediction<T>& raw, const Targets& targets, const DetectorConfig& cfg,
                            const Var<T>* align = nullptr) {
  const int K = cfg.num_classes;
  Var<T> cls_total, box_total;
  bool have_box = false;
  for (int l = 0; l < 3; ++l) {
    const auto& lt = targets.levels[l];
    const auto& logits = raw.cls[l];
    if (logits.dim(0) != targets.batch || logits.dim(1) != K || logits.dim(2) != lt.height || logits.dim(3) != lt.width)
      throw ShapeError("class logits " + nn::shape_str(logits.shape()) + " do not match the targets");
    nn::Tensor<T> onehot(logits.shape()), weights(logits.shape());
    const int HW = lt.height * lt.width;
    for (int n = 0; n < targets.batch; ++n) {
      const T w = static_cast<T>(targets.image_weight(n));
      for (int k = 0; k < K; ++k)
        for (int c = 0; c < HW; ++c) {
          const std::size_t idx = (static_cast<std::size_t>(n) * K + k) * HW + c;
          weights[idx] = w;
          onehot[idx] = lt.cls[static_cast<std::size_t>(n) * HW + c] == k ? T(1) : T(0);
        }
    }
    Var<T> term = nn::bce_with_logits_sum(logits, onehot, &weights);
    cls_total = l == 0 ? term : nn::add(cls_total, term);

    LevelPositives pos = level_positives(targets, l);
    if (pos.rows.empty()) continue;
    Var<T> rows = nn::gather_rows(cell_rows(raw.box[l]), pos.rows);
    Var<T> box;
    if (cfg.head_variant == HeadVariant::kPlain) {
      box = iou_loss_ltrb(nn::softplus(rows), pos.ltrb, pos.weight);
    } else {
      const int B = cfg.dfl_bins;
      const double cap = B - 1 - 0.01;
      std::vector<double> y, w;
      for (std::size_t i = 0; i < pos.rows.size(); ++i)
        for (int k = 0; k < 4; ++k) {
          y.push_back(std::clamp(pos.ltrb[i][k], 0.0, cap));
          w.push_back(pos.weight[i] / 4.0);
        }
      box = dfl_loss(nn::reshape(rows, {static_cast<int>(pos.rows.size()) * 4, B}), y, w);
    }
    box_total = have_box ? nn::add(box_total, box) : box;
    have_box = true;
  }
  LossParts<T> parts;
  parts.cls = static_cast<double>(cls_total.item());
  Var<T> total = nn::scale(cls_total, static_cast<T>(cfg.cls_weight));
  if (have_box) {
    parts.box = static_cast<double>(box_total.item());
    total = nn::add(total, nn::scale(box_total, static_cast<T>(cfg.box_weight)));
  }
  if (align) {
    parts.align = static_cast<double>(align->item());
    total = nn::add(total, nn::scale(*align, static_cast<T>(cfg.align_weight)));
  }
  parts.total = total;
  return parts;
}

}  // namespace weedet
