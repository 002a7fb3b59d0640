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
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "weedet/core/parallel.hpp"
#include "weedet/dataio/manifest.hpp"
#include "weedet/dataio/synth.hpp"
#include "weedet/eval/metrics.hpp"
#include "weedet/model/detector.hpp"
#include "weedet/model/loss.hpp"
#include "weedet/model/targets.hpp"

namespace weedet {

struct TrainConfig {
  int epochs = 68;
  double lr = 0.01;
  double momentum = 0.937;
  double weight_decay = 5e-4;
  int batch_size = 8;
  double warmup_epochs = 3.0;
  double final_lr_factor = 0.01;  // linear decay to lr * factor
  bool flip = true;               // random horizontal flips
  bool rotate90 = true;           // with flip: random element of the square's symmetry group
  double grad_clip = 10.0;        // global L2 norm, 0 disables
  std::uint64_t seed = 0;
  std::string split = "75:5:25";
  int max_steps = 0;              // stop after this many steps, 0 = no limit
  bool validate = true;
  int workers = 1;

  void validate_config() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(lr >= 0) || !std::isfinite(lr)) throw ConfigError("lr must be finite and >= 0");
    if (!(momentum >= 0 && momentum < 1)) throw ConfigError("momentum must be in [0, 1)");
    if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(warmup_epochs >= 0)) throw ConfigError("warmup_epochs must be >= 0");
    parse_split(split);
  }
};

inline nlohmann::json to_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},       {"lr", t.lr},
          {"momentum", t.momentum},   {"weight_decay", t.weight_decay},
          {"batch_size", t.batch_size}, {"warmup_epochs", t.warmup_epochs},
          {"final_lr_factor", t.final_lr_factor}, {"flip", t.flip}, {"rotate90", t.rotate90},
          {"grad_clip", t.grad_clip}, {"seed", t.seed},
          {"split", t.split},         {"max_steps", t.max_steps}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig t;
  try {
    t.epochs = j.value("epochs", t.epochs);
    t.lr = j.value("lr", t.lr);
    t.momentum = j.value("momentum", t.momentum);
    t.weight_decay = j.value("weight_decay", t.weight_decay);
    t.batch_size = j.value("batch_size", t.batch_size);
    t.warmup_epochs = j.value("warmup_epochs", t.warmup_epochs);
    t.final_lr_factor = j.value("final_lr_factor", t.final_lr_factor);
    t.flip = j.value("flip", t.flip);
    t.rotate90 = j.value("rotate90", t.rotate90);
    t.grad_clip = j.value("grad_clip", t.grad_clip);
    t.seed = j.value("seed", t.seed);
    t.split = j.value("split", t.split);
    t.max_steps = j.value("max_steps", t.max_steps);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad training config: ") + e.what());
  }
  t.validate_config();
  return t;
}

struct EpochLog {
  int epoch = 0;
  double total = 0.0;  // mean per-batch training loss
  double cls = 0.0;
  double box = 0.0;
  double align = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;  // mean pre-clip global gradient norm
  double val_loss = NAN;
  double val_map50 = NAN;
};

struct TrainResult {
  std::vector<EpochLog> history;
  int best_epoch = 0;
  double best_val_map50 = NAN;
  nn::Checkpoint best;
  std::size_t steps = 0;
};

// Preprocessed image with its boxes in model-input coordinates.
template <typename T>
struct PreparedSample {
  std::string id;
  nn::Tensor<T> pixels;  // [3, S, S]
  std::vector<GroundTruthBox> boxes;
};

template <typename T>
std::vector<PreparedSample<T>> prepare_samples(const std::vector<LabeledImage>& data, const std::vector<std::size_t>& idx,
                                               const DetectorConfig& cfg, int workers) {
  std::vector<PreparedSample<T>> out(idx.size());
  const int S = cfg.input_size;
  parallel_for(idx.size(), workers, [&](std::size_t i) {
    const auto& src = data[idx[i]];
    auto& s = out[i];
    s.id = src.image.id;
    s.pixels = nn::Tensor<T>({3, S, S});
    Letterbox lb;
    preprocess_into(src.image, S, cfg.input_norm, s.pixels.data(), &lb);
    for (const auto& b : src.boxes) s.boxes.push_back(box_to_input(b, lb));
  });
  return out;
}

// Symmetry of the square input: bit 0 mirrors x, bit 1 mirrors y, bit 2
// transposes (applied last). 0 is the identity.
inline GroundTruthBox transform_box(GroundTruthBox b, int code) {
  if (code & 1) b.cx = 1.0 - b.cx;
  if (code & 2) b.cy = 1.0 - b.cy;
  if (code & 4) {
    std::swap(b.cx, b.cy);
    std::swap(b.w, b.h);
  }
  return b;
}

// Stacks samples into a batch, each under its symmetry code.
template <typename T>
std::pair<nn::Tensor<T>, std::vector<std::vector<GroundTruthBox>>> make_batch(
    const std::vector<PreparedSample<T>>& samples, const std::vector<std::size_t>& members,
    const std::vector<int>& codes) {
  const int N = static_cast<int>(members.size());
  const int S = samples.front().pixels.dim(1);
  nn::Tensor<T> x({N, 3, S, S});
  std::vector<std::vector<GroundTruthBox>> gts(members.size());
  const std::size_t per = static_cast<std::size_t>(3) * S * S;
  for (int n = 0; n < N; ++n) {
    const auto& s = samples[members[n]];
    const int code = codes[n];
    T* dst = x.data() + n * per;
    const T* src = s.pixels.data();
    for (const auto& b : s.boxes) gts[n].push_back(transform_box(b, code));
    if (code == 0) {
      std::copy(src, src + per, dst);
      continue;
    }
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < S; ++y)
        for (int xx = 0; xx < S; ++xx) {
          // Output (xx, y) reads the source pixel that the transform maps there.
          int sx = (code & 4) ? y : xx, sy = (code & 4) ? xx : y;
          if (code & 1) sx = S - 1 - sx;
          if (code & 2) sy = S - 1 - sy;
          dst[(static_cast<std::size_t>(c) * S + y) * S + xx] = src[(static_cast<std::size_t>(c) * S + sy) * S + sx];
        }
  }
  return {std::move(x), std::move(gts)};
}

template <typename T>
LossParts<T> batch_loss(const Detector<T>& det, const nn::Tensor<T>& x, const std::vector<std::vector<GroundTruthBox>>& gts) {
  auto out = det.forward(Var<T>(x));
  Targets targets = assign_targets(gts, det.config().input_size);
  return detection_loss(out.raw, targets, det.config(), out.align ? &*out.align : nullptr);
}

// Scales gradients so their global L2 norm is at most max_norm.
template <typename T>
double clip_grad_norm(ParameterList<T>& params, double max_norm) {
  double sq = 0.0;
  for (auto& p : params)
    if (p.var.has_grad())
      for (T g : p.var.grad().values()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const T f = static_cast<T>(max_norm / norm);
    for (auto& p : params)
      if (p.var.has_grad())
        for (T& g : p.var.grad_buffer().values()) g *= f;
  }
  return norm;
}

// Learning rate at fractional epoch e: linear warmup from 0, then linear
// decay to lr * final_lr_factor at the last epoch.
inline double scheduled_lr(const TrainConfig& tc, double e) {
  if (tc.warmup_epochs > 0 && e < tc.warmup_epochs) return tc.lr * e / tc.warmup_epochs;
  const double span = std::max(1.0, tc.epochs - tc.warmup_epochs);
  const double frac = std::clamp((e - tc.warmup_epochs) / span, 0.0, 1.0);
  return tc.lr * (1.0 - frac * (1.0 - tc.final_lr_factor));
}

// Runs detection over samples and scores against their (source) labels.
template <typename T>
DetectionMetrics evaluate_detector(const Detector<T>& det, const std::vector<LabeledImage>& data,
                                   const std::vector<std::size_t>& idx, double conf_threshold, int batch = 16) {
  std::vector<std::string> ids;
  std::vector<std::vector<GtBox>> gts;
  std::vector<Detection> dets;
  for (std::size_t start = 0; start < idx.size(); start += static_cast<std::size_t>(batch)) {
    std::vector<const ImageRecord*> imgs;
    for (std::size_t i = start; i < std::min(idx.size(), start + batch); ++i) {
      imgs.push_back(&data[idx[i]].image);
      ids.push_back(data[idx[i]].image.id);
      gts.push_back(to_gt_boxes(data[idx[i]].boxes));
    }
    auto d = det.detect(imgs, conf_threshold);
    dets.insert(dets.end(), d.begin(), d.end());
  }
  return evaluate(make_eval_set(ids, gts, dets), det.config().num_classes, conf_threshold);
}

// Test-split detections at a low threshold so AP sees the full ranking;
// P/R use the configured threshold.
template <typename T>
DetectionMetrics score_detector(const Detector<T>& det, const std::vector<LabeledImage>& data,
                                 const std::vector<std::size_t>& idx, std::vector<std::string>* ids_out = nullptr,
                                 std::vector<Detection>* dets_out = nullptr) {
  std::vector<std::string> ids;
  std::vector<std::vector<GtBox>> gts;
  std::vector<Detection> dets;
  for (auto i : idx) {
    ids.push_back(data[i].image.id);
    gts.push_back(to_gt_boxes(data[i].boxes));
    auto d = det.detect({&data[i].image}, 1e-3);
    dets.insert(dets.end(), d.begin(), d.end());
  }
  auto m = evaluate(make_eval_set(ids, gts, dets), det.config().num_classes, det.config().conf_threshold);
  if (ids_out) *ids_out = std::move(ids);
  if (dets_out) *dets_out = std::move(dets);
  return m;
}

inline std::vector<std::size_t> indices_of_split(const std::vector<std::string>& splits, const std::string& name) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i)
    if (splits[i] == name) out.push_back(i);
  return out;
}

inline void write_loss_csv(const std::vector<EpochLog>& history, const std::filesystem::path& path) {
  std::string csv = "epoch,total,cls,box,align\n";
  char line[256];
  for (const auto& e : history) {
    std::snprintf(line, sizeof line, "%d,%.9g,%.9g,%.9g,%.9g\n", e.epoch, e.total, e.cls, e.box, e.align);
    csv += line;
  }
  write_text_file(csv, path);
}

using EpochCallback = std::function<void(const EpochLog&)>;

// Mini-batch SGD over the train split; keeps the epoch with the best val
// mAP50 (ties broken by lower val loss). With an empty val split the last
// epoch is kept. Writes loss.csv, best.ckpt and train.json when out_dir is
// set. A non-finite loss writes nonfinite_dump.json and throws TrainError.
template <typename T>
TrainResult train_detector(Detector<T>& det, const std::vector<LabeledImage>& data,
                           const std::vector<std::string>& splits, const TrainConfig& tc,
                           const std::filesystem::path& out_dir = {}, const EpochCallback& on_epoch = {}) {
  tc.validate_config();
  if (splits.size() != data.size()) throw ConfigError("split labels must match the dataset size");
  const auto train_idx = indices_of_split(splits, "train");
  const auto val_idx = indices_of_split(splits, "val");
  if (train_idx.empty()) throw DegenerateDataError("training split is empty");
  const auto& cfg = det.config();
  auto train = prepare_samples<T>(data, train_idx, cfg, tc.workers);
  auto val = prepare_samples<T>(data, val_idx, cfg, tc.workers);

  auto& params = det.parameters();
  nn::SgdState<T> state;
  TrainResult result;
  double best_val_loss = INFINITY;
  Rng rng = make_rng(tc.seed, 0x7261696eULL);
  const std::size_t per_epoch = (train.size() + tc.batch_size - 1) / tc.batch_size;
  bool stop = false;
  for (int epoch = 1; epoch <= tc.epochs && !stop; ++epoch) {
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog log;
    log.epoch = epoch;
    for (std::size_t b = 0; b < per_epoch; ++b) {
      std::vector<std::size_t> members(order.begin() + b * tc.batch_size,
                                       order.begin() + std::min(train.size(), (b + 1) * tc.batch_size));
      std::vector<int> codes(members.size(), 0);
      if (tc.flip)
        for (auto& c : codes) c = static_cast<int>(rng() % (tc.rotate90 ? 8U : 2U));
      auto [x, gts] = make_batch(train, members, codes);
      const double lr = scheduled_lr(tc, epoch - 1 + static_cast<double>(b) / per_epoch);
      auto parts = batch_loss(det, x, gts);
      const double total = static_cast<double>(parts.total.item());
      if (!std::isfinite(total)) {
        nlohmann::json dump = {{"epoch", epoch}, {"batch", b},         {"lr", lr},
                               {"cls", parts.cls}, {"box", parts.box}, {"align", parts.align}};
        std::vector<std::string> ids;
        for (auto m : members) ids.push_back(train[m].id);
        dump["images"] = ids;
        if (!out_dir.empty()) write_json_file(dump, out_dir / "nonfinite_dump.json");
        throw TrainError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
      }
      nn::zero_grads(params);
      nn::backward(parts.total);
      for (auto& p : params)
        if (!p.var.has_grad()) p.var.grad_buffer();
      const double gnorm = clip_grad_norm(params, tc.grad_clip);
      nn::sgd_step(params, static_cast<T>(lr), static_cast<T>(tc.momentum), static_cast<T>(tc.weight_decay), state);
      const double w = static_cast<double>(members.size()) / train.size();
      log.total += w * total;
      log.cls += w * parts.cls;
      log.box += w * parts.box;
      log.align += w * parts.align;
      log.grad_norm += w * gnorm;
      log.lr = lr;
      ++result.steps;
      if (tc.max_steps > 0 && result.steps >= static_cast<std::size_t>(tc.max_steps)) {
        stop = true;
        break;
      }
    }
    bool better = val_idx.empty() || !tc.validate;
    if (!val_idx.empty() && tc.validate) {
      nn::NoGradGuard guard;
      double vl = 0.0;
      for (std::size_t start = 0; start < val.size(); start += tc.batch_size) {
        std::vector<std::size_t> members;
        for (std::size_t i = start; i < std::min(val.size(), start + tc.batch_size); ++i) members.push_back(i);
        auto [x, gts] = make_batch(val, members, std::vector<int>(members.size(), 0));
        vl += batch_loss(det, x, gts).total.item() * static_cast<double>(members.size()) / val.size();
      }
      log.val_loss = vl;
      try {
        log.val_map50 = evaluate_detector(det, data, val_idx, cfg.conf_threshold).map50;
      } catch (const UndefinedMetricError&) {
        log.val_map50 = 0.0;
      }
      better = std::isnan(result.best_val_map50) || log.val_map50 > result.best_val_map50 ||
               (log.val_map50 == result.best_val_map50 && vl < best_val_loss);
      if (better) {
        result.best_val_map50 = log.val_map50;
        best_val_loss = vl;
      }
    }
    if (better) {
      result.best_epoch = epoch;
      result.best = det.checkpoint();
    }
    result.history.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  det.load(result.best);
  if (!out_dir.empty()) {
    write_loss_csv(result.history, out_dir / "loss.csv");
    nn::save_checkpoint(result.best, out_dir / "best.ckpt");
    write_json_file({{"detector", to_json(cfg)},
                     {"train", to_json(tc)},
                     {"best_epoch", result.best_epoch},
                     {"steps", result.steps}},
                    out_dir / "train.json");
  }
  return result;
}

}  // namespace weedet
