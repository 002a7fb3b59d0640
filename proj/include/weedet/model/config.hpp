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

#include <json.hpp>

#include "weedet/core/errors.hpp"

namespace weedet {

enum class BranchMode { kYoloOnly, kVitOnly, kDual };
enum class HeadVariant { kDfl, kPlain };
enum class InputNorm { kZnorm, kScale01 };

inline std::string to_string(BranchMode m) {
  switch (m) {
    case BranchMode::kYoloOnly: return "yolo_only";
    case BranchMode::kVitOnly: return "vit_only";
    case BranchMode::kDual: return "dual";
  }
  return "?";
}
inline std::string to_string(HeadVariant v) { return v == HeadVariant::kDfl ? "dfl" : "plain"; }
inline std::string to_string(InputNorm n) { return n == InputNorm::kZnorm ? "znorm" : "scale01"; }

inline BranchMode parse_branch_mode(const std::string& s) {
  if (s == "yolo_only") return BranchMode::kYoloOnly;
  if (s == "vit_only") return BranchMode::kVitOnly;
  if (s == "dual") return BranchMode::kDual;
  throw ConfigError("unknown branch_mode '" + s + "'");
}
inline HeadVariant parse_head_variant(const std::string& s) {
  if (s == "dfl") return HeadVariant::kDfl;
  if (s == "plain") return HeadVariant::kPlain;
  throw ConfigError("unknown head_variant '" + s + "'");
}
inline InputNorm parse_input_norm(const std::string& s) {
  if (s == "znorm") return InputNorm::kZnorm;
  if (s == "scale01") return InputNorm::kScale01;
  throw ConfigError("unknown input_norm '" + s + "'");
}

struct ViTConfig {
  int patch_size = 16;
  int embed_dim = 64;
  int depth = 6;
  int heads = 4;
  int mlp_ratio = 4;
  std::vector<int> tap_layers;  // empty: derived from depth

  // 0-based block indices; the depth-12 reference taps are 5, 8, 11.
  std::vector<int> taps() const {
    if (!tap_layers.empty()) return tap_layers;
    auto at = [this](double frac) { return static_cast<int>(std::lround(depth * frac)); };
    return {at(5.0 / 12.0), at(8.0 / 12.0), depth - 1};
  }

  void validate() const {
    if (patch_size < 1 || embed_dim < 1 || depth < 1 || heads < 1 || mlp_ratio < 1)
      throw ConfigError("ViT sizes must be positive");
    if (embed_dim % heads != 0) throw ConfigError("embed_dim must be divisible by heads");
    auto t = taps();
    if (t.size() != 3) throw ConfigError("exactly three tap layers are required");
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i] < 0 || t[i] >= depth) throw ConfigError("tap layer outside [0, depth)");
      if (i > 0 && t[i] < t[i - 1]) throw ConfigError("tap layers must be non-decreasing");
    }
  }
};

struct DetectorConfig {
  BranchMode branch_mode = BranchMode::kDual;
  bool use_sta = false;
  bool use_align_loss = false;
  double align_weight = 1.0;
  bool align_detach_vit = false;
  HeadVariant head_variant = HeadVariant::kDfl;
  int dfl_bins = 8;
  bool head_attention = false;  // attention block on P5 before the head
  int head_channels = 64;
  InputNorm input_norm = InputNorm::kZnorm;
  int input_size = 128;
  int num_classes = 2;
  double cls_weight = 1.0;
  double box_weight = 1.0;
  double conf_threshold = 0.25;
  bool nms = false;
  double nms_iou = 0.7;
  std::uint64_t seed = 0;
  ViTConfig vit;

  bool uses_yolo() const { return branch_mode != BranchMode::kVitOnly; }
  bool uses_vit() const { return branch_mode != BranchMode::kYoloOnly; }
  bool sta_active() const { return use_sta && uses_vit(); }
  // Pyramid widths at strides 8, 16, 32.
  std::vector<int> level_channels() const { return {head_channels / 4, head_channels / 2, head_channels}; }

  void validate() const {
    if (use_align_loss && branch_mode != BranchMode::kDual)
      throw ConfigError("use_align_loss requires branch_mode = dual");
    if (head_variant == HeadVariant::kDfl && dfl_bins < 2) throw ConfigError("dfl_bins must be >= 2");
    if (head_channels < 4 || head_channels % 4 != 0) throw ConfigError("head_channels must be a positive multiple of 4");
    if (input_size < 32 || input_size % 32 != 0) throw ConfigError("input_size must be a positive multiple of 32");
    if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
    if (!(conf_threshold >= 0.0 && conf_threshold <= 1.0)) throw ConfigError("conf_threshold must be in [0, 1]");
    if (uses_vit()) {
      vit.validate();
      if (input_size % vit.patch_size != 0) throw ConfigError("input_size must be divisible by patch_size");
      int grid = input_size / vit.patch_size;
      // Token maps are resampled to strides 8..32 by integer factors.
      for (int stride : {8, 16, 32}) {
        int out = input_size / stride;
        if (out % grid != 0 && grid % out != 0)
          throw ConfigError("patch grid cannot be resampled to stride " + std::to_string(stride));
      }
    }
  }
};

inline nlohmann::json to_json(const ViTConfig& v) {
  return {{"patch_size", v.patch_size}, {"embed_dim", v.embed_dim}, {"depth", v.depth},
          {"heads", v.heads},           {"mlp_ratio", v.mlp_ratio}, {"tap_layers", v.taps()}};
}

inline ViTConfig vit_config_from_json(const nlohmann::json& j) {
  ViTConfig v;
  v.patch_size = j.value("patch_size", v.patch_size);
  v.embed_dim = j.value("embed_dim", v.embed_dim);
  v.depth = j.value("depth", v.depth);
  v.heads = j.value("heads", v.heads);
  v.mlp_ratio = j.value("mlp_ratio", v.mlp_ratio);
  v.tap_layers = j.value("tap_layers", std::vector<int>{});
  return v;
}

inline nlohmann::json to_json(const DetectorConfig& c) {
  return {{"branch_mode", to_string(c.branch_mode)},
          {"use_sta", c.use_sta},
          {"use_align_loss", c.use_align_loss},
          {"align_weight", c.align_weight},
          {"align_detach_vit", c.align_detach_vit},
          {"head_variant", to_string(c.head_variant)},
          {"dfl_bins", c.dfl_bins},
          {"head_attention", c.head_attention},
          {"head_channels", c.head_channels},
          {"input_norm", to_string(c.input_norm)},
          {"input_size", c.input_size},
          {"num_classes", c.num_classes},
          {"cls_weight", c.cls_weight},
          {"box_weight", c.box_weight},
          {"conf_threshold", c.conf_threshold},
          {"nms", c.nms},
          {"nms_iou", c.nms_iou},
          {"seed", c.seed},
          {"vit", to_json(c.vit)}};
}

inline DetectorConfig detector_config_from_json(const nlohmann::json& j) {
  DetectorConfig c;
  try {
    c.branch_mode = parse_branch_mode(j.value("branch_mode", to_string(c.branch_mode)));
    c.use_sta = j.value("use_sta", c.use_sta);
    c.use_align_loss = j.value("use_align_loss", c.use_align_loss);
    c.align_weight = j.value("align_weight", c.align_weight);
    c.align_detach_vit = j.value("align_detach_vit", c.align_detach_vit);
    c.head_variant = parse_head_variant(j.value("head_variant", to_string(c.head_variant)));
    c.dfl_bins = j.value("dfl_bins", c.dfl_bins);
    c.head_attention = j.value("head_attention", c.head_attention);
    c.head_channels = j.value("head_channels", c.head_channels);
    c.input_norm = parse_input_norm(j.value("input_norm", to_string(c.input_norm)));
    c.input_size = j.value("input_size", c.input_size);
    c.num_classes = j.value("num_classes", c.num_classes);
    c.cls_weight = j.value("cls_weight", c.cls_weight);
    c.box_weight = j.value("box_weight", c.box_weight);
    c.conf_threshold = j.value("conf_threshold", c.conf_threshold);
    c.nms = j.value("nms", c.nms);
    c.nms_iou = j.value("nms_iou", c.nms_iou);
    c.seed = j.value("seed", c.seed);
    if (j.contains("vit")) c.vit = vit_config_from_json(j.at("vit"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("detector config: ") + e.what());
  }
  return c;
}

}  // namespace weedet
