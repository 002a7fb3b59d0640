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
#include <optional>
#include <string>
#include <vector>

#include "weedet/model/adapters.hpp"
#include "weedet/model/decode.hpp"
#include "weedet/model/head.hpp"
#include "weedet/model/preprocess.hpp"
#include "weedet/model/vit.hpp"
#include "weedet/numerics/checkpoint.hpp"

namespace weedet {

// Parameter name prefixes; every parameter belongs to exactly one group.
inline const std::vector<std::string>& parameter_groups() {
  static const std::vector<std::string> groups = {"yolo", "vit", "adapter", "head"};
  return groups;
}

template <typename T>
struct DetectorOutput {
  RawPrediction<T> raw;
  std::optional<FeaturePyramid<T>> yolo;
  std::optional<FeaturePyramid<T>> vit;  // projected or STA pyramid
  std::optional<ViTOutput<T>> vit_tokens;
  std::optional<Var<T>> align;           // unweighted alignment loss
};

// Each module draws its initial weights from its own RNG stream, so modules
// shared between branch modes start identical for a given seed.
template <typename T>
class Detector {
 public:
  explicit Detector(DetectorConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const auto widths = cfg_.level_channels();
    if (cfg_.uses_yolo()) {
      Rng rng = make_rng(cfg_.seed, 1);
      backbone_ = ConvBackbone<T>(cfg_.head_channels, rng);
    }
    if (cfg_.uses_vit()) {
      Rng rng = make_rng(cfg_.seed, 2);
      vit_ = ViT<T>(cfg_.vit, cfg_.input_size, rng);
      Rng arng = make_rng(cfg_.seed, 3);
      if (cfg_.sta_active()) {
        sta_ = SpatialTuningAdapter<T>(cfg_.vit.embed_dim, widths, arng);
      } else {
        for (int l = 0; l < 3; ++l) proj_[l] = VitProjection<T>(cfg_.vit.embed_dim, widths[l], kLevelStrides[l], arng);
      }
      if (cfg_.branch_mode == BranchMode::kDual) fusion_ = DualFusion<T>(widths, arng);
    }
    Rng hrng = make_rng(cfg_.seed, 4);
    head_ = DetectionHead<T>(cfg_, hrng);
    collect_parameters();
  }

  const DetectorConfig& config() const { return cfg_; }
  ParameterList<T>& parameters() { return params_; }
  const ParameterList<T>& parameters() const { return params_; }

  std::size_t count_params() const { return nn::count_elements(params_); }
  std::size_t count_params(const std::string& group) const {
    std::size_t n = 0;
    for (const auto& p : params_)
      if (p.name.rfind(group + ".", 0) == 0) n += p.numel();
    return n;
  }

  // ViT-branch pyramid: STA over the final tokens, or per-tap projections.
  FeaturePyramid<T> vit_pyramid(const ViTOutput<T>& vo) const {
    if (cfg_.sta_active()) return sta_(vo.final, cfg_.input_size);
    FeaturePyramid<T> p;
    for (int l = 0; l < 3; ++l) p.levels[l] = proj_[l](vo.taps[static_cast<std::size_t>(l)], cfg_.input_size);
    return p;
  }

  DetectorOutput<T> forward(const Var<T>& x) const {
    if (x.rank() != 4 || x.dim(1) != 3 || x.dim(2) != cfg_.input_size || x.dim(3) != cfg_.input_size)
      throw ShapeError("detector input must be [N, 3, " + std::to_string(cfg_.input_size) + ", " +
                       std::to_string(cfg_.input_size) + "], got " + nn::shape_str(x.shape()));
    DetectorOutput<T> out;
    if (cfg_.uses_yolo()) out.yolo = backbone_(x);
    if (cfg_.uses_vit()) {
      out.vit_tokens = vit_(x);
      out.vit = vit_pyramid(*out.vit_tokens);
    }
    FeaturePyramid<T> features;
    if (cfg_.branch_mode == BranchMode::kDual) {
      features = fusion_(*out.yolo, *out.vit);
      if (cfg_.use_align_loss) out.align = alignment_loss(*out.yolo, *out.vit, cfg_.align_detach_vit);
    } else {
      features = cfg_.uses_yolo() ? *out.yolo : *out.vit;
    }
    out.raw = head_(features);
    return out;
  }

  const ViT<T>& vit() const { return vit_; }
  const ConvBackbone<T>& backbone() const { return backbone_; }

  // Inference on decoded images: letterbox, forward, decode, map boxes
  // back to source coordinates.
  std::vector<Detection> detect(const std::vector<const ImageRecord*>& images, double conf_threshold) const {
    nn::NoGradGuard guard;
    const int S = cfg_.input_size, N = static_cast<int>(images.size());
    std::vector<Detection> dets;
    if (N == 0) return dets;
    nn::Tensor<T> batch({N, 3, S, S});
    std::vector<Letterbox> boxes(images.size());
    const std::size_t per = static_cast<std::size_t>(3) * S * S;
    for (int n = 0; n < N; ++n)
      preprocess_into(*images[n], S, cfg_.input_norm, batch.data() + n * per, &boxes[n]);
    auto out = forward(Var<T>(std::move(batch)));
    for (int n = 0; n < N; ++n) {
      for (auto d : decode_predictions(out.raw, cfg_, n, images[n]->id, conf_threshold)) {
        d.box = box_from_input(d.box, boxes[n]);
        if (d.box.x2 > d.box.x1 && d.box.y2 > d.box.y1) dets.push_back(d);
      }
    }
    return dets;
  }

  nn::Checkpoint checkpoint() const { return nn::make_checkpoint(params_, to_json(cfg_)); }
  void load(const nn::Checkpoint& ck) { nn::apply_checkpoint(ck, params_); }

 private:
  void collect_parameters() {
    params_.clear();
    if (cfg_.uses_yolo()) backbone_.collect(params_, "yolo");
    if (cfg_.uses_vit()) {
      vit_.collect(params_, "vit");
      if (cfg_.sta_active()) {
        sta_.collect(params_, "adapter.sta");
      } else {
        for (int l = 0; l < 3; ++l) proj_[l].collect(params_, "adapter.proj.p" + std::to_string(l + 3));
      }
      if (cfg_.branch_mode == BranchMode::kDual) fusion_.collect(params_, "adapter.fusion");
    }
    head_.collect(params_, "head");
    nn::check_unique_names(params_);
  }

  DetectorConfig cfg_;
  ConvBackbone<T> backbone_;
  ViT<T> vit_;
  std::array<VitProjection<T>, 3> proj_;
  SpatialTuningAdapter<T> sta_;
  DualFusion<T> fusion_;
  DetectionHead<T> head_;
  ParameterList<T> params_;
};

template <typename T>
Detector<T> load_detector(const std::filesystem::path& path) {
  nn::Checkpoint ck = nn::load_checkpoint(path);
  Detector<T> det(detector_config_from_json(ck.config));
  det.load(ck);
  return det;
}

}  // namespace weedet
