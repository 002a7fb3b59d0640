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
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "support/model_fixtures.hpp"
#include "weedet/model/decode.hpp"
#include "weedet/model/detector.hpp"
#include "weedet/model/features.hpp"
#include "weedet/model/loss.hpp"
#include "weedet/model/preprocess.hpp"
#include "weedet/model/profile.hpp"
#include "weedet/model/targets.hpp"
#include "weedet/model/train.hpp"
#include "weedet/numerics/gradcheck.hpp"

namespace weedet {
namespace {

using nn::Shape;
using nn::Tensor;
using testing::tiny_config;
using testing::tiny_scene;

const std::vector<int> kSizes = {64, 96, 128, 160};

Var<double> random_input(int n, int size, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return Var<double>(nn::randn<double>({n, 3, size, size}, 1.0, rng));
}

// ---------------------------------------------------------------- config

TEST(ModelConfig, TapsScaleWithDepth) {
  ViTConfig v;
  v.depth = 12;
  EXPECT_EQ(v.taps(), (std::vector<int>{5, 8, 11}));
  v.depth = 6;
  EXPECT_EQ(v.taps(), (std::vector<int>{3, 4, 5}));
}

TEST(ModelConfig, RejectsInvalidCombinations) {
  DetectorConfig c;
  c.branch_mode = BranchMode::kYoloOnly;
  c.use_align_loss = true;
  EXPECT_THROW(c.validate(), ConfigError);
  c = DetectorConfig{};
  c.dfl_bins = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = DetectorConfig{};
  c.input_size = 100;
  EXPECT_THROW(c.validate(), ConfigError);
  c = DetectorConfig{};
  c.vit.heads = 5;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ModelConfig, JsonRoundTrip) {
  DetectorConfig c = tiny_config(BranchMode::kVitOnly, true, HeadVariant::kPlain);
  c.head_attention = true;
  DetectorConfig r = detector_config_from_json(to_json(c));
  EXPECT_EQ(to_json(r), to_json(c));
  EXPECT_THROW(detector_config_from_json({{"branch_mode", "both"}}), ConfigError);
}

// ---------------------------------------------------------------- shapes

TEST(ViTShapes, TokenCountFollowsGrid) {
  for (int S : kSizes) {
    Rng rng(1);
    ViTConfig vc = tiny_config().vit;
    ViT<double> vit(vc, S, rng);
    auto out = vit(random_input(2, S, 3));
    const int g = S / vc.patch_size;
    ASSERT_EQ(out.taps.size(), 3u);
    for (const auto& t : out.taps) EXPECT_EQ(t.shape(), (Shape{2, g * g, vc.embed_dim}));
    EXPECT_EQ(out.final.shape(), (Shape{2, g * g, vc.embed_dim}));
    EXPECT_EQ(out.cls.shape(), (Shape{2, vc.embed_dim}));
  }
}

TEST(ViTShapes, IndivisibleInputIsConfigError) {
  Rng rng(1);
  EXPECT_THROW(ViT<double>(tiny_config().vit, 72, rng), ConfigError);
  ViT<double> vit(tiny_config().vit, 64, rng);
  EXPECT_THROW(vit(random_input(1, 72, 1)), ConfigError);
}

TEST(ViTShapes, ZeroBlocksPassEmbeddingsThrough) {
  Rng rng(2);
  ViT<double> vit(tiny_config().vit, 64, rng);
  ParameterList<double> params;
  vit.collect(params, "vit");
  for (auto& p : params)
    if (p.name.find(".blocks.") != std::string::npos) p.var.mutable_value().fill(0.0);
  auto x = random_input(2, 64, 4);
  auto out = vit(x);
  auto tokens = map_to_tokens(vit.patch(x));
  const int L = tokens.dim(1), D = tokens.dim(2);
  for (int n = 0; n < 2; ++n)
    for (int t = 0; t < L; ++t)
      for (int d = 0; d < D; ++d) {
        const std::size_t i = (static_cast<std::size_t>(n) * L + t) * D + d;
        const double expect = tokens.value()[i] + vit.pos.value()[static_cast<std::size_t>(t + 1) * D + d];
        EXPECT_NEAR(out.final.value()[i], expect, 1e-12);
      }
}

TEST(BackboneShapes, StrideLaw) {
  Rng rng(1);
  ConvBackbone<double> bb(16, rng);
  for (int S : kSizes) {
    auto p = bb(random_input(1, S, 5));
    EXPECT_EQ(p.p3().shape(), (Shape{1, 4, S / 8, S / 8}));
    EXPECT_EQ(p.p4().shape(), (Shape{1, 8, S / 16, S / 16}));
    EXPECT_EQ(p.p5().shape(), (Shape{1, 16, S / 32, S / 32}));
    check_pyramid(p);
  }
}

TEST(BackboneShapes, DoublingInputDoublesLevels) {
  Rng rng(1);
  ConvBackbone<double> bb(16, rng);
  auto a = bb(random_input(1, 64, 1));
  auto b = bb(random_input(1, 128, 1));
  for (int l = 0; l < 3; ++l) {
    EXPECT_EQ(b.levels[l].dim(2), 2 * a.levels[l].dim(2));
    EXPECT_EQ(b.levels[l].dim(3), 2 * a.levels[l].dim(3));
  }
  EXPECT_THROW(bb(random_input(1, 80, 1)), ConfigError);
}

TEST(DetectorShapes, RawPredictionPerLevelForAllSizes) {
  for (int S : kSizes) {
    for (auto head : {HeadVariant::kPlain, HeadVariant::kDfl}) {
      auto cfg = tiny_config(BranchMode::kDual, true, head);
      cfg.input_size = S;
      Detector<double> det(cfg);
      auto out = det.forward(random_input(1, S, 2));
      const int box_ch = head == HeadVariant::kDfl ? 4 * cfg.dfl_bins : 4;
      for (int l = 0; l < 3; ++l) {
        const int g = S / kLevelStrides[l];
        EXPECT_EQ(out.raw.cls[l].shape(), (Shape{1, cfg.num_classes, g, g}));
        EXPECT_EQ(out.raw.box[l].shape(), (Shape{1, box_ch, g, g}));
      }
    }
  }
}

TEST(DetectorShapes, HeadShapesAtToyScale) {
  DetectorConfig cfg;
  cfg.head_variant = HeadVariant::kPlain;
  Detector<float> plain(cfg);
  Rng rng(3);
  auto x = Var<float>(nn::randn<float>({1, 3, 128, 128}, 1.0f, rng));
  auto raw = plain.forward(x).raw;
  EXPECT_EQ(raw.cls[0].shape(), (Shape{1, 2, 16, 16}));
  EXPECT_EQ(raw.box[0].shape(), (Shape{1, 4, 16, 16}));
  cfg.head_variant = HeadVariant::kDfl;
  cfg.dfl_bins = 8;
  Detector<float> dfl(cfg);
  EXPECT_EQ(dfl.forward(x).raw.box[2].shape(), (Shape{1, 32, 4, 4}));
}

TEST(DetectorShapes, WrongInputSizeIsShapeError) {
  Detector<double> det(tiny_config());
  EXPECT_THROW(det.forward(random_input(1, 96, 1)), ShapeError);
}

// ---------------------------------------------------------------- adapters

TEST(Projection, IdentityConvAtNativeStrideIsReshape) {
  Rng rng(4);
  const int D = 8, g = 4, S = 64;
  VitProjection<double> proj(D, D, 16, rng);
  proj.conv.weight.mutable_value().fill(0.0);
  for (int c = 0; c < D; ++c) proj.conv.weight.mutable_value()[static_cast<std::size_t>(c * D + c)] = 1.0;
  auto tokens = Var<double>(nn::randn<double>({1, g * g, D}, 1.0, rng));
  auto y = proj(tokens, S);
  ASSERT_EQ(y.shape(), (Shape{1, D, g, g}));
  for (int c = 0; c < D; ++c)
    for (int t = 0; t < g * g; ++t)
      EXPECT_DOUBLE_EQ(y.value()[static_cast<std::size_t>(c) * g * g + t], tokens.value()[static_cast<std::size_t>(t) * D + c]);
}

TEST(Projection, OutputMatchesTargetStride) {
  Rng rng(4);
  auto tokens = Var<double>(nn::randn<double>({2, 36, 8}, 1.0, rng));
  for (int stride : kLevelStrides) {
    VitProjection<double> proj(8, 5, stride, rng);
    EXPECT_EQ(proj(tokens, 96).shape(), (Shape{2, 5, 96 / stride, 96 / stride}));
  }
}

TEST(Projection, NonSquareGridIsShapeError) {
  Rng rng(4);
  VitProjection<double> proj(8, 8, 16, rng);
  EXPECT_THROW(proj(Var<double>(Tensor<double>({1, 12, 8})), 64), ShapeError);
  SpatialTuningAdapter<double> sta(8, {2, 4, 8}, rng);
  EXPECT_THROW(sta(Var<double>(Tensor<double>({1, 12, 8})), 64), ShapeError);
}

TEST(Projection, GradientReachesViT) {
  auto cfg = tiny_config(BranchMode::kVitOnly);
  Detector<double> det(cfg);
  auto out = det.forward(random_input(1, 64, 6));
  Var<double> s = nn::mean(out.vit->p3());
  for (int l = 1; l < 3; ++l) s = nn::add(s, nn::mean(out.vit->levels[l]));
  nn::backward(s);
  double mag = 0.0;
  for (const auto& p : det.parameters())
    if (p.name.rfind("vit.", 0) == 0 && p.var.has_grad())
      for (double g : p.var.grad().values()) mag += std::abs(g);
  EXPECT_GT(mag, 0.0);
}

TEST(Sta, PyramidInvariantsForAllSizes) {
  Rng rng(5);
  SpatialTuningAdapter<double> sta(16, {4, 8, 16}, rng);
  for (int S : kSizes) {
    const int g = S / 16;
    auto p = sta(Var<double>(nn::randn<double>({1, g * g, 16}, 1.0, rng)), S);
    check_pyramid(p);
    for (int l = 0; l < 3; ++l) EXPECT_EQ(p.levels[l].dim(2), S / kLevelStrides[l]);
  }
}

TEST(Sta, VitOnlyWithoutStaUsesProjections) {
  Detector<double> no_sta(tiny_config(BranchMode::kVitOnly, false));
  Detector<double> with_sta(tiny_config(BranchMode::kVitOnly, true));
  auto has = [](const Detector<double>& d, const std::string& prefix) {
    for (const auto& p : d.parameters())
      if (p.name.rfind(prefix, 0) == 0) return true;
    return false;
  };
  EXPECT_TRUE(has(no_sta, "adapter.proj."));
  EXPECT_FALSE(has(no_sta, "adapter.sta."));
  EXPECT_TRUE(has(with_sta, "adapter.sta."));
  EXPECT_FALSE(has(with_sta, "adapter.proj."));
}

FeaturePyramid<double> random_pyramid(std::uint64_t seed, bool grad, double scale = 1.0) {
  Rng rng = make_rng(seed);
  FeaturePyramid<double> p;
  const std::vector<int> widths = {2, 3, 4};
  for (int l = 0; l < 3; ++l) {
    const int g = 8 >> l;
    p.levels[l] = Var<double>(nn::randn<double>({1, widths[l], g, g}, scale, rng), grad);
  }
  return p;
}

TEST(Fusion, ZeroVitBranchGivesConvOfYolo) {
  Rng rng(6);
  DualFusion<double> fusion({2, 3, 4}, rng);
  auto yolo = random_pyramid(1, false);
  FeaturePyramid<double> zero;
  for (int l = 0; l < 3; ++l) zero.levels[l] = Var<double>(Tensor<double>(yolo.levels[l].shape()));
  auto fused = fusion(yolo, zero);
  for (int l = 0; l < 3; ++l) {
    EXPECT_EQ(fused.levels[l].shape(), yolo.levels[l].shape());
    EXPECT_EQ(fused.levels[l].value(), fusion.convs[l](yolo.levels[l]).value());
  }
}

TEST(Fusion, ShapeMismatchIsShapeError) {
  Rng rng(6);
  DualFusion<double> fusion({2, 3, 4}, rng);
  auto yolo = random_pyramid(1, false);
  auto vit = yolo;
  vit.levels[1] = Var<double>(Tensor<double>({1, 3, 2, 2}));
  EXPECT_THROW(fusion(yolo, vit), ShapeError);
}

TEST(Fusion, GradientReachesBothBranches) {
  Detector<double> det(tiny_config(BranchMode::kDual));
  auto out = det.forward(random_input(1, 64, 7));
  Var<double> s = nn::mean(out.raw.cls[0]);
  for (int l = 0; l < 3; ++l) s = nn::add(s, nn::add(nn::mean(out.raw.cls[l]), nn::mean(out.raw.box[l])));
  nn::backward(s);
  std::map<std::string, double> mag;
  for (const auto& p : det.parameters())
    if (p.var.has_grad())
      for (double g : p.var.grad().values()) mag[p.name.substr(0, p.name.find('.'))] += std::abs(g);
  EXPECT_GT(mag["yolo"], 0.0);
  EXPECT_GT(mag["vit"], 0.0);
}

// ---------------------------------------------------------------- alignment

TEST(Alignment, IdenticalFeaturesGiveZero) {
  auto a = random_pyramid(3, false);
  EXPECT_EQ(alignment_loss(a, a).item(), 0.0);
}

TEST(Alignment, UnitOffsetOnOneLevelGivesOne) {
  auto a = random_pyramid(3, false);
  auto b = a;
  Tensor<double> shifted = a.levels[1].value();
  for (auto& v : shifted.values()) v += 1.0;
  b.levels[1] = Var<double>(shifted);
  EXPECT_NEAR(alignment_loss(a, b).item(), 1.0, 1e-12);
}

TEST(Alignment, ZeroOnlyWhenIdentical) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto a = random_pyramid(seed, false);
    auto b = a;
    Rng rng = make_rng(seed, 9);
    const int l = static_cast<int>(rng() % 3);
    Tensor<double> t = a.levels[l].value();
    t[rng() % t.numel()] += 1e-3;
    b.levels[l] = Var<double>(t);
    EXPECT_GT(alignment_loss(a, b).item(), 0.0);
  }
}

TEST(Alignment, GradientCheck) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto a = random_pyramid(seed, true);
    auto b = random_pyramid(seed + 100, true);
    ParameterList<double> params;
    for (int l = 0; l < 3; ++l) {
      params.push_back({"a" + std::to_string(l), a.levels[l]});
      params.push_back({"b" + std::to_string(l), b.levels[l]});
    }
    nn::GradCheckOptions opt;
    opt.epsilon = 1e-4;
    opt.tolerance = 1e-4;
    auto report = nn::grad_check<double>([&] { return alignment_loss(a, b); }, params, opt);
    EXPECT_TRUE(report.passed) << report.max_rel_error;
  }
}

TEST(Alignment, DetachedVitReceivesNoGradient) {
  auto a = random_pyramid(1, true);
  auto b = random_pyramid(2, true);
  nn::backward(alignment_loss(a, b, true));
  EXPECT_TRUE(a.levels[0].has_grad());
  for (int l = 0; l < 3; ++l) EXPECT_FALSE(b.levels[l].has_grad());
}

TEST(Alignment, ShapeMismatchIsShapeError) {
  auto a = random_pyramid(1, false);
  auto b = a;
  b.levels[2] = Var<double>(Tensor<double>({1, 4, 2, 1}));
  EXPECT_THROW(alignment_loss(a, b), ShapeError);
}

// ---------------------------------------------------------------- head + decode

TEST(Dfl, DominantLogitGivesItsIndex) {
  std::vector<double> logits(8, 0.0);
  for (int k = 0; k < 8; ++k) {
    std::fill(logits.begin(), logits.end(), -50.0);
    logits[static_cast<std::size_t>(k)] = 50.0;
    EXPECT_NEAR(dfl_expectation(logits.data(), 8), k, 1e-12);
  }
}

TEST(Dfl, UniformLogitsGiveMidpoint) {
  for (int bins : {2, 4, 8, 16}) {
    std::vector<double> logits(static_cast<std::size_t>(bins), 0.7);
    EXPECT_NEAR(dfl_expectation(logits.data(), bins), (bins - 1) / 2.0, 1e-12);
  }
}

RawPrediction<double> constant_raw(const DetectorConfig& cfg, double cls_logit, double box_logit) {
  RawPrediction<double> raw;
  const int box_ch = cfg.head_variant == HeadVariant::kDfl ? 4 * cfg.dfl_bins : 4;
  for (int l = 0; l < 3; ++l) {
    const int g = cfg.input_size / kLevelStrides[l];
    raw.cls[l] = Var<double>(Tensor<double>({1, cfg.num_classes, g, g}, cls_logit));
    raw.box[l] = Var<double>(Tensor<double>({1, box_ch, g, g}, box_logit));
  }
  return raw;
}

TEST(Decode, NegativeLogitsGiveNoDetections) {
  auto cfg = tiny_config();
  EXPECT_TRUE(decode_predictions(constant_raw(cfg, -20.0, 0.0), cfg, 0, "a", 0.25).empty());
}

TEST(Decode, OneSaturatedCellGivesOneDetection) {
  auto cfg = tiny_config(BranchMode::kDual, false, HeadVariant::kDfl);
  auto raw = constant_raw(cfg, -20.0, 0.0);
  // P4 cell (x=1, y=2), class 1; uniform bins decode to 1.5 stride units.
  const int g = 4;
  raw.cls[1].mutable_value()[static_cast<std::size_t>(1 * g * g + 2 * g + 1)] = 20.0;
  auto dets = decode_predictions(raw, cfg, 0, "img", 0.25);
  ASSERT_EQ(dets.size(), 1u);
  EXPECT_EQ(dets[0].class_id, 1);
  EXPECT_EQ(dets[0].image_id, "img");
  const double cx = 1.5 * 16, cy = 2.5 * 16, d = 1.5 * 16;
  EXPECT_NEAR(dets[0].box.x1, (cx - d) / 64, 1e-12);
  EXPECT_NEAR(dets[0].box.y1, (cy - d) / 64, 1e-12);
  EXPECT_NEAR(dets[0].box.x2, (cx + d) / 64, 1e-12);
  EXPECT_NEAR(dets[0].box.y2, std::min(1.0, (cy + d) / 64), 1e-12);
}

TEST(Decode, BoxesAreOrderedInsideUnitSquare) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng = make_rng(seed);
    auto cfg = tiny_config(BranchMode::kDual, false, seed % 2 ? HeadVariant::kDfl : HeadVariant::kPlain);
    auto raw = constant_raw(cfg, 0.0, 0.0);
    const double spread = 1.0 + static_cast<double>(seed % 5) * 5.0;
    for (int l = 0; l < 3; ++l) {
      raw.cls[l] = Var<double>(nn::randn<double>(raw.cls[l].shape(), 2.0, rng));
      raw.box[l] = Var<double>(nn::randn<double>(raw.box[l].shape(), spread, rng));
      if (seed % 7 == 0)  // collapsed distances
        raw.box[l].mutable_value().fill(-100.0);
    }
    for (const auto& d : decode_predictions(raw, cfg, 0, "x", 0.0)) {
      EXPECT_LE(0.0, d.box.x1);
      EXPECT_LT(d.box.x1, d.box.x2);
      EXPECT_LE(d.box.x2, 1.0);
      EXPECT_LE(0.0, d.box.y1);
      EXPECT_LT(d.box.y1, d.box.y2);
      EXPECT_LE(d.box.y2, 1.0);
    }
  }
}

TEST(Decode, CountEqualsConfidentCells) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng = make_rng(seed);
    auto cfg = tiny_config();
    auto raw = constant_raw(cfg, 0.0, 0.0);
    std::size_t expected = 0;
    for (int l = 0; l < 3; ++l) {
      raw.cls[l] = Var<double>(nn::randn<double>(raw.cls[l].shape(), 2.0, rng));
      const auto& v = raw.cls[l].value();
      const int HW = v.dim(2) * v.dim(3);
      for (int c = 0; c < HW; ++c) {
        double best = -INFINITY;
        for (int k = 0; k < cfg.num_classes; ++k) best = std::max(best, v[static_cast<std::size_t>(k) * HW + c]);
        expected += 1.0 / (1.0 + std::exp(-best)) >= 0.25;
      }
    }
    EXPECT_EQ(decode_predictions(raw, cfg, 0, "x", 0.25).size(), expected);
  }
}

TEST(Decode, ArgmaxInvariantUnderPositiveScaling) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng = make_rng(seed);
    auto cfg = tiny_config();
    auto raw = constant_raw(cfg, 0.0, 0.0);
    auto scaled = raw;
    const double k = 0.1 + static_cast<double>(seed);
    for (int l = 0; l < 3; ++l) {
      raw.cls[l] = Var<double>(nn::randn<double>(raw.cls[l].shape(), 2.0, rng));
      scaled.cls[l] = nn::scale(raw.cls[l], k);
    }
    auto a = decode_predictions(raw, cfg, 0, "x", 0.0);
    auto b = decode_predictions(scaled, cfg, 0, "x", 0.0);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].class_id, b[i].class_id);
  }
}

TEST(Decode, ForwardDecodeIsDeterministic) {
  Detector<float> a(DetectorConfig{});
  Detector<float> b(DetectorConfig{});
  auto scene = synth_blob_image(SyntheticSceneConfig{}, 3);
  auto da = a.detect({&scene.image}, 0.0);
  auto db = b.detect({&scene.image}, 0.0);
  ASSERT_EQ(da.size(), db.size());
  for (std::size_t i = 0; i < da.size(); ++i) {
    EXPECT_EQ(da[i].confidence, db[i].confidence);
    EXPECT_EQ(da[i].box.x1, db[i].box.x1);
    EXPECT_EQ(da[i].box.y2, db[i].box.y2);
  }
}

TEST(Decode, NmsRemovesOverlappingDuplicates) {
  std::vector<Detection> dets = {{"a", 0, 0.9, {0.1, 0.1, 0.5, 0.5}},
                                 {"a", 0, 0.8, {0.11, 0.1, 0.5, 0.5}},
                                 {"a", 1, 0.7, {0.1, 0.1, 0.5, 0.5}},
                                 {"a", 0, 0.6, {0.6, 0.6, 0.9, 0.9}}};
  auto kept = greedy_nms(dets, 0.7);
  ASSERT_EQ(kept.size(), 3u);
  EXPECT_EQ(kept[0].confidence, 0.9);
  EXPECT_EQ(kept[1].class_id, 1);
}

// ---------------------------------------------------------------- targets

TEST(Targets, WholeImageBoxGoesToCentralP5Cells) {
  GroundTruthBox b{0, 0.5, 0.5, 1.0, 1.0};
  EXPECT_EQ(target_level(b, 128), 2);
  auto t = assign_targets({{b}}, 128);
  const auto& p5 = t.levels[2];
  std::set<std::pair<int, int>> cells;
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      if (p5.cls[p5.cell(0, y, x)] == 0) cells.insert({y, x});
  EXPECT_EQ(cells, (std::set<std::pair<int, int>>{{1, 1}, {1, 2}, {2, 1}, {2, 2}}));
  for (int l = 0; l < 2; ++l)
    for (int c : t.levels[l].cls) EXPECT_EQ(c, -1);
  EXPECT_EQ(t.positives[0], 4);
  // Cell (1, 1) has its center at (48, 48) px; the box spans 0..128.
  const auto& d = p5.ltrb[p5.cell(0, 1, 1)];
  EXPECT_DOUBLE_EQ(d[0], 1.5);
  EXPECT_DOUBLE_EQ(d[2], 2.5);
}

TEST(Targets, EmptyListIsAllBackground) {
  auto t = assign_targets({{}, {}}, 64);
  for (const auto& lt : t.levels)
    for (int c : lt.cls) EXPECT_EQ(c, -1);
  EXPECT_EQ(t.positives, (std::vector<int>{0, 0}));
}

TEST(Targets, DisjointSmallBoxesGetDisjointP3Cells) {
  GroundTruthBox a{0, 0.2, 0.2, 0.1, 0.1}, b{1, 0.7, 0.6, 0.1, 0.1};
  ASSERT_EQ(target_level(a, 128), 0);
  auto t = assign_targets({{a, b}}, 128);
  const auto& p3 = t.levels[0];
  std::set<std::size_t> ca, cb;
  for (std::size_t c = 0; c < p3.cls.size(); ++c) {
    if (p3.cls[c] == 0) ca.insert(c);
    if (p3.cls[c] == 1) cb.insert(c);
  }
  EXPECT_FALSE(ca.empty());
  EXPECT_FALSE(cb.empty());
  for (auto c : ca) EXPECT_EQ(cb.count(c), 0u);
}

TEST(Targets, LevelRoutingBySize) {
  const int S = 128;
  EXPECT_EQ(target_level({0, 0.5, 0.5, 8.0 / S, 8.0 / S}, S), 0);
  EXPECT_EQ(target_level({0, 0.5, 0.5, 15.9 / S, 4.0 / S}, S), 0);
  EXPECT_EQ(target_level({0, 0.5, 0.5, 16.0 / S, 4.0 / S}, S), 1);
  EXPECT_EQ(target_level({0, 0.5, 0.5, 4.0 / S, 32.0 / S}, S), 2);
  EXPECT_EQ(target_level({0, 0.5, 0.5, 1.0 / S, 1.0 / S}, S), 0);
}

TEST(Targets, TinyBoxFallsBackToCenterCell) {
  GroundTruthBox b{1, 0.3, 0.3, 0.02, 0.02};
  auto t = assign_targets({{b}}, 128);
  EXPECT_EQ(t.positives[0], 1);
  const auto& p3 = t.levels[0];
  EXPECT_EQ(p3.cls[p3.cell(0, static_cast<int>(0.3 * 128 / 8), static_cast<int>(0.3 * 128 / 8))], 1);
}

TEST(Targets, OverlapGoesToSmallerBox) {
  GroundTruthBox big{0, 0.5, 0.5, 0.12, 0.12}, small{1, 0.5, 0.5, 0.1, 0.1};
  for (auto order : {std::vector<GroundTruthBox>{big, small}, std::vector<GroundTruthBox>{small, big}}) {
    auto t = assign_targets({order}, 128);
    for (int c : t.levels[0].cls) EXPECT_NE(c, 0);
  }
}

// ---------------------------------------------------------------- loss

TEST(Loss, ZeroPositivesGivesBackgroundOnly) {
  auto cfg = tiny_config();
  auto raw = constant_raw(cfg, -3.0, 0.0);
  auto parts = detection_loss(raw, assign_targets({{}}, 64), cfg);
  EXPECT_EQ(parts.box, 0.0);
  const double cells = 2.0 * (64 + 16 + 4);
  EXPECT_NEAR(parts.total.item(), cells * std::log1p(std::exp(-3.0)), 1e-9);
}

TEST(Loss, PerfectPredictionsScoreNearZero) {
  for (auto head : {HeadVariant::kPlain, HeadVariant::kDfl}) {
    auto cfg = tiny_config(BranchMode::kDual, false, head);
    cfg.input_size = 128;
    std::vector<std::vector<GroundTruthBox>> gts = {
        {{0, 0.3, 0.3, 0.1, 0.12}, {1, 0.7, 0.6, 0.2, 0.15}, {0, 0.5, 0.5, 0.9, 0.8}}, {{1, 0.25, 0.7, 0.3, 0.3}}};
    auto t = assign_targets(gts, cfg.input_size);
    RawPrediction<double> raw;
    const int B = cfg.dfl_bins;
    const int box_ch = head == HeadVariant::kDfl ? 4 * B : 4;
    for (int l = 0; l < 3; ++l) {
      const auto& lt = t.levels[l];
      const int HW = lt.height * lt.width, K = cfg.num_classes;
      Tensor<double> cls({2, K, lt.height, lt.width}, -30.0), box({2, box_ch, lt.height, lt.width}, -30.0);
      for (int n = 0; n < 2; ++n)
        for (int c = 0; c < HW; ++c) {
          const std::size_t cell = static_cast<std::size_t>(n) * HW + c;
          if (lt.cls[cell] < 0) continue;
          cls[(static_cast<std::size_t>(n) * K + lt.cls[cell]) * HW + c] = 30.0;
          for (int s = 0; s < 4; ++s) {
            const double y = lt.ltrb[cell][s];
            if (head == HeadVariant::kPlain) {
              box[(static_cast<std::size_t>(n) * box_ch + s) * HW + c] = std::log(std::expm1(y));
            } else {
              const double yc = std::clamp(y, 0.0, B - 1 - 0.01);
              const int lo = static_cast<int>(yc);
              const double wr = yc - lo, wl = 1 - wr;
              auto at = [&](int k) -> double& { return box[(static_cast<std::size_t>(n) * box_ch + s * B + k) * HW + c]; };
              at(lo) = wl > 0 ? std::log(wl) : -30.0;
              at(lo + 1) = wr > 0 ? std::log(wr) : -30.0;
            }
          }
        }
      raw.cls[l] = Var<double>(cls);
      raw.box[l] = Var<double>(box);
    }
    auto parts = detection_loss(raw, t, cfg);
    EXPECT_GT(t.positives[0], 0);
    EXPECT_LE(parts.total.item(), 1e-2) << to_string(head);
  }
}

TEST(Loss, IouLossGradientCheck) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng = make_rng(seed);
    std::uniform_real_distribution<double> u(0.2, 3.0);
    const int P = 5;
    Tensor<double> pred({P, 4});
    std::vector<std::array<double, 4>> tgt(P);
    std::vector<double> w(P);
    for (int i = 0; i < P; ++i) {
      for (int k = 0; k < 4; ++k) {
        pred[static_cast<std::size_t>(i * 4 + k)] = u(rng);
        tgt[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = u(rng);
      }
      w[static_cast<std::size_t>(i)] = u(rng);
    }
    ParameterList<double> params = {nn::make_parameter<double>("pred", pred)};
    nn::GradCheckOptions opt;
    opt.epsilon = 1e-6;
    auto r = nn::grad_check<double>([&] { return iou_loss_ltrb(params[0].var, tgt, w); }, params, opt);
    EXPECT_TRUE(r.passed) << r.max_rel_error;
  }
}

TEST(Loss, IouLossIsZeroAtTarget) {
  Var<double> pred(Tensor<double>({1, 4}, std::vector<double>{1, 2, 3, 4}));
  EXPECT_NEAR(iou_loss_ltrb(pred, {{1, 2, 3, 4}}, {1.0}).item(), 0.0, 1e-9);
}

TEST(Loss, DflGradientCheckAndZeroAtTarget) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng = make_rng(seed);
    std::uniform_real_distribution<double> u(0.0, 6.98);
    ParameterList<double> params = {nn::make_parameter<double>("logits", nn::randn<double>({6, 8}, 2.0, rng))};
    std::vector<double> y(6), w(6, 0.5);
    for (auto& v : y) v = u(rng);
    auto r = nn::grad_check<double>([&] { return dfl_loss(params[0].var, y, w); }, params, {1e-5, 1e-4});
    EXPECT_TRUE(r.passed) << r.max_rel_error;
  }
  Var<double> exact(Tensor<double>({1, 4}, std::vector<double>{-40, std::log(0.25), std::log(0.75), -40}));
  EXPECT_NEAR(dfl_loss(exact, {1.75}, {1.0}).item(), 0.0, 1e-9);
  EXPECT_THROW(dfl_loss(exact, {3.0}, {1.0}), ShapeError);
}

// Central differences over a subset of every parameter of the toy model.
TEST(Loss, FullModelGradientCheck) {
  struct Case {
    BranchMode mode;
    bool sta, align, attention;
    HeadVariant head;
  };
  const std::vector<Case> cases = {{BranchMode::kDual, false, true, false, HeadVariant::kDfl},
                                   {BranchMode::kDual, true, true, true, HeadVariant::kPlain},
                                   {BranchMode::kVitOnly, true, false, false, HeadVariant::kDfl},
                                   {BranchMode::kYoloOnly, false, false, true, HeadVariant::kPlain}};
  std::vector<LabeledImage> scenes = {tiny_scene(0), tiny_scene(1)};
  for (const auto& c : cases) {
    auto cfg = tiny_config(c.mode, c.sta, c.head);
    cfg.use_align_loss = c.align;
    cfg.head_attention = c.attention;
    Detector<double> det(cfg);
    std::vector<std::vector<GroundTruthBox>> gts;
    auto x = testing::batch_of<double>(scenes, cfg, &gts);
    nn::GradCheckOptions opt;
    opt.epsilon = 1e-3;
    opt.tolerance = 1e-3;
    opt.abs_floor = 1e-6;
    opt.max_entries_per_param = 3;
    auto r = nn::grad_check<double>([&] { return testing::model_loss(det, x, gts); }, det.parameters(), opt);
    std::string worst;
    for (const auto& p : r.params)
      if (p.max_rel_error > 1e-3) worst += p.name + "=" + std::to_string(p.max_rel_error) + " ";
    EXPECT_TRUE(r.passed) << to_string(c.mode) << " " << r.max_rel_error << " " << worst;
  }
}

TEST(Loss, EveryParameterGetsFiniteGradientInAllConfigs) {
  std::vector<LabeledImage> scenes = {tiny_scene(2)};
  int configs = 0;
  for (auto mode : {BranchMode::kYoloOnly, BranchMode::kVitOnly, BranchMode::kDual})
    for (bool sta : {false, true})
      for (auto head : {HeadVariant::kDfl, HeadVariant::kPlain}) {
        auto cfg = tiny_config(mode, sta, head);
        cfg.use_align_loss = mode == BranchMode::kDual;
        Detector<double> det(cfg);
        auto x = testing::batch_of<double>(scenes, cfg);
        // One box routed to each level so every head branch sees positives.
        const std::vector<std::vector<GroundTruthBox>> gts = {
            {{0, 0.25, 0.25, 0.15, 0.15}, {1, 0.7, 0.3, 0.3, 0.3}, {0, 0.5, 0.6, 0.7, 0.6}}};
        ASSERT_EQ(target_level(gts[0][0], 64), 0);
        ASSERT_EQ(target_level(gts[0][1], 64), 1);
        ASSERT_EQ(target_level(gts[0][2], 64), 2);
        nn::backward(testing::model_loss(det, x, gts));
        for (const auto& p : det.parameters()) {
          ASSERT_TRUE(p.var.has_grad()) << p.name << " in " << to_json(cfg).dump();
          for (double g : p.var.grad().values()) ASSERT_TRUE(std::isfinite(g)) << p.name;
        }
        ++configs;
      }
  EXPECT_EQ(configs, 12);
}

TEST(Loss, AlignmentTermIsWeighted) {
  auto cfg = tiny_config();
  cfg.use_align_loss = true;
  cfg.align_weight = 2.5;
  Detector<double> det(cfg);
  std::vector<std::vector<GroundTruthBox>> gts;
  auto x = testing::batch_of<double>({tiny_scene(0)}, cfg, &gts);
  auto out = det.forward(Var<double>(x));
  auto t = assign_targets(gts, cfg.input_size);
  auto with = detection_loss(out.raw, t, cfg, &*out.align);
  auto without = detection_loss(out.raw, t, cfg);
  EXPECT_GT(with.align, 0.0);
  EXPECT_NEAR(with.total.item() - without.total.item(), 2.5 * with.align, 1e-9);
}

// ---------------------------------------------------------------- params

TEST(Params, DualEqualsYoloPlusVitPlusAdapters) {
  for (bool sta : {false, true})
    for (auto head : {HeadVariant::kDfl, HeadVariant::kPlain}) {
      DetectorConfig base;
      base.use_sta = sta;
      base.head_variant = head;
      auto yolo_cfg = base, vit_cfg = base, dual_cfg = base;
      yolo_cfg.branch_mode = BranchMode::kYoloOnly;
      vit_cfg.branch_mode = BranchMode::kVitOnly;
      dual_cfg.use_align_loss = true;
      Detector<float> yolo(yolo_cfg), vit(vit_cfg), dual(dual_cfg);
      EXPECT_EQ(dual.count_params(),
                yolo.count_params() + vit.count_params("vit") + dual.count_params("adapter"));
      std::size_t groups = 0;
      for (const auto& g : parameter_groups()) groups += dual.count_params(g);
      EXPECT_EQ(groups, dual.count_params());
      EXPECT_EQ(vit.count_params("vit"), dual.count_params("vit"));
      EXPECT_EQ(yolo.count_params("head"), dual.count_params("head"));
    }
}

TEST(Params, LinearLayerCount) {
  Rng rng(1);
  for (auto [in, out] : {std::pair{3, 5}, std::pair{64, 192}, std::pair{1, 1}}) {
    Linear<float> lin(in, out, rng);
    ParameterList<float> params;
    lin.collect(params, "fc");
    EXPECT_EQ(nn::count_elements(params), static_cast<std::size_t>(in * out + out));
  }
}

TEST(Params, NamesAreUniqueAndGrouped) {
  Detector<float> det([] {
    DetectorConfig c;
    c.use_sta = true;
    c.head_attention = true;
    return c;
  }());
  std::set<std::string> names;
  for (const auto& p : det.parameters()) {
    EXPECT_TRUE(names.insert(p.name).second);
    const std::string g = p.name.substr(0, p.name.find('.'));
    EXPECT_NE(std::find(parameter_groups().begin(), parameter_groups().end(), g), parameter_groups().end());
  }
}

TEST(Params, SharedModulesInitializeIdentically) {
  DetectorConfig y;
  y.branch_mode = BranchMode::kYoloOnly;
  Detector<float> yolo(y), dual(DetectorConfig{});
  std::map<std::string, Tensor<float>> dv;
  for (const auto& p : dual.parameters()) dv.emplace(p.name, p.var.value());
  for (const auto& p : yolo.parameters()) EXPECT_EQ(dv.at(p.name), p.var.value()) << p.name;
}

TEST(Params, LatencyIsPositive) {
  Detector<float> det(tiny_config());
  EXPECT_GT(measure_latency(det, 1, 3), 0.0);
  EXPECT_THROW(measure_latency(det, 0, 0), ConfigError);
}

// ---------------------------------------------------------------- preprocess

TEST(Preprocess, Scale01OfWhiteIsOne) {
  DetectorConfig cfg = tiny_config();
  cfg.input_norm = InputNorm::kScale01;
  auto t = preprocess<double>(ImageRecord::filled("w", 64, 64, 255, 255, 255), cfg);
  EXPECT_EQ(t.shape(), (Shape{1, 3, 64, 64}));
  for (double v : t.values()) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Preprocess, ZnormInverseRecoversScaledPixels) {
  auto scene = tiny_scene(0);
  DetectorConfig cfg = tiny_config();
  cfg.input_norm = InputNorm::kScale01;
  auto plain = preprocess<double>(scene.image, cfg);
  cfg.input_norm = InputNorm::kZnorm;
  auto z = preprocess<double>(scene.image, cfg);
  auto back = inverse_normalize(z, InputNorm::kZnorm);
  for (std::size_t i = 0; i < plain.numel(); ++i) EXPECT_NEAR(back[i], plain[i], 1e-6);
}

TEST(Preprocess, SquareInputAtModelSizeIsExact) {
  auto scene = tiny_scene(1);
  DetectorConfig cfg = tiny_config();
  cfg.input_norm = InputNorm::kScale01;
  auto t = preprocess<double>(scene.image, cfg);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 64; y += 7)
      for (int x = 0; x < 64; x += 5)
        EXPECT_DOUBLE_EQ(t[(static_cast<std::size_t>(c) * 64 + y) * 64 + x], scene.image.pixel(x, y)[c] / 255.0);
}

TEST(Preprocess, LetterboxPadsAlongShortSide) {
  auto lb = letterbox_for(900, 1200, 800);
  EXPECT_DOUBLE_EQ(lb.scale, 800.0 / 1200.0);
  EXPECT_EQ(lb.resized_width, 600);
  EXPECT_EQ(lb.resized_height, 800);
  EXPECT_EQ(lb.pad_x, 100);
  EXPECT_EQ(lb.pad_y, 0);
  DetectorConfig cfg;
  cfg.input_size = 32;
  cfg.input_norm = InputNorm::kScale01;
  auto t = preprocess<double>(ImageRecord::filled("r", 18, 24, 255, 255, 255), cfg);
  // 18x24 -> 24x32 centered with 4 px gray columns each side.
  EXPECT_DOUBLE_EQ(t[3], kLetterboxFill / 255.0);
  EXPECT_DOUBLE_EQ(t[4], 1.0);
  EXPECT_DOUBLE_EQ(t[27], 1.0);
  EXPECT_DOUBLE_EQ(t[28], kLetterboxFill / 255.0);
}

TEST(Preprocess, BoxMappingRoundTrips) {
  auto lb = letterbox_for(900, 1200, 800);
  GroundTruthBox b{0, 0.3, 0.6, 0.2, 0.1};
  auto in = box_to_input(b, lb);
  EXPECT_NEAR(in.cx, (100 + 0.3 * 600) / 800.0, 1e-12);
  Box back = box_from_input({in.x1(), in.y1(), in.x2(), in.y2()}, lb);
  EXPECT_NEAR(back.x1, b.x1(), 1e-12);
  EXPECT_NEAR(back.y2, b.y2(), 1e-12);
}

// ---------------------------------------------------------------- training

std::vector<LabeledImage> small_dataset(std::size_t n, int size = 64) {
  std::vector<LabeledImage> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(tiny_scene(i, size));
  return out;
}

TEST(Train, ZeroLearningRateKeepsLossConstant) {
  auto data = small_dataset(6);
  std::vector<std::string> splits(6, "train");
  Detector<double> det(tiny_config());
  TrainConfig tc;
  tc.epochs = 3;
  tc.lr = 0.0;
  tc.batch_size = 4;
  tc.flip = false;
  auto r = train_detector(det, data, splits, tc);
  ASSERT_EQ(r.history.size(), 3u);
  for (const auto& e : r.history) EXPECT_NEAR(e.total, r.history[0].total, 1e-12 * r.history[0].total);
}

TEST(Train, SingleImageOverfitsTenfold) {
  auto data = small_dataset(1, 128);
  std::vector<std::string> splits = {"train"};
  DetectorConfig cfg;
  cfg.use_align_loss = true;
  Detector<float> det(cfg);
  TrainConfig tc;
  tc.epochs = 200;
  tc.batch_size = 1;
  tc.warmup_epochs = 0;
  tc.final_lr_factor = 1.0;
  tc.flip = false;
  auto r = train_detector(det, data, splits, tc);
  ASSERT_EQ(r.history.size(), 200u);
  double best = r.history.front().total;
  for (const auto& e : r.history) best = std::min(best, e.total);
  EXPECT_LE(best, r.history.front().total / 10.0);
}

TEST(Train, FixedSeedReproducesHistory) {
  auto data = small_dataset(8);
  std::vector<std::string> splits = {"train", "train", "train", "train", "train", "val", "train", "val"};
  auto run = [&] {
    Detector<double> det(tiny_config());
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 3;
    tc.seed = 9;
    return train_detector(det, data, splits, tc);
  };
  auto a = run(), b = run();
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].total, b.history[i].total);
    EXPECT_EQ(a.history[i].val_loss, b.history[i].val_loss);
  }
  EXPECT_EQ(nn::encode_checkpoint(a.best), nn::encode_checkpoint(b.best));
}

TEST(Train, NonFiniteLossAbortsWithDump) {
  auto data = small_dataset(2);
  std::vector<std::string> splits(2, "train");
  Detector<double> det(tiny_config());
  det.parameters().front().var.mutable_value()[0] = NAN;
  auto dir = std::filesystem::temp_directory_path() / "weedet_nonfinite";
  std::filesystem::remove_all(dir);
  TrainConfig tc;
  tc.epochs = 1;
  EXPECT_THROW(train_detector(det, data, splits, tc, dir), TrainError);
  EXPECT_TRUE(std::filesystem::exists(dir / "nonfinite_dump.json"));
  std::filesystem::remove_all(dir);
}

TEST(Train, WritesArtifactsAndRestoresBest) {
  auto data = small_dataset(6);
  std::vector<std::string> splits = {"train", "train", "train", "train", "val", "val"};
  Detector<float> det(tiny_config());
  auto dir = std::filesystem::temp_directory_path() / "weedet_train_artifacts";
  std::filesystem::remove_all(dir);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 2;
  auto r = train_detector(det, data, splits, tc, dir);
  auto csv = read_text_file(dir / "loss.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,total,cls,box,align");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  auto loaded = load_detector<float>(dir / "best.ckpt");
  EXPECT_EQ(nn::encode_checkpoint(loaded.checkpoint()), nn::encode_checkpoint(r.best));
  EXPECT_EQ(nn::encode_checkpoint(det.checkpoint()), nn::encode_checkpoint(r.best));
  EXPECT_GE(r.best_epoch, 1);
  std::filesystem::remove_all(dir);
}

TEST(Train, ScheduleWarmsUpThenDecays) {
  TrainConfig tc;
  tc.epochs = 10;
  tc.lr = 0.1;
  tc.warmup_epochs = 2;
  tc.final_lr_factor = 0.01;
  EXPECT_DOUBLE_EQ(scheduled_lr(tc, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(scheduled_lr(tc, 1.0), 0.05);
  EXPECT_DOUBLE_EQ(scheduled_lr(tc, 2.0), 0.1);
  EXPECT_NEAR(scheduled_lr(tc, 10.0), 0.001, 1e-15);
  EXPECT_GT(scheduled_lr(tc, 5.0), scheduled_lr(tc, 6.0));
}

TEST(Train, ConfigValidation) {
  TrainConfig tc;
  tc.batch_size = 0;
  EXPECT_THROW(tc.validate_config(), ConfigError);
  EXPECT_THROW(train_config_from_json({{"epochs", "many"}}), ConfigError);
  EXPECT_EQ(train_config_from_json({{"epochs", 5}}).epochs, 5);
}

// ---------------------------------------------------------------- features

TEST(Features, EmbedderShapeMatchesEmbedDim) {
  auto det = std::make_shared<const Detector<float>>(DetectorConfig{});
  auto embed = vit_embedder(det);
  std::vector<ImageRecord> imgs;
  for (std::size_t i = 0; i < 10; ++i) imgs.push_back(synth_blob_image(SyntheticSceneConfig{}, i).image);
  auto res = embed_images(imgs, embed, 2);
  EXPECT_EQ(res.matrix.n, 10u);
  EXPECT_EQ(res.matrix.d, static_cast<std::size_t>(det->config().vit.embed_dim));
  DetectorConfig y;
  y.branch_mode = BranchMode::kYoloOnly;
  EXPECT_THROW(vit_embedder(std::make_shared<const Detector<float>>(y)), ConfigError);
}

// Every symmetry code moves the pixels and the box the same way.
TEST(Training, AugmentedBoxesFollowPixels) {
  const int S = 32;
  PreparedSample<double> s;
  s.pixels = Tensor<double>({3, S, S});
  s.boxes.push_back({0, 7.0 / 32, 14.0 / 32, 6.0 / 32, 12.0 / 32});
  for (int c = 0; c < 3; ++c)
    for (int y = 8; y < 20; ++y)
      for (int x = 4; x < 10; ++x) s.pixels.data()[(c * S + y) * S + x] = 1.0;
  for (int code = 0; code < 8; ++code) {
    auto [x, gts] = make_batch<double>({s}, {0}, {code});
    int x1 = S, y1 = S, x2 = -1, y2 = -1;
    for (int y = 0; y < S; ++y)
      for (int xx = 0; xx < S; ++xx)
        if (x.data()[y * S + xx] == 1.0) {
          x1 = std::min(x1, xx), y1 = std::min(y1, y);
          x2 = std::max(x2, xx + 1), y2 = std::max(y2, y + 1);
        }
    const auto& b = gts[0][0];
    EXPECT_NEAR(b.x1() * S, x1, 1e-9) << code;
    EXPECT_NEAR(b.y1() * S, y1, 1e-9) << code;
    EXPECT_NEAR(b.x2() * S, x2, 1e-9) << code;
    EXPECT_NEAR(b.y2() * S, y2, 1e-9) << code;
  }
}

}  // namespace
}  // namespace weedet
