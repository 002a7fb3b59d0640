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
#include <array>
#include <cmath>

#include "weedet/dataio/image.hpp"
#include "weedet/dataio/labels.hpp"
#include "weedet/eval/boxes.hpp"
#include "weedet/model/config.hpp"
#include "weedet/numerics/tensor.hpp"

namespace weedet {

inline constexpr std::array<double, 3> kZnormMean = {0.485, 0.456, 0.406};
inline constexpr std::array<double, 3> kZnormStd = {0.229, 0.224, 0.225};
inline constexpr double kLetterboxFill = 114.0;

// Placement of a source image inside the square model input.
struct Letterbox {
  int src_width = 0;
  int src_height = 0;
  int size = 0;
  double scale = 1.0;
  int resized_width = 0;
  int resized_height = 0;
  int pad_x = 0;
  int pad_y = 0;
};

inline Letterbox letterbox_for(int width, int height, int size) {
  if (width < 1 || height < 1 || size < 1) throw ConfigError("letterbox dimensions must be positive");
  Letterbox lb;
  lb.src_width = width;
  lb.src_height = height;
  lb.size = size;
  lb.scale = static_cast<double>(size) / std::max(width, height);
  lb.resized_width = std::clamp(static_cast<int>(std::lround(width * lb.scale)), 1, size);
  lb.resized_height = std::clamp(static_cast<int>(std::lround(height * lb.scale)), 1, size);
  lb.pad_x = (size - lb.resized_width) / 2;
  lb.pad_y = (size - lb.resized_height) / 2;
  return lb;
}

// Normalized source coordinates <-> normalized model-input coordinates.
inline GroundTruthBox box_to_input(const GroundTruthBox& b, const Letterbox& lb) {
  GroundTruthBox o = b;
  o.cx = (lb.pad_x + b.cx * lb.resized_width) / lb.size;
  o.cy = (lb.pad_y + b.cy * lb.resized_height) / lb.size;
  o.w = b.w * lb.resized_width / lb.size;
  o.h = b.h * lb.resized_height / lb.size;
  return o;
}

inline Box box_from_input(const Box& b, const Letterbox& lb) {
  auto fx = [&](double x) { return std::clamp((x * lb.size - lb.pad_x) / lb.resized_width, 0.0, 1.0); };
  auto fy = [&](double y) { return std::clamp((y * lb.size - lb.pad_y) / lb.resized_height, 0.0, 1.0); };
  return {fx(b.x1), fy(b.y1), fx(b.x2), fy(b.y2)};
}

inline double normalize_pixel(double v, int channel, InputNorm norm) {
  const double x = v / 255.0;
  return norm == InputNorm::kZnorm ? (x - kZnormMean[channel]) / kZnormStd[channel] : x;
}

inline double denormalize_pixel(double v, int channel, InputNorm norm) {
  return norm == InputNorm::kZnorm ? v * kZnormStd[channel] + kZnormMean[channel] : v;
}

// Bilinear letterbox resize (half-pixel centers, gray pad) followed by the
// configured normalization. Writes [3, S, S] into out.
template <typename T>
void preprocess_into(const ImageRecord& img, int size, InputNorm norm, T* out, Letterbox* info = nullptr) {
  const Letterbox lb = letterbox_for(img.width, img.height, size);
  if (info) *info = lb;
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  for (int c = 0; c < 3; ++c) std::fill(out + c * plane, out + (c + 1) * plane, static_cast<T>(normalize_pixel(kLetterboxFill, c, norm)));
  const double sx = static_cast<double>(img.width) / lb.resized_width;
  const double sy = static_cast<double>(img.height) / lb.resized_height;
  for (int y = 0; y < lb.resized_height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
    const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < lb.resized_width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
      const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      const std::size_t o = static_cast<std::size_t>(y + lb.pad_y) * size + (x + lb.pad_x);
      for (int c = 0; c < 3; ++c) {
        const double v = (1 - wy) * ((1 - wx) * img.pixel(x0, y0)[c] + wx * img.pixel(x1, y0)[c]) +
                         wy * ((1 - wx) * img.pixel(x0, y1)[c] + wx * img.pixel(x1, y1)[c]);
        out[c * plane + o] = static_cast<T>(normalize_pixel(v, c, norm));
      }
    }
  }
}

template <typename T>
nn::Tensor<T> preprocess(const ImageRecord& img, const DetectorConfig& cfg, Letterbox* info = nullptr) {
  nn::Tensor<T> t({1, 3, cfg.input_size, cfg.input_size});
  preprocess_into(img, cfg.input_size, cfg.input_norm, t.data(), info);
  return t;
}

// Undoes the normalization into [0, 1] pixel units.
template <typename T>
nn::Tensor<T> inverse_normalize(const nn::Tensor<T>& x, InputNorm norm) {
  if (x.rank() != 4 || x.dim(1) != 3) throw ShapeError("inverse_normalize expects [N, 3, H, W]");
  nn::Tensor<T> out = x;
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = static_cast<T>(denormalize_pixel(out[i], static_cast<int>((i / plane) % 3), norm));
  return out;
}

}  // namespace weedet
