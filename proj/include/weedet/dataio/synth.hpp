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
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "weedet/core/errors.hpp"
#include "weedet/core/parallel.hpp"
#include "weedet/core/rng.hpp"
#include "weedet/dataio/image.hpp"
#include "weedet/dataio/labels.hpp"
#include "weedet/dataio/manifest.hpp"

namespace weedet {

// Scene generator for desk-scale runs: crops are smooth green disks, weeds
// are green stars with a jagged perimeter drawn from the same color range.
struct SyntheticSceneConfig {
  int image_size = 128;
  int n_crops = 2;
  int n_weeds = 2;
  double crop_radius_min = 7.0;
  double crop_radius_max = 12.0;
  double weed_radius_min = 7.0;
  double weed_radius_max = 12.0;
  // Lobe depth of weed outlines as a fraction of the radius; near 0 weeds
  // look like crops.
  double weed_depth_min = 0.45;
  double weed_depth_span = 0.15;
  double background_noise_std = 8.0;
  std::uint64_t seed = 0;
  int placement_retries = 500;
  double min_gap = 2.0;
  std::string split = "75:5:25";

  void validate() const {
    if (image_size < 8) throw ConfigError("image_size must be >= 8");
    if (n_crops < 0 || n_weeds < 0) throw ConfigError("blob counts must be >= 0");
    if (!(crop_radius_min > 0) || !(weed_radius_min > 0) ||
        crop_radius_max < crop_radius_min || weed_radius_max < weed_radius_min)
      throw ConfigError("radius ranges must be positive, min <= max");
    if (2.0 * std::max(crop_radius_max, weed_radius_max) + 2.0 >= image_size)
      throw ConfigError("blob radius too large for image");
    if (background_noise_std < 0) throw ConfigError("noise std must be >= 0");
    if (!(weed_depth_min >= 0) || !(weed_depth_span >= 0) || !(weed_depth_min + weed_depth_span < 1.0))
      throw ConfigError("weed depth range must lie in [0, 1)");
  }
};

struct LabeledImage {
  ImageRecord image;
  std::vector<GroundTruthBox> boxes;
};

struct SyntheticDataset {
  std::vector<LabeledImage> samples;
  std::vector<std::string> splits;  // parallel to samples
};

namespace detail {

struct Blob {
  double cx, cy, radius;
  int class_id;
  int spikes;
  double phase;
  double depth;
};

// Radius of the blob outline in direction theta.
inline double blob_radius(const Blob& b, double theta) {
  if (b.class_id == 0) return b.radius;
  double wave = 0.5 + 0.5 * std::cos(b.spikes * theta + b.phase);
  return b.radius * (1.0 - b.depth * (1.0 - wave));
}

inline bool blob_contains(const Blob& b, double px, double py) {
  double dx = px - b.cx, dy = py - b.cy;
  double r2 = dx * dx + dy * dy;
  if (r2 > b.radius * b.radius) return false;
  if (b.class_id == 0) return true;
  double r = blob_radius(b, std::atan2(dy, dx));
  return r2 <= r * r;
}

inline std::uint8_t clamp_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace detail

// Renders one scene. Boxes are the tight bounds of each rendered mask.
inline LabeledImage synth_blob_image(const SyntheticSceneConfig& cfg, std::size_t index) {
  Rng rng = make_rng(cfg.seed, index);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int S = cfg.image_size;

  std::vector<detail::Blob> blobs;
  auto place = [&](int class_id, double rmin, double rmax) {
    for (int attempt = 0; attempt < cfg.placement_retries; ++attempt) {
      detail::Blob b{};
      b.class_id = class_id;
      b.radius = rmin + (rmax - rmin) * unit(rng);
      double lo = b.radius + 1.0, hi = S - b.radius - 1.0;
      b.cx = lo + (hi - lo) * unit(rng);
      b.cy = lo + (hi - lo) * unit(rng);
      b.spikes = 5 + static_cast<int>(unit(rng) * 3.0);
      b.phase = unit(rng) * 2.0 * std::numbers::pi;
      b.depth = cfg.weed_depth_min + cfg.weed_depth_span * unit(rng);
      bool clear = std::all_of(blobs.begin(), blobs.end(), [&](const detail::Blob& o) {
        return std::hypot(o.cx - b.cx, o.cy - b.cy) >= o.radius + b.radius + cfg.min_gap;
      });
      if (clear) {
        blobs.push_back(b);
        return;
      }
    }
    throw GenerationError("cannot place blob " + std::to_string(blobs.size()) + " in image " +
                          std::to_string(index) + " within retry budget");
  };
  // Interleave placement so neither class is systematically placed first.
  int crops_left = cfg.n_crops, weeds_left = cfg.n_weeds;
  while (crops_left + weeds_left > 0) {
    bool crop = weeds_left == 0 || (crops_left > 0 && unit(rng) < 0.5);
    if (crop) {
      place(0, cfg.crop_radius_min, cfg.crop_radius_max);
      --crops_left;
    } else {
      place(1, cfg.weed_radius_min, cfg.weed_radius_max);
      --weeds_left;
    }
  }

  LabeledImage out;
  out.image = ImageRecord::filled("synth_" + std::to_string(index), S, S, 0, 0, 0);
  out.image.source_tag = SourceTag::kSynthetic;
  std::normal_distribution<double> noise(0.0, cfg.background_noise_std);
  const double soil[3] = {122.0 + 10.0 * (unit(rng) - 0.5), 86.0 + 8.0 * (unit(rng) - 0.5),
                          58.0 + 8.0 * (unit(rng) - 0.5)};
  std::vector<double> leaf(blobs.size() * 3);
  for (std::size_t i = 0; i < blobs.size(); ++i) {
    leaf[i * 3] = 55.0 + 20.0 * unit(rng);
    leaf[i * 3 + 1] = 150.0 + 40.0 * unit(rng);
    leaf[i * 3 + 2] = 40.0 + 20.0 * unit(rng);
  }
  std::vector<int> min_x(blobs.size(), S), min_y(blobs.size(), S), max_x(blobs.size(), -1),
      max_y(blobs.size(), -1);
  for (int y = 0; y < S; ++y) {
    for (int x = 0; x < S; ++x) {
      const double* base = soil;
      double shade = 1.0;
      for (std::size_t i = 0; i < blobs.size(); ++i) {
        if (detail::blob_contains(blobs[i], x + 0.5, y + 0.5)) {
          base = &leaf[i * 3];
          double d = std::hypot(x + 0.5 - blobs[i].cx, y + 0.5 - blobs[i].cy) / blobs[i].radius;
          shade = 1.05 - 0.15 * d;
          min_x[i] = std::min(min_x[i], x);
          max_x[i] = std::max(max_x[i], x);
          min_y[i] = std::min(min_y[i], y);
          max_y[i] = std::max(max_y[i], y);
          break;
        }
      }
      std::uint8_t* px = out.image.pixel(x, y);
      for (int c = 0; c < 3; ++c) px[c] = detail::clamp_u8(base[c] * shade + noise(rng));
    }
  }
  for (std::size_t i = 0; i < blobs.size(); ++i) {
    if (max_x[i] < 0) continue;
    GroundTruthBox b;
    b.class_id = blobs[i].class_id;
    double x1 = static_cast<double>(min_x[i]) / S, x2 = static_cast<double>(max_x[i] + 1) / S;
    double y1 = static_cast<double>(min_y[i]) / S, y2 = static_cast<double>(max_y[i] + 1) / S;
    b.cx = (x1 + x2) / 2.0;
    b.cy = (y1 + y2) / 2.0;
    b.w = x2 - x1;
    b.h = y2 - y1;
    out.boxes.push_back(b);
  }
  return out;
}

inline SyntheticDataset synth_blob_dataset(const SyntheticSceneConfig& cfg, std::size_t n_images,
                                           int workers = 1) {
  cfg.validate();
  SyntheticDataset ds;
  ds.samples.resize(n_images);
  parallel_for(n_images, workers, [&](std::size_t i) { ds.samples[i] = synth_blob_image(cfg, i); });
  auto parts = assign_splits(n_images, parse_split(cfg.split), cfg.seed);
  ds.splits.reserve(n_images);
  for (auto p : parts) ds.splits.emplace_back(split_name(p));
  return ds;
}

// Writes images/<id>.png, labels/<id>.txt and manifest.json under dir.
inline DatasetManifest write_dataset(const SyntheticDataset& ds, const std::filesystem::path& dir,
                                     int workers = 1) {
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "labels");
  DatasetManifest m;
  m.base_dir = dir;
  m.entries.resize(ds.samples.size());
  parallel_for(ds.samples.size(), workers, [&](std::size_t i) {
    const auto& s = ds.samples[i];
    ManifestEntry e;
    e.id = s.image.id;
    e.image_path = "images/" + s.image.id + ".png";
    e.label_path = "labels/" + s.image.id + ".txt";
    e.source_tag = s.image.source_tag;
    e.split = i < ds.splits.size() ? ds.splits[i] : "";
    save_png(s.image, dir / e.image_path);
    write_text_file(format_labels(s.boxes), dir / e.label_path);
    m.entries[i] = std::move(e);
  });
  write_json_file(to_json(m), dir / "manifest.json");
  return m;
}

// Loads every labeled entry of a manifest (images + boxes).
inline std::vector<LabeledImage> load_labeled(const DatasetManifest& m, int class_count,
                                              int workers = 1) {
  std::vector<LabeledImage> out(m.entries.size());
  parallel_for(m.entries.size(), workers, [&](std::size_t i) {
    const auto& e = m.entries[i];
    out[i].image = load_image(m.resolve(e.image_path));
    out[i].image.id = e.id;
    out[i].image.source_tag = e.source_tag;
    if (e.labeled()) out[i].boxes = parse_labels(read_text_file(m.resolve(e.label_path)), class_count);
  });
  return out;
}

}  // namespace weedet
