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
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "weedet/core/errors.hpp"
#include "weedet/core/parallel.hpp"
#include "weedet/dataio/image.hpp"

namespace weedet {

// n x d row-major feature matrix with a parallel id list.
struct EmbeddingMatrix {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> rows;
  std::vector<std::string> image_ids;

  const double* row(std::size_t i) const { return rows.data() + i * d; }
  double* row(std::size_t i) { return rows.data() + i * d; }
};

using Embedder = std::function<std::vector<double>(const ImageRecord&)>;

struct EmbeddingResult {
  EmbeddingMatrix matrix;
  std::vector<std::size_t> source_index;  // input position of every row
  std::vector<std::string> excluded;      // ids the embedder failed on
  std::vector<std::string> messages;
};

// L2-normalizes raw vectors into a matrix. Vectors that are empty, have the
// wrong dimension, are non-finite, are all zero, or come with an error
// message are excluded.
inline EmbeddingResult assemble_embeddings(const std::vector<std::string>& ids,
                                           std::vector<std::vector<double>> vecs,
                                           const std::vector<std::string>& errors) {
  EmbeddingResult out;
  std::size_t d = 0;
  for (std::size_t i = 0; i < vecs.size(); ++i)
    if (!vecs[i].empty() && (errors.empty() || errors[i].empty())) {
      d = vecs[i].size();
      break;
    }
  out.matrix.d = d;
  for (std::size_t i = 0; i < vecs.size(); ++i) {
    auto& v = vecs[i];
    bool ok = !v.empty() && v.size() == d && (errors.empty() || errors[i].empty());
    double norm = 0.0;
    for (double x : v) {
      ok = ok && std::isfinite(x);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    if (!ok || !(norm > 0.0)) {
      out.excluded.push_back(ids[i]);
      bool has_error = !errors.empty() && !errors[i].empty();
      out.messages.push_back(ids[i] + ": " + (has_error ? errors[i] : std::string("invalid embedding")));
      continue;
    }
    for (double x : v) out.matrix.rows.push_back(x / norm);
    out.matrix.image_ids.push_back(ids[i]);
    out.source_index.push_back(i);
    ++out.matrix.n;
  }
  return out;
}

// One L2-normalized row per image, in input order. Images whose embedding
// throws or is invalid are excluded and reported.
inline EmbeddingResult embed_images(const std::vector<ImageRecord>& images, const Embedder& embedder,
                                    int workers = 1) {
  std::vector<std::vector<double>> vecs(images.size());
  std::vector<std::string> errors(images.size());
  std::vector<std::string> ids(images.size());
  parallel_for(images.size(), workers, [&](std::size_t i) {
    ids[i] = images[i].id;
    try {
      vecs[i] = embedder(images[i]);
    } catch (const std::exception& e) {
      vecs[i].clear();
      errors[i] = e.what();
      if (errors[i].empty()) errors[i] = "embedder failed";
    }
  });
  return assemble_embeddings(ids, std::move(vecs), errors);
}

// 96-dim fallback: 16-bin histograms of R, G and B (48) plus a 12 x 4
// orientation/magnitude histogram of luminance gradients (48).
inline std::vector<double> histogram_embedding(const ImageRecord& img) {
  std::vector<double> f(96, 0.0);
  const std::size_t n = img.pixel_count();
  if (n == 0) throw FormatError("empty image");
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* p = img.pixels.data() + i * 3;
    for (int c = 0; c < 3; ++c) f[c * 16 + p[c] / 16] += 1.0 / static_cast<double>(n);
  }
  auto lum = [&](int x, int y) {
    const std::uint8_t* p = img.pixel(x, y);
    return 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
  };
  const double mag_edges[3] = {8.0, 24.0, 64.0};
  std::size_t count = 0;
  for (int y = 1; y + 1 < img.height; ++y) {
    for (int x = 1; x + 1 < img.width; ++x) {
      double gx = lum(x + 1, y) - lum(x - 1, y);
      double gy = lum(x, y + 1) - lum(x, y - 1);
      double mag = std::hypot(gx, gy);
      double ang = std::atan2(gy, gx);
      if (ang < 0) ang += std::numbers::pi;
      int ob = std::min(11, static_cast<int>(ang / std::numbers::pi * 12.0));
      int mb = 0;
      while (mb < 3 && mag >= mag_edges[mb]) ++mb;
      f[48 + ob * 4 + mb] += 1.0;
      ++count;
    }
  }
  if (count > 0)
    for (int k = 48; k < 96; ++k) f[k] /= static_cast<double>(count);
  return f;
}

}  // namespace weedet
