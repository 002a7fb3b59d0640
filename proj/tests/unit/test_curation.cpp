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

#include <algorithm>
#include <numeric>
#include <set>

#include "weedet/curation/embed.hpp"
#include "weedet/curation/kmeans.hpp"
#include "weedet/curation/pipeline.hpp"
#include "weedet/curation/sampling.hpp"
#include "weedet/curation/tiling.hpp"
#include "weedet/curation/vegetation.hpp"
#include "weedet/dataio/synth.hpp"

namespace weedet {
namespace {

EmbeddingMatrix random_embeddings(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<std::string> ids(n);
  std::vector<std::vector<double>> vecs(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i) {
    ids[i] = "img" + std::to_string(i);
    for (auto& v : vecs[i]) v = g(rng);
  }
  return assemble_embeddings(ids, vecs, {}).matrix;
}

EmbeddingMatrix raw_matrix(const std::vector<std::vector<double>>& pts) {
  EmbeddingMatrix m;
  m.n = pts.size();
  m.d = pts.empty() ? 0 : pts[0].size();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    m.rows.insert(m.rows.end(), pts[i].begin(), pts[i].end());
    m.image_ids.push_back("p" + std::to_string(i));
  }
  return m;
}

// --- tiling ---------------------------------------------------------------

// Independent enumeration: step by stride while the tile fits, then snap.
std::vector<int> enumerate_offsets(int extent, int tile, int stride) {
  if (extent <= tile) return {0};
  std::vector<int> out;
  int x = 0;
  for (; x + tile < extent; x += stride) out.push_back(x);
  out.push_back(extent - tile);
  return out;
}

TEST(TileImage, ExactFitGivesOneIdenticalTile) {
  ImageRecord img = ImageRecord::filled("a", 518, 518, 1, 2, 3);
  auto tiles = tile_image(img);
  ASSERT_EQ(tiles.size(), 1u);
  EXPECT_EQ(tiles[0].pixels, img.pixels);
}

TEST(TileImage, WideImageAtDefaults) {
  ImageRecord img = ImageRecord::filled("w", 1036, 518, 1, 2, 3);
  auto tiles = tile_image(img);
  ASSERT_EQ(tiles.size(), 3u);
  EXPECT_EQ(tiles[0].provenance.offset_x, 0);
  EXPECT_EQ(tiles[1].provenance.offset_x, 414);
  EXPECT_EQ(tiles[2].provenance.offset_x, 518);
}

TEST(TileOffsets, MatchEnumerationAndCountLaw) {
  for (int tile : {1, 7, 64, 518})
    for (double ov : {0.0, 0.2, 0.5, 0.9})
      for (int extent = 1; extent < 1600; extent += 13) {
        TileSpec spec{tile, ov};
        int stride = spec.stride();
        if (stride < 1) continue;
        auto got = tile_offsets(extent, spec);
        EXPECT_EQ(got, enumerate_offsets(extent, tile, stride));
        std::size_t expect = extent <= tile ? 1 : static_cast<std::size_t>((extent - tile + stride - 1) / stride + 1);
        EXPECT_EQ(got.size(), expect);
      }
}

TEST(TileImage, TilesCoverImageAndOverlapByFixedAmount) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    int W = 50 + static_cast<int>(rng() % 300), H = 50 + static_cast<int>(rng() % 300);
    TileSpec spec{64, 0.2};
    ImageRecord img = ImageRecord::filled("c", W, H, 0, 0, 0);
    auto tiles = tile_image(img, spec);
    std::vector<int> cover(static_cast<std::size_t>(W) * H, 0);
    for (const auto& t : tiles) {
      EXPECT_EQ(t.width, std::min(64, W));
      EXPECT_EQ(t.height, std::min(64, H));
      for (int y = 0; y < t.height; ++y)
        for (int x = 0; x < t.width; ++x)
          ++cover[static_cast<std::size_t>(y + t.provenance.offset_y) * W + x + t.provenance.offset_x];
    }
    EXPECT_TRUE(std::all_of(cover.begin(), cover.end(), [](int c) { return c >= 1; }));
    auto xs = tile_offsets(W, spec);
    for (std::size_t i = 1; i + 1 < xs.size(); ++i) EXPECT_EQ(xs[i - 1] + 64 - xs[i], 64 - spec.stride());
  }
  EXPECT_EQ(TileSpec{}.tile_size - TileSpec{}.stride(), 104);
}

TEST(TileImage, SmallImageIsOneWholeTile) {
  ImageRecord img = ImageRecord::filled("s", 100, 40, 9, 9, 9);
  auto tiles = tile_image(img);
  ASSERT_EQ(tiles.size(), 1u);
  EXPECT_EQ(tiles[0].width, 100);
  EXPECT_EQ(tiles[0].height, 40);
}

// --- vegetation -------------------------------------------------------------

ImageRecord half_green(int w, int h, int green_cols) {
  ImageRecord img = ImageRecord::filled("h", w, h, 120, 85, 60);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < green_cols; ++x) {
      auto* p = img.pixel(x, y);
      p[0] = 40;
      p[1] = 180;
      p[2] = 40;
    }
  return img;
}

TEST(GreenRatio, SaturatedAndGray) {
  EXPECT_EQ(green_ratio(ImageRecord::filled("g", 3, 3, 0, 255, 0)), 1.0);
  EXPECT_EQ(green_ratio(ImageRecord::filled("g", 3, 3, 128, 128, 128)), 0.0);
}

TEST(GreenRatio, ConstructedHalfGreenRaster) {
  ImageRecord img = half_green(40, 30, 20);
  EXPECT_NEAR(green_ratio(img), 0.5, 1.0 / (40 * 30));
}

TEST(GreenRatio, ThresholdIsStrict) {
  // 2G - R - B = 20 exactly is not green; 21 is.
  EXPECT_EQ(green_ratio(ImageRecord::filled("t", 1, 1, 90, 110, 110 - 0)), 0.0);
  EXPECT_EQ(green_ratio(ImageRecord::filled("t", 1, 1, 100, 110, 100)), 0.0);
  EXPECT_EQ(green_ratio(ImageRecord::filled("t", 1, 1, 100, 111, 101)), 1.0);
  // Dominance: G must exceed both R and B.
  EXPECT_EQ(green_ratio(ImageRecord::filled("t", 1, 1, 200, 200, 0)), 0.0);
}

TEST(FilterVegetation, ThresholdsAndIdempotence) {
  std::vector<ImageRecord> tiles;
  std::vector<double> ratio;
  for (int cols = 0; cols <= 10; ++cols) {
    tiles.push_back(half_green(10, 10, cols));
    tiles.back().id = "t" + std::to_string(cols);
    ratio.push_back(cols / 10.0);
  }
  auto kept = filter_vegetation(tiles, 0.2);
  std::vector<std::string> expect;
  for (std::size_t i = 0; i < tiles.size(); ++i)
    if (green_ratio(tiles[i]) >= 0.2) expect.push_back(tiles[i].id);
  std::vector<std::string> got;
  for (auto& t : kept) got.push_back(t.id);
  EXPECT_EQ(got, expect);
  EXPECT_EQ(got.size(), 9u);  // ratios 0.2 .. 1.0
  auto twice = filter_vegetation(kept, 0.2);
  EXPECT_EQ(twice.size(), kept.size());
  EXPECT_EQ(filter_vegetation(tiles, 0.0).size(), tiles.size());
  std::vector<ImageRecord> gray(3, ImageRecord::filled("g", 4, 4, 90, 90, 90));
  EXPECT_TRUE(filter_vegetation(gray).empty());
}

// --- embedding --------------------------------------------------------------

TEST(EmbedImages, RowsAreUnitNormAndDeterministic) {
  SyntheticSceneConfig cfg;
  cfg.image_size = 64;
  cfg.crop_radius_max = cfg.weed_radius_max = 9;
  cfg.crop_radius_min = cfg.weed_radius_min = 5;
  auto ds = synth_blob_dataset(cfg, 5);
  std::vector<ImageRecord> imgs;
  for (auto& s : ds.samples) imgs.push_back(s.image);
  imgs.push_back(imgs[0]);
  auto res = embed_images(imgs, histogram_embedding, 2);
  ASSERT_EQ(res.matrix.n, 6u);
  EXPECT_EQ(res.matrix.d, 96u);
  for (std::size_t i = 0; i < res.matrix.n; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < res.matrix.d; ++j) s += res.matrix.row(i)[j] * res.matrix.row(i)[j];
    EXPECT_NEAR(std::sqrt(s), 1.0, 1e-6);
  }
  EXPECT_TRUE(std::equal(res.matrix.row(0), res.matrix.row(0) + 96, res.matrix.row(5)));
}

TEST(EmbedImages, FailingImagesAreExcluded) {
  std::vector<ImageRecord> imgs(4, ImageRecord::filled("x", 2, 2, 1, 2, 3));
  for (std::size_t i = 0; i < 4; ++i) imgs[i].id = "x" + std::to_string(i);
  Embedder e = [](const ImageRecord& img) -> std::vector<double> {
    if (img.id == "x1") throw std::runtime_error("boom");
    if (img.id == "x2") return {std::nan(""), 1.0};
    return {1.0, 1.0};
  };
  auto res = embed_images(imgs, e, 1);
  EXPECT_EQ(res.matrix.n, 2u);
  EXPECT_EQ(res.matrix.image_ids, (std::vector<std::string>{"x0", "x3"}));
  EXPECT_EQ(res.excluded.size(), 2u);
}

// --- k-means ---------------------------------------------------------------

double sse(const EmbeddingMatrix& m, const std::vector<int>& assign) {
  int k = *std::max_element(assign.begin(), assign.end()) + 1;
  double total = 0;
  for (int c = 0; c < k; ++c) {
    std::vector<double> mean(m.d, 0.0);
    int cnt = 0;
    for (std::size_t i = 0; i < m.n; ++i)
      if (assign[i] == c) {
        ++cnt;
        for (std::size_t j = 0; j < m.d; ++j) mean[j] += m.row(i)[j];
      }
    if (cnt == 0) return std::numeric_limits<double>::infinity();
    for (auto& v : mean) v /= cnt;
    for (std::size_t i = 0; i < m.n; ++i)
      if (assign[i] == c)
        for (std::size_t j = 0; j < m.d; ++j) total += (m.row(i)[j] - mean[j]) * (m.row(i)[j] - mean[j]);
  }
  return total;
}

// Exhaustive minimum within-cluster SSE over every assignment into k groups.
double brute_force_min_sse(const EmbeddingMatrix& m, int k) {
  std::vector<int> a(m.n, 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    best = std::min(best, sse(m, a));
    std::size_t i = 0;
    while (i < m.n && ++a[i] == k) a[i++] = 0;
    if (i == m.n) break;
  }
  return best;
}

TEST(HierarchicalKMeans, SeparatedPointsBecomeSingletons) {
  auto m = raw_matrix({{0, 0}, {0, 10}, {10, 0}, {10.5, 10}});
  auto pyr = hierarchical_kmeans(m, {2, 4}, 3, 50);
  ASSERT_EQ(pyr.levels.size(), 2u);
  std::set<int> leaves(pyr.levels[1].assignment.begin(), pyr.levels[1].assignment.end());
  EXPECT_EQ(leaves.size(), 4u);
  EXPECT_NEAR(sse(m, pyr.levels[1].assignment), brute_force_min_sse(m, 4), 1e-12);
  // Level 0 is a Lloyd fixed point: every point sits with its nearest centroid.
  const auto& top = pyr.levels[0];
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < top.clusters(2); ++c) {
      double dx = m.row(i)[0] - top.centroids[c * 2], dy = m.row(i)[1] - top.centroids[c * 2 + 1];
      EXPECT_LE(top.distance[i], std::sqrt(dx * dx + dy * dy) + 1e-12);
    }
  for (std::size_t i = 0; i < 4; ++i)
    EXPECT_EQ(pyr.levels[1].parent[static_cast<std::size_t>(pyr.levels[1].assignment[i])],
              pyr.levels[0].assignment[i]);
}

TEST(KMeans, ReachesBruteForceOptimumOnSmallClusteredSets) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    std::normal_distribution<double> g(0.0, 0.3);
    std::vector<std::vector<double>> pts;
    for (int c = 0; c < 3; ++c)
      for (int j = 0; j < 3; ++j) pts.push_back({5.0 * c + g(rng), 3.0 * (c % 2) + g(rng)});
    auto m = raw_matrix(pts);
    std::vector<std::size_t> all(m.n);
    std::iota(all.begin(), all.end(), 0);
    auto r = kmeans(m, all, 3, seed, 50);
    EXPECT_NEAR(sse(m, r.assignment), brute_force_min_sse(m, 3), 1e-9) << "seed " << seed;
  }
}

TEST(KMeans, SingleClusterCentroidIsMean) {
  auto m = random_embeddings(30, 5, 2);
  auto pyr = hierarchical_kmeans(m, {1}, 0, 10);
  ASSERT_EQ(pyr.levels[0].clusters(m.d), 1u);
  for (std::size_t j = 0; j < m.d; ++j) {
    double mean = 0;
    for (std::size_t i = 0; i < m.n; ++i) mean += m.row(i)[j];
    EXPECT_NEAR(pyr.levels[0].centroids[j], mean / 30.0, 1e-12);
  }
}

TEST(KMeans, SseIsNonIncreasingAcrossIterations) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto m = random_embeddings(200, 8, seed);
    std::vector<std::size_t> all(m.n);
    std::iota(all.begin(), all.end(), 0);
    auto r = kmeans(m, all, 7, seed, 50);
    for (std::size_t i = 1; i < r.sse_history.size(); ++i)
      EXPECT_LE(r.sse_history[i], r.sse_history[i - 1] * (1 + 1e-12) + 1e-12) << "seed " << seed;
  }
}

TEST(KMeans, MoreClustersThanPointsDropsEmpty) {
  auto m = random_embeddings(5, 3, 4);
  std::vector<std::size_t> all{0, 1, 2, 3, 4};
  auto r = kmeans(m, all, 9, 1, 20);
  EXPECT_LE(r.clusters(), 5u);
  for (int a : r.assignment) EXPECT_LT(static_cast<std::size_t>(a), r.clusters());
}

TEST(HierarchicalKMeans, NestingHoldsOnRandomEmbeddings) {
  auto m = random_embeddings(500, 16, 99);
  auto pyr = hierarchical_kmeans(m, {4, 8, 16}, 5, 50, 2);
  ASSERT_EQ(pyr.levels.size(), 3u);
  for (std::size_t L = 1; L < 3; ++L) {
    const auto& lvl = pyr.levels[L];
    const auto& up = pyr.levels[L - 1];
    for (std::size_t i = 0; i < m.n; ++i) {
      ASSERT_GE(lvl.assignment[i], 0);
      EXPECT_EQ(lvl.parent[static_cast<std::size_t>(lvl.assignment[i])], up.assignment[i]);
    }
    EXPECT_GT(lvl.clusters(m.d), up.clusters(m.d));
  }
}

TEST(HierarchicalKMeans, DeterministicAcrossWorkers) {
  auto m = random_embeddings(300, 8, 3);
  auto a = hierarchical_kmeans(m, {3, 9}, 17, 30, 1);
  auto b = hierarchical_kmeans(m, {3, 9}, 17, 30, 4);
  for (std::size_t L = 0; L < 2; ++L) {
    EXPECT_EQ(a.levels[L].assignment, b.levels[L].assignment);
    EXPECT_EQ(a.levels[L].centroids, b.levels[L].centroids);
  }
}

TEST(HierarchicalKMeans, InvalidInputs) {
  EmbeddingMatrix empty;
  EXPECT_THROW(hierarchical_kmeans(empty, {2}, 0, 5), ValidationError);
  auto m = random_embeddings(10, 2, 1);
  EXPECT_THROW(hierarchical_kmeans(m, {0}, 0, 5), ConfigError);
  EXPECT_THROW(hierarchical_kmeans(m, {4, 4}, 0, 5), ConfigError);
}

TEST(ChildBudgets, ProportionalWithFloorOfOne) {
  EXPECT_EQ(child_budgets({90, 10}, 10), (std::vector<int>{9, 1}));
  EXPECT_EQ(child_budgets({1000, 1, 0}, 4), (std::vector<int>{4, 1, 0}));
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    std::vector<std::size_t> sizes(1 + rng() % 8);
    for (auto& s : sizes) s = rng() % 50;
    int budget = 1 + static_cast<int>(rng() % 64);
    auto b = child_budgets(sizes, budget);
    int total = std::accumulate(b.begin(), b.end(), 0);
    std::size_t nonempty = std::count_if(sizes.begin(), sizes.end(), [](auto s) { return s > 0; });
    if (std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}) == 0) continue;
    EXPECT_LE(total, budget + static_cast<int>(nonempty));
    EXPECT_GE(total, budget);
    for (std::size_t p = 0; p < sizes.size(); ++p) EXPECT_EQ(sizes[p] > 0, b[p] > 0);
  }
}

// --- sampling ---------------------------------------------------------------

ClusterPyramid two_cluster_pyramid(std::size_t a, std::size_t b) {
  ClusterPyramid pyr;
  pyr.d = 1;
  PyramidLevel lvl;
  lvl.centroids = {0.0, 100.0};
  for (std::size_t i = 0; i < a + b; ++i) {
    pyr.image_ids.push_back("i" + std::to_string(i));
    lvl.assignment.push_back(i < a ? 0 : 1);
    lvl.distance.push_back(static_cast<double>(i % 17));
  }
  pyr.levels.push_back(lvl);
  return pyr;
}

TEST(Sampling, FullFractionReturnsEverything) {
  auto pyr = two_cluster_pyramid(30, 20);
  EXPECT_EQ(sample_from_pyramid(pyr, 1.0, 0).size(), 50u);
}

TEST(Sampling, CardinalityIsRoundedFraction) {
  auto pyr = two_cluster_pyramid(60, 40);
  EXPECT_EQ(sample_from_pyramid(pyr, 0.1, 0).size(), 10u);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto m = random_embeddings(50 + seed * 7, 4, seed);
    auto p = hierarchical_kmeans(m, {3, 11}, seed, 20);
    for (double f : {0.05, 0.1, 0.33, 0.5, 0.97}) {
      auto ids = sample_from_pyramid(p, f, seed);
      EXPECT_EQ(ids.size(), static_cast<std::size_t>(std::llround(f * static_cast<double>(m.n))));
      EXPECT_EQ(std::set<std::string>(ids.begin(), ids.end()).size(), ids.size());
    }
  }
}

// Quota oracle: ceil(0.1 * 90) + ceil(0.1 * 10) = 10 = round(0.1 * 100),
// so no trim happens and both clusters contribute.
TEST(Sampling, SmallClusterIsRepresented) {
  auto pyr = two_cluster_pyramid(90, 10);
  auto idx = sample_indices(pyr, 0.1, 0);
  ASSERT_EQ(idx.size(), 10u);
  std::size_t from_small = std::count_if(idx.begin(), idx.end(), [](std::size_t i) { return i >= 90; });
  EXPECT_EQ(from_small, 1u);
}

TEST(Sampling, EveryLeafRepresentedWhenTargetAllows) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto m = random_embeddings(120, 4, seed + 50);
    auto p = hierarchical_kmeans(m, {2, 6}, seed, 20);
    const auto& leaf = p.levels.back();
    std::size_t leaves = leaf.clusters(p.d);
    double f = static_cast<double>(leaves + seed % 5) / 120.0;
    auto idx = sample_indices(p, f, seed);
    std::set<int> hit;
    for (auto i : idx) hit.insert(leaf.assignment[i]);
    EXPECT_EQ(hit.size(), leaves) << "seed " << seed;
  }
}

TEST(Sampling, InvalidFractionAndEmptyPyramid) {
  auto pyr = two_cluster_pyramid(5, 5);
  EXPECT_THROW(sample_indices(pyr, 0.0, 0), ConfigError);
  EXPECT_THROW(sample_indices(pyr, 1.5, 0), ConfigError);
  EXPECT_TRUE(sample_from_pyramid(ClusterPyramid{}, 0.5, 0).empty());
}

// --- pipeline ---------------------------------------------------------------

std::vector<SourceItem> synthetic_sources(std::size_t n, int size, bool labeled, std::uint64_t seed) {
  SyntheticSceneConfig cfg;
  cfg.image_size = size;
  cfg.seed = seed;
  cfg.n_crops = 6;
  cfg.n_weeds = 6;
  auto ds = std::make_shared<SyntheticDataset>(synth_blob_dataset(cfg, n));
  std::vector<SourceItem> out;
  for (std::size_t i = 0; i < n; ++i) {
    SourceItem s;
    s.id = ds->samples[i].image.id;
    s.load = [ds, i] { return ds->samples[i].image; };
    if (labeled) s.labels = [ds, i] { return ds->samples[i].boxes; };
    out.push_back(std::move(s));
  }
  return out;
}

TEST(RunCuration, LabeledOnlyBypassesClustering) {
  auto src = synthetic_sources(4, 128, true, 1);
  CurationConfig cfg;
  auto res = run_curation(cfg, src, histogram_embedding);
  std::size_t boxes = 0;
  for (const auto& s : src) boxes += s.labels().size();
  EXPECT_EQ(res.items.size(), boxes);
  EXPECT_EQ(res.manifest.counts.clustered, 0u);
  EXPECT_EQ(res.manifest.counts.sampled, 0u);
  EXPECT_EQ(res.manifest.counts.tiled, 0u);
}

TEST(RunCuration, StageCountsAreConsistentAndDeterministic) {
  auto src = synthetic_sources(30, 200, false, 2);
  CurationConfig cfg;
  cfg.level_ks = {2, 4};
  cfg.sample_fraction = 0.2;
  cfg.tile_size = 64;
  cfg.min_green = 0.2;
  auto a = run_curation(cfg, src, histogram_embedding, 1);
  auto b = run_curation(cfg, src, histogram_embedding, 4);
  const auto& c = a.manifest.counts;
  EXPECT_EQ(c.sampled, 6u);
  EXPECT_EQ(c.tiled, c.sampled * 16);  // 200 px at tile 64, stride 51: 4 per axis
  EXPECT_EQ(c.retained + c.filtered, c.tiled);
  EXPECT_LE(c.retained, c.tiled);
  EXPECT_EQ(to_json(a.manifest, a.items).dump(), to_json(b.manifest, b.items).dump());
  ASSERT_EQ(a.items.size(), b.items.size());
  for (std::size_t i = 0; i < a.items.size(); ++i) EXPECT_EQ(a.items[i].image.pixels, b.items[i].image.pixels);
}

TEST(RunCuration, StageErrorCarriesPartialManifest) {
  auto src = synthetic_sources(3, 128, false, 3);
  CurationConfig cfg;
  cfg.level_ks = {2, 1};
  try {
    run_curation(cfg, src, histogram_embedding);
    FAIL() << "expected CurationError";
  } catch (const CurationError& e) {
    EXPECT_EQ(e.partial_manifest().at("failed_stage"), "cluster");
    EXPECT_EQ(e.partial_manifest().at("counts").at("ingested"), 3);
  }
}

}  // namespace
}  // namespace weedet
