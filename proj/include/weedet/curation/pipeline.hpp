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

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "weedet/core/errors.hpp"
#include "weedet/core/parallel.hpp"
#include "weedet/curation/embed.hpp"
#include "weedet/curation/kmeans.hpp"
#include "weedet/curation/sampling.hpp"
#include "weedet/curation/tiling.hpp"
#include "weedet/curation/vegetation.hpp"
#include "weedet/dataio/crops.hpp"
#include "weedet/dataio/manifest.hpp"

namespace weedet {

struct CurationConfig {
  std::vector<int> level_ks = {512, 2048, 8192};
  double sample_fraction = 0.1;
  int tile_size = 518;
  double overlap = 0.2;
  double min_green = 0.2;
  int excess_green_threshold = 20;
  std::uint64_t seed = 0;
  int max_iters = 50;
  int class_count = 2;

  TileSpec tile_spec() const { return {tile_size, overlap}; }
};

inline nlohmann::json to_json(const CurationConfig& c) {
  return {{"level_ks", c.level_ks},       {"sample_fraction", c.sample_fraction},
          {"tile_size", c.tile_size},     {"overlap", c.overlap},
          {"min_green", c.min_green},     {"excess_green_threshold", c.excess_green_threshold},
          {"seed", c.seed},               {"max_iters", c.max_iters},
          {"class_count", c.class_count}};
}

inline CurationConfig curation_config_from_json(const nlohmann::json& j) {
  CurationConfig c;
  try {
    c.level_ks = j.value("level_ks", c.level_ks);
    c.sample_fraction = j.value("sample_fraction", c.sample_fraction);
    c.tile_size = j.value("tile_size", c.tile_size);
    c.overlap = j.value("overlap", c.overlap);
    c.min_green = j.value("min_green", c.min_green);
    c.excess_green_threshold = j.value("excess_green_threshold", c.excess_green_threshold);
    c.seed = j.value("seed", c.seed);
    c.max_iters = j.value("max_iters", c.max_iters);
    c.class_count = j.value("class_count", c.class_count);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("curation config: ") + e.what());
  }
  return c;
}

// One source image. Pixels are loaded on demand so large corpora are never
// resident all at once.
struct SourceItem {
  std::string id;
  SourceTag source_tag = SourceTag::kSynthetic;
  std::function<ImageRecord()> load;
  std::function<std::vector<GroundTruthBox>()> labels;  // empty => unlabeled
};

inline std::vector<SourceItem> sources_from_manifests(const std::vector<DatasetManifest>& manifests,
                                                      int class_count) {
  std::vector<SourceItem> items;
  for (const auto& m : manifests) {
    for (const auto& e : m.entries) {
      SourceItem s;
      s.id = e.id;
      s.source_tag = e.source_tag;
      auto image_path = m.resolve(e.image_path);
      s.load = [image_path, id = e.id, tag = e.source_tag] {
        ImageRecord img = load_image(image_path);
        img.id = id;
        img.source_tag = tag;
        return img;
      };
      if (e.labeled()) {
        auto label_path = m.resolve(e.label_path);
        s.labels = [label_path, class_count] {
          return parse_labels(read_text_file(label_path), class_count);
        };
      }
      items.push_back(std::move(s));
    }
  }
  return items;
}

struct StageCounts {
  std::size_t ingested = 0;
  std::size_t labeled = 0;
  std::size_t clustered = 0;
  std::size_t sampled = 0;
  std::size_t tiled = 0;
  std::size_t filtered = 0;  // tiles rejected by the vegetation filter
  std::size_t retained = 0;
  std::size_t bbox_crops = 0;
  std::size_t bbox_skipped = 0;
  std::size_t embed_excluded = 0;
  std::size_t output = 0;
};

struct CuratedItem {
  ImageRecord image;
  double green_ratio = 0.0;  // tiles only
};

struct CurationManifest {
  CurationConfig config;
  StageCounts counts;
  std::vector<std::size_t> level_clusters;
  std::vector<std::string> sampled_ids;
  std::vector<std::string> messages;
  std::string failed_stage;  // set on abort
};

struct CurationResult {
  std::vector<CuratedItem> items;
  CurationManifest manifest;
};

inline nlohmann::json to_json(const CurationManifest& m, const std::vector<CuratedItem>& items) {
  const auto& c = m.counts;
  nlohmann::json outputs = nlohmann::json::array();
  for (const auto& it : items) {
    const auto& p = it.image.provenance;
    nlohmann::json o = {{"id", it.image.id},
                        {"stage", p.stage},
                        {"parent_id", p.parent_id},
                        {"source_tag", std::string(to_string(it.image.source_tag))},
                        {"offset_x", p.offset_x},
                        {"offset_y", p.offset_y},
                        {"width", it.image.width},
                        {"height", it.image.height}};
    if (p.stage == "bbox_crop") o["class_id"] = p.class_id;
    if (p.stage == "tile") o["green_ratio"] = it.green_ratio;
    outputs.push_back(std::move(o));
  }
  nlohmann::json doc = {{"parameters", to_json(m.config)},
                        {"counts",
                         {{"ingested", c.ingested},
                          {"labeled", c.labeled},
                          {"clustered", c.clustered},
                          {"sampled", c.sampled},
                          {"tiled", c.tiled},
                          {"filtered", c.filtered},
                          {"retained", c.retained},
                          {"bbox_crops", c.bbox_crops},
                          {"bbox_skipped", c.bbox_skipped},
                          {"embed_excluded", c.embed_excluded},
                          {"output", c.output}}},
                        {"level_clusters", m.level_clusters},
                        {"sampled_ids", m.sampled_ids},
                        {"messages", m.messages},
                        {"outputs", outputs}};
  if (!m.failed_stage.empty()) doc["failed_stage"] = m.failed_stage;
  return doc;
}

class CurationError : public Error {
 public:
  CurationError(const std::string& what, nlohmann::json partial)
      : Error(what), partial_(std::move(partial)) {}
  const nlohmann::json& partial_manifest() const { return partial_; }

 private:
  nlohmann::json partial_;
};

// embed -> cluster -> sample -> tile -> filter for unlabeled sources;
// labeled sources contribute their bounding-box crops directly. Outputs are
// ordered: crops first (source order), then retained tiles (source order,
// row-major tile order).
inline CurationResult run_curation(const CurationConfig& cfg, const std::vector<SourceItem>& sources,
                                   const Embedder& embedder, int workers = 1) {
  CurationResult res;
  CurationManifest& man = res.manifest;
  man.config = cfg;
  std::string stage = "validate";
  try {
    cfg.tile_spec().validate();
    if (!(cfg.min_green >= 0.0) || cfg.min_green > 1.0) throw ConfigError("min_green must be in [0, 1]");
    man.counts.ingested = sources.size();

    stage = "bbox_crop";
    std::vector<std::size_t> labeled, unlabeled;
    for (std::size_t i = 0; i < sources.size(); ++i) (sources[i].labels ? labeled : unlabeled).push_back(i);
    man.counts.labeled = labeled.size();
    std::vector<CropResult> crops(labeled.size());
    parallel_for(labeled.size(), workers, [&](std::size_t j) {
      const auto& s = sources[labeled[j]];
      crops[j] = crop_bounding_boxes(s.load(), s.labels());
    });
    for (auto& cr : crops) {
      man.counts.bbox_skipped += cr.skipped;
      for (auto& img : cr.crops) res.items.push_back({std::move(img), 0.0});
    }
    man.counts.bbox_crops = res.items.size();
    if (man.counts.bbox_skipped > 0)
      man.messages.push_back(std::to_string(man.counts.bbox_skipped) + " degenerate boxes skipped");

    if (!unlabeled.empty()) {
      stage = "embed";
      std::vector<std::vector<double>> vecs(unlabeled.size());
      std::vector<std::string> errors(unlabeled.size());
      parallel_for(unlabeled.size(), workers, [&](std::size_t j) {
        try {
          vecs[j] = embedder(sources[unlabeled[j]].load());
        } catch (const std::exception& e) {
          errors[j] = std::string("embedder failed: ") + e.what();
        }
      });
      std::vector<std::string> ids(unlabeled.size());
      for (std::size_t j = 0; j < unlabeled.size(); ++j) {
        ids[j] = sources[unlabeled[j]].id;
        if (!errors[j].empty() || !vecs[j].empty()) continue;
        errors[j] = "embedder returned no features";
      }
      EmbeddingResult emb = assemble_embeddings(ids, std::move(vecs), errors);
      man.counts.embed_excluded = emb.excluded.size();
      for (auto& msg : emb.messages) man.messages.push_back("embed excluded " + msg);
      std::vector<std::size_t> kept;  // source index per embedding row
      for (auto j : emb.source_index) kept.push_back(unlabeled[j]);

      if (emb.matrix.n > 0) {
        stage = "cluster";
        ClusterPyramid pyr = hierarchical_kmeans(emb.matrix, cfg.level_ks, cfg.seed, cfg.max_iters, workers);
        man.counts.clustered = pyr.n();
        for (const auto& lvl : pyr.levels) man.level_clusters.push_back(lvl.clusters(pyr.d));

        stage = "sample";
        auto picked = sample_indices(pyr, cfg.sample_fraction, cfg.seed);
        man.counts.sampled = picked.size();
        for (auto i : picked) man.sampled_ids.push_back(pyr.image_ids[i]);

        stage = "tile";
        const TileSpec spec = cfg.tile_spec();
        const GreenRule rule{cfg.excess_green_threshold};
        std::vector<std::vector<CuratedItem>> per_image(picked.size());
        parallel_for(picked.size(), workers, [&](std::size_t j) {
          ImageRecord img = sources[kept[picked[j]]].load();
          for (auto& t : tile_image(img, spec)) {
            double g = green_ratio(t, rule);
            per_image[j].push_back({std::move(t), g});
          }
        });
        stage = "filter";
        for (auto& tiles : per_image) {
          man.counts.tiled += tiles.size();
          for (auto& t : tiles) {
            if (t.green_ratio >= cfg.min_green) {
              res.items.push_back(std::move(t));
              ++man.counts.retained;
            } else {
              ++man.counts.filtered;
            }
          }
        }
      }
    }
    man.counts.output = res.items.size();
  } catch (const std::exception& e) {
    man.failed_stage = stage;
    throw CurationError("curation failed at stage '" + stage + "': " + e.what(), to_json(man, res.items));
  }
  return res;
}

}  // namespace weedet
