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
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "weedet/eval/boxes.hpp"

namespace weedet {

// Matching outcome for one image. Detections below the confidence
// threshold are not considered and keep considered = false.
struct ImageMatch {
  std::vector<char> considered;  // per detection
  std::vector<char> tp;          // per detection, meaningful when considered
  std::vector<int> matched_gt;   // per detection, -1 when unmatched
  std::vector<char> gt_matched;  // per ground-truth box
};

// Visit order: descending confidence, ties by lower index.
inline std::vector<std::size_t> confidence_order(const std::vector<Detection>& dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].confidence > dets[b].confidence; });
  return order;
}

// Greedy matching: each detection takes the unmatched same-class ground
// truth with the highest IoU, provided it reaches iou_thr.
inline ImageMatch match_image(const std::vector<Detection>& dets, const std::vector<GtBox>& gts, double iou_thr,
                              double conf_thr = 0.0) {
  ImageMatch m;
  m.considered.assign(dets.size(), 0);
  m.tp.assign(dets.size(), 0);
  m.matched_gt.assign(dets.size(), -1);
  m.gt_matched.assign(gts.size(), 0);
  for (std::size_t i : confidence_order(dets)) {
    const Detection& d = dets[i];
    if (d.confidence < conf_thr) continue;
    m.considered[i] = 1;
    int best = -1;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (m.gt_matched[g] || gts[g].class_id != d.class_id) continue;
      double v = iou(d.box, gts[g].box);
      if (v > best_iou) {
        best_iou = v;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0 && best_iou >= iou_thr) {
      m.tp[i] = 1;
      m.matched_gt[i] = best;
      m.gt_matched[static_cast<std::size_t>(best)] = 1;
    }
  }
  return m;
}

struct MatchCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

inline MatchCounts count_matches(const std::vector<ImageMatch>& matches) {
  MatchCounts c;
  for (const auto& m : matches) {
    for (std::size_t i = 0; i < m.tp.size(); ++i)
      if (m.considered[i]) (m.tp[i] ? c.tp : c.fp) += 1;
    for (char g : m.gt_matched)
      if (!g) ++c.fn;
  }
  return c;
}

// Per-image detections and ground truth keyed by position.
struct EvalSet {
  std::vector<std::string> image_ids;
  std::vector<std::vector<Detection>> dets;
  std::vector<std::vector<GtBox>> gts;

  std::size_t size() const { return image_ids.size(); }
};

// Groups a flat detection list by image id; detections for unknown images
// are rejected.
inline EvalSet make_eval_set(const std::vector<std::string>& image_ids,
                             const std::vector<std::vector<GtBox>>& gts,
                             const std::vector<Detection>& dets) {
  if (image_ids.size() != gts.size()) throw ValidationError("image id and ground-truth counts differ");
  EvalSet s;
  s.image_ids = image_ids;
  s.gts = gts;
  s.dets.resize(image_ids.size());
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < image_ids.size(); ++i)
    if (!index.emplace(image_ids[i], i).second) throw ValidationError("duplicate image id " + image_ids[i]);
  for (const auto& d : dets) {
    auto it = index.find(d.image_id);
    if (it == index.end()) throw ValidationError("detection for unknown image " + d.image_id);
    s.dets[it->second].push_back(d);
  }
  return s;
}

// Class-agnostic view: every class id becomes 0.
inline EvalSet collapse_classes(EvalSet s) {
  for (auto& v : s.dets)
    for (auto& d : v) d.class_id = 0;
  for (auto& v : s.gts)
    for (auto& g : v) g.class_id = 0;
  return s;
}

inline std::vector<ImageMatch> match_detections(const EvalSet& s, double iou_thr, double conf_thr = 0.25) {
  std::vector<ImageMatch> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = match_image(s.dets[i], s.gts[i], iou_thr, conf_thr);
  return out;
}

struct PrecisionRecall {
  double precision = 0.0;  // percent
  double recall = 0.0;     // percent
  bool precision_undefined = false;
  bool recall_undefined = false;
};

inline PrecisionRecall precision_recall(const MatchCounts& c) {
  PrecisionRecall pr;
  if (c.tp + c.fp == 0)
    pr.precision_undefined = true;
  else
    pr.precision = 100.0 * static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn == 0)
    pr.recall_undefined = true;
  else
    pr.recall = 100.0 * static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  return pr;
}

}  // namespace weedet
