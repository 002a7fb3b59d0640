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
#include <set>
#include <string>
#include <vector>

#include "weedet/eval/matching.hpp"

namespace weedet {

struct PrCurve {
  std::vector<double> confidence;  // descending
  std::vector<double> precision;
  std::vector<double> recall;
  std::size_t n_gt = 0;
};

// Cumulative precision/recall over all detections of one class, ranked by
// descending confidence across images.
inline PrCurve pr_curve(const EvalSet& s, int class_id, double iou_thr) {
  struct Scored {
    double conf;
    bool tp;
  };
  std::vector<Scored> scored;
  PrCurve c;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (const auto& g : s.gts[i]) c.n_gt += g.class_id == class_id;
    std::vector<Detection> dets;
    for (const auto& d : s.dets[i])
      if (d.class_id == class_id) dets.push_back(d);
    ImageMatch m = match_image(dets, s.gts[i], iou_thr, 0.0);
    for (std::size_t j : confidence_order(dets)) scored.push_back({dets[j].confidence, m.tp[j] != 0});
  }
  std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) { return a.conf > b.conf; });
  double tp = 0, fp = 0;
  for (const auto& sc : scored) {
    (sc.tp ? tp : fp) += 1.0;
    c.confidence.push_back(sc.conf);
    c.precision.push_back(tp / (tp + fp));
    c.recall.push_back(c.n_gt ? tp / static_cast<double>(c.n_gt) : 0.0);
  }
  return c;
}

// 101-point interpolated AP: the precision envelope sampled at recall
// 0, 0.01, ..., 1.
inline double interpolated_ap(const PrCurve& c) {
  if (c.n_gt == 0) throw UndefinedMetricError("average precision with no ground truth");
  std::vector<double> env = c.precision;
  for (std::size_t i = env.size(); i-- > 1;) env[i - 1] = std::max(env[i - 1], env[i]);
  double total = 0.0;
  for (int k = 0; k <= 100; ++k) {
    double r = k / 100.0;
    auto it = std::lower_bound(c.recall.begin(), c.recall.end(), r);
    if (it != c.recall.end()) total += env[static_cast<std::size_t>(it - c.recall.begin())];
  }
  return total / 101.0;
}

inline double average_precision(const EvalSet& s, int class_id, double iou_thr) {
  return interpolated_ap(pr_curve(s, class_id, iou_thr));
}

inline std::vector<double> coco_iou_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back((50 + 5 * i) / 100.0);
  return t;
}

struct DetectionMetrics {
  double precision = 0.0;  // percent, at the confidence threshold
  double recall = 0.0;
  double map50 = 0.0;      // percent
  double map50_95 = 0.0;
  bool precision_undefined = false;
  std::vector<int> classes;  // classes that entered the mAP
  std::vector<double> ap50;  // per entry of classes
  std::vector<std::string> notes;
  MatchCounts counts;
};

// P/R at conf_thr and IoU 0.5; AP sweeps all confidences. Classes without
// ground truth are excluded from the mean.
inline DetectionMetrics evaluate(const EvalSet& s, int class_count, double conf_thr = 0.25) {
  DetectionMetrics m;
  m.counts = count_matches(match_detections(s, 0.5, conf_thr));
  auto pr = precision_recall(m.counts);
  m.precision = pr.precision;
  m.recall = pr.recall;
  m.precision_undefined = pr.precision_undefined;
  if (pr.precision_undefined) m.notes.push_back("no detections above the confidence threshold");
  const auto thresholds = coco_iou_thresholds();
  double sum50 = 0.0, sum5095 = 0.0;
  for (int c = 0; c < class_count; ++c) {
    PrCurve probe = pr_curve(s, c, 0.5);
    if (probe.n_gt == 0) {
      m.notes.push_back("class " + std::to_string(c) + " has no ground truth; excluded from mAP");
      continue;
    }
    double ap50 = interpolated_ap(probe);
    double ap_all = 0.0;
    for (double t : thresholds) ap_all += t == 0.5 ? ap50 : average_precision(s, c, t);
    m.classes.push_back(c);
    m.ap50.push_back(ap50);
    sum50 += ap50;
    sum5095 += ap_all / static_cast<double>(thresholds.size());
  }
  if (m.classes.empty()) throw UndefinedMetricError("no class has ground truth");
  const auto n = static_cast<double>(m.classes.size());
  m.map50 = 100.0 * sum50 / n;
  m.map50_95 = 100.0 * sum5095 / n;
  return m;
}

inline nlohmann::json to_json(const DetectionMetrics& m) {
  nlohmann::json per_class = nlohmann::json::object();
  for (std::size_t i = 0; i < m.classes.size(); ++i) per_class[std::to_string(m.classes[i])] = 100.0 * m.ap50[i];
  return {{"precision", m.precision},   {"recall", m.recall},     {"map50", m.map50},
          {"map50_95", m.map50_95},     {"tp", m.counts.tp},     {"fp", m.counts.fp},
          {"fn", m.counts.fn},          {"ap50_per_class", per_class},
          {"precision_undefined", m.precision_undefined}, {"notes", m.notes}};
}

}  // namespace weedet
