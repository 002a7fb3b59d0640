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
#include <string>
#include <vector>

#include <json.hpp>

#include "weedet/core/errors.hpp"
#include "weedet/dataio/labels.hpp"

namespace weedet {

// Corner-format box in normalized image coordinates.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double area() const { return std::max(0.0, x2 - x1) * std::max(0.0, y2 - y1); }
};

struct Detection {
  std::string image_id;
  int class_id = 0;
  double confidence = 0.0;
  Box box;
};

// Ground truth as used for scoring.
struct GtBox {
  int class_id = 0;
  Box box;
};

inline Box to_corners(const GroundTruthBox& b) { return {b.x1(), b.y1(), b.x2(), b.y2()}; }

inline std::vector<GtBox> to_gt_boxes(const std::vector<GroundTruthBox>& boxes) {
  std::vector<GtBox> out;
  out.reserve(boxes.size());
  for (const auto& b : boxes) out.push_back({b.class_id, to_corners(b)});
  return out;
}

inline double iou(const Box& a, const Box& b) {
  double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  double inter = iw * ih;
  double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

inline void validate_detection(const Detection& d) {
  const Box& b = d.box;
  if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) throw ValidationError("detection confidence outside [0, 1]");
  if (!(b.x1 >= 0.0 && b.x1 < b.x2 && b.x2 <= 1.0 && b.y1 >= 0.0 && b.y1 < b.y2 && b.y2 <= 1.0))
    throw ValidationError("detection box is not a valid normalized corner box");
}

inline nlohmann::json to_json(const Detection& d) {
  return {{"image_id", d.image_id}, {"class_id", d.class_id}, {"confidence", d.confidence},
          {"x1", d.box.x1},         {"y1", d.box.y1},         {"x2", d.box.x2},
          {"y2", d.box.y2}};
}

inline Detection detection_from_json(const nlohmann::json& j) {
  try {
    Detection d;
    d.image_id = j.at("image_id").get<std::string>();
    d.class_id = j.at("class_id").get<int>();
    d.confidence = j.at("confidence").get<double>();
    d.box = {j.at("x1").get<double>(), j.at("y1").get<double>(), j.at("x2").get<double>(),
             j.at("y2").get<double>()};
    validate_detection(d);
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("detection record: ") + e.what());
  }
}

inline nlohmann::json detections_to_json(const std::vector<Detection>& dets) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& d : dets) arr.push_back(to_json(d));
  return arr;
}

inline std::vector<Detection> detections_from_json(const nlohmann::json& arr) {
  if (!arr.is_array()) throw FormatError("detections must be a JSON array");
  std::vector<Detection> out;
  for (const auto& j : arr) out.push_back(detection_from_json(j));
  return out;
}

}  // namespace weedet
