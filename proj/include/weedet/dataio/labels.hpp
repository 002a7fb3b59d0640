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

#include <charconv>
#include <cmath>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "weedet/core/errors.hpp"

namespace weedet {

// Normalized center-format annotation: class cx cy w h, all in [0, 1].
struct GroundTruthBox {
  int class_id = 0;
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  double x1() const { return cx - w / 2.0; }
  double y1() const { return cy - h / 2.0; }
  double x2() const { return cx + w / 2.0; }
  double y2() const { return cy + h / 2.0; }

  friend bool operator==(const GroundTruthBox&, const GroundTruthBox&) = default;
};

inline void validate_box(const GroundTruthBox& b) {
  auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(b.cx) || !finite(b.cy) || !finite(b.w) || !finite(b.h))
    throw ValidationError("box has non-finite coordinates");
  if (b.cx < 0.0 || b.cx > 1.0 || b.cy < 0.0 || b.cy > 1.0)
    throw ValidationError("box center outside [0, 1]");
  if (!(b.w > 0.0) || b.w > 1.0 || !(b.h > 0.0) || b.h > 1.0)
    throw ValidationError("box size outside (0, 1]");
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

// Parses one box per non-blank line. Line numbers in errors are 1-based.
inline std::vector<GroundTruthBox> parse_labels(std::string_view text,
                                                int class_count) {
  std::vector<GroundTruthBox> boxes;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    ++line_no;
    pos = nl + 1;
    auto fields = detail::split_ws(line);
    if (fields.empty()) {
      if (nl == text.size()) break;
      continue;
    }
    if (fields.size() != 5)
      throw ParseError(line_no, "expected 5 fields, got " + std::to_string(fields.size()));
    GroundTruthBox b;
    if (!detail::parse_number(fields[0], b.class_id))
      throw ParseError(line_no, "bad class id '" + std::string(fields[0]) + "'");
    double* dst[4] = {&b.cx, &b.cy, &b.w, &b.h};
    for (int k = 0; k < 4; ++k) {
      if (!detail::parse_number(fields[k + 1], *dst[k]))
        throw ParseError(line_no, "bad number '" + std::string(fields[k + 1]) + "'");
    }
    if (b.class_id < 0 || b.class_id >= class_count)
      throw ValidationError("line " + std::to_string(line_no) + ": class " +
                            std::to_string(b.class_id) + " not in [0, " +
                            std::to_string(class_count) + ")");
    try {
      validate_box(b);
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    }
    boxes.push_back(b);
    if (nl == text.size()) break;
  }
  return boxes;
}

// Shortest round-trip decimal representation, so parse(format(x)) == x.
inline std::string format_labels(const std::vector<GroundTruthBox>& boxes) {
  std::string out;
  for (const auto& b : boxes) {
    out += std::to_string(b.class_id);
    for (double v : {b.cx, b.cy, b.w, b.h}) {
      out += ' ';
      out += detail::format_double(v);
    }
    out += '\n';
  }
  return out;
}

}  // namespace weedet
