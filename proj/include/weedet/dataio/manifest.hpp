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
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "weedet/core/errors.hpp"
#include "weedet/core/rng.hpp"
#include "weedet/dataio/image.hpp"

namespace weedet {

struct ManifestEntry {
  std::string id;
  std::string image_path;
  std::string label_path;  // empty for unlabeled sources
  SourceTag source_tag = SourceTag::kSynthetic;
  std::string split;       // "train", "val", "test" or empty

  bool labeled() const { return !label_path.empty(); }
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;  // relative paths resolve against this

  std::filesystem::path resolve(const std::string& p) const {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  }
};

inline nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : m.entries) {
    entries.push_back({{"id", e.id},
                       {"image_path", e.image_path},
                       {"label_path", e.label_path},
                       {"source_tag", std::string(to_string(e.source_tag))},
                       {"split", e.split}});
  }
  return {{"entries", entries}};
}

// Accepts either a bare array of entries or {"entries": [...]}. Ids must be
// unique.
inline DatasetManifest manifest_from_json(const nlohmann::json& doc,
                                          std::filesystem::path base_dir = {}) {
  const nlohmann::json* list = &doc;
  if (doc.is_object()) {
    if (!doc.contains("entries")) throw FormatError("manifest has no 'entries'");
    list = &doc.at("entries");
  }
  if (!list->is_array()) throw FormatError("manifest entries must be an array");
  DatasetManifest m;
  m.base_dir = std::move(base_dir);
  std::set<std::string> seen;
  for (const auto& j : *list) {
    ManifestEntry e;
    try {
      e.id = j.at("id").get<std::string>();
      e.image_path = j.at("image_path").get<std::string>();
      e.label_path = j.value("label_path", std::string());
      e.source_tag = parse_source_tag(j.value("source_tag", std::string("synthetic")));
      e.split = j.value("split", std::string());
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(std::string("manifest entry: ") + ex.what());
    }
    if (!seen.insert(e.id).second) throw ValidationError("duplicate manifest id " + e.id);
    m.entries.push_back(std::move(e));
  }
  return m;
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(path.string() + ": " + ex.what());
  }
  return manifest_from_json(doc, path.parent_path());
}

inline void write_json_file(const nlohmann::json& doc, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    nlohmann::json doc;
    in >> doc;
    return doc;
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(path.string() + ": " + ex.what());
  }
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& text, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

// "75:5:25" -> {75, 5, 25}. Ratios need not sum to 100; they are
// normalized by their sum.
inline std::vector<double> parse_split(const std::string& spec) {
  std::vector<double> ratios;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ':')) {
    try {
      std::size_t used = 0;
      double v = std::stod(part, &used);
      if (used != part.size() || !(v >= 0.0)) throw std::invalid_argument(part);
      ratios.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("bad split specification '" + spec + "'");
    }
  }
  double total = std::accumulate(ratios.begin(), ratios.end(), 0.0);
  if (ratios.empty() || !(total > 0.0)) throw ConfigError("bad split specification '" + spec + "'");
  return ratios;
}

// Largest-remainder apportionment of n items over the given ratios; ties go
// to the earlier part.
inline std::vector<std::size_t> split_counts(std::size_t n, const std::vector<double>& ratios) {
  double total = std::accumulate(ratios.begin(), ratios.end(), 0.0);
  std::vector<std::size_t> counts(ratios.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    double exact = static_cast<double>(n) * ratios[i] / total;
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[i];
    remainders.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[remainders[k % remainders.size()].second];
  return counts;
}

// Seeded permutation of [0, n) cut into consecutive parts per split_counts.
// Returns the part index of every item.
inline std::vector<std::size_t> assign_splits(std::size_t n, const std::vector<double>& ratios,
                                              std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, 0x5917);
  std::shuffle(order.begin(), order.end(), rng);
  auto counts = split_counts(n, ratios);
  std::vector<std::size_t> part(n);
  std::size_t k = 0;
  for (std::size_t p = 0; p < counts.size(); ++p)
    for (std::size_t c = 0; c < counts[p]; ++c) part[order[k++]] = p;
  return part;
}

inline const char* split_name(std::size_t part) {
  static const char* names[] = {"train", "val", "test"};
  return part < 3 ? names[part] : "extra";
}

}  // namespace weedet
