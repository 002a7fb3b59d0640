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
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "weedet/core/parallel.hpp"
#include "weedet/core/rng.hpp"
#include "weedet/dataio/crops.hpp"
#include "weedet/dataio/manifest.hpp"
#include "weedet/dataio/synth.hpp"
#include "weedet/model/features.hpp"

namespace weedet {

enum class PlantGroup { kCrop, kWeed };

inline std::string to_string(PlantGroup g) { return g == PlantGroup::kCrop ? "crop" : "weed"; }

struct ProbeDataset {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> features;  // n x d row-major
  std::vector<int> labels;
  std::vector<std::string> class_names;
  std::vector<PlantGroup> group_map;  // per class

  const double* row(std::size_t i) const { return features.data() + i * d; }
  int class_count() const { return static_cast<int>(class_names.size()); }

  void validate() const {
    if (features.size() != n * d || labels.size() != n) throw ValidationError("probe dataset sizes disagree");
    if (group_map.size() != class_names.size()) throw ValidationError("every class needs a group");
    for (int l : labels)
      if (l < 0 || l >= class_count()) throw ValidationError("probe label " + std::to_string(l) + " out of range");
    for (double v : features)
      if (!std::isfinite(v)) throw ValidationError("probe features must be finite");
  }
};

// FNV-1a over names, shapes and raw values of every parameter.
template <typename T>
std::uint64_t parameter_checksum(const ParameterList<T>& params) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) h = (h ^ b[i]) * 1099511628211ULL;
  };
  for (const auto& p : params) {
    mix(p.name.data(), p.name.size());
    for (int e : p.var.shape()) mix(&e, sizeof e);
    mix(p.var.value().data(), p.var.numel() * sizeof(T));
  }
  return h;
}

// Pooled ViT features of every image, in input order. The model is only
// read; extraction runs in parallel over images.
template <typename T>
ProbeDataset extract_frozen_features(const Detector<T>& det, const std::vector<ImageRecord>& images,
                                     const std::vector<int>& labels, std::vector<std::string> class_names,
                                     std::vector<PlantGroup> groups, int workers = 1,
                                     Pooling pooling = Pooling::kClsToken) {
  if (labels.size() != images.size()) throw ValidationError("one label per image required");
  ProbeDataset ds;
  ds.n = images.size();
  ds.d = static_cast<std::size_t>(det.config().vit.embed_dim);
  ds.labels = labels;
  ds.class_names = std::move(class_names);
  ds.group_map = std::move(groups);
  ds.features.assign(ds.n * ds.d, 0.0);
  parallel_for(images.size(), workers, [&](std::size_t i) {
    auto f = vit_features(det, images[i], pooling);
    std::copy(f.begin(), f.end(), ds.features.begin() + static_cast<std::ptrdiff_t>(i * ds.d));
  });
  ds.validate();
  return ds;
}

struct ProbeSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Per-class seeded shuffle; round(train_fraction * n_c) of each class go to
// train (at least one of each class on each side when it has >= 2 items).
inline ProbeSplit stratified_split(const std::vector<int>& labels, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0 && train_fraction < 1)) throw ConfigError("train fraction must be in (0, 1)");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  if (by_class.size() < 2) throw DegenerateDataError("probe needs at least two classes");
  ProbeSplit s;
  for (auto& [c, idx] : by_class) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(c) + 1);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t k = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(idx.size())));
    if (idx.size() >= 2) k = std::clamp<std::size_t>(k, 1, idx.size() - 1);
    s.train.insert(s.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
    s.test.insert(s.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

// "7:3" -> 0.7.
inline double parse_train_fraction(const std::string& spec) {
  auto r = parse_split(spec);
  if (r.size() != 2) throw ConfigError("probe split must have two parts, got '" + spec + "'");
  return r[0] / (r[0] + r[1]);
}

struct ProbeConfig {
  int epochs = 30;
  int batch_size = 128;
  double lr = 0.05;
  std::uint64_t seed = 0;
  bool standardize = true;  // z-score features with train statistics
};

struct LinearProbe {
  int classes = 0;
  int dim = 0;
  std::vector<double> weight;  // classes x dim
  std::vector<double> bias;
  std::vector<double> mean;    // standardization, empty when disabled
  std::vector<double> inv_std;

  std::vector<double> logits(const double* x) const {
    std::vector<double> z(bias);
    for (int k = 0; k < classes; ++k)
      for (int j = 0; j < dim; ++j) {
        const double v = mean.empty() ? x[j] : (x[j] - mean[j]) * inv_std[j];
        z[k] += weight[static_cast<std::size_t>(k) * dim + j] * v;
      }
    return z;
  }

  int predict(const double* x) const {
    auto z = logits(x);
    return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
  }
};

// Softmax cross-entropy mini-batch SGD on W and b only. W starts from a
// seeded N(0, 0.01^2), b from zero.
inline LinearProbe train_linear_probe(const ProbeDataset& ds, const std::vector<std::size_t>& train,
                                      const ProbeConfig& pc = {}) {
  ds.validate();
  if (train.empty()) throw DegenerateDataError("probe training split is empty");
  {
    std::vector<int> seen;
    for (auto i : train) seen.push_back(ds.labels[i]);
    std::sort(seen.begin(), seen.end());
    if (std::unique(seen.begin(), seen.end()) - seen.begin() < 2)
      throw DegenerateDataError("probe training split has a single class");
  }
  if (pc.epochs < 0 || pc.batch_size < 1 || !(pc.lr >= 0)) throw ConfigError("invalid probe training config");
  LinearProbe p;
  p.classes = ds.class_count();
  p.dim = static_cast<int>(ds.d);
  Rng rng = make_rng(pc.seed, 0x7072);
  std::normal_distribution<double> init(0.0, 0.01);
  p.weight.resize(static_cast<std::size_t>(p.classes) * p.dim);
  for (auto& w : p.weight) w = init(rng);
  p.bias.assign(static_cast<std::size_t>(p.classes), 0.0);
  if (pc.standardize) {
    p.mean.assign(ds.d, 0.0);
    p.inv_std.assign(ds.d, 0.0);
    for (auto i : train)
      for (std::size_t j = 0; j < ds.d; ++j) p.mean[j] += ds.row(i)[j] / static_cast<double>(train.size());
    for (std::size_t j = 0; j < ds.d; ++j) {
      double var = 0.0;
      for (auto i : train) var += std::pow(ds.row(i)[j] - p.mean[j], 2) / static_cast<double>(train.size());
      p.inv_std[j] = var > 1e-24 ? 1.0 / std::sqrt(var) : 1.0;
    }
  }
  std::vector<std::size_t> order = train;
  std::vector<double> gw(p.weight.size()), gb(p.bias.size());
  for (int epoch = 0; epoch < pc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(pc.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(pc.batch_size));
      std::fill(gw.begin(), gw.end(), 0.0);
      std::fill(gb.begin(), gb.end(), 0.0);
      const double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t b = start; b < end; ++b) {
        const double* x = ds.row(order[b]);
        auto z = p.logits(x);
        const double mx = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (auto& v : z) sum += (v = std::exp(v - mx));
        for (int k = 0; k < p.classes; ++k) {
          const double g = (z[k] / sum - (k == ds.labels[order[b]] ? 1.0 : 0.0)) * inv;
          gb[k] += g;
          for (int j = 0; j < p.dim; ++j) {
            const double v = p.mean.empty() ? x[j] : (x[j] - p.mean[j]) * p.inv_std[j];
            gw[static_cast<std::size_t>(k) * p.dim + j] += g * v;
          }
        }
      }
      for (std::size_t i = 0; i < p.weight.size(); ++i) p.weight[i] -= pc.lr * gw[i];
      for (std::size_t i = 0; i < p.bias.size(); ++i) p.bias[i] -= pc.lr * gb[i];
    }
  }
  return p;
}

inline std::vector<int> predict_all(const LinearProbe& p, const ProbeDataset& ds, const std::vector<std::size_t>& idx) {
  std::vector<int> out;
  for (auto i : idx) out.push_back(p.predict(ds.row(i)));
  return out;
}

// 100 * matches / n.
inline double top1_accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
  if (preds.size() != labels.size()) throw ValidationError("prediction and label counts differ");
  if (preds.empty()) throw UndefinedMetricError("accuracy of an empty set");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i] == labels[i];
  return 100.0 * static_cast<double>(hit) / static_cast<double>(preds.size());
}

// Recall per class in percent; classes absent from labels are NaN.
inline std::vector<double> per_class_accuracy(const std::vector<int>& preds, const std::vector<int>& labels,
                                              int class_count) {
  if (preds.size() != labels.size()) throw ValidationError("prediction and label counts differ");
  std::vector<double> hit(static_cast<std::size_t>(class_count), 0.0), total(static_cast<std::size_t>(class_count), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= class_count) throw ValidationError("label out of range");
    total[static_cast<std::size_t>(labels[i])] += 1;
    hit[static_cast<std::size_t>(labels[i])] += preds[i] == labels[i];
  }
  std::vector<double> acc(static_cast<std::size_t>(class_count));
  for (std::size_t c = 0; c < acc.size(); ++c) acc[c] = total[c] > 0 ? 100.0 * hit[c] / total[c] : NAN;
  return acc;
}

struct GroupAccuracy {
  double crop_avg = NAN;
  double weed_avg = NAN;
  double overall = NAN;
  std::vector<std::string> notes;
};

// Unweighted means of per-class accuracies within each group and overall.
// NaN entries (classes without samples) are skipped; an empty group stays
// NaN and is noted.
inline GroupAccuracy group_accuracy(const std::vector<double>& per_class, const std::vector<PlantGroup>& groups) {
  if (per_class.size() != groups.size()) throw ValidationError("every class must be mapped to a group");
  GroupAccuracy g;
  double s[2] = {0, 0}, all = 0;
  int n[2] = {0, 0}, n_all = 0;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    if (std::isnan(per_class[c])) continue;
    const int k = groups[c] == PlantGroup::kCrop ? 0 : 1;
    s[k] += per_class[c];
    ++n[k];
    all += per_class[c];
    ++n_all;
  }
  if (n[0]) g.crop_avg = s[0] / n[0];
  else g.notes.push_back("no crop classes; crop average excluded");
  if (n[1]) g.weed_avg = s[1] / n[1];
  else g.notes.push_back("no weed classes; weed average excluded");
  if (n_all) g.overall = all / n_all;
  return g;
}

struct ProbeReport {
  std::vector<std::string> class_names;
  std::vector<double> per_class;
  GroupAccuracy groups;
  double top1 = NAN;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::uint64_t checksum_before = 0;
  std::uint64_t checksum_after = 0;
};

inline nlohmann::json to_json(const ProbeReport& r) {
  auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
  nlohmann::json per = nlohmann::json::object();
  for (std::size_t c = 0; c < r.class_names.size(); ++c) per[r.class_names[c]] = num(r.per_class[c]);
  return {{"per_class", per},        {"crop_avg", num(r.groups.crop_avg)},
          {"weed_avg", num(r.groups.weed_avg)}, {"overall", num(r.groups.overall)},
          {"top1", num(r.top1)},     {"n_train", r.n_train},
          {"n_test", r.n_test},      {"notes", r.groups.notes},
          {"backbone_unchanged", r.checksum_before == r.checksum_after}};
}

// Split, train, score.
inline ProbeReport run_probe(const ProbeDataset& ds, double train_fraction, const ProbeConfig& pc) {
  ds.validate();
  ProbeSplit split = stratified_split(ds.labels, train_fraction, pc.seed);
  LinearProbe probe = train_linear_probe(ds, split.train, pc);
  std::vector<int> truth;
  for (auto i : split.test) truth.push_back(ds.labels[i]);
  auto preds = predict_all(probe, ds, split.test);
  ProbeReport r;
  r.class_names = ds.class_names;
  r.top1 = top1_accuracy(preds, truth);
  r.per_class = per_class_accuracy(preds, truth, ds.class_count());
  r.groups = group_accuracy(r.per_class, ds.group_map);
  r.n_train = split.train.size();
  r.n_test = split.test.size();
  return r;
}

// Crops every labeled box of the images into probe samples; class ids map
// to the names and groups given.
inline std::pair<std::vector<ImageRecord>, std::vector<int>> box_crops(const std::vector<LabeledImage>& data) {
  std::vector<ImageRecord> crops;
  std::vector<int> labels;
  for (const auto& s : data) {
    auto r = crop_bounding_boxes(s.image, s.boxes);
    for (auto& c : r.crops) {
      labels.push_back(c.provenance.class_id);
      crops.push_back(std::move(c));
    }
  }
  return {std::move(crops), std::move(labels)};
}

}  // namespace weedet
