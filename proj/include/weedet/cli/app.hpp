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

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "weedet/curation/pipeline.hpp"
#include "weedet/dataio/synth.hpp"
#include "weedet/eval/metrics.hpp"
#include "weedet/eval/report.hpp"
#include "weedet/model/features.hpp"
#include "weedet/model/profile.hpp"
#include "weedet/model/train.hpp"
#include "weedet/probe/probe.hpp"

namespace weedet::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

inline std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

// FNV-1a over ids, image bytes and label bytes of every entry, in order.
inline std::uint64_t dataset_checksum(const DatasetManifest& m) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const auto& bytes) {
    for (unsigned char b : bytes) h = (h ^ b) * 1099511628211ULL;
  };
  for (const auto& e : m.entries) {
    mix(e.id);
    mix(e.split);
    mix(read_file_bytes(m.resolve(e.image_path)));
    if (e.labeled()) mix(read_text_file(m.resolve(e.label_path)));
  }
  return h;
}

// Splits from the manifest when every entry carries one, otherwise a
// seeded assignment with the given ratios.
inline std::vector<std::string> resolve_splits(const DatasetManifest& m, const std::string& ratios,
                                               std::uint64_t seed) {
  bool all = !m.entries.empty();
  for (const auto& e : m.entries) all = all && !e.split.empty();
  std::vector<std::string> out;
  if (all) {
    for (const auto& e : m.entries) out.push_back(e.split);
    return out;
  }
  for (auto p : assign_splits(m.entries.size(), parse_split(ratios), seed)) out.emplace_back(split_name(p));
  return out;
}

inline std::map<std::string, bool> component_flags(const DetectorConfig& c) {
  return {{"Y-H", c.head_attention},
          {"Y-H*", !c.head_attention},
          {"Y-B", c.uses_yolo()},
          {"ViT", c.uses_vit()},
          {"STA", c.uses_vit() && c.use_sta},
          {"Align", c.use_align_loss}};
}

inline std::string default_model_name(const DetectorConfig& c) {
  std::string name = to_string(c.branch_mode);
  if (c.uses_vit() && c.use_sta) name += "+sta";
  if (c.use_align_loss) name += "+align";
  if (c.head_attention) name += "+attn";
  return name;
}

// One <dir>/<image_id>.json per image holding that image's detections.
inline void write_predictions(const fs::path& dir, const std::vector<std::string>& ids,
                              const std::vector<Detection>& dets) {
  fs::create_directories(dir);
  std::map<std::string, std::vector<Detection>> by_image;
  for (const auto& id : ids) by_image[id];
  for (const auto& d : dets) by_image[d.image_id].push_back(d);
  for (const auto& [id, v] : by_image) write_json_file(detections_to_json(v), dir / (id + ".json"));
}

// Missing files mean no detections for that image.
inline std::vector<Detection> read_predictions(const fs::path& dir, const std::vector<std::string>& ids) {
  if (!fs::is_directory(dir)) throw IoError("prediction directory not found: " + dir.string());
  std::vector<Detection> out;
  for (const auto& id : ids) {
    fs::path p = dir / (id + ".json");
    if (!fs::exists(p)) continue;
    auto v = detections_from_json(read_json_file(p));
    for (auto& d : v)
      if (d.image_id != id) throw ValidationError("prediction file " + p.string() + " holds image " + d.image_id);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

enum class EvalMode { kTwoClass, kWeedOnly };

inline EvalMode parse_eval_mode(const std::string& s) {
  if (s == "two-class") return EvalMode::kTwoClass;
  if (s == "weed-only") return EvalMode::kWeedOnly;
  throw ConfigError("unknown eval mode '" + s + "'");
}

// Weed-only keeps the weed class on both sides and scores it as class 0.
inline std::pair<EvalSet, int> apply_eval_mode(EvalSet s, EvalMode mode, int class_count, int weed_class) {
  if (mode == EvalMode::kTwoClass) return {std::move(s), class_count};
  for (auto& v : s.dets) {
    std::erase_if(v, [&](const Detection& d) { return d.class_id != weed_class; });
    for (auto& d : v) d.class_id = 0;
  }
  for (auto& v : s.gts) {
    std::erase_if(v, [&](const GtBox& g) { return g.class_id != weed_class; });
    for (auto& g : v) g.class_id = 0;
  }
  return {std::move(s), 1};
}

struct Globals {
  int workers = 1;
  std::string out_dir;
};

inline Globals globals_from_env() {
  Globals g;
  if (const char* w = std::getenv("WEEDET_WORKERS")) {
    try {
      g.workers = std::stoi(w);
    } catch (const std::exception&) {
      throw ConfigError(std::string("WEEDET_WORKERS is not an integer: ") + w);
    }
  }
  if (const char* o = std::getenv("WEEDET_OUT_DIR")) g.out_dir = o;
  return g;
}

inline fs::path out_path(const std::string& flag, const Globals& g, const std::string& fallback) {
  if (!flag.empty()) return flag;
  if (!g.out_dir.empty()) return fs::path(g.out_dir) / fallback;
  throw ConfigError("no output location: pass --out or set WEEDET_OUT_DIR");
}

inline void print_json(std::ostream& out, const nlohmann::json& j) { out << j.dump(2) << "\n"; }

struct SynthArgs {
  std::uint64_t seed = 0;
  std::size_t n = 200;
  int size = 128;
  std::string split = "75:5:25";
  std::string out;
};

inline int cmd_synth(const SynthArgs& a, const Globals& g, std::ostream& out) {
  SyntheticSceneConfig sc;
  sc.seed = a.seed;
  sc.image_size = a.size;
  sc.split = a.split;
  fs::path dir = out_path(a.out, g, "synth");
  auto ds = synth_blob_dataset(sc, a.n, g.workers);
  auto m = write_dataset(ds, dir, g.workers);
  nlohmann::json snap = {{"command", "synth"}, {"seed", a.seed}, {"n", a.n}, {"size", a.size}, {"split", a.split}};
  write_json_file(snap, dir / "config.json");
  print_json(out, {{"manifest", (dir / "manifest.json").string()},
                   {"images", m.entries.size()},
                   {"checksum", hex64(dataset_checksum(m))}});
  return kExitOk;
}

struct CurateArgs {
  std::string config;
  std::vector<std::string> data;
  std::string checkpoint;
  std::string out;
};

inline int cmd_curate(const CurateArgs& a, const Globals& g, std::ostream& out) {
  nlohmann::json cj = a.config.empty() ? nlohmann::json::object() : read_json_file(a.config);
  CurationConfig cfg = curation_config_from_json(cj);
  fs::path dir = out_path(a.out, g, "curated");
  std::vector<DatasetManifest> manifests;
  for (const auto& d : a.data) manifests.push_back(load_manifest(d));
  auto sources = sources_from_manifests(manifests, cfg.class_count);
  Embedder embed = histogram_embedding;
  if (!a.checkpoint.empty())
    embed = vit_embedder(std::make_shared<const Detector<float>>(load_detector<float>(a.checkpoint)));
  fs::create_directories(dir);
  write_json_file(to_json(cfg), dir / "config.json");
  try {
    auto res = run_curation(cfg, sources, embed, g.workers);
    parallel_for(res.items.size(), g.workers, [&](std::size_t i) {
      const auto& img = res.items[i].image;
      fs::path p = dir / "images" / img.provenance.stage / (img.id + ".png");
      fs::create_directories(p.parent_path());
      save_png(img, p);
    });
    auto doc = to_json(res.manifest, res.items);
    write_json_file(doc, dir / "curation_manifest.json");
    print_json(out, {{"manifest", (dir / "curation_manifest.json").string()}, {"counts", doc["counts"]}});
  } catch (const CurationError& e) {
    write_json_file(e.partial_manifest(), dir / "curation_manifest.json");
    throw;
  }
  return kExitOk;
}

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::string name;
  bool latency = true;
};

inline int cmd_train(const TrainArgs& a, const Globals& g, std::ostream& out, std::ostream& err) {
  nlohmann::json cj = a.config.empty() ? nlohmann::json::object() : read_json_file(a.config);
  DetectorConfig dc = detector_config_from_json(cj);
  TrainConfig tc = train_config_from_json(cj);
  tc.workers = g.workers;
  dc.validate();
  fs::path dir = out_path(a.out, g, "run");
  fs::create_directories(dir);
  nlohmann::json snap = to_json(dc);
  const nlohmann::json tj = to_json(tc);
  for (auto& [k, v] : tj.items()) snap[k] = v;
  const std::string name = a.name.empty() ? cj.value("name", default_model_name(dc)) : a.name;
  snap["name"] = name;
  write_json_file(snap, dir / "config.json");

  DatasetManifest m = load_manifest(a.data);
  auto data = load_labeled(m, dc.num_classes, g.workers);
  auto splits = resolve_splits(m, tc.split, tc.seed);
  DatasetManifest copy = m;
  for (std::size_t i = 0; i < copy.entries.size(); ++i) {
    auto& e = copy.entries[i];
    e.image_path = fs::absolute(m.resolve(e.image_path)).string();
    if (e.labeled()) e.label_path = fs::absolute(m.resolve(e.label_path)).string();
    e.split = splits[i];
  }
  write_json_file(to_json(copy), dir / "manifest.json");

  Detector<float> det(dc);
  std::ofstream log(dir / "log.jsonl");
  auto res = train_detector(det, data, splits, tc, dir, [&](const EpochLog& e) {
    nlohmann::json line = {{"epoch", e.epoch}, {"total", e.total}, {"cls", e.cls},
                           {"box", e.box},     {"align", e.align}, {"lr", e.lr}};
    if (!std::isnan(e.val_map50)) line["val_map50"] = e.val_map50;
    if (!std::isnan(e.val_loss)) line["val_loss"] = e.val_loss;
    log << line.dump() << "\n" << std::flush;
    err << "epoch " << e.epoch << " loss " << e.total << "\n";
  });

  std::vector<std::string> ids;
  std::vector<Detection> dets;
  auto test_idx = indices_of_split(splits, "test");
  nlohmann::json metrics = nlohmann::json::object();
  if (!test_idx.empty()) {
    auto mt = score_detector(det, data, test_idx, &ids, &dets);
    write_predictions(dir / "predictions", ids, dets);
    write_json_file(to_json(mt), dir / "eval.json");
    metrics = {{"Precision", mt.precision}, {"Recall", mt.recall}, {"mAP50", mt.map50}, {"mAP50:95", mt.map50_95}};
  }
  metrics["Param."] = static_cast<double>(count_params(det)) / 1e6;
  if (a.latency) metrics["Lat."] = measure_latency(det);
  nlohmann::json record = {{"model", name},
                           {"dataset", cj.value("dataset", std::string("default"))},
                           {"components", component_flags(dc)},
                           {"metrics", metrics},
                           {"best_epoch", res.best_epoch},
                           {"steps", res.steps}};
  write_json_file(record, dir / "metrics.json");
  print_json(out, record);
  return kExitOk;
}

struct ProbeArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "7:3";
  std::uint64_t seed = 0;
  std::string pooling = "cls";
  std::vector<std::string> class_names = {"crop", "weed"};
  std::vector<int> weed_ids = {1};
  ProbeConfig probe;
  std::string out;
};

inline int cmd_probe(const ProbeArgs& a, const Globals& g, std::ostream& out) {
  Detector<float> det = load_detector<float>(a.checkpoint);
  DatasetManifest m = load_manifest(a.data);
  auto data = load_labeled(m, static_cast<int>(a.class_names.size()), g.workers);
  auto [crops, labels] = box_crops(data);
  std::vector<PlantGroup> groups(a.class_names.size(), PlantGroup::kCrop);
  for (int w : a.weed_ids) {
    if (w < 0 || w >= static_cast<int>(groups.size())) throw ConfigError("weed id outside the class list");
    groups[static_cast<std::size_t>(w)] = PlantGroup::kWeed;
  }
  const auto before = parameter_checksum(det.parameters());
  auto ds = extract_frozen_features(det, crops, labels, a.class_names, groups, g.workers, parse_pooling(a.pooling));
  ProbeConfig pc = a.probe;
  pc.seed = a.seed;
  auto report = run_probe(ds, parse_train_fraction(a.split), pc);
  report.checksum_before = before;
  report.checksum_after = parameter_checksum(det.parameters());
  auto j = to_json(report);
  if (!a.out.empty() || !g.out_dir.empty()) write_json_file(j, out_path(a.out, g, "probe.json"));
  print_json(out, j);
  return kExitOk;
}

struct EvalArgs {
  std::string pred;
  std::string gt;
  std::string mode = "two-class";
  std::string split;
  int classes = 2;
  int weed_class = 1;
  double conf = 0.25;
  std::string out;
};

inline int cmd_eval(const EvalArgs& a, const Globals& g, std::ostream& out) {
  DatasetManifest m = load_manifest(a.gt);
  std::vector<std::string> ids;
  std::vector<std::vector<GtBox>> gts;
  for (const auto& e : m.entries) {
    if (!a.split.empty() && e.split != a.split) continue;
    ids.push_back(e.id);
    gts.push_back(e.labeled() ? to_gt_boxes(parse_labels(read_text_file(m.resolve(e.label_path)), a.classes))
                              : std::vector<GtBox>{});
  }
  if (ids.empty()) throw DegenerateDataError("no ground-truth images selected");
  auto set = make_eval_set(ids, gts, read_predictions(a.pred, ids));
  auto [scored, k] = apply_eval_mode(std::move(set), parse_eval_mode(a.mode), a.classes, a.weed_class);
  auto j = to_json(evaluate(scored, k, a.conf));
  j["mode"] = a.mode;
  j["images"] = ids.size();
  if (!a.out.empty() || !g.out_dir.empty()) write_json_file(j, out_path(a.out, g, "eval.json"));
  print_json(out, j);
  return kExitOk;
}

struct CompareArgs {
  std::vector<std::string> runs;
  std::string metric = "mAP50";
  std::string out;
};

// Rows of every table ranked by the chosen metric, best first.
inline nlohmann::json compare_json(const ExperimentReport& rep, const std::string& metric) {
  const auto& cols = report_metric_columns();
  if (std::find(cols.begin(), cols.end(), metric) == cols.end()) throw ConfigError("unknown metric '" + metric + "'");
  nlohmann::json tables = nlohmann::json::array();
  for (const auto& t : rep.tables) {
    std::vector<const ReportRow*> rows;
    for (const auto& r : t.rows) rows.push_back(&r);
    std::stable_sort(rows.begin(), rows.end(),
                     [&](const ReportRow* x, const ReportRow* y) { return x->mean.at(metric) > y->mean.at(metric); });
    nlohmann::json ranking = nlohmann::json::array();
    for (const auto* r : rows) {
      nlohmann::json row = {{"model", r->model}, {"mean", r->mean.at(metric)}, {"values", r->values.at(metric)},
                            {"replications", r->replications}};
      if (t.has_cld) row["cld"] = r->letters.at(metric);
      ranking.push_back(std::move(row));
    }
    tables.push_back({{"dataset", t.dataset}, {"ranking", ranking}, {"notes", t.notes}});
  }
  return {{"metric", metric}, {"tables", tables}, {"report", to_json(rep)}};
}

inline std::vector<fs::path> to_paths(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

inline int cmd_compare(const CompareArgs& a, const Globals& g, std::ostream& out) {
  auto j = compare_json(build_report(to_paths(a.runs)), a.metric);
  if (!a.out.empty() || !g.out_dir.empty()) write_json_file(j, out_path(a.out, g, "compare.json"));
  print_json(out, j);
  return kExitOk;
}

struct ReportArgs {
  std::vector<std::string> runs;
  std::string out;
};

inline int cmd_report(const ReportArgs& a, const Globals& g, std::ostream& out) {
  auto rep = build_report(to_paths(a.runs));
  fs::path dir = out_path(a.out, g, "report");
  fs::create_directories(dir);
  write_json_file(to_json(rep), dir / "report.json");
  write_text_file(to_csv(rep), dir / "report.csv");
  out << to_csv(rep);
  return kExitOk;
}

// Entry point shared by the weedet binary and the tests. Usage errors exit
// 2, module errors 1.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Globals g;
  try {
    g = globals_from_env();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  CLI::App app{"weedet: dual-branch weed detection toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--workers", g.workers, "worker threads (1 = deterministic single-worker path)")
      ->check(CLI::PositiveNumber);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "generate a synthetic blob dataset");
  synth->add_option("--seed", sa.seed);
  synth->add_option("--n", sa.n, "number of images")->check(CLI::PositiveNumber);
  synth->add_option("--size", sa.size, "image side in pixels");
  synth->add_option("--split", sa.split, "train:val:test ratios");
  synth->add_option("--out", sa.out, "output directory");

  CurateArgs ca;
  auto* curate = app.add_subcommand("curate", "run the curation pipeline");
  curate->add_option("--config", ca.config, "curation config JSON");
  curate->add_option("--data", ca.data, "source manifests")->required();
  curate->add_option("--checkpoint", ca.checkpoint, "detector checkpoint whose ViT embeds images");
  curate->add_option("--out", ca.out, "output directory");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train a detector");
  train->add_option("--config", ta.config, "detector + training config JSON");
  train->add_option("--data", ta.data, "dataset manifest")->required();
  train->add_option("--out", ta.out, "run directory");
  train->add_option("--name", ta.name, "model name in reports");
  train->add_flag("!--no-latency", ta.latency, "skip the latency measurement");

  ProbeArgs pa;
  auto* probe = app.add_subcommand("probe", "linear probe on frozen ViT features");
  probe->add_option("--checkpoint", pa.checkpoint)->required();
  probe->add_option("--data", pa.data, "labeled manifest; every box becomes a sample")->required();
  probe->add_option("--split", pa.split, "train:test ratio");
  probe->add_option("--seed", pa.seed);
  probe->add_option("--pooling", pa.pooling, "cls or mean");
  probe->add_option("--class-names", pa.class_names)->delimiter(',');
  probe->add_option("--weed-ids", pa.weed_ids, "class ids in the weed group")->delimiter(',');
  probe->add_option("--epochs", pa.probe.epochs);
  probe->add_option("--batch", pa.probe.batch_size);
  probe->add_option("--lr", pa.probe.lr);
  probe->add_option("--out", pa.out, "report JSON path");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "score prediction files against ground truth");
  eval->add_option("--pred", ea.pred, "directory of <image_id>.json detection lists")->required();
  eval->add_option("--gt", ea.gt, "ground-truth manifest")->required();
  eval->add_option("--mode", ea.mode)->check(CLI::IsMember({"two-class", "weed-only"}));
  eval->add_option("--split", ea.split, "only score entries of this split");
  eval->add_option("--classes", ea.classes);
  eval->add_option("--weed-class", ea.weed_class);
  eval->add_option("--conf", ea.conf, "confidence threshold for P/R");
  eval->add_option("--out", ea.out, "report JSON path");

  CompareArgs cpa;
  auto* compare = app.add_subcommand("compare", "rank runs by a metric");
  compare->add_option("--runs", cpa.runs, "run directories")->required();
  compare->add_option("--metric", cpa.metric);
  compare->add_option("--out", cpa.out, "JSON path");

  ReportArgs ra;
  auto* report = app.add_subcommand("report", "ablation table with significance letters");
  report->add_option("--runs", ra.runs, "run directories")->required();
  report->add_option("--out", ra.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  try {
    if (synth->parsed()) return cmd_synth(sa, g, out);
    if (curate->parsed()) return cmd_curate(ca, g, out);
    if (train->parsed()) return cmd_train(ta, g, out, err);
    if (probe->parsed()) return cmd_probe(pa, g, out);
    if (eval->parsed()) return cmd_eval(ea, g, out);
    if (compare->parsed()) return cmd_compare(cpa, g, out);
    if (report->parsed()) return cmd_report(ra, g, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace weedet::cli
