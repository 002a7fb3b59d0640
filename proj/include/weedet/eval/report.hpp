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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "weedet/dataio/manifest.hpp"
#include "weedet/eval/tukey.hpp"

namespace weedet {

inline const std::vector<std::string>& report_metric_columns() {
  static const std::vector<std::string> cols = {"Precision", "Recall", "mAP50", "mAP50:95", "Lat.", "Param."};
  return cols;
}

inline const std::vector<std::string>& report_component_columns() {
  static const std::vector<std::string> cols = {"Y-H", "Y-H*", "Y-B", "ViT", "STA", "Align"};
  return cols;
}

// One completed run as recorded in <run>/metrics.json.
struct RunRecord {
  std::filesystem::path dir;
  std::string model;
  std::string dataset;
  std::map<std::string, bool> components;
  std::map<std::string, double> metrics;
};

inline RunRecord run_record_from_json(const nlohmann::json& j, std::filesystem::path dir = {}) {
  RunRecord r;
  r.dir = std::move(dir);
  try {
    r.model = j.at("model").get<std::string>();
    r.dataset = j.value("dataset", std::string("default"));
    for (const auto& c : report_component_columns()) r.components[c] = j.at("components").value(c, false);
    for (const auto& m : report_metric_columns()) r.metrics[m] = j.at("metrics").at(m).get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("run record: " + std::string(e.what()));
  }
  return r;
}

inline nlohmann::json to_json(const RunRecord& r) {
  nlohmann::json comps = nlohmann::json::object(), mets = nlohmann::json::object();
  for (const auto& [k, v] : r.components) comps[k] = v;
  for (const auto& [k, v] : r.metrics) mets[k] = v;
  return {{"model", r.model}, {"dataset", r.dataset}, {"components", comps}, {"metrics", mets}};
}

struct ReportRow {
  std::string model;
  std::map<std::string, bool> components;
  std::size_t replications = 0;
  std::map<std::string, double> mean;
  std::map<std::string, std::vector<double>> values;
  std::map<std::string, std::string> letters;  // per metric, when computed
};

struct ReportTable {
  std::string dataset;
  std::vector<ReportRow> rows;
  bool has_cld = false;
  std::vector<std::string> notes;
};

struct ExperimentReport {
  std::vector<ReportTable> tables;
  std::vector<std::string> absent;  // run dirs without usable artifacts
};

// Groups runs by dataset then model (replications); CLD letters are added
// per metric column when every model in a table has the same number (>= 2)
// of replications.
inline ExperimentReport build_report_from_records(const std::vector<RunRecord>& runs) {
  ExperimentReport rep;
  std::vector<std::string> dataset_order;
  std::map<std::string, std::vector<const RunRecord*>> by_dataset;
  for (const auto& r : runs) {
    if (!by_dataset.count(r.dataset)) dataset_order.push_back(r.dataset);
    by_dataset[r.dataset].push_back(&r);
  }
  for (const auto& ds : dataset_order) {
    ReportTable table;
    table.dataset = ds;
    std::map<std::string, std::size_t> row_index;
    for (const RunRecord* r : by_dataset[ds]) {
      auto [it, inserted] = row_index.emplace(r->model, table.rows.size());
      if (inserted) {
        ReportRow row;
        row.model = r->model;
        row.components = r->components;
        table.rows.push_back(std::move(row));
      }
      ReportRow& row = table.rows[it->second];
      ++row.replications;
      for (const auto& [k, v] : r->metrics) row.values[k].push_back(v);
    }
    for (auto& row : table.rows)
      for (const auto& m : report_metric_columns()) {
        double s = 0.0;
        for (double v : row.values[m]) s += v;
        row.mean[m] = s / static_cast<double>(row.replications);
      }
    bool balanced = table.rows.size() >= 2;
    for (const auto& row : table.rows)
      balanced = balanced && row.replications >= 2 && row.replications == table.rows[0].replications;
    if (balanced) {
      table.has_cld = true;
      for (const auto& m : report_metric_columns()) {
        ReplicationTable rt;
        rt.metric = m;
        for (const auto& row : table.rows) {
          rt.models.push_back(row.model);
          rt.values.push_back(row.values.at(m));
        }
        auto res = tukey_hsd_cld(rt);
        for (auto& row : table.rows) row.letters[m] = res.letters.at(row.model);
      }
    } else if (table.rows.size() >= 2) {
      table.notes.push_back("no CLD: replications are missing or unbalanced");
    }
    rep.tables.push_back(std::move(table));
  }
  return rep;
}

inline ExperimentReport build_report(const std::vector<std::filesystem::path>& run_dirs) {
  std::vector<RunRecord> runs;
  std::vector<std::string> absent;
  for (const auto& d : run_dirs) {
    try {
      runs.push_back(run_record_from_json(read_json_file(d / "metrics.json"), d));
    } catch (const Error&) {
      absent.push_back(d.string());
    }
  }
  ExperimentReport rep = build_report_from_records(runs);
  rep.absent = std::move(absent);
  return rep;
}

inline nlohmann::json to_json(const ExperimentReport& rep) {
  nlohmann::json tables = nlohmann::json::array();
  for (const auto& t : rep.tables) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : t.rows) {
      nlohmann::json row = {{"Model", r.model}, {"replications", r.replications}};
      for (const auto& c : report_component_columns()) row[c] = r.components.count(c) ? r.components.at(c) : false;
      for (const auto& m : report_metric_columns()) row[m] = r.mean.at(m);
      if (t.has_cld) {
        nlohmann::json letters = nlohmann::json::object();
        for (const auto& [m, l] : r.letters) letters[m] = l;
        row["cld"] = letters;
      }
      rows.push_back(std::move(row));
    }
    tables.push_back({{"dataset", t.dataset},
                      {"columns", report_metric_columns()},
                      {"components", report_component_columns()},
                      {"rows", rows},
                      {"notes", t.notes}});
  }
  return {{"tables", tables}, {"absent", rep.absent}};
}

// One CSV block per dataset. Metric cells carry CLD superscripts as a
// trailing " <letters>" when computed.
inline std::string to_csv(const ExperimentReport& rep) {
  std::ostringstream out;
  for (const auto& t : rep.tables) {
    out << "Dataset," << t.dataset << "\n";
    out << "Model";
    for (const auto& c : report_component_columns()) out << ',' << c;
    for (const auto& m : report_metric_columns()) out << ',' << m;
    out << "\n";
    for (const auto& r : t.rows) {
      out << r.model;
      for (const auto& c : report_component_columns())
        out << ',' << (r.components.count(c) && r.components.at(c) ? "x" : "");
      for (const auto& m : report_metric_columns()) {
        char buf[64];
        std::snprintf(buf, sizeof buf, m == "Param." ? "%.0f" : "%.1f", r.mean.at(m));
        out << ',' << buf;
        if (t.has_cld) out << ' ' << r.letters.at(m);
      }
      out << "\n";
    }
  }
  return out.str();
}

}  // namespace weedet
