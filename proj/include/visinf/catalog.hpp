#pragma once

// Planner inputs: DNN profiles, natively available input formats, declared
// cascades and optional calibration predictions; plus generation of the raw
// plan space (single DNNs and cascades) x (formats).

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "visinf/costmodel.hpp"
#include "visinf/csv.hpp"
#include "visinf/dagopt.hpp"

namespace visinf {

class CatalogError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DnnProfile {
  std::string name;
  // Measured execution throughput keyed by batch size.
  std::map<int, double> exec_throughput_by_batch;
  std::map<std::string, double> accuracy_by_format;
  double passthrough{1.0};  // fraction of this model's inputs forwarded to the next stage
  int input_height{224};
  int input_width{224};

  // Throughput at the largest profiled batch size.
  double exec_throughput() const { return exec_throughput_by_batch.rbegin()->second; }
};

enum class Codec { Jpeg, Other };

struct InputFormat {
  std::string name;
  Codec codec{Codec::Jpeg};
  int short_side{0};
  std::optional<int> quality;
  double preproc_throughput{0};
  bool lossless{false};
};

struct CalibrationSet {
  std::vector<std::string> item_ids;
  std::vector<std::string> labels;
  std::map<std::string, std::vector<std::string>> predictions_by_plan;

  std::size_t size() const { return item_ids.size(); }
};

struct Catalog {
  std::vector<DnnProfile> dnns;
  std::vector<InputFormat> formats;
  std::vector<std::vector<std::string>> cascades;
  std::optional<CalibrationSet> calibration;

  const DnnProfile& dnn(const std::string& name) const {
    const auto it = std::find_if(dnns.begin(), dnns.end(), [&](const auto& d) { return d.name == name; });
    if (it == dnns.end()) throw CatalogError("unknown DNN '" + name + "'");
    return *it;
  }
};

// Placement of a linear preprocessing chain: ops [0, split_index) on the
// CPU, [split_index, n) on the accelerator.
struct PlacementSplit {
  int split_index{0};
  double cpu_preproc_throughput{0};
  double accel_overhead_throughput{0};
};

struct PlanConfig {
  std::string id;
  InputFormat format;
  std::vector<std::string> dnn_names;
  costmodel::CascadeSpec cascade;
  dag::PreprocGraph preproc_plan;
  PlacementSplit placement;
  double est_throughput{0};
  double est_accuracy{0};
};

inline void validate(const CalibrationSet& cal) {
  if (cal.labels.size() != cal.item_ids.size()) throw CatalogError("calibration: label count != item count");
  for (const auto& [plan, preds] : cal.predictions_by_plan) {
    if (preds.size() != cal.item_ids.size()) {
      throw CatalogError("calibration: plan '" + plan + "' has " + std::to_string(preds.size()) +
                         " predictions for " + std::to_string(cal.item_ids.size()) + " items");
    }
  }
}

inline void validate(const DnnProfile& d) {
  if (d.name.empty()) throw CatalogError("dnn: empty name");
  if (d.exec_throughput_by_batch.empty()) throw CatalogError("dnn '" + d.name + "': missing exec_throughput");
  for (const auto& [batch, t] : d.exec_throughput_by_batch) {
    if (batch <= 0) throw CatalogError("dnn '" + d.name + "': batch size must be positive");
    if (!(t > 0) || !std::isfinite(t)) {
      throw CatalogError("dnn '" + d.name + "': exec_throughput must be > 0, got " + std::to_string(t));
    }
  }
  for (const auto& [fmt, acc] : d.accuracy_by_format) {
    if (!(acc >= 0 && acc <= 1)) {
      throw CatalogError("dnn '" + d.name + "': accuracy_by_format[" + fmt + "] must be in [0,1], got " +
                         std::to_string(acc));
    }
  }
  if (!(d.passthrough > 0 && d.passthrough <= 1)) {
    throw CatalogError("dnn '" + d.name + "': passthrough must be in (0,1], got " + std::to_string(d.passthrough));
  }
  if (d.input_height <= 0 || d.input_width <= 0) throw CatalogError("dnn '" + d.name + "': input_resolution must be positive");
}

inline void validate(const InputFormat& f) {
  if (f.name.empty()) throw CatalogError("format: empty name");
  if (!(f.preproc_throughput > 0) || !std::isfinite(f.preproc_throughput)) {
    throw CatalogError("format '" + f.name + "': preproc_throughput must be > 0, got " +
                       std::to_string(f.preproc_throughput));
  }
  if (f.short_side <= 0) {
    throw CatalogError("format '" + f.name + "': short_side must be > 0, got " + std::to_string(f.short_side));
  }
}

inline void validate(const Catalog& c) {
  if (c.dnns.empty()) throw CatalogError("catalog must contain >=1 DNN");
  if (c.formats.empty()) throw CatalogError("catalog must contain >=1 format");
  std::set<std::string> names;
  for (const auto& d : c.dnns) {
    validate(d);
    if (!names.insert(d.name).second) throw CatalogError("duplicate DNN name '" + d.name + "'");
  }
  names.clear();
  for (const auto& f : c.formats) {
    validate(f);
    if (!names.insert(f.name).second) throw CatalogError("duplicate format name '" + f.name + "'");
  }
  for (const auto& cas : c.cascades) {
    if (cas.empty()) throw CatalogError("cascade must name >=1 DNN");
    for (const auto& n : cas) (void)c.dnn(n);
  }
  if (c.calibration) validate(*c.calibration);
}

// CSV with header `item_id,label,<plan-id columns...>`.
inline CalibrationSet load_calibration(const std::filesystem::path& path) {
  std::vector<csv::Row> rows;
  try {
    rows = csv::read_file(path);
  } catch (const std::exception& e) {
    throw CatalogError(std::string("calibration: ") + e.what());
  }
  if (rows.empty()) throw CatalogError("calibration: empty file " + path.string());
  const auto& header = rows.front();
  if (header.size() < 2 || header[0] != "item_id" || header[1] != "label") {
    throw CatalogError("calibration: header must start with item_id,label");
  }
  CalibrationSet cal;
  std::vector<std::vector<std::string>*> cols;
  for (std::size_t i = 2; i < header.size(); ++i) {
    auto [it, fresh] = cal.predictions_by_plan.emplace(header[i], std::vector<std::string>{});
    if (!fresh) throw CatalogError("calibration: duplicate plan column '" + header[i] + "'");
    cols.push_back(&it->second);
  }
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != header.size()) {
      throw CatalogError("calibration: row " + std::to_string(r + 1) + " has " + std::to_string(row.size()) +
                         " fields, expected " + std::to_string(header.size()));
    }
    cal.item_ids.push_back(row[0]);
    cal.labels.push_back(row[1]);
    for (std::size_t i = 0; i < cols.size(); ++i) cols[i]->push_back(row[i + 2]);
  }
  validate(cal);
  return cal;
}

inline Catalog catalog_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  Catalog c;
  try {
    for (const auto& d : j.at("dnns")) {
      DnnProfile p;
      p.name = d.at("name").get<std::string>();
      const auto& t = d.at("exec_throughput");
      if (t.is_object()) {
        for (const auto& [batch, v] : t.items()) p.exec_throughput_by_batch[std::stoi(batch)] = v.get<double>();
      } else {
        p.exec_throughput_by_batch[d.value("batch_size", 64)] = t.get<double>();
      }
      if (d.contains("input_resolution")) {
        const auto& r = d.at("input_resolution");
        p.input_height = r.at(0).get<int>();
        p.input_width = r.at(1).get<int>();
      }
      p.passthrough = d.value("passthrough", 1.0);
      if (d.contains("accuracy_by_format")) p.accuracy_by_format = d.at("accuracy_by_format").get<std::map<std::string, double>>();
      c.dnns.push_back(std::move(p));
    }
    for (const auto& f : j.at("formats")) {
      InputFormat fmt;
      fmt.name = f.at("name").get<std::string>();
      const auto codec = f.value("codec", std::string("JPEG"));
      fmt.codec = (codec == "JPEG" || codec == "jpeg") ? Codec::Jpeg : Codec::Other;
      fmt.short_side = f.at("short_side").get<int>();
      if (f.contains("quality") && !f.at("quality").is_null()) fmt.quality = f.at("quality").get<int>();
      fmt.preproc_throughput = f.at("preproc_throughput").get<double>();
      fmt.lossless = f.value("lossless", false);
      c.formats.push_back(std::move(fmt));
    }
    if (j.contains("cascades")) c.cascades = j.at("cascades").get<std::vector<std::vector<std::string>>>();
  } catch (const nlohmann::json::exception& e) {
    throw CatalogError(std::string("catalog parse error: ") + e.what());
  }
  if (j.contains("calibration_path") && !j.at("calibration_path").is_null()) {
    std::filesystem::path p = j.at("calibration_path").get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    c.calibration = load_calibration(p);
  }
  validate(c);
  return c;
}

inline Catalog load_catalog(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CatalogError("cannot open catalog " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw CatalogError("catalog parse error: " + std::string(e.what()));
  }
  return catalog_from_json(j, path.parent_path());
}

// Fraction of calibration items whose prediction under `plan_id` matches
// the ground-truth label.
inline double estimate_accuracy(const std::string& plan_id, const CalibrationSet& cal) {
  const auto it = cal.predictions_by_plan.find(plan_id);
  if (it == cal.predictions_by_plan.end()) throw CatalogError("calibration has no predictions for plan '" + plan_id + "'");
  if (cal.size() == 0) throw CatalogError("calibration set is empty");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < cal.size(); ++i) correct += it->second[i] == cal.labels[i];
  return double(correct) / double(cal.size());
}

inline double estimate_accuracy(const PlanConfig& plan, const CalibrationSet& cal) {
  return estimate_accuracy(plan.id, cal);
}

// Fraction of scores at or above `threshold`.
inline double estimate_passthrough(const std::vector<double>& scores, double threshold) {
  if (scores.empty()) throw std::invalid_argument("estimate_passthrough: empty scores");
  const auto n = std::count_if(scores.begin(), scores.end(), [&](double s) { return s >= threshold; });
  return double(n) / double(scores.size());
}

inline std::string plan_id(const std::vector<std::string>& dnns, const std::string& format) {
  std::string id;
  for (std::size_t i = 0; i < dnns.size(); ++i) id += (i ? "+" : "") + dnns[i];
  return id + "@" + format;
}

// Stage alphas are cumulative: stage j sees the product of the upstream
// models' pass-through rates.
inline costmodel::CascadeSpec cascade_for(const Catalog& c, const std::vector<std::string>& names) {
  std::vector<costmodel::CascadeStage> stages;
  double reach = 1.0;
  for (const auto& n : names) {
    const auto& d = c.dnn(n);
    stages.push_back({d.exec_throughput(), reach});
    reach *= d.passthrough;
  }
  return costmodel::CascadeSpec(std::move(stages));
}

// Canonical preprocessing for feeding `format` into `dnn`, optimized. Sources
// whose short side already falls below the 256/224 resize ratio are resized
// straight to the DNN input.
inline dag::PreprocGraph preproc_plan_for(const InputFormat& format, const DnnProfile& dnn) {
  const int side = format.short_side;
  const int crop_short = std::min(dnn.input_height, dnn.input_width);
  const int standard = static_cast<int>(std::lround(crop_short * 256.0 / 224.0));
  const int resize_short = side >= standard ? standard : crop_short;
  return dag::optimize(dag::canonical_pipeline(side, side, resize_short, dnn.input_height, dnn.input_width));
}

inline PlanConfig make_plan(const Catalog& c, const std::vector<std::string>& names, const InputFormat& fmt) {
  PlanConfig p;
  p.id = plan_id(names, fmt.name);
  p.format = fmt;
  p.dnn_names = names;
  p.cascade = cascade_for(c, names);
  p.preproc_plan = preproc_plan_for(fmt, c.dnn(names.front()));
  p.est_throughput = costmodel::throughput_min(fmt.preproc_throughput, p.cascade).value;
  p.placement = {static_cast<int>(p.preproc_plan.ops.size()), fmt.preproc_throughput,
                 costmodel::throughput_exec_only(p.cascade).value};
  if (c.calibration && c.calibration->predictions_by_plan.count(p.id)) {
    p.est_accuracy = estimate_accuracy(p.id, *c.calibration);
  } else if (names.size() == 1) {
    const auto& acc = c.dnn(names.front()).accuracy_by_format;
    const auto it = acc.find(fmt.name);
    if (it == acc.end()) throw CatalogError("no accuracy for plan '" + p.id + "' (neither calibration nor accuracy_by_format)");
    p.est_accuracy = it->second;
  } else {
    throw CatalogError("cascade plan '" + p.id + "' needs calibration predictions");
  }
  return p;
}

// One plan per (DNN, format) and per (declared cascade, format).
inline std::vector<PlanConfig> generate_plans(const Catalog& c) {
  validate(c);
  std::vector<PlanConfig> plans;
  plans.reserve((c.dnns.size() + c.cascades.size()) * c.formats.size());
  for (const auto& fmt : c.formats) {
    for (const auto& d : c.dnns) plans.push_back(make_plan(c, {d.name}, fmt));
    for (const auto& cas : c.cascades) plans.push_back(make_plan(c, cas, fmt));
  }
  return plans;
}

}  // namespace visinf
