#pragma once

// JSON forms of reports and experiment results.

#include <string>

#include <json.hpp>

#include "fdd/harness.hpp"
#include "fdd/pipeline.hpp"

namespace fdd::io {

using nlohmann::json;

inline json to_json(const MetricReport& r) {
  json j;
  j["metric"] = r.metric;
  if (!r.label.empty()) j["label"] = r.label;
  j["score"] = r.score;
  j["n_real"] = r.n_real;
  j["n_gen"] = r.n_gen;
  j["config_hash"] = r.config_hash;
  j["seed"] = r.seed;
  j["wall_time_s"] = r.wall_time_s;
  return j;
}

/// One compact JSON object per line.
inline std::string to_json_line(const MetricReport& r) {
  return to_json(r).dump() + '\n';
}

inline json optional_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

inline json to_json(const RankingResult& res, const std::string& config_hash) {
  json j;
  j["config_hash"] = config_hash;
  j["human_order"] = res.human_order ? json(*res.human_order) : json(nullptr);
  json metrics = json::array();
  for (const auto& m : res.metrics) {
    json e;
    e["metric"] = m.metric;
    e["order"] = m.order;
    e["pearson_r"] = optional_json(m.pearson_r);
    e["agrees_with_human"] =
        m.agrees_with_human ? json(*m.agrees_with_human) : json(nullptr);
    metrics.push_back(std::move(e));
  }
  j["metrics"] = std::move(metrics);
  json dis = json::array();
  for (const auto& [a, b] : res.disagreements) dis.push_back({a, b});
  j["disagreements"] = std::move(dis);
  return j;
}

inline json to_json(const CorrelationMatrix& m) {
  json j;
  j["metrics"] = m.names;
  json rows = json::array();
  for (const auto& row : m.r) {
    json r = json::array();
    for (const auto& v : row) r.push_back(optional_json(v));
    rows.push_back(std::move(r));
  }
  j["pearson"] = std::move(rows);
  return j;
}

}  // namespace fdd::io
