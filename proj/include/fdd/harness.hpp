#pragma once

// Experiment protocols: sensitivity to fixed disturbances, consistency along
// an intensity ladder, and agreement of model rankings with human error.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fdd/disturbance.hpp"
#include "fdd/error.hpp"
#include "fdd/hash.hpp"
#include "fdd/pipeline.hpp"
#include "fdd/rng.hpp"

namespace fdd {

// ---------------------------------------------------------------------------
// Correlation.

/// Pearson r, or nullopt when either series has zero variance.
inline std::optional<double> pearson(std::span<const double> x,
                                     std::span<const double> y) {
  if (x.size() != y.size())
    detail::throw_dimension("pearson: series lengths differ");
  if (x.size() < 2) throw InputError("pearson: need at least 2 measurements");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0 || syy == 0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

struct CorrelationMatrix {
  std::vector<std::string> names;
  std::vector<std::vector<std::optional<double>>> r;  // nullopt: undefined
};

/// Pairwise Pearson r between rows (one row of measurements per metric).
inline CorrelationMatrix pearson_matrix(
    const std::vector<std::string>& names,
    const std::vector<std::vector<double>>& rows) {
  if (names.size() != rows.size())
    detail::throw_dimension("pearson_matrix: names/rows mismatch");
  for (const auto& row : rows) {
    if (row.size() < 3)
      throw InputError("pearson_matrix: need at least 3 measurements per metric");
    if (row.size() != rows.front().size())
      detail::throw_dimension("pearson_matrix: ragged score table");
  }
  CorrelationMatrix m{names, {}};
  m.r.assign(rows.size(), std::vector<std::optional<double>>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = i; j < rows.size(); ++j) {
      auto v = pearson(rows[i], rows[j]);
      if (i == j && v) v = 1.0;
      m.r[i][j] = m.r[j][i] = v;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Model ranking.

struct RankingRecord {
  std::string model;
  std::map<std::string, double> scores;  // metric -> distance (lower = better)
  std::optional<double> human_error;     // fraction judged implausible
};

struct MetricRanking {
  std::string metric;
  std::vector<std::string> order;  // best to worst
  std::optional<double> pearson_r;  // vs human error
  std::optional<bool> agrees_with_human;
};

struct RankingResult {
  std::vector<MetricRanking> metrics;
  std::optional<std::vector<std::string>> human_order;
  /// Metric pairs whose orders differ.
  std::vector<std::pair<std::string, std::string>> disagreements;
};

/// Models sorted by ascending value; ties break on model name.
inline std::vector<std::string> rank_order(
    std::vector<std::pair<std::string, double>> values) {
  std::sort(values.begin(), values.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second < b.second;
    return a.first < b.first;
  });
  std::vector<std::string> out;
  for (auto& v : values) out.push_back(std::move(v.first));
  return out;
}

inline RankingResult model_ranking(const std::vector<RankingRecord>& records) {
  if (records.size() < 3)
    throw InputError("model_ranking: need at least 3 models, got " +
                     std::to_string(records.size()));
  const bool human = records.front().human_error.has_value();
  for (const auto& r : records) {
    if (r.human_error.has_value() != human)
      throw InputError("model_ranking: human_error must be given for all models or none");
    if (r.human_error && !(*r.human_error >= 0 && *r.human_error <= 1))
      throw InputError("model_ranking: human_error for " + r.model +
                       " is outside [0, 1]");
  }
  std::vector<std::string> metrics;
  for (const auto& [name, _] : records.front().scores) metrics.push_back(name);
  for (const auto& r : records)
    for (const auto& m : metrics)
      if (!r.scores.contains(m))
        throw InputError("model_ranking: model " + r.model + " has no " + m +
                         " score");

  RankingResult out;
  std::vector<double> errors;
  if (human) {
    std::vector<std::pair<std::string, double>> h;
    for (const auto& r : records) {
      h.emplace_back(r.model, *r.human_error);
      errors.push_back(*r.human_error);
    }
    out.human_order = rank_order(std::move(h));
  }
  for (const auto& m : metrics) {
    MetricRanking mr;
    mr.metric = m;
    std::vector<std::pair<std::string, double>> v;
    std::vector<double> scores;
    for (const auto& r : records) {
      v.emplace_back(r.model, r.scores.at(m));
      scores.push_back(r.scores.at(m));
    }
    mr.order = rank_order(std::move(v));
    if (human) {
      mr.pearson_r = pearson(scores, errors);
      mr.agrees_with_human = mr.order == *out.human_order;
    }
    out.metrics.push_back(std::move(mr));
  }
  for (std::size_t i = 0; i < out.metrics.size(); ++i)
    for (std::size_t j = i + 1; j < out.metrics.size(); ++j)
      if (out.metrics[i].order != out.metrics[j].order)
        out.disagreements.emplace_back(out.metrics[i].metric,
                                       out.metrics[j].metric);
  return out;
}

/// Reads "model,metric,score,human_error" rows (header required; the
/// human_error cell may be empty). Records keep first-appearance order.
inline std::vector<RankingRecord> parse_ranking_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InputError("ranking csv: empty input");
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' '))
        cell.pop_back();
      while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
      cells.push_back(cell);
    }
    if (!s.empty() && s.back() == ',') cells.emplace_back();
    return cells;
  };
  const auto header = split(line);
  const std::vector<std::string> expected{"model", "metric", "score", "human_error"};
  if (header != expected)
    throw InputError("ranking csv: header must be model,metric,score,human_error");
  std::vector<RankingRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r" || line.front() == '#') continue;
    auto cells = split(line);
    if (cells.size() == 3) cells.emplace_back();
    if (cells.size() != 4)
      throw InputError("ranking csv line " + std::to_string(line_no) +
                       ": expected 4 columns");
    auto it = std::find_if(records.begin(), records.end(),
                           [&](const auto& r) { return r.model == cells[0]; });
    if (it == records.end()) {
      records.push_back({cells[0], {}, std::nullopt});
      it = records.end() - 1;
    }
    try {
      it->scores[cells[1]] = std::stod(cells[2]);
      if (!cells[3].empty()) {
        const double h = std::stod(cells[3]);
        if (it->human_error && *it->human_error != h)
          throw InputError("ranking csv: conflicting human_error for " + cells[0]);
        it->human_error = h;
      }
    } catch (const std::logic_error&) {
      throw InputError("ranking csv line " + std::to_string(line_no) +
                       ": bad number");
    }
  }
  return records;
}

// ---------------------------------------------------------------------------
// Sensitivity test.

struct NamedDisturbance {
  std::string label;
  DisturbanceSpec spec;
};

/// One level per disturbance: 0.01 for the two noises, 0.25 for mask and
/// swap, and their combination for the mix.
inline std::vector<NamedDisturbance> default_sensitivity_disturbances(
    std::size_t grid = 4) {
  using K = DisturbanceKind;
  return {
      {"salt_pepper", {K::salt_pepper, 0.01, 0.0, 0, grid}},
      {"gaussian", {K::gaussian, 0.01, 0.0, 0, grid}},
      {"patch_mask", {K::patch_mask, 0.25, 0.0, 0, grid}},
      {"patch_swap", {K::patch_swap, 0.25, 0.0, 0, grid}},
      {"mixed", {K::mixed, 0.01, 0.25, 0, grid}},
  };
}

struct SensitivityConfig {
  std::size_t n_groups = 10;
  std::size_t group_size = 300;
  std::vector<NamedDisturbance> disturbances = default_sensitivity_disturbances();
  std::vector<MetricSpec> metrics;
  std::uint64_t seed = 0;
};

struct SensitivityRow {
  std::size_t group;
  std::string disturbance;
  std::string metric;
  double score;
};

struct SummaryRow {
  std::string disturbance;
  std::string metric;
  double mean;
  double stddev;  // sample std across groups
};

struct SensitivityResult {
  std::vector<std::vector<std::size_t>> groups;  // dataset indices per group
  std::vector<SensitivityRow> rows;              // group-major
  std::vector<SummaryRow> summary;
  std::string config_hash;

  double score(std::size_t group, const std::string& disturbance,
               const std::string& metric) const {
    for (const auto& r : rows)
      if (r.group == group && r.disturbance == disturbance && r.metric == metric)
        return r.score;
    throw InputError("no sensitivity score for " + disturbance + "/" + metric);
  }
};

inline std::string canonical_string(const SensitivityConfig& cfg) {
  std::string s = "sensitivity;groups=" + std::to_string(cfg.n_groups) +
                  ";k=" + std::to_string(cfg.group_size) +
                  ";seed=" + std::to_string(cfg.seed);
  for (const auto& d : cfg.disturbances)
    s += ";disturb[" + d.label + "]=" + to_string(d.spec);
  for (const auto& m : cfg.metrics) s += ";{" + canonical_string(m) + "}";
  return s;
}

/// Seeded shuffle split into n_groups disjoint groups of group_size.
inline std::vector<std::vector<std::size_t>> split_groups(
    std::size_t dataset_size, std::size_t n_groups, std::size_t group_size,
    std::uint64_t seed) {
  if (n_groups < 2) throw InputError("sensitivity: n_groups must be >= 2");
  if (group_size < 2) throw InputError("sensitivity: group size K must be >= 2");
  if (dataset_size < n_groups * group_size) {
    throw InputError("sensitivity: dataset has " + std::to_string(dataset_size) +
                     " images, need n_groups * K = " +
                     std::to_string(n_groups * group_size));
  }
  std::vector<std::size_t> idx(dataset_size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = make_rng(derive_seed(seed, {0x6e}));
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<std::vector<std::size_t>> groups(n_groups);
  for (std::size_t g = 0; g < n_groups; ++g)
    groups[g].assign(idx.begin() + static_cast<std::ptrdiff_t>(g * group_size),
                     idx.begin() + static_cast<std::ptrdiff_t>((g + 1) * group_size));
  return groups;
}

/// Corrupts every image of a set; each image draws from its own stream
/// derived from (spec seed, base seed, image position).
inline std::vector<Image> disturb_set(std::span<const Image> images,
                                      const DisturbanceSpec& spec,
                                      std::uint64_t base_seed) {
  std::vector<Image> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    DisturbanceSpec s = spec;
    s.seed = derive_seed(spec.seed ^ mix_seed(base_seed), {i});
    out.push_back(apply(images[i], s));
  }
  return out;
}

inline double sample_stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = std::accumulate(v.begin(), v.end(), 0.0) /
                   static_cast<double>(v.size());
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

/// For each group: corrupt it with every disturbance and score each
/// (corrupted group, original group) pair with every metric.
inline SensitivityResult sensitivity_test(std::span<const Image> dataset,
                                          const SensitivityConfig& cfg,
                                          FeatureCache* cache = nullptr) {
  if (cfg.metrics.empty()) throw InputError("sensitivity: no metrics given");
  if (cfg.disturbances.empty()) throw InputError("sensitivity: no disturbances given");
  SensitivityResult res;
  res.groups = split_groups(dataset.size(), cfg.n_groups, cfg.group_size, cfg.seed);
  res.config_hash = sha256_hex(canonical_string(cfg)).substr(0, 16);
  FeatureCache local;
  FeatureCache& c = cache ? *cache : local;
  for (std::size_t g = 0; g < res.groups.size(); ++g) {
    std::vector<Image> original;
    original.reserve(cfg.group_size);
    for (std::size_t i : res.groups[g]) original.push_back(dataset[i]);
    for (std::size_t d = 0; d < cfg.disturbances.size(); ++d) {
      const auto& nd = cfg.disturbances[d];
      const auto corrupted =
          disturb_set(original, nd.spec, derive_seed(cfg.seed, {g, d}));
      for (const auto& m : cfg.metrics) {
        const MetricReport r = evaluate(m, original, corrupted, &c);
        res.rows.push_back({g, nd.label, m.name, r.score});
      }
    }
  }
  for (const auto& nd : cfg.disturbances) {
    for (const auto& m : cfg.metrics) {
      std::vector<double> v;
      for (const auto& r : res.rows)
        if (r.disturbance == nd.label && r.metric == m.name) v.push_back(r.score);
      const double mean =
          std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      res.summary.push_back({nd.label, m.name, mean, sample_stddev(v)});
    }
  }
  return res;
}

inline std::string sensitivity_csv(const SensitivityResult& res,
                                   std::uint64_t seed) {
  std::string out = "# config_hash=" + res.config_hash +
                    ",seed=" + std::to_string(seed) + "\n";
  out += "group,disturbance,metric,score\n";
  for (const auto& r : res.rows)
    out += std::to_string(r.group) + ',' + r.disturbance + ',' + r.metric + ',' +
           format_real(r.score) + '\n';
  return out;
}

inline std::string sensitivity_summary_csv(const SensitivityResult& res) {
  std::string out = "disturbance,metric,mean,std\n";
  for (const auto& s : res.summary)
    out += s.disturbance + ',' + s.metric + ',' + format_real(s.mean) + ',' +
           format_real(s.stddev) + '\n';
  return out;
}

/// Measurements per metric across all (group, disturbance) cells, in row
/// order; the input of the pairwise correlation table.
inline std::pair<std::vector<std::string>, std::vector<std::vector<double>>>
sensitivity_score_table(const SensitivityResult& res) {
  std::vector<std::string> names;
  std::vector<std::vector<double>> rows;
  for (const auto& r : res.rows) {
    auto it = std::find(names.begin(), names.end(), r.metric);
    if (it == names.end()) {
      names.push_back(r.metric);
      rows.emplace_back();
      it = names.end() - 1;
    }
    rows[static_cast<std::size_t>(it - names.begin())].push_back(r.score);
  }
  return {names, rows};
}

// ---------------------------------------------------------------------------
// Consistency with increasing disturbance.

struct ConsistencyRow {
  double level;
  std::string metric;
  double score;
};

struct ConsistencyResult {
  std::vector<ConsistencyRow> rows;  // level-major
  std::map<std::string, bool> verdict;
  std::string config_hash;
};

/// True iff the series never decreases and rises at least once.
inline bool monotone_verdict(const std::vector<double>& scores) {
  bool strict = false;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] < scores[i - 1]) return false;
    if (scores[i] > scores[i - 1]) strict = true;
  }
  return strict;
}

/// Default ladder: {0.25, 0.5, 0.75, 1.0} x a per-kind maximum intensity.
inline std::vector<double> default_ladder(DisturbanceKind kind) {
  double top = 0.5;
  switch (kind) {
    case DisturbanceKind::salt_pepper: top = 0.04; break;
    case DisturbanceKind::gaussian: top = 0.16; break;
    case DisturbanceKind::patch_mask:
    case DisturbanceKind::patch_swap:
    case DisturbanceKind::mixed: top = 0.5; break;
  }
  return {0.25 * top, 0.5 * top, 0.75 * top, top};
}

/// Scores the clean set against its corruption at each ladder level. Every
/// level reuses the same per-image random streams, so higher levels extend
/// rather than redraw the corruption.
inline ConsistencyResult consistency_test(std::span<const Image> images,
                                          DisturbanceSpec base,
                                          const std::vector<double>& ladder,
                                          const std::vector<MetricSpec>& metrics,
                                          std::uint64_t seed,
                                          FeatureCache* cache = nullptr) {
  if (ladder.size() < 2) throw InputError("consistency: ladder needs at least 2 levels");
  for (std::size_t i = 1; i < ladder.size(); ++i)
    if (!(ladder[i] > ladder[i - 1]))
      throw InputError("consistency: ladder must be strictly increasing");
  if (metrics.empty()) throw InputError("consistency: no metrics given");
  ConsistencyResult res;
  std::string canon = "consistency;kind=" + std::string(to_string(base.kind)) +
                      ";base=" + to_string(base) + ";seed=" + std::to_string(seed) +
                      ";k=" + std::to_string(images.size()) + ";ladder=";
  for (double l : ladder) canon += format_real(l) + ' ';
  for (const auto& m : metrics) canon += ";{" + canonical_string(m) + "}";
  res.config_hash = sha256_hex(canon).substr(0, 16);

  FeatureCache local;
  FeatureCache& c = cache ? *cache : local;
  std::map<std::string, std::vector<double>> series;
  for (double level : ladder) {
    DisturbanceSpec s = base;
    if (s.kind == DisturbanceKind::mixed) {
      s.swap_alpha = level;
    } else {
      s.alpha = level;
    }
    const auto corrupted = disturb_set(images, s, seed);
    for (const auto& m : metrics) {
      const double score = evaluate(m, images, corrupted, &c).score;
      res.rows.push_back({level, m.name, score});
      series[m.name].push_back(score);
    }
  }
  for (const auto& [name, v] : series) res.verdict[name] = monotone_verdict(v);
  return res;
}

inline std::string consistency_csv(const ConsistencyResult& res,
                                   std::uint64_t seed) {
  std::string out = "# config_hash=" + res.config_hash +
                    ",seed=" + std::to_string(seed) + "\n";
  out += "level,metric,score,verdict\n";
  for (const auto& r : res.rows)
    out += format_real(r.level) + ',' + r.metric + ',' + format_real(r.score) +
           ',' + (res.verdict.at(r.metric) ? "true" : "false") + '\n';
  return out;
}

}  // namespace fdd
