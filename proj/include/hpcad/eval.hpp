#pragma once

#include <algorithm>
#include <cstddef>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hpcad/error.hpp"
#include "hpcad/features.hpp"
#include "hpcad/trace.hpp"

namespace hpcad {

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // score at or above which a sample is flagged
};

struct RocResult {
  std::vector<RocPoint> points;  // from (0,0) to (1,1), fpr/tpr non-decreasing
  double auc = 0.0;
};

/// ROC over anomaly scores: sweep every distinct score as a threshold,
/// descending. Equal scores collapse into a single step, so ties trace a
/// diagonal segment and the trapezoidal AUC equals the pairwise
/// P(mal > clean) + P(tie)/2 statistic.
inline RocResult roc(std::span<const double> clean_scores,
                     std::span<const double> mal_scores) {
  if (clean_scores.empty() || mal_scores.empty()) {
    throw Error("roc: need at least one score per class");
  }
  std::vector<double> clean(clean_scores.begin(), clean_scores.end());
  std::vector<double> mal(mal_scores.begin(), mal_scores.end());
  std::sort(clean.begin(), clean.end(), std::greater<>());
  std::sort(mal.begin(), mal.end(), std::greater<>());
  const double nc = static_cast<double>(clean.size());
  const double nm = static_cast<double>(mal.size());

  RocResult result;
  result.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t ci = 0, mi = 0, fp = 0, tp = 0;
  while (ci < clean.size() || mi < mal.size()) {
    double value;
    if (ci < clean.size() && mi < mal.size()) {
      value = std::max(clean[ci], mal[mi]);
    } else if (ci < clean.size()) {
      value = clean[ci];
    } else {
      value = mal[mi];
    }
    while (ci < clean.size() && clean[ci] == value) {
      ++ci;
      ++fp;
    }
    while (mi < mal.size() && mal[mi] == value) {
      ++mi;
      ++tp;
    }
    result.points.push_back({static_cast<double>(fp) / nc,
                             static_cast<double>(tp) / nm, value});
  }
  double auc = 0.0;
  for (std::size_t i = 1; i < result.points.size(); ++i) {
    auc += (result.points[i].fpr - result.points[i - 1].fpr) *
           (result.points[i].tpr + result.points[i - 1].tpr) * 0.5;
  }
  result.auc = auc;
  return result;
}

/// Best reachable TPR while spending at most fpr_budget, with the threshold
/// that realizes it.
inline std::pair<double, double> tpr_at_fpr(const RocResult& roc_result,
                                            double fpr_budget) {
  if (fpr_budget < 0.0 || fpr_budget > 1.0) {
    throw Error("tpr_at_fpr: budget outside [0,1]");
  }
  double best_tpr = 0.0;
  double best_threshold = std::numeric_limits<double>::infinity();
  for (const RocPoint& p : roc_result.points) {
    if (p.fpr <= fpr_budget && p.tpr >= best_tpr) {
      best_tpr = p.tpr;
      best_threshold = p.threshold;
    }
  }
  return {best_tpr, best_threshold};
}

/// Epoch-to-exploit aggregation: alert when enough epochs in a sliding
/// window score above the threshold.
struct DetectionPolicy {
  double threshold = 0.0;
  std::size_t window = 20;
  std::size_t min_flagged = 3;
};

struct AlertWindow {
  std::size_t begin = 0;  // inclusive epoch offset
  std::size_t end = 0;    // exclusive

  bool operator==(const AlertWindow&) const = default;
};

inline std::vector<AlertWindow> detect_exploit(std::span<const double> scores,
                                               const DetectionPolicy& policy) {
  if (policy.window < 1 || policy.min_flagged < 1 ||
      policy.min_flagged > policy.window) {
    throw Error("detect_exploit: need 1 <= min_flagged <= window");
  }
  std::vector<AlertWindow> alerts;
  if (scores.empty()) return alerts;
  const std::size_t w = std::min(policy.window, scores.size());

  std::size_t flagged = 0;
  for (std::size_t i = 0; i < w; ++i) flagged += scores[i] > policy.threshold;
  for (std::size_t start = 0; start + w <= scores.size(); ++start) {
    if (start > 0) {
      flagged -= scores[start - 1] > policy.threshold;
      flagged += scores[start + w - 1] > policy.threshold;
    }
    if (flagged >= policy.min_flagged) {
      if (!alerts.empty() && alerts.back().end >= start) {
        alerts.back().end = start + w;  // overlapping alerts merge
      } else {
        alerts.push_back({start, start + w});
      }
    }
  }
  return alerts;
}

/// Scores of one trained model on one scored data set, keyed for reporting.
struct ModelRunScores {
  std::string set_label;
  std::string mode;  // "temporal" | "non-temporal"
  std::vector<double> clean;
  std::map<StageLabel, std::vector<double>> staged;
};

struct ComparisonRow {
  std::string set_label;
  StageLabel stage = StageLabel::Stage1;
  std::string mode;
  double auc = 0.0;
};

/// AUC per (event set, stage, mode), one row each, sorted for stable output.
inline std::vector<ComparisonRow> compare_models(const std::vector<ModelRunScores>& runs) {
  if (runs.empty()) throw Error("compare_models: no runs");
  std::vector<ComparisonRow> rows;
  for (const ModelRunScores& run : runs) {
    for (const auto& [stage, scores] : run.staged) {
      if (scores.empty()) continue;
      rows.push_back({run.set_label, stage, run.mode, roc(run.clean, scores).auc});
    }
  }
  std::sort(rows.begin(), rows.end(), [](const ComparisonRow& a, const ComparisonRow& b) {
    if (a.set_label != b.set_label) return a.set_label < b.set_label;
    if (a.mode != b.mode) return a.mode < b.mode;
    return a.stage < b.stage;
  });
  return rows;
}

inline void write_report_csv(std::span<const ComparisonRow> rows, std::ostream& out) {
  out << "set,stage,mode,auc\n";
  for (const ComparisonRow& row : rows) {
    out << row.set_label << ',' << stage_name(row.stage) << ',' << row.mode << ','
        << detail::fmt_double(row.auc) << '\n';
  }
  if (!out) throw Error("write_report_csv: stream write failed");
}

inline void write_roc_csv(const RocResult& result, std::ostream& out) {
  out << "fpr,tpr,threshold\n";
  for (const RocPoint& p : result.points) {
    out << detail::fmt_double(p.fpr) << ',' << detail::fmt_double(p.tpr) << ','
        << detail::fmt_double(p.threshold) << '\n';
  }
  if (!out) throw Error("write_roc_csv: stream write failed");
}

/// One scored vector: position, label carried through from extraction, score.
struct ScoredSample {
  StageLabel stage = StageLabel::Clean;
  double score = 0.0;
};

inline void write_scores_csv(std::span<const ScoredSample> scores, std::ostream& out) {
  out << "index,stage,score\n";
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out << i << ',' << stage_name(scores[i].stage) << ','
        << detail::fmt_double(scores[i].score) << '\n';
  }
  if (!out) throw Error("write_scores_csv: stream write failed");
}

inline std::vector<ScoredSample> read_scores_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("read_scores_csv: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "index,stage,score") {
    throw Error("read_scores_csv: line 1: expected header 'index,stage,score'");
  }
  std::vector<ScoredSample> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split(line, ',');
    const std::string where = "read_scores_csv: line " + std::to_string(line_no) + ": ";
    if (fields.size() != 3) throw Error(where + "expected 3 fields");
    const auto stage = parse_stage(fields[1]);
    if (!stage) throw Error(where + "unknown stage '" + std::string(fields[1]) + "'");
    try {
      out.push_back({*stage, std::stod(std::string(fields[2]))});
    } catch (const std::exception&) {
      throw Error(where + "malformed score '" + std::string(fields[2]) + "'");
    }
  }
  return out;
}

/// Pools scored samples by label: clean rows versus each stage present.
inline ModelRunScores pool_scores(std::span<const ScoredSample> scores,
                                  std::string set_label, std::string mode) {
  ModelRunScores run;
  run.set_label = std::move(set_label);
  run.mode = std::move(mode);
  for (const ScoredSample& s : scores) {
    if (s.stage == StageLabel::Clean) {
      run.clean.push_back(s.score);
    } else {
      run.staged[s.stage].push_back(s.score);
    }
  }
  return run;
}

}  // namespace hpcad
