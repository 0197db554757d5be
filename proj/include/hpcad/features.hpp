#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "hpcad/error.hpp"
#include "hpcad/trace.hpp"
#include "hpcad/trace_io.hpp"
#include "hpcad/transform.hpp"

namespace hpcad {

enum class CategoryFilter { Architectural, Microarchitectural, Both };

constexpr std::string_view category_filter_name(CategoryFilter f) {
  switch (f) {
    case CategoryFilter::Architectural: return "architectural";
    case CategoryFilter::Microarchitectural: return "microarchitectural";
    case CategoryFilter::Both: return "both";
  }
  return "?";
}

inline std::optional<CategoryFilter> parse_category_filter(std::string_view token) {
  if (token == "architectural") return CategoryFilter::Architectural;
  if (token == "microarchitectural") return CategoryFilter::Microarchitectural;
  if (token == "both") return CategoryFilter::Both;
  return std::nullopt;
}

/// Two-class Fisher score: squared separation of the class means from the
/// pooled mean over the summed unbiased within-class variances. Larger means
/// more discriminative. Two constant classes with distinct means have
/// unbounded separation and score +infinity.
inline double f_score(std::span<const double> clean_values,
                      std::span<const double> mal_values) {
  if (clean_values.size() < 2 || mal_values.size() < 2) {
    throw Error("f_score: each class needs at least 2 values");
  }
  double clean_sum = 0.0;
  for (double v : clean_values) clean_sum += v;
  double mal_sum = 0.0;
  for (double v : mal_values) mal_sum += v;
  const double clean_mean = clean_sum / static_cast<double>(clean_values.size());
  const double mal_mean = mal_sum / static_cast<double>(mal_values.size());
  const double grand_mean =
      (clean_sum + mal_sum) /
      static_cast<double>(clean_values.size() + mal_values.size());

  auto unbiased_var = [](std::span<const double> values, double m) {
    double ss = 0.0;
    for (double v : values) ss += (v - m) * (v - m);
    return ss / static_cast<double>(values.size() - 1);
  };
  const double numerator = (clean_mean - grand_mean) * (clean_mean - grand_mean) +
                           (mal_mean - grand_mean) * (mal_mean - grand_mean);
  const double denominator =
      unbiased_var(clean_values, clean_mean) + unbiased_var(mal_values, mal_mean);
  if (denominator <= 0.0) {
    return numerator > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  }
  return numerator / denominator;
}

struct RankedEvent {
  EventKind event;
  double score;
};

struct FScoreRanking {
  StageLabel stage = StageLabel::Stage1;
  CategoryFilter category = CategoryFilter::Both;
  std::vector<RankedEvent> ranked;  // descending score, name-order tie break
};

namespace detail {

inline bool category_matches(EventKind kind, CategoryFilter filter) {
  const EventCategory cat = event_category(kind);
  switch (filter) {
    case CategoryFilter::Architectural:
      return cat == EventCategory::Architectural;
    case CategoryFilter::Microarchitectural:
      // derived ratios are built from microarchitectural-style counters and
      // ride along in this bucket for ranking display
      return cat == EventCategory::Microarchitectural || cat == EventCategory::Derived;
    case CategoryFilter::Both:
      return true;
  }
  return false;
}

// Per-sample value used for ranking: base kinds on the fitted power
// transform, derived kinds as their raw ratio (already in [0,1]).
inline double ranking_value(const Sample& sample, EventKind kind,
                            const TransformParams& params) {
  if (is_derived(kind)) return derived_value(sample, kind);
  const auto p = params.events.find(kind);
  if (p == params.events.end()) {
    throw Error("rank_events: no fitted parameters for event " +
                std::string(event_name(kind)));
  }
  const auto c = sample.counts.find(kind);
  if (c == sample.counts.end()) {
    throw Error("rank_events: sample lacks event " + std::string(event_name(kind)));
  }
  return transform_value(static_cast<double>(c->second), p->second);
}

}  // namespace detail

/// Scores every candidate event of the category by how well it separates the
/// clean trace from the staged samples with the given label, descending.
inline FScoreRanking rank_events(const Trace& clean, const Trace& staged,
                                 StageLabel stage, CategoryFilter category,
                                 const TransformParams& params) {
  std::size_t staged_count = 0;
  for (const Sample& s : staged.samples) {
    if (s.stage == stage) ++staged_count;
  }
  if (staged_count < 2) {
    throw Error("rank_events: staged trace has fewer than 2 samples labeled " +
                std::string(stage_name(stage)));
  }

  FScoreRanking ranking;
  ranking.stage = stage;
  ranking.category = category;
  for (EventKind kind : all_event_kinds()) {
    if (!detail::category_matches(kind, category)) continue;
    if (is_derived(kind)) {
      const auto parts = derived_parts(kind);
      const bool available =
          std::find(clean.event_columns.begin(), clean.event_columns.end(),
                    parts->numerator) != clean.event_columns.end() &&
          std::find(clean.event_columns.begin(), clean.event_columns.end(),
                    parts->denominator) != clean.event_columns.end();
      if (!available) continue;
    } else if (std::find(clean.event_columns.begin(), clean.event_columns.end(),
                         kind) == clean.event_columns.end()) {
      continue;
    }
    std::vector<double> clean_values;
    clean_values.reserve(clean.samples.size());
    for (const Sample& s : clean.samples) {
      clean_values.push_back(detail::ranking_value(s, kind, params));
    }
    std::vector<double> mal_values;
    mal_values.reserve(staged_count);
    for (const Sample& s : staged.samples) {
      if (s.stage == stage) mal_values.push_back(detail::ranking_value(s, kind, params));
    }
    ranking.ranked.push_back({kind, f_score(clean_values, mal_values)});
  }
  std::sort(ranking.ranked.begin(), ranking.ranked.end(),
            [](const RankedEvent& a, const RankedEvent& b) {
              if (a.score != b.score) return a.score > b.score;
              return event_name(a.event) < event_name(b.event);
            });
  return ranking;
}

namespace detail {

inline std::string event_set_label(CategoryFilter category, StageLabel stage) {
  std::string code;
  switch (category) {
    case CategoryFilter::Architectural: code = "A"; break;
    case CategoryFilter::Microarchitectural: code = "M"; break;
    case CategoryFilter::Both: code = "AM"; break;
  }
  switch (stage) {
    case StageLabel::Rop: return code + "-0";
    case StageLabel::Stage1: return code + "-1";
    case StageLabel::Stage2: return code + "-2";
    default: return code + "-x";
  }
}

}  // namespace detail

/// Top-k monitorable events of a ranking. Derived ratios are skipped: they
/// would consume two of the four hardware counters each.
inline EventSet select_event_set(const FScoreRanking& ranking, std::size_t k = 4) {
  EventSet set;
  set.label = detail::event_set_label(ranking.category, ranking.stage);
  for (const RankedEvent& entry : ranking.ranked) {
    if (is_derived(entry.event)) continue;
    set.events.push_back(entry.event);
    if (set.events.size() == k) break;
  }
  if (set.events.size() < k) {
    throw Error("select_event_set: ranking holds only " +
                std::to_string(set.events.size()) + " non-derived events, need " +
                std::to_string(k));
  }
  if (k == 4) validate_event_set(set);
  return set;
}

/// One labeled classification vector.
struct FeatureVector {
  std::vector<double> values;
  StageLabel stage = StageLabel::Clean;

  bool operator==(const FeatureVector&) const = default;
};

/// One vector per sample: the four transformed counts of the event set.
inline std::vector<FeatureVector> extract_nontemporal(const Trace& trace,
                                                      const EventSet& set,
                                                      const TransformParams& params) {
  std::vector<FeatureVector> out;
  out.reserve(trace.samples.size());
  for (const Sample& sample : trace.samples) {
    out.push_back({transform(sample, params, set), sample.stage});
  }
  return out;
}

struct TemporalConfig {
  std::size_t group_n = 4;
  std::size_t window_stride = 1;
};

/// Sliding windows of group_n consecutive samples, concatenated event-major
/// (all epochs of the first event, then the second, ...), giving 4N features
/// per window for a 4-event set. A window is labeled with its most severe
/// stage; windows whose only non-clean epochs are Rop are labeled Clean,
/// since a sub-epoch ROP burst cannot dominate a multi-epoch vector.
inline std::vector<FeatureVector> extract_temporal(const Trace& trace,
                                                   const EventSet& set,
                                                   const TransformParams& params,
                                                   const TemporalConfig& cfg) {
  const std::size_t n = cfg.group_n;
  if (n < 1) throw Error("extract_temporal: group_n must be >= 1");
  if (cfg.window_stride < 1) throw Error("extract_temporal: stride must be >= 1");
  if (trace.samples.size() < n) {
    throw Error("extract_temporal: trace of " + std::to_string(trace.samples.size()) +
                " samples is shorter than window " + std::to_string(n));
  }

  std::vector<const EventTransform*> fitted;
  fitted.reserve(set.events.size());
  for (EventKind kind : set.events) {
    const auto p = params.events.find(kind);
    if (p == params.events.end()) {
      throw Error("extract_temporal: no fitted parameters for event " +
                  std::string(event_name(kind)));
    }
    fitted.push_back(&p->second);
  }

  std::vector<FeatureVector> out;
  for (std::size_t start = 0; start + n <= trace.samples.size();
       start += cfg.window_stride) {
    FeatureVector fv;
    fv.values.reserve(set.events.size() * n);
    StageLabel worst = StageLabel::Clean;
    for (std::size_t e = 0; e < set.events.size(); ++e) {
      for (std::size_t i = start; i < start + n; ++i) {
        const auto c = trace.samples[i].counts.find(set.events[e]);
        if (c == trace.samples[i].counts.end()) {
          throw Error("extract_temporal: sample lacks event " +
                      std::string(event_name(set.events[e])));
        }
        fv.values.push_back(
            transform_value(static_cast<double>(c->second), *fitted[e]));
      }
    }
    for (std::size_t i = start; i < start + n; ++i) {
      worst = std::max(worst, trace.samples[i].stage);
    }
    // a sub-epoch ROP burst cannot dominate a multi-epoch window; with n == 1
    // the window IS the sample and keeps its label
    fv.stage = (n > 1 && worst == StageLabel::Rop) ? StageLabel::Clean : worst;
    out.push_back(std::move(fv));
  }
  return out;
}

namespace detail {

inline std::string fmt_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace detail

// ranking report rows: stage,category,rank,event,f_score
inline void write_ranking_csv(const FScoreRanking& ranking, std::ostream& out) {
  out << "stage,category,rank,event,f_score\n";
  for (std::size_t i = 0; i < ranking.ranked.size(); ++i) {
    out << stage_name(ranking.stage) << ',' << category_filter_name(ranking.category)
        << ',' << (i + 1) << ',' << event_name(ranking.ranked[i].event) << ','
        << detail::fmt_double(ranking.ranked[i].score) << '\n';
  }
  if (!out) throw Error("write_ranking_csv: stream write failed");
}

// labeled vectors: index,stage,f0,f1,...
inline void write_vectors_csv(std::span<const FeatureVector> vectors,
                              std::ostream& out) {
  if (vectors.empty()) throw Error("write_vectors_csv: no vectors");
  const std::size_t dim = vectors.front().values.size();
  out << "index,stage";
  for (std::size_t i = 0; i < dim; ++i) out << ",f" << i;
  out << '\n';
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].values.size() != dim) {
      throw Error("write_vectors_csv: inconsistent dimensions");
    }
    out << i << ',' << stage_name(vectors[i].stage);
    for (double v : vectors[i].values) out << ',' << detail::fmt_double(v);
    out << '\n';
  }
  if (!out) throw Error("write_vectors_csv: stream write failed");
}

inline std::vector<FeatureVector> read_vectors_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("read_vectors_csv: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split(line, ',');
  if (header.size() < 3 || header[0] != "index" || header[1] != "stage") {
    throw Error("read_vectors_csv: line 1: expected header 'index,stage,f0,...'");
  }
  const std::size_t dim = header.size() - 2;
  std::vector<FeatureVector> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split(line, ',');
    const std::string where = "read_vectors_csv: line " + std::to_string(line_no) + ": ";
    if (fields.size() != dim + 2) throw Error(where + "wrong field count");
    FeatureVector fv;
    const auto stage = parse_stage(fields[1]);
    if (!stage) throw Error(where + "unknown stage '" + std::string(fields[1]) + "'");
    fv.stage = *stage;
    fv.values.reserve(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      try {
        fv.values.push_back(std::stod(std::string(fields[2 + i])));
      } catch (const std::exception&) {
        throw Error(where + "malformed value '" + std::string(fields[2 + i]) + "'");
      }
    }
    out.push_back(std::move(fv));
  }
  return out;
}

}  // namespace hpcad
