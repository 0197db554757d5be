#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "hpcad/error.hpp"
#include "hpcad/eval.hpp"
#include "hpcad/features.hpp"
#include "hpcad/stats.hpp"
#include "hpcad/svm.hpp"
#include "hpcad/trace.hpp"

namespace hpcad {

/// A craftable "no effect" instruction sequence an attacker pads shellcode
/// with. Register save/restore and multi-instruction event recipes mean one
/// segment usually moves several events at once, so deltas are coupled.
struct NoopSegment {
  std::string name;
  std::uint64_t instructions = 0;
  std::map<EventKind, std::uint64_t> event_deltas;
};

inline nlohmann::json noop_segment_to_json(const NoopSegment& segment) {
  nlohmann::json deltas = nlohmann::json::object();
  for (const auto& [kind, delta] : segment.event_deltas) {
    deltas[std::string(event_name(kind))] = delta;
  }
  return nlohmann::json{
      {"name", segment.name}, {"instructions", segment.instructions}, {"deltas", deltas}};
}

inline NoopSegment noop_segment_from_json(const nlohmann::json& j) {
  NoopSegment segment;
  segment.name = j.at("name").get<std::string>();
  segment.instructions = j.at("instructions").get<std::uint64_t>();
  for (const auto& [name, delta] : j.at("deltas").items()) {
    const auto kind = parse_event(name);
    if (!kind) throw Error("noop segment: unknown event '" + name + "'");
    segment.event_deltas[*kind] = delta.get<std::uint64_t>();
  }
  bool any = false;
  for (const auto& [kind, delta] : segment.event_deltas) {
    (void)kind;
    any = any || delta > 0;
  }
  if (!any) throw Error("noop segment '" + segment.name + "': all deltas zero");
  return segment;
}

inline NoopSegment load_noop_segment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_noop_segment: cannot open '" + path.string() + "'");
  nlohmann::json j;
  in >> j;
  return noop_segment_from_json(j);
}

inline void save_noop_segment(const NoopSegment& segment,
                              const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("save_noop_segment: cannot open '" + path.string() + "'");
  out << noop_segment_to_json(segment).dump(2) << '\n';
  if (!out) throw Error("save_noop_segment: write to '" + path.string() + "' failed");
}

/// Pads the target stage with `count` segment instances placed uniformly at
/// random over its epochs (loops are avoided, so placement is free). Each
/// instance adds the segment's deltas to its epoch. Every full epoch's worth
/// of added instructions extends the stage label one epoch further into the
/// trace, mirroring the slowdown the padding costs.
///
/// Instances are placed sequentially from the seeded generator, so for the
/// same seed a larger count replays the smaller count's placements first and
/// per-epoch counts grow monotonically with count.
inline Trace apply_padding(const Trace& trace, const NoopSegment& segment,
                           std::uint64_t count, StageLabel target_stage,
                           std::uint64_t seed) {
  bool any = false;
  for (const auto& [kind, delta] : segment.event_deltas) {
    (void)kind;
    any = any || delta > 0;
  }
  if (!any) throw Error("apply_padding: segment '" + segment.name + "' has no nonzero delta");

  std::vector<std::size_t> targets;
  for (std::size_t i = 0; i < trace.samples.size(); ++i) {
    if (trace.samples[i].stage == target_stage) targets.push_back(i);
  }
  if (targets.empty()) {
    throw Error("apply_padding: trace has no samples labeled " +
                std::string(stage_name(target_stage)));
  }
  for (const auto& [kind, delta] : segment.event_deltas) {
    (void)delta;
    if (!trace.samples[targets.front()].counts.contains(kind)) {
      throw Error("apply_padding: trace lacks padded event " +
                  std::string(event_name(kind)));
    }
  }

  Trace out = trace;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, targets.size() - 1);
  for (std::uint64_t c = 0; c < count; ++c) {
    Sample& sample = out.samples[targets[pick(rng)]];
    for (const auto& [kind, delta] : segment.event_deltas) {
      sample.counts[kind] += delta;
    }
  }

  const std::uint64_t added_instructions = count * segment.instructions;
  const std::uint64_t extra_epochs = added_instructions / trace.epoch_instructions;
  const std::size_t last = targets.back();
  for (std::uint64_t i = 1; i <= extra_epochs && last + i < out.samples.size(); ++i) {
    out.samples[last + i].stage = target_stage;
  }
  return out;
}

struct PaddingSweepRow {
  std::uint64_t count = 0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double auc = 0.0;
};

/// Re-runs scoring for each pad count: pad the staged trace, rebuild the
/// feature vectors, score, and record the target stage's score quartiles and
/// its AUC against the trace's clean epochs. Row 0 (count 0) is the
/// unpadded baseline.
inline std::vector<PaddingSweepRow> sweep_padding(
    const OcSvmModel& model, const Trace& trace, const TransformParams& params,
    const EventSet& set, const NoopSegment& segment,
    const std::vector<std::uint64_t>& counts, StageLabel target_stage,
    std::uint64_t seed) {
  if (counts.empty()) throw Error("sweep_padding: no pad counts");
  std::vector<PaddingSweepRow> rows;
  rows.reserve(counts.size());
  for (std::uint64_t count : counts) {
    const Trace padded = apply_padding(trace, segment, count, target_stage, seed);
    const auto vectors = extract_nontemporal(padded, set, params);
    std::vector<double> clean_scores;
    std::vector<double> target_scores;
    for (const FeatureVector& fv : vectors) {
      const double score = anomaly_score(model, fv.values);
      if (fv.stage == StageLabel::Clean) clean_scores.push_back(score);
      if (fv.stage == target_stage) target_scores.push_back(score);
    }
    if (clean_scores.empty() || target_scores.empty()) {
      throw Error("sweep_padding: padded trace lost a score class");
    }
    PaddingSweepRow row;
    row.count = count;
    row.q1 = quantile(target_scores, 0.25);
    row.median = quantile(target_scores, 0.5);
    row.q3 = quantile(target_scores, 0.75);
    row.auc = roc(clean_scores, target_scores).auc;
    rows.push_back(row);
  }
  return rows;
}

inline void write_sweep_csv(std::span<const PaddingSweepRow> rows, std::ostream& out) {
  out << "count,q1,median,q3,auc\n";
  for (const PaddingSweepRow& row : rows) {
    out << row.count << ',' << detail::fmt_double(row.q1) << ','
        << detail::fmt_double(row.median) << ',' << detail::fmt_double(row.q3) << ','
        << detail::fmt_double(row.auc) << '\n';
  }
  if (!out) throw Error("write_sweep_csv: stream write failed");
}

/// How many distinct models a defender can field by drawing 4 events from a
/// pool and varying the temporal depth: C(pool, per_model) * temporal_choices.
inline std::uint64_t ensemble_diversity(std::uint64_t pool_size,
                                        std::uint64_t events_per_model,
                                        std::uint64_t temporal_choices) {
  if (events_per_model < 1 || temporal_choices < 1 || pool_size < events_per_model) {
    throw Error("ensemble_diversity: need pool >= per-model >= 1 and choices >= 1");
  }
  std::uint64_t combos = 1;
  for (std::uint64_t i = 1; i <= events_per_model; ++i) {
    combos = combos * (pool_size - events_per_model + i) / i;  // exact at each step
  }
  return combos * temporal_choices;
}

/// One deployable model configuration.
struct ModelChoice {
  EventSet set;
  TemporalConfig temporal;
};

/// Seeded rotation over an ensemble: each call is an independent uniform
/// choice, so an attacker cannot predict which events are being watched.
class RotationSchedule {
 public:
  RotationSchedule(std::vector<ModelChoice> ensemble, std::uint64_t seed)
      : ensemble_(std::move(ensemble)), rng_(seed) {
    if (ensemble_.empty()) throw Error("rotation schedule: empty ensemble");
  }

  std::size_t next_index() {
    std::uniform_int_distribution<std::size_t> pick(0, ensemble_.size() - 1);
    return pick(rng_);
  }

  const ModelChoice& next() { return ensemble_[next_index()]; }

  const std::vector<ModelChoice>& ensemble() const { return ensemble_; }

 private:
  std::vector<ModelChoice> ensemble_;
  std::mt19937_64 rng_;
};

/// Uniform seeded choice from the ensemble.
inline const ModelChoice& randomize_model(const std::vector<ModelChoice>& ensemble,
                                          std::uint64_t seed) {
  if (ensemble.empty()) throw Error("randomize_model: empty ensemble");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, ensemble.size() - 1);
  return ensemble[pick(rng)];
}

}  // namespace hpcad
