#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "hpcad/error.hpp"
#include "hpcad/events.hpp"

namespace hpcad {

/// Exploit stage of one sampling epoch. The enumerator order doubles as the
/// severity order used to label windows that span several stages.
enum class StageLabel : std::uint8_t {
  Clean = 0,
  Rop = 1,
  Stage1 = 2,
  Stage2 = 3,
};

constexpr std::string_view stage_name(StageLabel stage) {
  switch (stage) {
    case StageLabel::Clean: return "clean";
    case StageLabel::Rop: return "rop";
    case StageLabel::Stage1: return "stage1";
    case StageLabel::Stage2: return "stage2";
  }
  return "?";
}

inline std::optional<StageLabel> parse_stage(std::string_view token) {
  if (token == "clean") return StageLabel::Clean;
  if (token == "rop") return StageLabel::Rop;
  if (token == "stage1") return StageLabel::Stage1;
  if (token == "stage2") return StageLabel::Stage2;
  return std::nullopt;
}

/// Event counts of one sampling epoch. Counts hold base kinds only; derived
/// ratios are computed on demand via derived_value().
struct Sample {
  std::uint64_t epoch_index = 0;
  std::int64_t pid = 0;
  StageLabel stage = StageLabel::Clean;
  std::map<EventKind, std::uint64_t> counts;

  bool operator==(const Sample&) const = default;
};

/// Ordered sequence of samples at one sampling granularity. Every sample is
/// keyed by exactly the kinds in event_columns; epoch indices strictly
/// increase.
struct Trace {
  std::vector<Sample> samples;
  std::uint64_t epoch_instructions = 512000;
  std::vector<EventKind> event_columns;

  bool operator==(const Trace&) const = default;
};

/// A set of events monitored simultaneously by one model. The hardware can
/// count four events at a time, so a set used for modeling holds exactly 4
/// distinct base kinds.
struct EventSet {
  std::string label;
  std::vector<EventKind> events;
};

inline void validate_event_set(const EventSet& set) {
  if (set.events.size() != 4) {
    throw Error("event set '" + set.label + "' must hold exactly 4 events, has " +
                std::to_string(set.events.size()));
  }
  std::set<EventKind> seen;
  for (EventKind kind : set.events) {
    if (is_derived(kind)) {
      throw Error("event set '" + set.label + "' contains derived kind " +
                  std::string(event_name(kind)));
    }
    if (!seen.insert(kind).second) {
      throw Error("event set '" + set.label + "' repeats event " +
                  std::string(event_name(kind)));
    }
  }
}

/// Ratio value of a derived kind for one sample. A zero denominator yields 0:
/// zero mispredictions out of zero events carries no signal.
inline double derived_value(const Sample& sample, EventKind kind) {
  const auto parts = derived_parts(kind);
  if (!parts) {
    throw Error("derived_value: " + std::string(event_name(kind)) +
                " is not a derived kind");
  }
  const auto num_it = sample.counts.find(parts->numerator);
  if (num_it == sample.counts.end()) {
    throw Error("derived_value: sample lacks constituent event " +
                std::string(event_name(parts->numerator)));
  }
  const auto den_it = sample.counts.find(parts->denominator);
  if (den_it == sample.counts.end()) {
    throw Error("derived_value: sample lacks constituent event " +
                std::string(event_name(parts->denominator)));
  }
  if (den_it->second == 0) return 0.0;
  return static_cast<double>(num_it->second) / static_cast<double>(den_it->second);
}

/// Checks all Trace invariants. Returns one message per violation; an empty
/// report means the trace is well formed.
inline std::vector<std::string> validate_trace(const Trace& trace) {
  std::vector<std::string> report;
  std::set<EventKind> columns;
  for (EventKind kind : trace.event_columns) {
    if (is_derived(kind)) {
      report.push_back("event_columns contains derived kind " +
                       std::string(event_name(kind)));
    }
    if (!columns.insert(kind).second) {
      report.push_back("event_columns repeats " + std::string(event_name(kind)));
    }
  }
  if (trace.epoch_instructions == 0) {
    report.push_back("epoch_instructions is zero");
  }
  for (std::size_t i = 0; i < trace.samples.size(); ++i) {
    const Sample& s = trace.samples[i];
    if (i > 0 && s.epoch_index <= trace.samples[i - 1].epoch_index) {
      report.push_back("sample " + std::to_string(i) + ": epoch_index " +
                       std::to_string(s.epoch_index) +
                       " not greater than predecessor " +
                       std::to_string(trace.samples[i - 1].epoch_index));
    }
    for (const auto& [kind, count] : s.counts) {
      (void)count;
      if (!columns.contains(kind)) {
        report.push_back("sample " + std::to_string(i) + ": unexpected event column " +
                         std::string(event_name(kind)));
      }
    }
    for (EventKind kind : trace.event_columns) {
      if (!s.counts.contains(kind)) {
        report.push_back("sample " + std::to_string(i) + ": missing event column " +
                         std::string(event_name(kind)));
      }
    }
  }
  return report;
}

/// Subsequence of samples recorded under the given PID; order and metadata
/// preserved. An empty result is valid.
inline Trace filter_by_pid(const Trace& trace, std::int64_t pid) {
  Trace out;
  out.epoch_instructions = trace.epoch_instructions;
  out.event_columns = trace.event_columns;
  for (const Sample& s : trace.samples) {
    if (s.pid == pid) out.samples.push_back(s);
  }
  return out;
}

}  // namespace hpcad
