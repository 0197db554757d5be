#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hpcad/error.hpp"
#include "hpcad/stats.hpp"
#include "hpcad/trace.hpp"

namespace hpcad {

/// Per-event parameters of the rank-preserving power transform
/// x -> ((x - min) / (max - min)) ^ lambda.
struct EventTransform {
  double min = 0.0;
  double max = 0.0;
  double lambda = 1.0;
};

/// Fitted once on clean training data, then held fixed for every later
/// sample so train and test live on the same scale.
struct TransformParams {
  double target_median = 0.5;
  std::map<EventKind, EventTransform> events;
};

/// Observed (min, max) of one training column. The column must carry at
/// least two distinct values or there is no range to normalize over.
inline std::pair<double, double> fit_minmax(std::span<const double> values,
                                            std::string_view label) {
  if (values.size() < 2) {
    throw Error("fit_minmax: column '" + std::string(label) +
                "' has fewer than 2 values");
  }
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (*lo == *hi) {
    throw Error("fit_minmax: degenerate column '" + std::string(label) +
                "' (all values equal " + std::to_string(*lo) + ")");
  }
  return {*lo, *hi};
}

/// Exponent that maps the normalized training median onto target_median:
/// the unique lambda with m^lambda = target, m = (median - min)/(max - min).
inline double fit_lambda(std::span<const double> values, double min_v, double max_v,
                         double target_median = 0.5) {
  if (values.empty()) throw Error("fit_lambda: empty column");
  if (!(max_v > min_v)) throw Error("fit_lambda: max must exceed min");
  if (!(target_median > 0.0 && target_median < 1.0)) {
    throw Error("fit_lambda: target median must lie in (0,1)");
  }
  const double med = median(std::vector<double>(values.begin(), values.end()));
  const double m = (med - min_v) / (max_v - min_v);
  if (!(m > 0.0 && m < 1.0)) {
    throw Error("fit_lambda: degenerate median (normalized median " +
                std::to_string(m) + " outside (0,1))");
  }
  return std::log(target_median) / std::log(m);
}

/// Normalize-clamp-exponentiate one raw value. Values beyond the training
/// range clamp to the [0,1] boundary instead of being rejected: live traces
/// will exceed training extrema.
inline double transform_value(double raw, const EventTransform& t) {
  if (!(t.max > t.min)) throw Error("transform_value: unfitted parameters");
  const double scaled = (raw - t.min) / (t.max - t.min);
  const double clamped = std::clamp(scaled, 0.0, 1.0);
  if (clamped == 0.0) return 0.0;
  if (clamped == 1.0) return 1.0;
  return std::pow(clamped, t.lambda);
}

namespace detail {

inline std::map<EventKind, std::vector<double>> column_values(const Trace& trace) {
  std::map<EventKind, std::vector<double>> columns;
  for (EventKind kind : trace.event_columns) columns[kind].reserve(trace.samples.size());
  for (const Sample& sample : trace.samples) {
    for (EventKind kind : trace.event_columns) {
      const auto it = sample.counts.find(kind);
      if (it == sample.counts.end()) {
        throw Error("fit_transform: sample misses event column " +
                    std::string(event_name(kind)));
      }
      columns[kind].push_back(static_cast<double>(it->second));
    }
  }
  return columns;
}

}  // namespace detail

inline TransformParams fit_transform(const Trace& training, double target_median = 0.5) {
  TransformParams params;
  params.target_median = target_median;
  for (const auto& [kind, values] : detail::column_values(training)) {
    const auto [lo, hi] = fit_minmax(values, event_name(kind));
    EventTransform t;
    t.min = lo;
    t.max = hi;
    t.lambda = fit_lambda(values, lo, hi, target_median);
    params.events[kind] = t;
  }
  return params;
}

/// Feature vector of one sample over an event set, ordered like the set.
inline std::vector<double> transform(const Sample& sample, const TransformParams& params,
                                     const EventSet& set) {
  std::vector<double> out;
  out.reserve(set.events.size());
  for (EventKind kind : set.events) {
    const auto p = params.events.find(kind);
    if (p == params.events.end()) {
      throw Error("transform: no fitted parameters for event " +
                  std::string(event_name(kind)));
    }
    const auto c = sample.counts.find(kind);
    if (c == sample.counts.end()) {
      throw Error("transform: sample lacks event " + std::string(event_name(kind)));
    }
    out.push_back(transform_value(static_cast<double>(c->second), p->second));
  }
  return out;
}

inline nlohmann::json transform_params_to_json(const TransformParams& params) {
  nlohmann::json events = nlohmann::json::object();
  for (const auto& [kind, t] : params.events) {
    events[std::string(event_name(kind))] = {
        {"min", t.min}, {"max", t.max}, {"lambda", t.lambda}};
  }
  return nlohmann::json{{"target_median", params.target_median}, {"events", events}};
}

inline TransformParams transform_params_from_json(const nlohmann::json& j) {
  TransformParams params;
  params.target_median = j.at("target_median").get<double>();
  for (const auto& [name, entry] : j.at("events").items()) {
    const auto kind = parse_event(name);
    if (!kind) throw Error("transform params: unknown event '" + name + "'");
    EventTransform t;
    t.min = entry.at("min").get<double>();
    t.max = entry.at("max").get<double>();
    t.lambda = entry.at("lambda").get<double>();
    if (!(t.max > t.min)) throw Error("transform params: max <= min for " + name);
    if (!(t.lambda > 0.0)) throw Error("transform params: lambda <= 0 for " + name);
    params.events[*kind] = t;
  }
  return params;
}

inline void save_transform_params(const TransformParams& params,
                                  const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("save_transform_params: cannot open '" + path.string() + "'");
  out << transform_params_to_json(params).dump(2) << '\n';
  if (!out) throw Error("save_transform_params: write to '" + path.string() + "' failed");
}

inline TransformParams load_transform_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_transform_params: cannot open '" + path.string() + "'");
  nlohmann::json j;
  in >> j;
  return transform_params_from_json(j);
}

}  // namespace hpcad
