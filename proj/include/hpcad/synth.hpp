#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "hpcad/error.hpp"
#include "hpcad/trace.hpp"

namespace hpcad {

/// Gamma(shape k, scale theta) for one event: positively skewed counts with
/// mass clustered near zero, like production per-epoch measurements.
struct EventDistribution {
  double k = 1.0;
  double theta = 1.0;
};

/// Couples the follower event to the driver: with weight w the follower
/// becomes (1-w)*own_draw + w*driver*(mean ratio), so program-level pairs
/// such as calls and returns move together.
struct CorrelationPair {
  EventKind driver = EventKind::Ret;
  EventKind follower = EventKind::Call;
  double weight = 0.0;
};

struct BenignProfile {
  std::map<EventKind, EventDistribution> events;
  std::vector<CorrelationPair> correlations;
  // sigma of a mean-one lognormal factor applied to every event of an epoch:
  // program phases make whole epochs run hot or cold together
  double phase_sigma = 0.0;
  // granularity the scales are calibrated for; draws at other epoch sizes
  // rescale theta proportionally
  std::uint64_t reference_epoch_instructions = 512000;
};

/// Shape of the injected exploit. One diluted ROP epoch, then a run of
/// suppressed Stage1 epochs, then milder Stage2 epochs. The variant nudges
/// the Stage1 duration the way different downloader stubs would.
struct ExploitProfile {
  std::uint64_t rop_instructions = 2182;
  std::size_t stage1_epochs = 6;
  std::size_t stage2_epochs = 12;
  double stage1_suppression = 0.3;
  double stage2_shift = 0.7;
  std::string variant = "reverse_tcp";  // reverse_tcp | reverse_http | bind_tcp
};

struct NoiseConfig {
  double context_switch_fraction = 0.0;  // in [0,1)
};

struct SynthProfile {
  BenignProfile benign;
  ExploitProfile exploit;
  NoiseConfig noise;
};

inline std::size_t effective_stage1_epochs(const ExploitProfile& profile) {
  if (profile.variant == "reverse_tcp") return profile.stage1_epochs;
  if (profile.variant == "reverse_http") return profile.stage1_epochs + 2;
  if (profile.variant == "bind_tcp") {
    return profile.stage1_epochs > 2 ? profile.stage1_epochs - 2 : 1;
  }
  throw Error("exploit profile: unknown variant '" + profile.variant + "'");
}

/// Fraction of an epoch occupied by the ROP burst.
inline double rop_mix_weight(std::uint64_t rop_instructions,
                             std::uint64_t epoch_instructions) {
  if (epoch_instructions == 0) throw Error("rop_mix_weight: epoch_instructions is zero");
  return std::min(1.0, static_cast<double>(rop_instructions) /
                           static_cast<double>(epoch_instructions));
}

namespace detail {

inline void check_benign_profile(const BenignProfile& profile) {
  if (profile.events.empty()) throw Error("benign profile: no events");
  for (const auto& [kind, dist] : profile.events) {
    if (is_derived(kind)) {
      throw Error("benign profile: derived kind " + std::string(event_name(kind)) +
                  " cannot be generated");
    }
    if (!(dist.k > 0.0) || !(dist.theta > 0.0)) {
      throw Error("benign profile: non-positive gamma parameters for " +
                  std::string(event_name(kind)));
    }
  }
  for (const CorrelationPair& pair : profile.correlations) {
    if (!(pair.weight >= 0.0 && pair.weight <= 1.0)) {
      throw Error("benign profile: correlation weight outside [0,1]");
    }
    if (!profile.events.contains(pair.driver) || !profile.events.contains(pair.follower)) {
      throw Error("benign profile: correlation references unmodeled event");
    }
  }
  if (profile.phase_sigma < 0.0) {
    throw Error("benign profile: phase_sigma must be >= 0");
  }
}

inline std::uint64_t to_count(double value) {
  return value <= 0.0 ? 0 : static_cast<std::uint64_t>(std::llround(value));
}

}  // namespace detail

/// Draws n_epochs of clean execution. Deterministic for a fixed seed.
inline Trace gen_benign(const BenignProfile& profile, std::size_t n_epochs,
                        std::uint64_t epoch_instructions, std::uint64_t seed) {
  if (n_epochs < 1) throw Error("gen_benign: need at least 1 epoch");
  if (epoch_instructions == 0) throw Error("gen_benign: epoch_instructions is zero");
  detail::check_benign_profile(profile);

  const double scale_adj = static_cast<double>(epoch_instructions) /
                           static_cast<double>(profile.reference_epoch_instructions);
  Trace trace;
  trace.epoch_instructions = epoch_instructions;
  for (const auto& [kind, dist] : profile.events) {
    (void)dist;
    trace.event_columns.push_back(kind);
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit_normal(0.0, 1.0);
  trace.samples.reserve(n_epochs);
  for (std::size_t e = 0; e < n_epochs; ++e) {
    double phase = 1.0;
    if (profile.phase_sigma > 0.0) {
      // mean-one lognormal so configured event means stay put
      phase = std::exp(profile.phase_sigma * unit_normal(rng) -
                       0.5 * profile.phase_sigma * profile.phase_sigma);
    }
    std::map<EventKind, double> raw;
    for (const auto& [kind, dist] : profile.events) {
      std::gamma_distribution<double> gamma(dist.k, dist.theta * scale_adj);
      raw[kind] = phase * gamma(rng);
    }
    for (const CorrelationPair& pair : profile.correlations) {
      const EventDistribution& da = profile.events.at(pair.driver);
      const EventDistribution& db = profile.events.at(pair.follower);
      const double mean_ratio = (db.k * db.theta) / (da.k * da.theta);
      raw[pair.follower] = (1.0 - pair.weight) * raw[pair.follower] +
                           pair.weight * raw[pair.driver] * mean_ratio;
    }
    Sample sample;
    sample.epoch_index = e;
    sample.pid = 1;
    sample.stage = StageLabel::Clean;
    for (const auto& [kind, value] : raw) sample.counts[kind] = detail::to_count(value);
    trace.samples.push_back(std::move(sample));
  }
  return trace;
}

/// Overwrites one window of a clean trace with exploit execution: a single
/// Rop epoch whose counts mix the original epoch with a suppressed burst at
/// weight rop_instructions/epoch_instructions, then Stage1 epochs scaled by
/// stage1_suppression, then Stage2 epochs scaled by stage2_shift. Stage
/// factors carry +-10% per-event jitter. Nothing outside the window changes.
inline Trace inject_exploit(const Trace& trace, const ExploitProfile& profile,
                            std::size_t start_epoch, std::uint64_t seed) {
  if (profile.rop_instructions < 1) throw Error("inject_exploit: rop_instructions < 1");
  if (!(profile.stage1_suppression > 0.0 && profile.stage1_suppression <= 1.0)) {
    throw Error("inject_exploit: stage1_suppression outside (0,1]");
  }
  if (!(profile.stage2_shift > 0.0)) throw Error("inject_exploit: stage2_shift <= 0");
  const std::size_t s1 = effective_stage1_epochs(profile);
  const std::size_t total = 1 + s1 + profile.stage2_epochs;
  if (start_epoch + total > trace.samples.size()) {
    throw Error("inject_exploit: window [" + std::to_string(start_epoch) + "," +
                std::to_string(start_epoch + total) + ") overruns trace of " +
                std::to_string(trace.samples.size()) + " samples");
  }

  Trace out = trace;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(0.9, 1.1);
  const double w = rop_mix_weight(profile.rop_instructions, trace.epoch_instructions);

  auto scale_counts = [&](Sample& sample, double factor) {
    for (auto& [kind, count] : sample.counts) {
      (void)kind;
      count = detail::to_count(static_cast<double>(count) * factor * jitter(rng));
    }
  };

  Sample& rop = out.samples[start_epoch];
  rop.stage = StageLabel::Rop;
  for (auto& [kind, count] : rop.counts) {
    (void)kind;
    const double own = static_cast<double>(count);
    const double burst = own * profile.stage1_suppression * jitter(rng);
    count = detail::to_count((1.0 - w) * own + w * burst);
  }
  for (std::size_t i = 0; i < s1; ++i) {
    Sample& s = out.samples[start_epoch + 1 + i];
    s.stage = StageLabel::Stage1;
    scale_counts(s, profile.stage1_suppression);
  }
  for (std::size_t i = 0; i < profile.stage2_epochs; ++i) {
    Sample& s = out.samples[start_epoch + 1 + s1 + i];
    s.stage = StageLabel::Stage2;
    scale_counts(s, profile.stage2_shift);
  }
  return out;
}

/// Replaces every epoch's counts with a convex mix of its own counts and a
/// draw from a foreign-process profile, imitating context switches landing
/// inside the sampling window. Labels are untouched.
inline Trace mix_context_noise(const Trace& trace, const NoiseConfig& noise,
                               const BenignProfile& foreign, std::uint64_t seed) {
  const double f = noise.context_switch_fraction;
  if (!(f >= 0.0 && f < 1.0)) {
    throw Error("mix_context_noise: fraction outside [0,1)");
  }
  if (f == 0.0) return trace;
  for (const auto& [kind, dist] : foreign.events) {
    (void)kind;
    if (!(dist.k > 0.0) || !(dist.theta > 0.0)) {
      throw Error("mix_context_noise: non-positive gamma parameters in foreign profile");
    }
  }

  const double scale_adj = static_cast<double>(trace.epoch_instructions) /
                           static_cast<double>(foreign.reference_epoch_instructions);
  Trace out = trace;
  std::mt19937_64 rng(seed);
  for (Sample& sample : out.samples) {
    for (auto& [kind, count] : sample.counts) {
      double foreign_value = 0.0;
      const auto it = foreign.events.find(kind);
      if (it != foreign.events.end()) {
        std::gamma_distribution<double> gamma(it->second.k, it->second.theta * scale_adj);
        foreign_value = gamma(rng);
      }
      count = detail::to_count((1.0 - f) * static_cast<double>(count) + f * foreign_value);
    }
  }
  return out;
}

/// Baseline profile of a busy interactive program: means spread over three
/// orders of magnitude, shapes mostly below 2 so every distribution is
/// right-skewed with its median under its mean.
inline BenignProfile default_benign_profile() {
  BenignProfile profile;
  auto add = [&](EventKind kind, double mean, double k) {
    profile.events[kind] = {k, mean / k};
  };
  add(EventKind::Load, 130000, 3.4);
  add(EventKind::Store, 62000, 3.2);
  add(EventKind::Arith, 85000, 3.0);
  add(EventKind::Br, 98000, 3.0);
  add(EventKind::Call, 6200, 2.2);
  add(EventKind::Call_D, 5200, 2.2);
  add(EventKind::Call_ID, 1100, 2.2);
  add(EventKind::Ret, 6300, 2.4);
  add(EventKind::Llc, 9000, 1.2);
  add(EventKind::Mis_Llc, 1400, 0.9);
  add(EventKind::Misp_Br, 3100, 1.2);
  add(EventKind::Misp_Ret, 420, 1.8);
  add(EventKind::Misp_Call, 260, 0.8);
  add(EventKind::Misp_Br_C, 2400, 1.4);
  add(EventKind::Mis_Icache, 1900, 1.0);
  add(EventKind::Mis_Itlb, 520, 0.8);
  add(EventKind::Mis_Dtlbl, 980, 0.9);
  add(EventKind::Mis_Dtlbs, 610, 0.9);
  add(EventKind::Stlb_Hit, 340, 0.7);
  profile.correlations.push_back({EventKind::Ret, EventKind::Call, 0.6});
  profile.correlations.push_back({EventKind::Br, EventKind::Misp_Br, 0.5});
  profile.phase_sigma = 0.25;
  return profile;
}

/// A memory-streaming background process: different instruction mix, heavier
/// cache traffic. Used as the context-switch noise source.
inline BenignProfile default_foreign_profile() {
  BenignProfile profile;
  auto add = [&](EventKind kind, double mean, double k) {
    profile.events[kind] = {k, mean / k};
  };
  add(EventKind::Load, 180000, 2.2);
  add(EventKind::Store, 90000, 2.0);
  add(EventKind::Arith, 60000, 1.8);
  add(EventKind::Br, 80000, 2.0);
  add(EventKind::Call, 3000, 1.1);
  add(EventKind::Call_D, 2500, 1.1);
  add(EventKind::Call_ID, 500, 0.8);
  add(EventKind::Ret, 3100, 1.1);
  add(EventKind::Llc, 16000, 1.4);
  add(EventKind::Mis_Llc, 3200, 1.0);
  add(EventKind::Misp_Br, 2200, 1.0);
  add(EventKind::Misp_Ret, 180, 0.6);
  add(EventKind::Misp_Call, 120, 0.6);
  add(EventKind::Misp_Br_C, 1800, 1.0);
  add(EventKind::Mis_Icache, 900, 0.8);
  add(EventKind::Mis_Itlb, 260, 0.6);
  add(EventKind::Mis_Dtlbl, 2100, 1.0);
  add(EventKind::Mis_Dtlbs, 1200, 0.9);
  add(EventKind::Stlb_Hit, 500, 0.7);
  profile.phase_sigma = 0.3;
  return profile;
}

inline SynthProfile default_synth_profile() {
  return {default_benign_profile(), ExploitProfile{}, NoiseConfig{}};
}

inline nlohmann::json synth_profile_to_json(const SynthProfile& profile) {
  nlohmann::json events = nlohmann::json::object();
  for (const auto& [kind, dist] : profile.benign.events) {
    events[std::string(event_name(kind))] = {{"k", dist.k}, {"theta", dist.theta}};
  }
  nlohmann::json correlations = nlohmann::json::array();
  for (const CorrelationPair& pair : profile.benign.correlations) {
    correlations.push_back({std::string(event_name(pair.driver)),
                            std::string(event_name(pair.follower)), pair.weight});
  }
  return nlohmann::json{
      {"reference_epoch_instructions", profile.benign.reference_epoch_instructions},
      {"phase_sigma", profile.benign.phase_sigma},
      {"events", events},
      {"correlations", correlations},
      {"exploit",
       {{"rop_instructions", profile.exploit.rop_instructions},
        {"stage1_epochs", profile.exploit.stage1_epochs},
        {"stage2_epochs", profile.exploit.stage2_epochs},
        {"stage1_suppression", profile.exploit.stage1_suppression},
        {"stage2_shift", profile.exploit.stage2_shift},
        {"variant", profile.exploit.variant}}},
      {"noise", {{"context_switch_fraction", profile.noise.context_switch_fraction}}}};
}

inline SynthProfile synth_profile_from_json(const nlohmann::json& j) {
  SynthProfile profile = default_synth_profile();
  profile.benign.events.clear();
  profile.benign.correlations.clear();
  if (j.contains("reference_epoch_instructions")) {
    profile.benign.reference_epoch_instructions =
        j.at("reference_epoch_instructions").get<std::uint64_t>();
  }
  profile.benign.phase_sigma =
      j.contains("phase_sigma") ? j.at("phase_sigma").get<double>() : 0.0;
  for (const auto& [name, entry] : j.at("events").items()) {
    const auto kind = parse_event(name);
    if (!kind) throw Error("synth profile: unknown event '" + name + "'");
    profile.benign.events[*kind] = {entry.at("k").get<double>(),
                                    entry.at("theta").get<double>()};
  }
  if (j.contains("correlations")) {
    for (const auto& entry : j.at("correlations")) {
      if (!entry.is_array() || entry.size() != 3) {
        throw Error("synth profile: correlation entries are [driver,follower,weight]");
      }
      const auto driver = parse_event(entry[0].get<std::string>());
      const auto follower = parse_event(entry[1].get<std::string>());
      if (!driver || !follower) throw Error("synth profile: unknown correlation event");
      profile.benign.correlations.push_back({*driver, *follower, entry[2].get<double>()});
    }
  }
  if (j.contains("exploit")) {
    const auto& e = j.at("exploit");
    if (e.contains("rop_instructions")) profile.exploit.rop_instructions = e.at("rop_instructions").get<std::uint64_t>();
    if (e.contains("stage1_epochs")) profile.exploit.stage1_epochs = e.at("stage1_epochs").get<std::size_t>();
    if (e.contains("stage2_epochs")) profile.exploit.stage2_epochs = e.at("stage2_epochs").get<std::size_t>();
    if (e.contains("stage1_suppression")) profile.exploit.stage1_suppression = e.at("stage1_suppression").get<double>();
    if (e.contains("stage2_shift")) profile.exploit.stage2_shift = e.at("stage2_shift").get<double>();
    if (e.contains("variant")) profile.exploit.variant = e.at("variant").get<std::string>();
  }
  if (j.contains("noise") && j.at("noise").contains("context_switch_fraction")) {
    profile.noise.context_switch_fraction =
        j.at("noise").at("context_switch_fraction").get<double>();
  }
  detail::check_benign_profile(profile.benign);
  return profile;
}

inline void save_synth_profile(const SynthProfile& profile,
                               const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("save_synth_profile: cannot open '" + path.string() + "'");
  out << synth_profile_to_json(profile).dump(2) << '\n';
  if (!out) throw Error("save_synth_profile: write to '" + path.string() + "' failed");
}

inline SynthProfile load_synth_profile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_synth_profile: cannot open '" + path.string() + "'");
  nlohmann::json j;
  in >> j;
  return synth_profile_from_json(j);
}

}  // namespace hpcad
