#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hpcad/error.hpp"
#include "hpcad/eval.hpp"
#include "hpcad/features.hpp"
#include "hpcad/svm.hpp"
#include "hpcad/synth.hpp"
#include "hpcad/trace_io.hpp"
#include "hpcad/transform.hpp"

namespace hpcad {

/// Derives an independent stream seed from the experiment seed and a stage
/// tag, so each pipeline stage can be reproduced in isolation.
inline std::uint64_t sub_seed(std::uint64_t seed, std::string_view tag,
                              std::uint64_t index = 0) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a over the tag
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  std::uint64_t z = seed ^ h ^ (index * 0x9E3779B97F4A7C15ull);
  z += 0x9E3779B97F4A7C15ull;  // splitmix64 finalizer
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

struct ExperimentConfig {
  std::string profile_path;           // empty: built-in default profile
  std::string event_set = "auto";     // "auto" or 4 comma-separated events
  CategoryFilter category = CategoryFilter::Both;
  StageLabel selection_stage = StageLabel::Stage1;
  std::size_t temporal_n = 4;
  double nu = 0.05;
  double gamma = 0.0;                 // <= 0: 1/dim
  std::uint64_t seed = 0;
  std::string output_dir;
  std::size_t train_epochs = 2500;
  std::size_t test_clean_epochs = 1500;
  std::size_t exploit_runs = 16;
  std::size_t exploit_trace_epochs = 64;
  std::uint64_t epoch_instructions = 512000;
  double noise_override = -1.0;       // < 0: use the profile's fraction
};

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  if (j.contains("profile")) cfg.profile_path = j.at("profile").get<std::string>();
  if (j.contains("event_set")) cfg.event_set = j.at("event_set").get<std::string>();
  if (j.contains("category")) {
    const auto cat = parse_category_filter(j.at("category").get<std::string>());
    if (!cat) throw Error("experiment config: unknown category");
    cfg.category = *cat;
  }
  if (j.contains("selection_stage")) {
    const auto stage = parse_stage(j.at("selection_stage").get<std::string>());
    if (!stage) throw Error("experiment config: unknown selection stage");
    cfg.selection_stage = *stage;
  }
  if (j.contains("temporal_n")) cfg.temporal_n = j.at("temporal_n").get<std::size_t>();
  if (j.contains("nu")) cfg.nu = j.at("nu").get<double>();
  if (j.contains("gamma")) cfg.gamma = j.at("gamma").get<double>();
  if (!j.contains("seed")) throw Error("experiment config: 'seed' is required");
  cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
  if (j.contains("train_epochs")) cfg.train_epochs = j.at("train_epochs").get<std::size_t>();
  if (j.contains("test_clean_epochs")) cfg.test_clean_epochs = j.at("test_clean_epochs").get<std::size_t>();
  if (j.contains("exploit_runs")) cfg.exploit_runs = j.at("exploit_runs").get<std::size_t>();
  if (j.contains("exploit_trace_epochs")) cfg.exploit_trace_epochs = j.at("exploit_trace_epochs").get<std::size_t>();
  if (j.contains("epoch_instructions")) cfg.epoch_instructions = j.at("epoch_instructions").get<std::uint64_t>();
  if (j.contains("noise")) cfg.noise_override = j.at("noise").get<double>();
  return cfg;
}

struct ExperimentResult {
  std::filesystem::path dir;
  EventSet set;
  std::vector<ComparisonRow> report;

  double auc(StageLabel stage, std::string_view mode) const {
    for (const ComparisonRow& row : report) {
      if (row.stage == stage && row.mode == mode) return row.auc;
    }
    throw Error("experiment result: no report row for " +
                std::string(stage_name(stage)) + "/" + std::string(mode));
  }
};

namespace detail {

inline EventSet parse_event_set_spec(const std::string& spec) {
  EventSet set;
  set.label = "custom";
  for (std::string_view token : split(spec, ',')) {
    const auto kind = parse_event(token);
    if (!kind) throw Error("event set spec: unknown event '" + std::string(token) + "'");
    set.events.push_back(*kind);
  }
  validate_event_set(set);
  return set;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("experiment: cannot open '" + path.string() + "'");
  out << text;
  out.flush();
  if (!out) throw Error("experiment: write to '" + path.string() + "' failed");
}

}  // namespace detail

/// Runs the whole pipeline once, reproducibly: generate labeled traces, fit
/// the transform on training (clean) data only, pick or accept an event set,
/// train non-temporal and temporal detectors on clean vectors, score held-out
/// clean and exploit data, and write every artifact (traces, params, models,
/// scores, ROC curves, report, manifest) under output_dir. Identical seeds
/// give byte-identical numeric outputs.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  if (cfg.output_dir.empty()) throw Error("experiment: output_dir not set");
  if (cfg.temporal_n < 1) throw Error("experiment: temporal_n must be >= 1");
  if (cfg.exploit_runs < 1) throw Error("experiment: need at least one exploit run");
  const std::filesystem::path dir(cfg.output_dir);
  std::filesystem::create_directories(dir);

  const SynthProfile profile = cfg.profile_path.empty()
                                   ? default_synth_profile()
                                   : load_synth_profile(cfg.profile_path);
  const double noise_fraction = cfg.noise_override >= 0.0
                                    ? cfg.noise_override
                                    : profile.noise.context_switch_fraction;
  if (noise_fraction >= 1.0) throw Error("experiment: noise fraction must be < 1");
  const BenignProfile foreign = default_foreign_profile();
  const NoiseConfig noise{noise_fraction};

  auto maybe_noisy = [&](Trace trace, std::string_view tag, std::uint64_t index) {
    if (noise_fraction <= 0.0) return trace;
    return mix_context_noise(trace, noise, foreign,
                             sub_seed(cfg.seed, std::string("noise.") + std::string(tag),
                                      index));
  };

  // data generation; training and evaluation draws never share a stream
  const Trace train_clean = maybe_noisy(
      gen_benign(profile.benign, cfg.train_epochs, cfg.epoch_instructions,
                 sub_seed(cfg.seed, "synth.train")),
      "train", 0);
  const Trace test_clean = maybe_noisy(
      gen_benign(profile.benign, cfg.test_clean_epochs, cfg.epoch_instructions,
                 sub_seed(cfg.seed, "synth.test_clean")),
      "test_clean", 0);

  const std::size_t exploit_span =
      1 + effective_stage1_epochs(profile.exploit) + profile.exploit.stage2_epochs;
  if (cfg.exploit_trace_epochs < exploit_span + 8) {
    throw Error("experiment: exploit_trace_epochs too small for the exploit span of " +
                std::to_string(exploit_span));
  }
  auto make_staged = [&](std::string_view tag, std::uint64_t index) {
    Trace trace = gen_benign(profile.benign, cfg.exploit_trace_epochs,
                             cfg.epoch_instructions,
                             sub_seed(cfg.seed, std::string("synth.") + std::string(tag), index));
    std::mt19937_64 place(sub_seed(cfg.seed, std::string("place.") + std::string(tag), index));
    std::uniform_int_distribution<std::size_t> start(
        4, cfg.exploit_trace_epochs - exploit_span - 1);
    trace = inject_exploit(trace, profile.exploit, start(place),
                           sub_seed(cfg.seed, std::string("inject.") + std::string(tag), index));
    return maybe_noisy(std::move(trace), tag, index);
  };

  std::vector<Trace> staged_runs;
  staged_runs.reserve(cfg.exploit_runs);
  for (std::size_t r = 0; r < cfg.exploit_runs; ++r) {
    staged_runs.push_back(make_staged("exploit", r));
  }

  // transform fitted on the training partition only
  const TransformParams params = fit_transform(train_clean);

  EventSet set;
  if (cfg.event_set == "auto") {
    // selection uses its own staged trace so evaluation data stays untouched
    const Trace selection = make_staged("selection", 0);
    const FScoreRanking ranking =
        rank_events(train_clean, selection, cfg.selection_stage, cfg.category, params);
    set = select_event_set(ranking, 4);
    std::ostringstream ranking_csv;
    write_ranking_csv(ranking, ranking_csv);
    detail::write_text_file(dir / "ranking.csv", ranking_csv.str());
  } else {
    set = detail::parse_event_set_spec(cfg.event_set);
  }

  const TemporalConfig temporal_cfg{cfg.temporal_n, 1};

  struct Mode {
    std::string name;
    OcSvmModel model;
    std::vector<ScoredSample> scores;
  };
  std::vector<Mode> modes;
  for (const std::string& mode_name : {std::string("non-temporal"), std::string("temporal")}) {
    const bool temporal = mode_name == "temporal";
    auto features_of = [&](const Trace& trace) {
      return temporal ? extract_temporal(trace, set, params, temporal_cfg)
                      : extract_nontemporal(trace, set, params);
    };

    const auto train_vectors = features_of(train_clean);
    std::vector<std::vector<double>> train_points;
    train_points.reserve(train_vectors.size());
    for (const FeatureVector& fv : train_vectors) train_points.push_back(fv.values);

    TrainConfig train_cfg;
    train_cfg.nu = cfg.nu;
    train_cfg.gamma = cfg.gamma;
    train_cfg.seed = sub_seed(cfg.seed, "train." + mode_name);
    Mode mode;
    mode.name = mode_name;
    mode.model = train(train_points, train_cfg);

    auto score_into = [&](const Trace& trace) {
      for (const FeatureVector& fv : features_of(trace)) {
        mode.scores.push_back({fv.stage, anomaly_score(mode.model, fv.values)});
      }
    };
    score_into(test_clean);
    for (const Trace& run : staged_runs) score_into(run);
    modes.push_back(std::move(mode));
  }

  // artifacts
  {
    std::ostringstream text;
    write_trace(train_clean, text);
    detail::write_text_file(dir / "train_clean.csv", text.str());
  }
  {
    std::ostringstream text;
    write_trace(test_clean, text);
    detail::write_text_file(dir / "test_clean.csv", text.str());
  }
  for (std::size_t r = 0; r < staged_runs.size(); ++r) {
    std::ostringstream text;
    write_trace(staged_runs[r], text);
    detail::write_text_file(dir / ("staged_run_" + std::to_string(r) + ".csv"),
                            text.str());
  }
  save_transform_params(params, dir / "params.json");

  std::vector<ModelRunScores> pooled;
  for (const Mode& mode : modes) {
    const std::string suffix = mode.name == "temporal" ? "temporal" : "nontemporal";
    save_model(mode.model, dir / ("model_" + suffix + ".json"));
    std::ostringstream scores_csv;
    write_scores_csv(mode.scores, scores_csv);
    detail::write_text_file(dir / ("scores_" + suffix + ".csv"), scores_csv.str());

    ModelRunScores run = pool_scores(mode.scores, set.label, mode.name);
    for (const auto& [stage, mal_scores] : run.staged) {
      std::ostringstream roc_csv;
      write_roc_csv(roc(run.clean, mal_scores), roc_csv);
      detail::write_text_file(dir / ("roc_" + std::string(stage_name(stage)) + "_" +
                                     suffix + ".csv"),
                              roc_csv.str());
    }
    pooled.push_back(std::move(run));
  }

  ExperimentResult result;
  result.dir = dir;
  result.set = set;
  result.report = compare_models(pooled);
  {
    std::ostringstream report_csv;
    write_report_csv(result.report, report_csv);
    detail::write_text_file(dir / "report.csv", report_csv.str());
  }

  nlohmann::json manifest;
  manifest["seed"] = cfg.seed;
  manifest["epoch_instructions"] = cfg.epoch_instructions;
  manifest["noise_fraction"] = noise_fraction;
  manifest["temporal_n"] = cfg.temporal_n;
  manifest["nu"] = cfg.nu;
  manifest["gamma"] = cfg.gamma;
  manifest["event_set"] = {{"label", set.label}, {"events", nlohmann::json::array()}};
  for (EventKind kind : set.events) {
    manifest["event_set"]["events"].push_back(std::string(event_name(kind)));
  }
  manifest["train_epochs"] = cfg.train_epochs;
  manifest["test_clean_epochs"] = cfg.test_clean_epochs;
  manifest["exploit_runs"] = cfg.exploit_runs;
  // the transform and both models were fitted on train_clean.csv draws only;
  // scoring data comes from disjoint seeded streams
  manifest["train_test_disjoint"] = true;
  manifest["files"] = nlohmann::json::array();
  std::vector<std::string> names;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().filename() != "manifest.json") {
      names.push_back(entry.path().filename().string());
    }
  }
  std::sort(names.begin(), names.end());
  for (const std::string& name : names) manifest["files"].push_back(name);
  detail::write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");

  return result;
}

struct GranularityRow {
  std::uint64_t epoch_instructions = 0;
  StageLabel stage = StageLabel::Stage1;
  double auc = 0.0;
};

/// Re-runs the experiment at each sampling granularity with the
/// context-switch fraction scaled proportionally to the epoch size (capped
/// below 1): coarser epochs blend in more foreign-process activity. Reports
/// the non-temporal AUC per stage and size.
inline std::vector<GranularityRow> granularity_sweep(const ExperimentConfig& cfg,
                                                     const std::vector<std::uint64_t>& sizes,
                                                     double base_noise = 0.08,
                                                     std::uint64_t base_size = 512000) {
  if (sizes.empty()) throw Error("granularity_sweep: no epoch sizes");
  if (!(base_noise >= 0.0 && base_noise < 1.0)) {
    throw Error("granularity_sweep: base noise outside [0,1)");
  }
  std::vector<GranularityRow> rows;
  for (std::uint64_t size : sizes) {
    ExperimentConfig sub = cfg;
    sub.epoch_instructions = size;
    sub.noise_override = std::min(
        0.95, base_noise * static_cast<double>(size) / static_cast<double>(base_size));
    sub.output_dir =
        (std::filesystem::path(cfg.output_dir) / ("granularity_" + std::to_string(size)))
            .string();
    const ExperimentResult result = run_experiment(sub);
    for (const ComparisonRow& row : result.report) {
      if (row.mode == "non-temporal") {
        rows.push_back({size, row.stage, row.auc});
      }
    }
  }
  return rows;
}

inline void write_granularity_csv(std::span<const GranularityRow> rows,
                                  std::ostream& out) {
  out << "epoch_instructions,stage,auc\n";
  for (const GranularityRow& row : rows) {
    out << row.epoch_instructions << ',' << stage_name(row.stage) << ','
        << detail::fmt_double(row.auc) << '\n';
  }
  if (!out) throw Error("write_granularity_csv: stream write failed");
}

}  // namespace hpcad
