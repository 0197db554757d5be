// Command-line front end: every pipeline stage as a subcommand plus the
// one-shot `experiment` and `granularity-sweep` drivers.

#include <csignal>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "hpcad/hpcad.hpp"

namespace {

volatile std::sig_atomic_t g_stop_requested = 0;

void handle_stop_signal(int) { g_stop_requested = 1; }

std::vector<std::uint64_t> parse_u64_list(const std::string& text,
                                          const std::string& what) {
  std::vector<std::uint64_t> out;
  for (std::string_view token : hpcad::detail::split(text, ',')) {
    const auto value = hpcad::detail::parse_u64(token);
    if (!value) {
      throw hpcad::Error(what + ": malformed entry '" + std::string(token) + "'");
    }
    out.push_back(*value);
  }
  if (out.empty()) throw hpcad::Error(what + ": empty list");
  return out;
}

hpcad::StageLabel parse_stage_or_throw(const std::string& token) {
  const auto stage = hpcad::parse_stage(token);
  if (!stage) throw hpcad::Error("unknown stage '" + token + "'");
  return *stage;
}

double parse_gamma(const std::string& text) {
  if (text == "auto") return 0.0;
  try {
    return std::stod(text);
  } catch (const std::exception&) {
    throw hpcad::Error("gamma must be 'auto' or a positive number, got '" + text + "'");
  }
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw hpcad::Error("cannot open '" + path.string() + "'");
  out << text;
  if (!out) throw hpcad::Error("write to '" + path.string() + "' failed");
}

int run_synth(const std::string& profile_path, std::size_t epochs, std::uint64_t seed,
              std::int64_t inject_at, const std::string& out_path,
              std::uint64_t epoch_instructions, double noise) {
  hpcad::SynthProfile profile = profile_path.empty()
                                    ? hpcad::default_synth_profile()
                                    : hpcad::load_synth_profile(profile_path);
  hpcad::Trace trace = hpcad::gen_benign(profile.benign, epochs, epoch_instructions,
                                         hpcad::sub_seed(seed, "synth"));
  if (inject_at >= 0) {
    trace = hpcad::inject_exploit(trace, profile.exploit,
                                  static_cast<std::size_t>(inject_at),
                                  hpcad::sub_seed(seed, "inject"));
  }
  const double fraction =
      noise >= 0.0 ? noise : profile.noise.context_switch_fraction;
  if (fraction > 0.0) {
    trace = hpcad::mix_context_noise(trace, {fraction}, hpcad::default_foreign_profile(),
                                     hpcad::sub_seed(seed, "noise"));
  }
  hpcad::write_trace(trace, std::filesystem::path(out_path));
  return 0;
}

int run_record(const std::string& listen, const std::string& out_path, int max_conn) {
  hpcad::RecorderConfig config;
  config.listen_address = listen;
  config.output_path = out_path;
  config.max_connections = max_conn;
  hpcad::Recorder recorder(config);
  recorder.start();
  std::signal(SIGINT, handle_stop_signal);
  std::signal(SIGTERM, handle_stop_signal);
  std::cerr << "record: listening on port " << recorder.port()
            << ", stop with SIGINT/SIGTERM\n";
  while (!g_stop_requested) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  recorder.stop();
  std::cerr << "record: persisted " << recorder.records_received() << " records to "
            << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"anomaly-based exploit detection over hardware performance counter traces"};
  app.require_subcommand(1);

  std::string stage_tag = "cli";
  try {
    // ---- synth ----
    auto* synth = app.add_subcommand("synth", "generate a labeled synthetic trace");
    std::string synth_profile, synth_out;
    std::size_t synth_epochs = 0;
    std::uint64_t synth_seed = 0, synth_epoch_instructions = 512000;
    std::int64_t synth_inject_at = -1;
    double synth_noise = -1.0;
    synth->add_option("--profile", synth_profile, "profile JSON (default: built-in)");
    synth->add_option("--epochs", synth_epochs, "number of epochs")->required();
    synth->add_option("--seed", synth_seed, "generator seed")->required();
    synth->add_option("--inject-at", synth_inject_at,
                      "epoch to start the exploit at (-1: clean trace)");
    synth->add_option("--out", synth_out, "output trace CSV")->required();
    synth->add_option("--epoch-instructions", synth_epoch_instructions,
                      "instructions per epoch");
    synth->add_option("--noise", synth_noise,
                      "context-switch fraction override (default: profile value)");

    // ---- record ----
    auto* record = app.add_subcommand("record", "run the TCP measurement recorder");
    std::string record_listen = "127.0.0.1:9000", record_out;
    int record_max_conn = 4;
    record->add_option("--listen", record_listen, "host:port to listen on");
    record->add_option("--out", record_out, "output trace CSV")->required();
    record->add_option("--max-conn", record_max_conn, "max concurrent clients");

    // ---- fit-transform ----
    auto* fit = app.add_subcommand("fit-transform",
                                   "fit the per-event power transform on a trace");
    std::string fit_in, fit_out;
    double fit_target = 0.5;
    fit->add_option("--in", fit_in, "training trace CSV")->required();
    fit->add_option("--out", fit_out, "output params JSON")->required();
    fit->add_option("--target-median", fit_target, "normalized median target");

    // ---- select ----
    auto* select = app.add_subcommand("select",
                                      "rank events by discriminative power");
    std::string select_clean, select_staged, select_stage = "stage1",
                select_category = "both", select_out, select_params;
    select->add_option("--clean", select_clean, "clean trace CSV")->required();
    select->add_option("--staged", select_staged, "exploit trace CSV")->required();
    select->add_option("--stage", select_stage, "stage to rank against");
    select->add_option("--category", select_category,
                       "architectural|microarchitectural|both");
    select->add_option("--params", select_params,
                       "transform params JSON (default: fit on the clean trace)");
    select->add_option("--out", select_out, "ranking CSV (default: stdout)");

    // ---- extract ----
    auto* extract = app.add_subcommand("extract",
                                       "turn a trace into labeled feature vectors");
    std::string extract_in, extract_params, extract_events, extract_out;
    std::size_t extract_n = 1;
    extract->add_option("--in", extract_in, "trace CSV")->required();
    extract->add_option("--params", extract_params, "transform params JSON")->required();
    extract->add_option("--events", extract_events,
                        "4 comma-separated event names")->required();
    extract->add_option("--temporal-n", extract_n,
                        "epochs per vector (1 = non-temporal)");
    extract->add_option("--out", extract_out, "output vectors CSV")->required();

    // ---- train ----
    auto* train_cmd = app.add_subcommand("train",
                                         "train the one-class detector on clean vectors");
    std::string train_in, train_out, train_gamma = "auto";
    double train_nu = 0.05, train_tol = 1e-4;
    std::uint64_t train_seed = 0;
    std::size_t train_max_passes = 0;
    train_cmd->add_option("--in", train_in, "vectors CSV (clean rows are used)")->required();
    train_cmd->add_option("--nu", train_nu, "outlier/support-vector fraction bound");
    train_cmd->add_option("--gamma", train_gamma, "'auto' (1/dim) or a positive width");
    train_cmd->add_option("--kkt-tol", train_tol, "KKT stopping tolerance");
    train_cmd->add_option("--max-passes", train_max_passes,
                          "pair-step bound (0: 10*l)");
    train_cmd->add_option("--seed", train_seed, "working-set shuffle seed");
    train_cmd->add_option("--out", train_out, "output model JSON")->required();

    // ---- score ----
    auto* score = app.add_subcommand("score", "score vectors with a trained model");
    std::string score_model, score_in, score_out;
    score->add_option("--model", score_model, "model JSON")->required();
    score->add_option("--in", score_in, "vectors CSV")->required();
    score->add_option("--out", score_out, "output scores CSV")->required();

    // ---- eval ----
    auto* eval_cmd = app.add_subcommand("eval", "AUC report from a scores file");
    std::string eval_scores, eval_report, eval_set = "set", eval_mode = "non-temporal";
    eval_cmd->add_option("--scores", eval_scores, "scores CSV")->required();
    eval_cmd->add_option("--report", eval_report, "output report CSV")->required();
    eval_cmd->add_option("--set-label", eval_set, "set label for the report rows");
    eval_cmd->add_option("--mode", eval_mode, "mode tag for the report rows");

    // ---- roc ----
    auto* roc_cmd = app.add_subcommand("roc", "ROC curve from a scores file");
    std::string roc_scores, roc_out, roc_stage = "any";
    roc_cmd->add_option("--scores", roc_scores, "scores CSV")->required();
    roc_cmd->add_option("--out", roc_out, "output ROC CSV")->required();
    roc_cmd->add_option("--stage", roc_stage,
                        "stage to treat as malicious (default: every non-clean row)");

    // ---- mimicry ----
    auto* mimicry = app.add_subcommand("mimicry",
                                       "no-op padding sweep against a trained model");
    std::string mim_model, mim_segment, mim_counts, mim_trace, mim_params, mim_events,
        mim_stage = "stage1", mim_out;
    std::uint64_t mim_seed = 0;
    mimicry->add_option("--model", mim_model, "model JSON")->required();
    mimicry->add_option("--segment", mim_segment, "no-op segment JSON")->required();
    mimicry->add_option("--counts", mim_counts, "comma-separated pad counts")->required();
    mimicry->add_option("--trace", mim_trace, "staged trace CSV")->required();
    mimicry->add_option("--params", mim_params, "transform params JSON")->required();
    mimicry->add_option("--events", mim_events, "4 comma-separated event names")->required();
    mimicry->add_option("--target-stage", mim_stage, "stage to pad");
    mimicry->add_option("--seed", mim_seed, "placement seed");
    mimicry->add_option("--out", mim_out, "output sweep CSV (default: stdout)");

    // ---- experiment ----
    auto* experiment = app.add_subcommand("experiment",
                                          "run the full reproducible pipeline");
    std::string exp_config, exp_profile, exp_events, exp_out, exp_gamma;
    std::optional<std::uint64_t> exp_seed;
    std::optional<std::size_t> exp_temporal_n, exp_train_epochs, exp_test_epochs,
        exp_runs;
    std::optional<double> exp_nu, exp_noise;
    experiment->add_option("--config", exp_config, "experiment config JSON");
    experiment->add_option("--profile", exp_profile, "synth profile JSON");
    experiment->add_option("--events", exp_events, "'auto' or 4 event names");
    experiment->add_option("--seed", exp_seed, "experiment seed");
    experiment->add_option("--out-dir", exp_out, "report directory");
    experiment->add_option("--temporal-n", exp_temporal_n, "temporal window size");
    experiment->add_option("--nu", exp_nu, "detector nu");
    experiment->add_option("--gamma", exp_gamma, "'auto' or kernel width");
    experiment->add_option("--train-epochs", exp_train_epochs, "clean training epochs");
    experiment->add_option("--test-epochs", exp_test_epochs, "clean test epochs");
    experiment->add_option("--exploit-runs", exp_runs, "number of exploit traces");
    experiment->add_option("--noise", exp_noise, "context-switch fraction");

    // ---- granularity-sweep ----
    auto* sweep = app.add_subcommand("granularity-sweep",
                                     "detection quality across sampling granularities");
    std::string gs_config, gs_profile, gs_events, gs_out_dir, gs_sizes, gs_out;
    std::optional<std::uint64_t> gs_seed;
    double gs_base_noise = 0.08;
    sweep->add_option("--config", gs_config, "experiment config JSON");
    sweep->add_option("--profile", gs_profile, "synth profile JSON");
    sweep->add_option("--events", gs_events, "'auto' or 4 event names");
    sweep->add_option("--seed", gs_seed, "experiment seed");
    sweep->add_option("--out-dir", gs_out_dir, "working directory")->required();
    sweep->add_option("--sizes", gs_sizes, "comma-separated epoch sizes")->required();
    sweep->add_option("--base-noise", gs_base_noise,
                      "context-switch fraction at 512000 instructions");
    sweep->add_option("--out", gs_out, "output CSV (default: stdout)");

    CLI11_PARSE(app, argc, argv);

    auto load_experiment_config = [](const std::string& path) {
      if (path.empty()) return hpcad::ExperimentConfig{};
      std::ifstream in(path);
      if (!in) throw hpcad::Error("cannot open config '" + path + "'");
      nlohmann::json j;
      in >> j;
      return hpcad::experiment_config_from_json(j);
    };

    if (synth->parsed()) {
      stage_tag = "synth";
      return run_synth(synth_profile, synth_epochs, synth_seed, synth_inject_at,
                       synth_out, synth_epoch_instructions, synth_noise);
    }
    if (record->parsed()) {
      stage_tag = "record";
      return run_record(record_listen, record_out, record_max_conn);
    }
    if (fit->parsed()) {
      stage_tag = "fit-transform";
      const hpcad::Trace trace = hpcad::read_trace(std::filesystem::path(fit_in));
      hpcad::save_transform_params(hpcad::fit_transform(trace, fit_target),
                                   std::filesystem::path(fit_out));
      return 0;
    }
    if (select->parsed()) {
      stage_tag = "select";
      const hpcad::Trace clean = hpcad::read_trace(std::filesystem::path(select_clean));
      const hpcad::Trace staged = hpcad::read_trace(std::filesystem::path(select_staged));
      const auto category = hpcad::parse_category_filter(select_category);
      if (!category) throw hpcad::Error("unknown category '" + select_category + "'");
      const hpcad::TransformParams params =
          select_params.empty()
              ? hpcad::fit_transform(clean)
              : hpcad::load_transform_params(std::filesystem::path(select_params));
      const auto ranking = hpcad::rank_events(
          clean, staged, parse_stage_or_throw(select_stage), *category, params);
      std::ostringstream csv;
      hpcad::write_ranking_csv(ranking, csv);
      if (select_out.empty()) {
        std::cout << csv.str();
      } else {
        write_file(select_out, csv.str());
      }
      return 0;
    }
    if (extract->parsed()) {
      stage_tag = "extract";
      const hpcad::Trace trace = hpcad::read_trace(std::filesystem::path(extract_in));
      const auto params =
          hpcad::load_transform_params(std::filesystem::path(extract_params));
      const auto set = hpcad::detail::parse_event_set_spec(extract_events);
      const auto vectors =
          extract_n == 1
              ? hpcad::extract_nontemporal(trace, set, params)
              : hpcad::extract_temporal(trace, set, params, {extract_n, 1});
      std::ostringstream csv;
      hpcad::write_vectors_csv(vectors, csv);
      write_file(extract_out, csv.str());
      return 0;
    }
    if (train_cmd->parsed()) {
      stage_tag = "train";
      std::ifstream in(train_in);
      if (!in) throw hpcad::Error("cannot open '" + train_in + "'");
      const auto vectors = hpcad::read_vectors_csv(in);
      std::vector<std::vector<double>> points;
      for (const auto& fv : vectors) {
        if (fv.stage == hpcad::StageLabel::Clean) points.push_back(fv.values);
      }
      if (points.empty()) throw hpcad::Error("no clean vectors in '" + train_in + "'");
      hpcad::TrainConfig cfg;
      cfg.nu = train_nu;
      cfg.gamma = parse_gamma(train_gamma);
      cfg.kkt_tolerance = train_tol;
      cfg.max_passes = train_max_passes;
      cfg.seed = train_seed;
      hpcad::save_model(hpcad::train(points, cfg), std::filesystem::path(train_out));
      return 0;
    }
    if (score->parsed()) {
      stage_tag = "score";
      const auto model = hpcad::load_model(std::filesystem::path(score_model));
      std::ifstream in(score_in);
      if (!in) throw hpcad::Error("cannot open '" + score_in + "'");
      const auto vectors = hpcad::read_vectors_csv(in);
      std::vector<hpcad::ScoredSample> scores;
      scores.reserve(vectors.size());
      for (const auto& fv : vectors) {
        scores.push_back({fv.stage, hpcad::anomaly_score(model, fv.values)});
      }
      std::ostringstream csv;
      hpcad::write_scores_csv(scores, csv);
      write_file(score_out, csv.str());
      return 0;
    }
    if (eval_cmd->parsed()) {
      stage_tag = "eval";
      std::ifstream in(eval_scores);
      if (!in) throw hpcad::Error("cannot open '" + eval_scores + "'");
      const auto scores = hpcad::read_scores_csv(in);
      const auto run = hpcad::pool_scores(scores, eval_set, eval_mode);
      const auto rows = hpcad::compare_models({run});
      std::ostringstream csv;
      hpcad::write_report_csv(rows, csv);
      write_file(eval_report, csv.str());
      return 0;
    }
    if (roc_cmd->parsed()) {
      stage_tag = "roc";
      std::ifstream in(roc_scores);
      if (!in) throw hpcad::Error("cannot open '" + roc_scores + "'");
      const auto scores = hpcad::read_scores_csv(in);
      std::vector<double> clean, mal;
      const bool any_stage = roc_stage == "any";
      const hpcad::StageLabel wanted =
          any_stage ? hpcad::StageLabel::Stage1 : parse_stage_or_throw(roc_stage);
      for (const auto& s : scores) {
        if (s.stage == hpcad::StageLabel::Clean) {
          clean.push_back(s.score);
        } else if (any_stage || s.stage == wanted) {
          mal.push_back(s.score);
        }
      }
      std::ostringstream csv;
      hpcad::write_roc_csv(hpcad::roc(clean, mal), csv);
      write_file(roc_out, csv.str());
      return 0;
    }
    if (mimicry->parsed()) {
      stage_tag = "mimicry";
      const auto model = hpcad::load_model(std::filesystem::path(mim_model));
      const auto segment = hpcad::load_noop_segment(std::filesystem::path(mim_segment));
      const auto trace = hpcad::read_trace(std::filesystem::path(mim_trace));
      const auto params =
          hpcad::load_transform_params(std::filesystem::path(mim_params));
      const auto set = hpcad::detail::parse_event_set_spec(mim_events);
      const auto counts = parse_u64_list(mim_counts, "counts");
      const auto rows =
          hpcad::sweep_padding(model, trace, params, set, segment, counts,
                               parse_stage_or_throw(mim_stage), mim_seed);
      std::ostringstream csv;
      hpcad::write_sweep_csv(rows, csv);
      if (mim_out.empty()) {
        std::cout << csv.str();
      } else {
        write_file(mim_out, csv.str());
      }
      return 0;
    }
    if (experiment->parsed()) {
      stage_tag = "experiment";
      hpcad::ExperimentConfig cfg = load_experiment_config(exp_config);
      if (!exp_profile.empty()) cfg.profile_path = exp_profile;
      if (!exp_events.empty()) cfg.event_set = exp_events;
      if (exp_seed) cfg.seed = *exp_seed;
      if (exp_config.empty() && !exp_seed) {
        throw hpcad::Error("--seed (or a config with \"seed\") is required");
      }
      if (!exp_out.empty()) cfg.output_dir = exp_out;
      if (exp_temporal_n) cfg.temporal_n = *exp_temporal_n;
      if (exp_nu) cfg.nu = *exp_nu;
      if (!exp_gamma.empty()) cfg.gamma = parse_gamma(exp_gamma);
      if (exp_train_epochs) cfg.train_epochs = *exp_train_epochs;
      if (exp_test_epochs) cfg.test_clean_epochs = *exp_test_epochs;
      if (exp_runs) cfg.exploit_runs = *exp_runs;
      if (exp_noise) cfg.noise_override = *exp_noise;
      const auto result = hpcad::run_experiment(cfg);
      std::cout << "experiment: report written to "
                << (result.dir / "report.csv").string() << "\n";
      return 0;
    }
    if (sweep->parsed()) {
      stage_tag = "granularity-sweep";
      hpcad::ExperimentConfig cfg = load_experiment_config(gs_config);
      if (!gs_profile.empty()) cfg.profile_path = gs_profile;
      if (!gs_events.empty()) cfg.event_set = gs_events;
      if (gs_seed) cfg.seed = *gs_seed;
      if (gs_config.empty() && !gs_seed) {
        throw hpcad::Error("--seed (or a config with \"seed\") is required");
      }
      cfg.output_dir = gs_out_dir;
      const auto sizes = parse_u64_list(gs_sizes, "sizes");
      const auto rows = hpcad::granularity_sweep(cfg, sizes, gs_base_noise);
      std::ostringstream csv;
      hpcad::write_granularity_csv(rows, csv);
      if (gs_out.empty()) {
        std::cout << csv.str();
      } else {
        write_file(gs_out, csv.str());
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "[" << stage_tag << "] error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
