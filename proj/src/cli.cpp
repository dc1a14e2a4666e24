/*
 * Copyright 2026 The tmjx Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "tmjx/cli.hpp"

#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "spdlog/sinks/stdout_color_sinks.h"
#include "spdlog/spdlog.h"
#include "tmjx/cohort.hpp"
#include "tmjx/eval.hpp"
#include "tmjx/explain.hpp"
#include "tmjx/model.hpp"
#include "tmjx/service.hpp"

namespace tmjx {

namespace fs = std::filesystem;

namespace {

struct GlobalFlags {
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string config;
  std::string out_dir = ".";
  std::string log_level = "info";
};

// Strategy selection shared by train, export and compare.
struct StrategyFlags {
  std::string strategy = "iid";
  int segment = 0;
  int k = 1;
  std::string features;

  StrategyTag tag() const {
    if (strategy == "iid") return StrategyTag::iid();
    if (strategy == "temporal") return StrategyTag::temporal(segment);
    if (strategy == "lagged") return StrategyTag::lagged(k);
    return StrategyTag::parse(strategy);
  }
};

struct TrainFlags {
  std::string cohort;
  std::string model_out;
  std::optional<int> n_trees;
  std::optional<int> max_depth;
  std::optional<int> min_samples_leaf;
  std::optional<int> min_samples_split;
  std::string features_per_split;
  std::string class_weight;
  std::optional<double> alpha;
  std::optional<double> lambda_reg;
  std::optional<int> k_reg;
  bool randomized = false;
  bool allow_empty = false;
  std::optional<std::uint64_t> split_seed;
  std::optional<std::size_t> shap_rows;
};

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("config file " + path + " is not valid JSON: " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const fs::path& path, const RunManifest& m) {
  auto j = m.to_json();
  // The only wall-clock value; reports stay byte-stable.
  j["created_utc"] = utc_now();
  write_text(path, j.dump(2) + "\n");
}

RunManifest make_manifest(const std::string& command, const GlobalFlags& g, int argc, const char* const* argv) {
  RunManifest m;
  m.command = command;
  for (int i = 0; i < argc; ++i) m.argv.emplace_back(argv[i]);
  m.config_path = g.config;
  m.tool_version = kVersion;
  return m;
}

ExperimentConfig resolve_experiment_config(const GlobalFlags& g, const StrategyFlags& s, const TrainFlags& t,
                                           bool strategy_given, bool features_given) {
  ExperimentConfig cfg = g.config.empty() ? ExperimentConfig{} : ExperimentConfig::from_json(read_json_file(g.config));
  if (strategy_given || g.config.empty()) cfg.strategy = s.tag();
  if (features_given) cfg.feature_subset = s.features;
  if (g.seed) {
    cfg.hp.seed = *g.seed;
    cfg.split_seed = *g.seed;
    cfg.conformal.seed = *g.seed;
    cfg.preprocess.seed = *g.seed;
  }
  if (t.split_seed) cfg.split_seed = *t.split_seed;
  if (t.n_trees) cfg.hp.n_trees = *t.n_trees;
  if (t.max_depth) cfg.hp.max_depth = *t.max_depth;
  if (t.min_samples_leaf) cfg.hp.min_samples_leaf = *t.min_samples_leaf;
  if (t.min_samples_split) cfg.hp.min_samples_split = *t.min_samples_split;
  if (!t.features_per_split.empty()) cfg.hp.features_per_split = FeaturesPerSplit::parse(t.features_per_split);
  if (!t.class_weight.empty()) {
    if (t.class_weight == "balanced") {
      cfg.hp.class_weight = ClassWeight::kBalanced;
    } else if (t.class_weight == "uniform") {
      cfg.hp.class_weight = ClassWeight::kUniform;
    } else {
      throw ValidationError("--class-weight must be uniform or balanced");
    }
  }
  if (t.alpha) cfg.conformal.alpha = *t.alpha;
  if (t.lambda_reg) cfg.conformal.lambda_reg = *t.lambda_reg;
  if (t.k_reg) cfg.conformal.k_reg = *t.k_reg;
  if (t.randomized) cfg.conformal.randomized = true;
  if (t.allow_empty) cfg.conformal.allow_empty_sets = true;
  if (t.shap_rows) cfg.shap_max_rows = *t.shap_rows;
  cfg.threads = g.threads;
  cfg.hp.validate();
  cfg.conformal.validate();
  return cfg;
}

void add_train_options(CLI::App* cmd, TrainFlags& t) {
  cmd->add_option("--n-trees", t.n_trees, "Number of trees");
  cmd->add_option("--max-depth", t.max_depth, "Maximum tree depth (default: unlimited)");
  cmd->add_option("--min-samples-leaf", t.min_samples_leaf, "Minimum in-bag samples per leaf");
  cmd->add_option("--min-samples-split", t.min_samples_split, "Minimum in-bag samples to split a node");
  cmd->add_option("--features-per-split", t.features_per_split, "sqrt, log2, all or an integer");
  cmd->add_option("--class-weight", t.class_weight, "uniform or balanced");
  cmd->add_option("--alpha", t.alpha, "Conformal miscoverage level");
  cmd->add_option("--lambda", t.lambda_reg, "RAPS rank penalty");
  cmd->add_option("--k-reg", t.k_reg, "RAPS penalty-free rank budget");
  cmd->add_flag("--randomized", t.randomized, "Randomized RAPS scores");
  cmd->add_flag("--allow-empty-sets", t.allow_empty, "Allow empty prediction sets");
  cmd->add_option("--split-seed", t.split_seed, "Patient split seed (default: --seed)");
  cmd->add_option("--shap-rows", t.shap_rows, "Test rows explained in the SHAP summary (0 = all)");
}

void add_strategy_options(CLI::App* cmd, StrategyFlags& s, CLI::Option** strategy_opt, CLI::Option** features_opt) {
  *strategy_opt = cmd->add_option("--strategy", s.strategy, "iid, temporal or lagged");
  cmd->add_option("--segment", s.segment, "Temporal segment index (0: [0,2)y, 1: [2,5)y, 2: [5,inf)y)");
  cmd->add_option("--k", s.k, "Lag count for the lagged strategy");
  *features_opt = cmd->add_option("--features", s.features, "expert, all or a comma-separated list");
}

Cohort load_cohort_checked(const std::string& path) {
  if (path.empty()) throw ValidationError("--cohort is required");
  LoadStats stats;
  Cohort c = load_cohort(path, default_schema(), {}, &stats);
  spdlog::info("loaded {} patients / {} exams from {}", c.patients.size(), c.record_count(), path);
  return c;
}

void write_experiment_outputs(const ExperimentResult& r, const fs::path& dir, RunManifest& m) {
  const std::vector<ExperimentReport> reports = {r.report};
  write_text(dir / "report.json", r.report.to_json().dump(2) + "\n");
  write_text(dir / "report.txt", render_report_table(reports));
  r.summary.write_rank_csv(dir / "shap_rank.csv");
  r.summary.write_points_csv(dir / "shap_points.csv");
  m.outputs["report"] = (dir / "report.json").string();
  m.outputs["report_table"] = (dir / "report.txt").string();
  m.outputs["shap_rank"] = (dir / "shap_rank.csv").string();
  m.outputs["shap_points"] = (dir / "shap_points.csv").string();
}

volatile std::sig_atomic_t g_stop_requested = 0;

}  // namespace

nlohmann::json RunManifest::to_json() const {
  return {{"command", command},     {"argv", argv},       {"config_path", config_path},
          {"parameters", parameters}, {"seeds", seeds},   {"inputs", inputs},
          {"outputs", outputs},     {"tool_version", tool_version}};
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"TMJ involvement prediction: synthetic cohorts, random forests, conformal sets, TreeSHAP"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags g;
  app.add_option("--seed", g.seed, "Master seed (forest, split, conformal, synthesis)");
  app.add_option("--threads", g.threads, "Worker threads; results do not depend on it")->check(CLI::PositiveNumber);
  app.add_option("--config", g.config, "JSON config; flags override it");
  app.add_option("--out-dir", g.out_dir, "Directory for outputs");
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error, off");

  // generate
  auto* gen = app.add_subcommand("generate", "Write a synthetic cohort CSV");
  std::string gen_out;
  std::string gen_preset;
  std::optional<int> gen_patients;
  gen->add_option("--out", gen_out, "Cohort CSV path (default: <out-dir>/cohort.csv)");
  gen->add_option("--preset", gen_preset, "default, high_signal or null");
  gen->add_option("--patients", gen_patients, "Number of patients");

  // train
  auto* train = app.add_subcommand("train", "Train a model and write model.json plus its report");
  StrategyFlags train_s;
  TrainFlags train_t;
  CLI::Option *train_strategy_opt = nullptr, *train_features_opt = nullptr;
  train->add_option("--cohort", train_t.cohort, "Cohort CSV")->required();
  train->add_option("--model-out", train_t.model_out, "Model path (default: <out-dir>/model.json)");
  add_strategy_options(train, train_s, &train_strategy_opt, &train_features_opt);
  add_train_options(train, train_t);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Score a model on the held-out test partition of a cohort");
  std::string eval_model, eval_cohort;
  std::optional<std::uint64_t> eval_split_seed;
  std::optional<std::size_t> eval_shap_rows;
  evaluate->add_option("--model", eval_model, "Model JSON")->required();
  evaluate->add_option("--cohort", eval_cohort, "Cohort CSV")->required();
  evaluate->add_option("--split-seed", eval_split_seed, "Patient split seed (default: the model's)");
  evaluate->add_option("--shap-rows", eval_shap_rows, "Test rows explained in the SHAP summary (0 = all)");

  // explain
  auto* explain = app.add_subcommand("explain", "Explain one row: a cohort exam or a JSON predict request");
  std::string ex_model, ex_cohort, ex_patient, ex_request;
  int ex_exam = 0;
  explain->add_option("--model", ex_model, "Model JSON")->required();
  explain->add_option("--cohort", ex_cohort, "Cohort CSV holding the row");
  explain->add_option("--patient", ex_patient, "Patient id of the row");
  explain->add_option("--exam", ex_exam, "0-based exam index of the row");
  explain->add_option("--request", ex_request, "Predict-request JSON file instead of a cohort row");

  // export
  auto* exp = app.add_subcommand("export", "Write the raw sample set of a strategy as CSV");
  StrategyFlags exp_s;
  std::string exp_cohort, exp_out;
  CLI::Option *exp_strategy_opt = nullptr, *exp_features_opt = nullptr;
  exp->add_option("--cohort", exp_cohort, "Cohort CSV")->required();
  exp->add_option("--out", exp_out, "CSV path (default: <out-dir>/samples.csv)");
  add_strategy_options(exp, exp_s, &exp_strategy_opt, &exp_features_opt);

  // plot-summary
  auto* plot = app.add_subcommand("plot-summary", "Render a SHAP summary chart (SVG) from shap_points.csv");
  std::string plot_in, plot_out;
  std::size_t plot_max = 20;
  plot->add_option("--summary", plot_in, "Long-form SHAP points CSV")->required();
  plot->add_option("--out", plot_out, "SVG path (default: <out-dir>/shap_summary.svg)");
  plot->add_option("--max-features", plot_max, "Number of feature lanes");

  // serve
  auto* serve = app.add_subcommand("serve", "Serve a model over HTTP");
  std::string serve_model, serve_host = "127.0.0.1";
  int serve_port = 8080;
  std::optional<double> serve_alpha;
  serve->add_option("--model", serve_model, "Model JSON")->required();
  serve->add_option("--host", serve_host, "Bind address");
  serve->add_option("--port", serve_port, "Port");
  serve->add_option("--alpha-override", serve_alpha, "Recalibrate the conformal threshold at this alpha");

  // compare
  auto* compare = app.add_subcommand("compare", "Run several strategies on one shared patient split");
  std::string cmp_cohort;
  std::vector<std::string> cmp_strategies = {"iid", "temporal", "lagged k=1", "lagged k=2"};
  std::string cmp_features;
  TrainFlags cmp_t;
  compare->add_option("--cohort", cmp_cohort, "Cohort CSV")->required();
  compare->add_option("--strategies", cmp_strategies, "Strategy specs, e.g. iid 'temporal' 'lagged k=1'")
      ->delimiter(',');
  auto* cmp_features_opt = compare->add_option("--features", cmp_features, "expert, all or a list");
  add_train_options(compare, cmp_t);

  // schema
  auto* schema_cmd = app.add_subcommand("schema", "Print the default feature schema and drug map as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  spdlog::set_default_logger(
      std::make_shared<spdlog::logger>("tmjx", std::make_shared<spdlog::sinks::stderr_color_sink_mt>()));
  spdlog::set_level(spdlog::level::from_str(g.log_level));

  try {
    const fs::path out_dir = g.out_dir;
    if (*gen) {
      SynthesisConfig cfg = default_synthesis_config();
      nlohmann::json cj = g.config.empty() ? nlohmann::json::object() : read_json_file(g.config);
      if (!gen_preset.empty()) cj["preset"] = gen_preset;
      cfg = SynthesisConfig::from_json(cj);
      if (gen_patients) cfg.n_patients = *gen_patients;
      if (g.seed) cfg.rng_seed = *g.seed;
      cfg.validate();
      const Cohort cohort = generate_synthetic_cohort(cfg);
      const fs::path out = gen_out.empty() ? out_dir / "cohort.csv" : fs::path(gen_out);
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      save_cohort(out.string(), cohort);
      RunManifest m = make_manifest("generate", g, argc, argv);
      m.parameters = cfg.to_json();
      m.seeds["rng_seed"] = cfg.rng_seed;
      m.outputs["cohort"] = out.string();
      write_manifest(fs::path(out.string() + ".manifest.json"), m);
      spdlog::info("wrote {} patients / {} exams to {}", cohort.patients.size(), cohort.record_count(), out.string());
      return kExitOk;
    }

    if (*train) {
      const ExperimentConfig cfg =
          resolve_experiment_config(g, train_s, train_t, train_strategy_opt->count() > 0, train_features_opt->count() > 0);
      const Cohort cohort = load_cohort_checked(train_t.cohort);
      const ExperimentResult r = run_experiment(cohort, cfg);
      fs::create_directories(out_dir);
      const fs::path model_path = train_t.model_out.empty() ? out_dir / "model.json" : fs::path(train_t.model_out);
      if (model_path.has_parent_path()) fs::create_directories(model_path.parent_path());
      r.model.save(model_path.string());
      RunManifest m = make_manifest("train", g, argc, argv);
      m.parameters = cfg.to_json();
      m.seeds = {{"forest", cfg.hp.seed}, {"split", cfg.split_seed}, {"conformal", cfg.conformal.seed},
                 {"preprocess", cfg.preprocess.seed}};
      m.inputs["cohort"] = train_t.cohort;
      m.outputs["model"] = model_path.string();
      write_experiment_outputs(r, out_dir, m);
      write_manifest(out_dir / "manifest.json", m);
      std::cout << render_report_table({r.report});
      return kExitOk;
    }

    if (*evaluate) {
      const TrainedModel model = TrainedModel::load(eval_model);
      const Cohort cohort = load_cohort_checked(eval_cohort);
      ExperimentConfig cfg;
      cfg.split_seed = eval_split_seed.value_or(model.train_report.value("split_seed", std::uint64_t{0}));
      if (model.train_report.contains("split_fractions")) {
        cfg.split_fractions = model.train_report["split_fractions"].get<std::vector<double>>();
      }
      cfg.strategy = model.strategy;
      cfg.feature_subset = "";
      cfg.hp = model.forest.hyperparams();
      cfg.conformal = model.conformal;
      cfg.preprocess = model.encoder.options;
      if (eval_shap_rows) cfg.shap_max_rows = *eval_shap_rows;
      cfg.threads = g.threads;
      const SplitAssignment split = split_patients(cohort, cfg.split_fractions, cfg.split_seed);
      const ExperimentResult r = evaluate_model(model, cohort, split, cfg);
      fs::create_directories(out_dir);
      RunManifest m = make_manifest("evaluate", g, argc, argv);
      m.parameters = cfg.to_json();
      m.seeds["split"] = cfg.split_seed;
      m.inputs = {{"model", eval_model}, {"cohort", eval_cohort}};
      write_experiment_outputs(r, out_dir, m);
      write_manifest(out_dir / "manifest.json", m);
      std::cout << render_report_table({r.report});
      return kExitOk;
    }

    if (*explain) {
      const TrainedModel model = TrainedModel::load(ex_model);
      SampleRow row;
      nlohmann::json provenance = nullptr;
      if (!ex_request.empty()) {
        row = to_sample_row(parse_predict_request(read_json_file(ex_request), model));
      } else {
        if (ex_cohort.empty() || ex_patient.empty()) {
          throw ValidationError("explain needs --request, or --cohort with --patient and --exam");
        }
        const Cohort cohort = load_cohort_checked(ex_cohort);
        const SampleSet samples = make_samples(cohort, model.strategy, model.encoder.feature_subset);
        const auto it = std::find_if(samples.rows.begin(), samples.rows.end(), [&](const SampleRow& r) {
          return r.provenance.patient_id == ex_patient && r.provenance.exam_index == ex_exam;
        });
        if (it == samples.rows.end()) {
          throw ValidationError("no row for patient '" + ex_patient + "' exam " + std::to_string(ex_exam) +
                                " under strategy " + model.strategy.to_string());
        }
        row = *it;
        provenance = {{"patient_id", ex_patient}, {"exam_index", ex_exam}, {"label", label_name(row.label)}};
      }
      const Prediction p = predict_one(model, row);
      nlohmann::json out = prediction_to_json(p, model);
      out["row"] = provenance;
      std::cout << out.dump(2) << "\n";
      return kExitOk;
    }

    if (*exp) {
      const Cohort cohort = load_cohort_checked(exp_cohort);
      const StrategyTag tag = exp_s.tag();
      const auto subset = resolve_feature_subset(cohort.schema, exp_s.features.empty() ? "expert" : exp_s.features);
      const SampleSet samples = make_samples(cohort, tag, subset);
      const fs::path out = exp_out.empty() ? out_dir / "samples.csv" : fs::path(exp_out);
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      std::ofstream f(out, std::ios::binary);
      if (!f) throw IoError("cannot write " + out.string());
      write_sample_set_csv(f, samples);
      if (!f) throw IoError("failed writing " + out.string());
      RunManifest m = make_manifest("export", g, argc, argv);
      m.parameters = {{"strategy", tag.to_string()}, {"features", subset}, {"rows", samples.size()}, {"d", samples.d()}};
      m.inputs["cohort"] = exp_cohort;
      m.outputs["samples"] = out.string();
      write_manifest(fs::path(out.string() + ".manifest.json"), m);
      spdlog::info("wrote {} rows x {} features ({}) to {}", samples.size(), samples.d(), tag.to_string(), out.string());
      return kExitOk;
    }

    if (*plot) {
      const SummaryData s = SummaryData::read_points_csv(plot_in);
      const std::string svg = render_summary_svg(s, plot_max);
      const fs::path out = plot_out.empty() ? out_dir / "shap_summary.svg" : fs::path(plot_out);
      write_text(out, svg);
      spdlog::info("wrote {}", out.string());
      return kExitOk;
    }

    if (*serve) {
      ModelService service(serve_alpha);
      service.load(serve_model);
      HttpServer server(service);
      static HttpServer* active = nullptr;
      active = &server;
      std::signal(SIGINT, [](int) {
        g_stop_requested = 1;
        if (active) active->stop();
      });
      std::signal(SIGTERM, [](int) {
        g_stop_requested = 1;
        if (active) active->stop();
      });
      server.run(serve_host, serve_port);
      active = nullptr;
      return kExitOk;
    }

    if (*compare) {
      StrategyFlags none;
      const ExperimentConfig base = resolve_experiment_config(g, none, cmp_t, false, cmp_features_opt->count() > 0);
      ExperimentConfig with_features = base;
      if (cmp_features_opt->count() > 0) with_features.feature_subset = cmp_features;
      std::vector<ExperimentConfig> configs;
      for (const auto& spec : cmp_strategies) {
        ExperimentConfig c = with_features;
        c.strategy = spec == "temporal" ? StrategyTag::temporal(-1) : StrategyTag::parse(spec);
        configs.push_back(c);
      }
      const Cohort cohort = load_cohort_checked(cmp_cohort);
      const auto reports = compare_strategies(cohort, configs);
      fs::create_directories(out_dir);
      write_text(out_dir / "comparison.json", reports_to_json(reports).dump(2) + "\n");
      write_text(out_dir / "comparison.txt", render_report_table(reports));
      RunManifest m = make_manifest("compare", g, argc, argv);
      m.parameters = with_features.to_json();
      m.parameters["strategies"] = cmp_strategies;
      m.seeds = {{"forest", base.hp.seed}, {"split", base.split_seed}};
      m.inputs["cohort"] = cmp_cohort;
      m.outputs = {{"comparison", (out_dir / "comparison.json").string()},
                   {"comparison_table", (out_dir / "comparison.txt").string()}};
      write_manifest(out_dir / "manifest.json", m);
      std::cout << render_report_table(reports);
      return kExitOk;
    }

    if (*schema_cmd) {
      const nlohmann::json j = {{"schema", default_schema().to_json()}, {"drug_map", default_drug_map().to_json()}};
      std::cout << j.dump(2) << "\n";
      return kExitOk;
    }
  } catch (const ValidationError& e) {
    spdlog::error("{}", e.what());
    return kExitValidation;
  } catch (const IoError& e) {
    spdlog::error("{}", e.what());
    return kExitIo;
  } catch (const InvariantError& e) {
    spdlog::error("internal invariant violated: {}", e.what());
    return kExitInvariant;
  } catch (const fs::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    spdlog::error("internal error: {}", e.what());
    return kExitInvariant;
  }
  return kExitOk;
}

}  // namespace tmjx
