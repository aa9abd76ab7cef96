#include "shot/commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "CLI11.hpp"
#include "shot/error.hpp"
#include "shot/metrics.hpp"
#include "shot/tasks.hpp"

namespace shot {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

Dataset rotated(const Dataset& d, double degrees, std::uint64_t seed, int tag) {
  Dataset out = apply_shift(d, ShiftSpec{degrees, {}, 1.0, 0.0}, seed);
  std::fill(out.domain.begin(), out.domain.end(), tag);
  return out;
}

// Predictions of one model or the summed-softmax ensemble; open set marks
// rejected rows with the unknown label.
struct Scored {
  std::vector<int> preds;
  std::optional<RejectionMask> rejection;
};

Scored predict_scenario(std::span<const Model> models, const Tensor& x, Scenario scenario) {
  if (models.size() > 1) {
    if (scenario == Scenario::Open) throw ConfigError("multi-model prediction supports closed and partial set only");
    return {multi_source_predict(models, x), std::nullopt};
  }
  if (scenario == Scenario::Open) {
    auto mask = reject_unknown(predict(models.front(), x).logits);
    auto preds = predict_labels(models.front(), x, mask.rejected);
    return {std::move(preds), std::move(mask)};
  }
  return {predict_labels(models.front(), x), std::nullopt};
}

void add_scores(RunReport& report, const Scored& scored, const Dataset& data, std::size_t num_known) {
  report.metrics = score(scored.preds, data.labels, num_known, report.scenario);
  if (scored.rejection) report.metrics["rejection_rate"] = scored.rejection->rejection_rate();
  std::vector<int> tags = data.domain;
  std::sort(tags.begin(), tags.end());
  tags.erase(std::unique(tags.begin(), tags.end()), tags.end());
  if (tags.size() > 1) {
    for (int tag : tags) {
      std::vector<int> p, y;
      for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.domain[i] != tag) continue;
        p.push_back(scored.preds[i]);
        y.push_back(data.labels[i]);
      }
      report.metrics["domain_" + std::to_string(tag) + "_accuracy"] = accuracy(p, y);
    }
  }
}

void write_predictions(const fs::path& csv, const Dataset& data, std::span<const int> preds) {
  std::ofstream out(csv);
  if (!out) throw IoError("cannot write " + csv.string());
  out << "sample,domain_tag,prediction,label\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << i << ',' << data.domain[i] << ',' << preds[i] << ',' << data.labels[i] << '\n';
  }
}

void check_target(const Model& model, const Dataset& target, Scenario scenario) {
  if (model.dims.input_dim != target.dim()) {
    throw ConfigError("model expects " + std::to_string(model.dims.input_dim) + " features, data has " +
                      std::to_string(target.dim()));
  }
  if (model.dims.num_classes != target.num_classes) {
    throw ConfigError("model has " + std::to_string(model.dims.num_classes) + " classes, data declares " +
                      std::to_string(target.num_classes));
  }
  if (scenario != Scenario::Open && target.has_unknown()) {
    throw ConfigError("data holds unknown-class samples but scenario is " + to_string(scenario));
  }
}

Projection projection_of(const Model& model, const Dataset& data) {
  return Projection{project_2d(predict(model, data.features).features), data.labels};
}

RunReport new_report(const RunConfig& cfg, std::string name, std::string stage) {
  RunReport r;
  r.name = std::move(name);
  r.stage = std::move(stage);
  r.config_hash = config_hash(cfg);
  r.seed = cfg.adapt.seed;
  r.scenario = cfg.adapt.scenario;
  return r;
}

}  // namespace

RunConfig resolve_config(const GlobalOptions& opts) {
  RunConfig cfg = load_config(opts.config, opts.overrides);
  if (opts.seed) cfg.adapt.seed = *opts.seed;
  return cfg;
}

void cmd_gen_data(const GlobalOptions& opts) {
  const RunConfig cfg = resolve_config(opts);
  if (!cfg.sections.contains("data")) throw ConfigError("gen-data: config has no [data] section");
  ensure_dir(opts.out);
  const auto seed = cfg.adapt.seed;
  const auto pair = make_task(cfg.task, seed);
  nlohmann::json gen = to_json(cfg.task);
  gen["seed"] = seed;
  gen["config_hash"] = config_hash(cfg);

  auto save = [&](const Dataset& d, const std::string& file, const std::string& role, double extra_rotation) {
    nlohmann::json g = gen;
    g["role"] = role;
    g["extra_rotation_deg"] = extra_rotation;
    save_dataset(d, opts.out / file, g);
  };
  save(pair.source, "source.csv", "source", 0.0);
  save(pair.target, "target.csv", "target", 0.0);
  int tag = 2;
  for (std::size_t i = 0; i < cfg.extra_source_rotations.size(); ++i) {
    const double r = cfg.extra_source_rotations[i];
    save(rotated(pair.source, r, seed + 10 + i, tag++), "source_" + std::to_string(i + 1) + ".csv", "source", r);
  }
  for (std::size_t i = 0; i < cfg.extra_target_rotations.size(); ++i) {
    const double r = cfg.extra_target_rotations[i];
    save(rotated(pair.target, r, seed + 100 + i, tag++), "target_" + std::to_string(i + 1) + ".csv", "target", r);
  }
}

RunReport cmd_train_source(const GlobalOptions& opts, const fs::path& source_csv, const std::optional<fs::path>& target_csv) {
  const auto t0 = Clock::now();
  const RunConfig cfg = resolve_config(opts);
  const Dataset source = load_dataset(source_csv);
  if (source.has_unknown()) throw ConfigError("train-source: source data holds unknown-class samples");

  const Model init = build_model(cfg.dims(source.dim(), source.num_classes), cfg.adapt.seed, cfg.arch);
  const SourceResult trained = train_source(init, source, cfg.adapt);
  ensure_dir(opts.out);
  save_model(trained.model, opts.out / "model.json");

  RunReport report = new_report(cfg, "source", "source");
  for (const auto& e : trained.history) report.loss_trace.push_back(trace_row(e));
  report.info["model_hash"] = file_sha256(opts.out / "model.json");
  report.info["source_data"] = source_csv.string();
  if (target_csv) {
    const Dataset target = load_dataset(*target_csv);
    check_target(trained.model, target, cfg.adapt.scenario);
    add_scores(report, predict_scenario(std::span(&trained.model, 1), target.features, cfg.adapt.scenario), target,
               target.num_classes);
    report.info["target_data"] = target_csv->string();
    if (cfg.report.projection) report.projection = projection_of(trained.model, target);
  }
  report.metrics["val_acc"] = trained.best_val_acc;
  report.metrics["best_epoch"] = static_cast<double>(trained.best_epoch);
  report.wall_seconds = seconds_since(t0);
  emit_report(report, opts.out);
  return report;
}

RunReport cmd_adapt(const GlobalOptions& opts, const std::vector<fs::path>& model_files, const fs::path& target_csv) {
  const auto t0 = Clock::now();
  if (model_files.empty()) throw ConfigError("adapt: at least one --model is required");
  const RunConfig cfg = resolve_config(opts);
  const Dataset target = load_dataset(target_csv);
  if (model_files.size() > 1 && cfg.adapt.scenario == Scenario::Open) {
    throw ConfigError("adapt: several models are supported for closed and partial set only");
  }
  ensure_dir(opts.out);

  RunReport report = new_report(cfg, model_files.size() > 1 ? "multi_source" : "adapt", "adapt");
  report.info["target_data"] = target_csv.string();
  std::vector<Model> adapted;
  std::optional<RejectionMask> rejection;
  for (std::size_t i = 0; i < model_files.size(); ++i) {
    const Model source_model = load_model(model_files[i]);
    check_target(source_model, target, cfg.adapt.scenario);
    const std::string suffix = model_files.size() > 1 ? "_" + std::to_string(i) : "";
    AdaptMonitor monitor;
    monitor.labels = &target.labels;
    if (cfg.report.dump_pseudo_labels) {
      monitor.pseudo_label_dump_dir = opts.out / ("pseudo_labels" + suffix);
      ensure_dir(monitor.pseudo_label_dump_dir);
    }
    AdaptResult result = adapt(source_model, target.features, cfg.adapt, monitor);
    const fs::path model_out = opts.out / ("model" + suffix + ".json");
    save_model(result.model, model_out);
    report.info["source_model" + suffix] = model_files[i].string();
    report.info["source_model_hash" + suffix] = file_sha256(model_files[i]);
    report.info["model_hash" + suffix] = file_sha256(model_out);
    if (cfg.report.epoch_log) write_epoch_log(opts.out / ("epochs" + suffix + ".jsonl"), result.history);
    for (const auto& e : result.history) {
      TraceRow row = trace_row(e);
      if (model_files.size() > 1) row["model"] = static_cast<double>(i);
      report.loss_trace.push_back(std::move(row));
    }
    if (model_files.size() > 1) {
      report.metrics["model_" + std::to_string(i) + "_accuracy"] =
          accuracy(predict_labels(result.model, target.features), target.labels);
    }
    rejection = std::move(result.rejection);
    adapted.push_back(std::move(result.model));
  }

  Scored scored;
  if (adapted.size() == 1 && rejection) {
    scored.preds = predict_labels(adapted.front(), target.features, rejection->rejected);
    scored.rejection = std::move(rejection);
  } else {
    scored = predict_scenario(adapted, target.features, cfg.adapt.scenario);
  }
  auto model_metrics = std::move(report.metrics);
  add_scores(report, scored, target, target.num_classes);
  report.metrics.merge(model_metrics);
  write_predictions(opts.out / "predictions.csv", target, scored.preds);
  if (cfg.report.projection) report.projection = projection_of(adapted.front(), target);
  report.wall_seconds = seconds_since(t0);
  emit_report(report, opts.out);
  return report;
}

RunReport cmd_evaluate(const GlobalOptions& opts, const std::vector<fs::path>& model_files, const fs::path& data_csv) {
  const auto t0 = Clock::now();
  if (model_files.empty()) throw ConfigError("evaluate: at least one --model is required");
  const RunConfig cfg = resolve_config(opts);
  const Dataset data = load_dataset(data_csv);
  std::vector<Model> models;
  RunReport report = new_report(cfg, "evaluate", "evaluate");
  for (std::size_t i = 0; i < model_files.size(); ++i) {
    models.push_back(load_model(model_files[i]));
    check_target(models.back(), data, cfg.adapt.scenario);
    report.info["model_hash" + (model_files.size() > 1 ? "_" + std::to_string(i) : std::string())] =
        file_sha256(model_files[i]);
  }
  report.info["data"] = data_csv.string();
  const Scored scored = predict_scenario(models, data.features, cfg.adapt.scenario);
  add_scores(report, scored, data, data.num_classes);
  ensure_dir(opts.out);
  write_predictions(opts.out / "predictions.csv", data, scored.preds);
  if (cfg.report.projection) report.projection = projection_of(models.front(), data);
  report.wall_seconds = seconds_since(t0);
  emit_report(report, opts.out);
  return report;
}

namespace {

struct Variant {
  std::string name;
  RunConfig cfg;
  bool adapt = true;  // false: source-only row
};

// One seed's worth of runs sharing a source model.
struct Job {
  std::uint64_t seed = 0;
  RunConfig source_cfg;
  std::vector<Variant> variants;
};

std::vector<Job> plan_suite(const RunConfig& base) {
  std::vector<Job> jobs;
  const auto& grid = base.suite.grid;
  for (auto seed : base.suite.seeds) {
    if (grid == "ablation" || grid == "tc_sweep") {
      Job job{seed, base, {}};
      job.source_cfg.adapt.seed = seed;
      if (grid == "tc_sweep") {
        job.source_cfg.adapt.scenario = Scenario::Partial;
        job.source_cfg.task.scenario = Scenario::Partial;
      }
      job.variants.push_back({"source_only", job.source_cfg, false});
      if (grid == "ablation") {
        Variant ent{"ent", job.source_cfg};
        ent.cfg.adapt.beta = 0.0;
        ent.cfg.adapt.include_div = false;
        ent.cfg.adapt.pseudo_labels = PseudoLabelMode::None;
        Variant ent_div{"ent_div", job.source_cfg};
        ent_div.cfg.adapt.beta = 0.0;
        ent_div.cfg.adapt.include_div = true;
        ent_div.cfg.adapt.pseudo_labels = PseudoLabelMode::None;
        Variant naive{"ent_div_naive_pl", job.source_cfg};
        naive.cfg.adapt.include_div = true;
        naive.cfg.adapt.pseudo_labels = PseudoLabelMode::Naive;
        Variant self{"ent_div_self_pl", job.source_cfg};
        self.cfg.adapt.include_div = true;
        self.cfg.adapt.pseudo_labels = PseudoLabelMode::SelfSupervised;
        job.variants.insert(job.variants.end(), {ent, ent_div, naive, self});
      } else {
        for (auto tc : base.suite.tc_values) {
          Variant v{"tc_" + std::to_string(tc), job.source_cfg};
          v.cfg.adapt.tc = tc;
          job.variants.push_back(v);
        }
      }
      jobs.push_back(std::move(job));
    } else {
      for (bool wn : {true, false})
        for (bool bn : {true, false})
          for (double ls : {0.1, 0.0}) {
            Job job{seed, base, {}};
            job.source_cfg.adapt.seed = seed;
            job.source_cfg.arch.weight_norm = wn;
            job.source_cfg.arch.batch_norm = bn;
            job.source_cfg.adapt.alpha = ls;
            const std::string tag = std::string("wn") + (wn ? "1" : "0") + "_bn" + (bn ? "1" : "0") + "_ls" +
                                    (ls > 0.0 ? "1" : "0");
            Variant im{tag + "_shot_im", job.source_cfg};
            im.cfg.adapt.beta = 0.0;
            im.cfg.adapt.pseudo_labels = PseudoLabelMode::None;
            job.variants.push_back({tag + "_source_only", job.source_cfg, false});
            job.variants.push_back(im);
            jobs.push_back(std::move(job));
          }
    }
  }
  return jobs;
}

void run_variant(const Variant& v, const Model& source_model, const DomainPair& data, const fs::path& dir,
                 double source_seconds) {
  const auto t0 = Clock::now();
  RunReport report = new_report(v.cfg, v.name, v.adapt ? "adapt" : "source");
  Model model = source_model;
  if (v.adapt) {
    AdaptMonitor monitor;
    monitor.labels = &data.target.labels;
    AdaptResult result = adapt(source_model, data.target.features, v.cfg.adapt, monitor);
    for (const auto& e : result.history) report.loss_trace.push_back(trace_row(e));
    model = std::move(result.model);
    Scored scored;
    if (result.rejection) {
      scored.preds = predict_labels(model, data.target.features, result.rejection->rejected);
      scored.rejection = std::move(result.rejection);
    } else {
      scored = predict_scenario(std::span(&model, 1), data.target.features, v.cfg.adapt.scenario);
    }
    add_scores(report, scored, data.target, data.target.num_classes);
  } else {
    add_scores(report, predict_scenario(std::span(&model, 1), data.target.features, v.cfg.adapt.scenario), data.target,
               data.target.num_classes);
  }
  report.wall_seconds = seconds_since(t0) + (v.adapt ? 0.0 : source_seconds);
  emit_report(report, dir);
}

std::size_t suite_threads() {
  if (const char* env = std::getenv("SHOT_ADAPT_THREADS")) {
    try {
      const long n = std::stol(env);
      if (n >= 1) return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("SHOT_ADAPT_THREADS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

}  // namespace

SuiteResult cmd_suite(const GlobalOptions& opts) {
  const RunConfig base = resolve_config(opts);
  const auto jobs = plan_suite(base);
  const fs::path runs = opts.out / "runs";
  ensure_dir(runs);

  std::mutex mu;
  std::vector<std::string> failures;
  auto record_failure = [&](const std::string& name, std::uint64_t seed, const std::string& what) {
    std::lock_guard lock(mu);
    failures.push_back(name + " " + std::to_string(seed) + ": " + what);
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      const Job& job = jobs[j];
      std::optional<Model> source_model;
      std::optional<DomainPair> data;
      double source_seconds = 0.0;
      try {
        const auto t0 = Clock::now();
        data = make_task(job.source_cfg.task, job.seed);
        const Model init =
            build_model(job.source_cfg.dims(data->source.dim(), data->source.num_classes), job.seed, job.source_cfg.arch);
        source_model = train_source(init, data->source, job.source_cfg.adapt).model;
        source_seconds = seconds_since(t0);
      } catch (const std::exception& e) {
        for (const auto& v : job.variants) record_failure(v.name, job.seed, e.what());
        continue;
      }
      for (const auto& v : job.variants) {
        try {
          run_variant(v, *source_model, *data, runs / v.name / ("seed_" + std::to_string(job.seed)), source_seconds);
        } catch (const std::exception& e) {
          record_failure(v.name, job.seed, e.what());
        }
      }
    }
  };
  const std::size_t n_threads = std::min(suite_threads(), std::max<std::size_t>(1, jobs.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  // Aggregate from what is on disk.
  std::vector<fs::path> dirs;
  for (const auto& name_dir : fs::directory_iterator(runs)) {
    if (!name_dir.is_directory()) continue;
    for (const auto& seed_dir : fs::directory_iterator(name_dir.path())) {
      if (fs::exists(seed_dir.path() / "report.json")) dirs.push_back(seed_dir.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<RunReport> reports;
  for (const auto& d : dirs) reports.push_back(load_report(d));

  SuiteResult result;
  result.summary = summarize(reports);
  write_summary(result.summary, opts.out / "summary.csv");
  std::sort(failures.begin(), failures.end());
  result.failures = failures;
  std::ofstream fail(opts.out / "failures.csv");
  if (!fail) throw IoError("suite: cannot write failures.csv");
  fail << "failure\n";
  for (const auto& f : failures) fail << '"' << f << "\"\n";
  return result;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Source-free domain adaptation on synthetic tasks"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions opts;
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out = ".";
  auto* config_opt = app.add_option("--config", config_path, "INI config file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Seed (overrides adapt.seed)");
  app.add_option("--out", out, "Output directory");
  app.add_option("--override", opts.overrides, "KEY=VALUE, e.g. adapt.beta=0 (repeatable)");

  auto* gen = app.add_subcommand("gen-data", "Generate source and target datasets");

  std::string source_csv, target_csv;
  auto* train = app.add_subcommand("train-source", "Train a source model");
  train->add_option("--data", source_csv, "Source CSV")->required()->check(CLI::ExistingFile);
  train->add_option("--target", target_csv, "Target CSV for the source-only baseline")->check(CLI::ExistingFile);

  // No source-data option: adaptation only ever sees the model and target data.
  std::vector<std::string> models;
  std::string data_csv;
  auto* adapt_cmd = app.add_subcommand("adapt", "Adapt source model(s) to unlabeled target data");
  adapt_cmd->add_option("--model", models, "Source model file (repeat for multi-source)")->required()->check(CLI::ExistingFile);
  adapt_cmd->add_option("--data", data_csv, "Target CSV")->required()->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("evaluate", "Score model(s) on a dataset");
  eval->add_option("--model", models, "Model file (repeat for an ensemble)")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data_csv, "Dataset CSV")->required()->check(CLI::ExistingFile);

  auto* suite = app.add_subcommand("suite", "Run an ablation grid over several seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*config_opt) opts.config = config_path;
    if (*seed_opt) opts.seed = seed;
    opts.out = out;
    std::vector<fs::path> model_paths(models.begin(), models.end());
    auto print = [](const RunReport& r) {
      for (const auto& [k, v] : r.metrics) std::cout << k << " = " << round_sig6(v) << '\n';
    };
    if (*gen) {
      cmd_gen_data(opts);
    } else if (*train) {
      std::optional<fs::path> tgt;
      if (!target_csv.empty()) tgt = target_csv;
      print(cmd_train_source(opts, source_csv, tgt));
    } else if (*adapt_cmd) {
      print(cmd_adapt(opts, model_paths, data_csv));
    } else if (*eval) {
      print(cmd_evaluate(opts, model_paths, data_csv));
    } else if (*suite) {
      auto res = cmd_suite(opts);
      for (const auto& r : res.summary) {
        std::cout << r.name << ' ' << r.metric << ' ' << round_sig6(r.mean) << " +- " << round_sig6(r.std) << '\n';
      }
      for (const auto& f : res.failures) std::cerr << "failed: " << f << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace shot
