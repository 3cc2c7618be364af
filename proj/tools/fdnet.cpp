// fdnet: teacher-student frame-distillation workbench.
//
// Subcommands: gen-data, train, eval, metrics, experiment, bench.
// Exit codes: 0 ok, 2 config error, 3 training abort, 4 shape mismatch,
// 5 partial grid failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "fd/bench.hpp"
#include "fd/config.hpp"
#include "fd/data.hpp"
#include "fd/experiment.hpp"
#include "fd/predictions.hpp"
#include "fd/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitTrainingAbort = 3;
constexpr int kExitShape = 4;
constexpr int kExitGridFailure = 5;

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw fd::ParseError("cannot write " + path.string());
  os << j.dump(2) << "\n";
}

json metrics_json(const fd::MetricReport& m) {
  return json{{"gap", m.gap},       {"hit_at_1", m.hit_at_1},
              {"perr", m.perr},     {"map", m.map},
              {"videos", m.videos}, {"predictions", m.predictions}};
}

json epoch_json(const fd::EpochRecord& rec) {
  json j{{"epoch", rec.epoch}, {"phase", rec.phase},     {"lr", rec.lr},
         {"l_model", rec.l_model}, {"l_final", rec.l_final},
         {"l_inter", rec.l_inter}, {"total", rec.total}};
  if (rec.eval_primary) j["eval"] = metrics_json(*rec.eval_primary);
  if (rec.eval_teacher) j["eval_teacher"] = metrics_json(*rec.eval_teacher);
  return j;
}

struct GlobalOpts {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::string config_path;
};

int cmd_gen_data(const std::string& spec_path, const std::string& out_dir,
                 const GlobalOpts& global) {
  fd::GenSpec spec;
  if (!spec_path.empty()) spec = fd::GenSpec::from_file(spec_path);
  if (global.seed) spec.base.seed = *global.seed;

  fs::create_directories(out_dir);
  fd::SyntheticSpec train_spec = spec.base;
  train_spec.num_videos = spec.num_videos_train;
  fd::SyntheticSpec eval_spec = spec.base;
  eval_spec.num_videos = spec.num_videos_eval;

  fd::Dataset train = fd::generate_synthetic(train_spec, "train");
  fd::Dataset eval = fd::generate_synthetic(eval_spec, "eval");
  fd::write_dataset(fs::path(out_dir) / "train.jsonl", train);
  fd::write_dataset(fs::path(out_dir) / "eval.jsonl", eval);

  // Learnability probe: the ideal motif detector must lose accuracy when
  // restricted to a 10% frame budget, otherwise the frame budget cannot
  // matter to any model trained on this data.
  const auto motifs = fd::synthetic_motifs(spec.base);
  const double oracle_full = fd::motif_oracle_hit1(train, motifs, 1);
  const double oracle_10 = fd::motif_oracle_hit1(train, motifs, 10);
  if (oracle_full <= oracle_10)
    std::cerr << "warning: full-frame oracle does not beat its 10% self; "
                 "frame budget may not matter on this spec\n";

  json meta{{"config", spec.to_json()},
            {"train_videos", train.size()},
            {"eval_videos", eval.size()},
            {"oracle_hit1_full", oracle_full},
            {"oracle_hit1_10pct", oracle_10},
            {"learnable", oracle_full > oracle_10}};
  write_json_file(fs::path(out_dir) / "meta.json", meta);
  std::cout << "gen-data: wrote " << train.size() << " train / " << eval.size()
            << " eval videos to " << out_dir << "\n";
  return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              const GlobalOpts& global) {
  const std::string path = !config_path.empty() ? config_path : global.config_path;
  if (path.empty()) throw fd::ConfigError("train: --config is required");
  fd::RunConfig cfg = fd::RunConfig::from_file(path);
  if (global.seed) cfg.seed = *global.seed;
  if (cfg.train_path.empty()) throw fd::ConfigError("config: data.train is required");

  fd::Dataset train = fd::read_dataset(cfg.train_path);
  std::optional<fd::Dataset> eval;
  if (!cfg.eval_path.empty()) eval = fd::read_dataset(cfg.eval_path);

  fs::create_directories(out_dir);
  const json echo = cfg.to_json();
  write_json_file(fs::path(out_dir) / "resolved_config.json", echo);

  std::ofstream log(fs::path(out_dir) / "train_log.jsonl");
  log << json{{"config", echo}}.dump() << "\n";

  fd::Trainer trainer(cfg, &train, eval ? &*eval : nullptr);
  fd::TrainResult result = trainer.run([&](const fd::EpochRecord& rec) {
    log << epoch_json(rec).dump() << "\n";
    log.flush();
    std::cout << "epoch " << rec.epoch << " (" << rec.phase << ") lr=" << rec.lr
              << " total=" << rec.total;
    if (rec.eval_primary) std::cout << " gap=" << rec.eval_primary->gap;
    std::cout << "\n";
  });

  fd::save_checkpoint(fs::path(out_dir) / "checkpoint.fdck", result.checkpoint);
  if (result.aborted) {
    std::cerr << "training aborted (" << result.abort_reason
              << "); checkpoint of last good epoch retained\n";
    return kExitTrainingAbort;
  }

  if (eval) {
    auto records =
        fd::predict(cfg, result.checkpoint.params, *eval, fd::deployment_path(cfg));
    const fd::MetricReport report = fd::compute_report(records, cfg.top_n);
    fd::write_predictions(fs::path(out_dir) / "predictions.jsonl", records,
                          cfg.top_n, echo);
    write_json_file(fs::path(out_dir) / "metrics.json",
                    json{{"config", echo}, {"metrics", metrics_json(report)}});
    std::cout << "final: gap=" << report.gap << " hit@1=" << report.hit_at_1
              << " perr=" << report.perr << " map=" << report.map << "\n";
  }
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_path,
             const std::string& out_dir, const std::string& sampler_json,
             const GlobalOpts&) {
  fd::Checkpoint ckpt = fd::load_checkpoint(checkpoint_path);
  fd::RunConfig cfg = fd::RunConfig::from_json(ckpt.config);
  fd::Dataset data = fd::read_dataset(data_path);

  fd::PredictPath path = fd::deployment_path(cfg);
  if (!sampler_json.empty()) {
    json j;
    try {
      j = json::parse(sampler_json);
    } catch (const json::exception& e) {
      throw fd::ConfigError(std::string("bad --sampler JSON: ") + e.what());
    }
    fd::reject_unknown_fields(j, {"kind", "k", "seed"}, "sampler");
    const std::string kind = j.value("kind", "uniform");
    const int k = j.value("k", 100);
    if (kind == "full") path.sampler = fd::SamplerSpec::full();
    else if (kind == "uniform") path.sampler = fd::SamplerSpec::uniform(k);
    else if (kind == "random")
      path.sampler = fd::SamplerSpec::random(k, j.value("seed", cfg.sampler_seed));
    else throw fd::ConfigError("unknown sampler kind '" + kind + "'");
  }

  fs::create_directories(out_dir);
  const json echo = ckpt.config;
  auto records = fd::predict(cfg, ckpt.params, data, path);
  const fd::MetricReport report = fd::compute_report(records, cfg.top_n);
  fd::write_predictions(fs::path(out_dir) / "predictions.jsonl", records, cfg.top_n,
                        echo);
  write_json_file(fs::path(out_dir) / "metrics.json",
                  json{{"config", echo}, {"metrics", metrics_json(report)}});
  std::cout << "gap=" << report.gap << " hit@1=" << report.hit_at_1
            << " perr=" << report.perr << " map=" << report.map << "\n";
  return kExitOk;
}

int cmd_metrics(const std::string& predictions_path, const std::string& data_path,
                const std::string& out_path, std::size_t top_n) {
  fd::PredictionsFile preds = fd::read_predictions(predictions_path);
  fd::Dataset data = fd::read_dataset(data_path);
  std::size_t classes = data.num_classes ? data.num_classes : data.inferred_classes();
  if (preds.config.contains("model") && preds.config["model"].contains("classes"))
    classes = preds.config["model"]["classes"].get<std::size_t>();
  auto records = fd::records_from_predictions(preds, data, classes);
  const fd::MetricReport report = fd::compute_report(records, top_n);
  const json out{{"config", preds.config}, {"metrics", metrics_json(report)}};
  if (out_path.empty())
    std::cout << out.dump(2) << "\n";
  else
    write_json_file(out_path, out);
  std::cout << "gap=" << report.gap << " hit@1=" << report.hit_at_1
            << " perr=" << report.perr << " map=" << report.map << "\n";
  return kExitOk;
}

int cmd_experiment(const std::string& grid_path, const std::string& out_dir,
                   const GlobalOpts& global) {
  fd::GridSpec spec = fd::GridSpec::from_file(grid_path);
  if (global.threads) spec.jobs = *global.threads;
  fd::Dataset train = fd::read_dataset(spec.train_path);
  fd::Dataset eval = fd::read_dataset(spec.eval_path);

  fs::create_directories(out_dir);
  fd::GridResult result =
      fd::run_grid(spec, train, eval, [](const fd::CellRun& run) {
        std::cout << run.model << " seed=" << run.seed;
        if (run.failed)
          std::cout << " FAILED: " << run.error;
        else
          std::cout << " gap=" << run.metrics.gap << " hit@1=" << run.metrics.hit_at_1;
        std::cout << " (" << run.train_seconds << "s)\n";
      });

  fd::write_grid_csv(fs::path(out_dir) / "results.csv", result);
  write_json_file(fs::path(out_dir) / "results.json", fd::grid_to_json(result));
  std::cout << "experiment: " << result.runs.size() << " runs -> " << out_dir
            << "/results.{csv,json}\n";
  return result.any_failed() ? kExitGridFailure : kExitOk;
}

int cmd_bench(const std::vector<std::string>& checkpoints, const std::string& data_path,
              std::size_t repeats, const std::string& out_path) {
  if (repeats < 2)
    std::cerr << "warning: fewer than 2 repeats; medians are single samples\n";
  fd::Dataset data = fd::read_dataset(data_path);
  fd::BenchReport report = fd::run_bench(checkpoints, data, repeats);
  for (const auto& v : report.variants) {
    std::cout << v.name << ": median " << v.median_seconds << "s, relative "
              << v.relative_time << ", lower-level steps " << v.counters.lower_steps
              << ", upper-level steps " << v.counters.upper_steps << "\n";
  }
  if (!out_path.empty()) write_json_file(out_path, fd::bench_to_json(report));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fdnet: teacher-student frame-distillation workbench"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOpts global;
  app.add_option("--seed", global.seed, "Override the run seed");
  app.add_option("--threads", global.threads,
                 "Parallel grid cells for `experiment` (runs stay "
                 "single-threaded internally)");
  app.add_option("--config", global.config_path, "Run config file (train)");

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  std::string gen_spec, gen_out;
  gen->add_option("--spec", gen_spec, "Generation spec JSON (defaults when omitted)");
  gen->add_option("--out", gen_out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train one variant end to end");
  std::string train_config, train_out;
  train->add_option("--config", train_config, "Run config JSON");
  train->add_option("--out", train_out, "Output directory")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string eval_ckpt, eval_data, eval_out, eval_sampler;
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval->add_option("--data", eval_data, "Dataset file")->required();
  eval->add_option("--out", eval_out, "Output directory")->required();
  eval->add_option("--sampler", eval_sampler,
                   R"(Sampler override, e.g. {"kind":"uniform","k":25})");

  auto* metrics = app.add_subcommand(
      "metrics", "Recompute metrics from an emitted predictions file");
  std::string met_preds, met_data, met_out;
  std::size_t met_top_n = 20;
  metrics->add_option("--predictions", met_preds, "Predictions JSONL")->required();
  metrics->add_option("--data", met_data, "Dataset file with ground truth")->required();
  metrics->add_option("--out", met_out, "Output JSON (stdout when omitted)");
  metrics->add_option("--top-n", met_top_n, "GAP pooling depth");

  auto* experiment =
      app.add_subcommand("experiment", "Run a variants-by-seeds grid");
  std::string exp_grid, exp_out;
  experiment->add_option("--grid", exp_grid, "Grid spec JSON")->required();
  experiment->add_option("--out", exp_out, "Output directory")->required();

  auto* bench = app.add_subcommand("bench", "Compare evaluation cost");
  std::vector<std::string> bench_ckpts;
  std::string bench_data, bench_out;
  std::size_t bench_repeats = 5;
  bench->add_option("--checkpoint", bench_ckpts, "Checkpoint file(s)")->required();
  bench->add_option("--data", bench_data, "Dataset file")->required();
  bench->add_option("--repeats", bench_repeats, "Timed repeats per variant");
  bench->add_option("--out", bench_out, "Report JSON path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(gen_spec, gen_out, global);
    if (train->parsed()) return cmd_train(train_config, train_out, global);
    if (eval->parsed())
      return cmd_eval(eval_ckpt, eval_data, eval_out, eval_sampler, global);
    if (metrics->parsed()) return cmd_metrics(met_preds, met_data, met_out, met_top_n);
    if (experiment->parsed()) return cmd_experiment(exp_grid, exp_out, global);
    if (bench->parsed())
      return cmd_bench(bench_ckpts, bench_data, bench_repeats, bench_out);
  } catch (const fd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fd::SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fd::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fd::ShapeError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return kExitShape;
  } catch (const fd::BoundsError& e) {
    std::cerr << "bounds error: " << e.what() << "\n";
    return kExitShape;
  } catch (const fd::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitTrainingAbort;
  } catch (const fd::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
