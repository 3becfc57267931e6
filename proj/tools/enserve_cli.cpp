#include <CLI11.hpp>

#include <iostream>

#include "enserve/cli/commands.hpp"
#include "enserve/server/server.hpp"

namespace {

enserve::ClusterSpec load_specs(const std::string& cluster_path,
                                const std::string& ensemble_path) {
  enserve::json base = enserve::load_json_file(cluster_path);
  enserve::json overlay;
  if (!ensemble_path.empty()) overlay = enserve::load_json_file(ensemble_path);
  return enserve::cluster_from_documents(base, overlay);
}

void emit(const enserve::json& report, bool as_json) {
  if (as_json)
    std::cout << report.dump(2) << "\n";
  else
    std::cout << enserve::render_report(report);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"enserve: allocation optimizer and serving pipeline for model ensembles"};
  app.require_subcommand(1);

  std::string cluster_path;
  std::string ensemble_path;
  bool as_json = false;
  enserve::CommandOptions options;

  app.add_option("--cluster", cluster_path, "cluster spec JSON")->required();
  app.add_option("--ensemble", ensemble_path,
                 "ensemble spec JSON (models may also live in --cluster)");
  app.add_option("--seed", options.seed, "RNG seed");
  app.add_option("--repeats", options.repeats, "benchmark repeats per matrix");
  app.add_option("--max-iter", options.max_iter, "greedy iteration cap");
  app.add_option("--max-neighs", options.max_neighs,
                 "neighbors evaluated per greedy iteration");
  app.add_option("--default-batch", options.default_batch,
                 "starting batch size (default: menu minimum)");
  app.add_option("--cache-dir", options.cache_dir, "matrix cache directory");
  app.add_option("--bench-mode", options.bench_mode,
                 "scoring oracle: measured | analytic");
  app.add_option("--backend", options.backend,
                 "predictor backend: synthetic | fake-zero");
  app.add_option("--calib-samples", options.calib_samples,
                 "calibration samples for measured benchmarks");
  app.add_option("--input-width", options.input_width,
                 "features per sample");
  app.add_flag("--json", as_json, "emit the report as JSON");

  CLI::App* optimize = app.add_subcommand(
      "optimize", "find a good allocation matrix and cache it");
  CLI::App* bench_cmd =
      app.add_subcommand("bench", "benchmark one allocation matrix");
  std::string matrix_path;
  bench_cmd->add_option("--matrix", matrix_path, "allocation matrix JSON")
      ->required();
  CLI::App* count =
      app.add_subcommand("count", "combinatorics of the matrix space");
  CLI::App* baseline = app.add_subcommand(
      "baseline", "compare the optimizer against the best-batch baseline");

  CLI::App* serve = app.add_subcommand("serve", "run the prediction service");
  std::string bind_host = "127.0.0.1";
  int port = 8080;
  int flush_timeout_ms = 50;
  std::string rule_name = "avg";
  std::string serve_matrix_path;
  serve->add_option("--bind", bind_host, "bind address");
  serve->add_option("--port", port, "port (0 picks a free one)");
  serve->add_option("--flush-timeout-ms", flush_timeout_ms,
                    "max wait before a partial batch is flushed");
  serve->add_option("--rule", rule_name, "combination rule: avg | vote | wavg");
  serve->add_option("--matrix", serve_matrix_path,
                    "allocation matrix JSON (default: cache lookup)");

  CLI11_PARSE(app, argc, argv);

  try {
    enserve::ClusterSpec cluster = load_specs(cluster_path, ensemble_path);

    if (optimize->parsed()) {
      emit(enserve::cmd_optimize(cluster, options), as_json);
    } else if (bench_cmd->parsed()) {
      enserve::AllocationMatrix matrix = enserve::matrix_from_json(
          enserve::load_json_file(matrix_path), cluster);
      emit(enserve::cmd_bench(cluster, matrix, options), as_json);
    } else if (count->parsed()) {
      emit(enserve::cmd_count(cluster, options), as_json);
    } else if (baseline->parsed()) {
      emit(enserve::cmd_baseline(cluster, options), as_json);
    } else if (serve->parsed()) {
      enserve::AllocationMatrix matrix =
          enserve::resolve_matrix(cluster, serve_matrix_path, options);
      enserve::ServeConfig config;
      config.bind_host = bind_host;
      config.port = port;
      config.flush_timeout_ms = flush_timeout_ms;
      config.input_width = options.input_width;
      config.backend = options.backend;
      config.rule =
          enserve::CombinationRule::from_name(rule_name, cluster.model_count());
      enserve::PredictionServer server(cluster, matrix, config);
      server.start();
      if (!server.wait_ready(std::chrono::milliseconds(60000))) {
        std::cerr << "enserve: startup failed: " << server.startup_error()
                  << "\n";
        return 1;
      }
      std::cout << "serving on " << bind_host << ":" << server.port()
                << " (rule " << rule_name << ", backend " << options.backend
                << ")\n";
      server.wait_stopped();
    }
  } catch (const enserve::AllocationError& e) {
    std::cerr << "enserve: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "enserve: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
