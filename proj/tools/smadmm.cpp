// Command-line runner: run | validate | rate-fit | kkt-report.

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <smadmm/experiment.hpp>

namespace {

using smadmm::json;

int fail(const std::string& kind, const std::string& message, const json& extra = json::object()) {
  json e{{"error", kind}, {"message", message}};
  e.update(extra);
  std::cerr << e.dump() << '\n';
  return 1;
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return json::parse(in);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic momentum ADMM experiments"};
  app.require_subcommand(1);

  std::string run_config;
  std::string run_output;
  unsigned run_threads = 0;
  auto* run_cmd = app.add_subcommand("run", "Run every (algorithm, seed) pair of a config");
  run_cmd->add_option("config", run_config, "JSON experiment config")->required();
  run_cmd->add_option("-o,--output", run_output, "Override the output directory");
  run_cmd->add_option("-j,--threads", run_threads, "Override the worker thread count");

  std::string val_config;
  auto* val_cmd = app.add_subcommand("validate", "Check a config without running it");
  val_cmd->add_option("config", val_config, "JSON experiment config")->required();

  std::vector<std::string> summaries;
  std::string fit_alg;
  auto* fit_cmd = app.add_subcommand("rate-fit", "Fit log(min KKT^2) against log K");
  fit_cmd->add_option("summary", summaries, "summary.json files, one per horizon")->required();
  fit_cmd->add_option("-a,--algorithm", fit_alg, "Algorithm to select from each summary");

  std::string trace_path;
  auto* kkt_cmd = app.add_subcommand("kkt-report", "Summarize a trace CSV");
  kkt_cmd->add_option("trace", trace_path, "Trace CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return fail("usage", e.what());
  }

  try {
    if (*val_cmd) {
      auto cfg = smadmm::load_config(val_config);
      auto errs = smadmm::validate(cfg);
      if (!errs.empty()) return fail("invalid_config", errs.front(), {{"errors", errs}});
      std::cout << json{{"status", "ok"}, {"config", smadmm::config_to_json(cfg)}}.dump(2) << '\n';
      return 0;
    }
    if (*run_cmd) {
      auto cfg = smadmm::load_config(run_config);
      if (!run_output.empty()) cfg.output = run_output;
      if (run_threads > 0) cfg.threads = run_threads;
      auto errs = smadmm::validate(cfg);
      if (!errs.empty()) return fail("invalid_config", errs.front(), {{"errors", errs}});
      auto out = smadmm::run_experiment(cfg);
      std::cout << json{{"status", out.summary["status"]}, {"output", out.directory.string()}}.dump()
                << '\n';
      return out.partial ? 2 : 0;
    }
    if (*fit_cmd) {
      std::vector<std::pair<double, double>> pts;
      for (const auto& s : summaries) pts.push_back(smadmm::summary_point(read_json(s), fit_alg));
      auto fit = smadmm::fit_rate(pts);
      for (const auto& w : fit.warnings) std::cerr << json{{"warning", w}}.dump() << '\n';
      std::cout << smadmm::rate_fit_json(fit).dump(2) << '\n';
      return 0;
    }
    if (*kkt_cmd) {
      std::ifstream in(trace_path);
      if (!in) return fail("io", "cannot open '" + trace_path + "'");
      std::cout << smadmm::kkt_report(smadmm::read_trace_csv(in)).dump(2) << '\n';
      return 0;
    }
  } catch (const smadmm::ConfigError& e) {
    return fail("invalid_config", e.what());
  } catch (const smadmm::ParseError& e) {
    return fail("parse", e.what());
  } catch (const std::exception& e) {
    return fail("runtime", e.what());
  }
  return 0;
}
