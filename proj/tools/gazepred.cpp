#include <cstdlib>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gazepred/error.hpp"
#include "gazepred/io.hpp"
#include "gazepred/pipeline.hpp"

namespace {

using gazepred::ExitCode;

struct GlobalOptions {
  std::string config;
  std::optional<int> jobs;
  std::optional<std::uint64_t> seed;
  std::string out;
};

gazepred::RunConfig resolve(const GlobalOptions& g) {
  gazepred::RunConfig cfg = g.config.empty() ? gazepred::RunConfig{} : gazepred::load_run_config(g.config);
  if (g.jobs) cfg.jobs = *g.jobs;
  if (g.seed) cfg.seed = *g.seed;
  if (!g.out.empty()) cfg.out_dir = g.out;
  return cfg;
}

void print_result(const gazepred::StageResult& r) {
  if (r.cached) {
    std::cout << r.stage << ": up to date (cached)\n";
  } else {
    std::cout << r.stage << ": wrote " << r.outputs.size() << " file(s)\n";
  }
}

int run(int argc, char** argv) {
  CLI::App app{"Gaze prediction toolkit: synthetic cohorts, predictors, and event-conditioned evaluation"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
  app.add_option("--jobs", g.jobs, "Worker threads for per-subject work")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--out", g.out, "Output directory");

  auto* config_cmd = app.add_subcommand("config", "Configuration helpers");
  config_cmd->require_subcommand(1);
  auto* init = config_cmd->add_subcommand("init", "Print (or write) the default configuration");
  std::string init_path;
  init->add_option("path", init_path, "Write to this file instead of stdout");

  for (const auto& s : gazepred::stage_names()) app.add_subcommand(s, "Run the " + s + " stage");
  app.add_subcommand("run", "Run every stage in order");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  if (init->parsed()) {
    const nlohmann::json j = gazepred::to_json(resolve(g));
    if (init_path.empty()) {
      std::cout << j.dump(2) << '\n';
    } else {
      gazepred::io::write_json_file(init_path, j);
    }
    return 0;
  }

  gazepred::Pipeline pipeline(resolve(g));
  if (app.got_subcommand("run")) {
    for (const auto& r : pipeline.run_all()) print_result(r);
    return 0;
  }
  for (const auto& s : gazepred::stage_names()) {
    if (app.got_subcommand(s)) print_result(pipeline.run_stage(s));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const gazepred::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
