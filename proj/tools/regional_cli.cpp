// Command-line driver: one experiment per invocation.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "regional/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Ground states and concentration for regional fractional Laplacian problems"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir;
  unsigned threads = 1;
  bool verbose = false;
  app.add_option("--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory (overrides config and REGIONAL_OUT_DIR)");
  app.add_option("--threads", threads, "worker threads")->check(CLI::Range(1u, 1024u));
  app.add_flag("--verbose", verbose, "progress on stderr");
  for (const auto& name : regional::experiment_names()) app.add_subcommand(name, "run the " + name + " experiment");
  app.fallthrough();
  CLI11_PARSE(app, argc, argv);

  const std::string experiment = app.get_subcommands().front()->get_name();
  std::optional<std::string> out;
  if (!out_dir.empty()) out = out_dir;
  regional::ExperimentConfig cfg;
  try {
    if (!config_path.empty()) cfg = regional::load_config(config_path);
  } catch (const std::exception& e) {
    const auto dir = regional::resolve_out_dir(out, cfg);
    regional::write_error(dir, e);
    std::cerr << "error: " << e.what() << "\n";
    return regional::detail::exit_code_for(e);
  }
  if (verbose && !config_path.empty() && cfg.experiment != experiment)
    std::cerr << "[regional] subcommand '" << experiment << "' overrides config experiment '" << cfg.experiment
              << "'\n";
  cfg.experiment = experiment;

  regional::RunOptions opt;
  opt.out_dir = out;
  opt.threads = threads;
  opt.verbose = verbose;
  const auto res = regional::run_experiment(cfg, opt);
  if (res.status != 0) {
    std::cerr << "error: see " << (res.out_dir / "error.json").string() << "\n";
    return res.status;
  }
  std::cout << res.out_dir.string() << "\n";
  return 0;
}
