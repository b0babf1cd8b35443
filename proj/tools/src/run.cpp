#include <ostream>

#include <CLI11.hpp>

#include "sdsa_cli/commands.hpp"

namespace sdsa::cli {

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Region-aware carbon flux and yield modelling on synthetic agroecosystems", "sdsa"};
  app.require_subcommand(1);

  std::string config, out_path, data, metrics;
  std::optional<std::uint64_t> seed;
  int level = 0;
  std::vector<std::string> bundles;

  auto* gen = app.add_subcommand("gen", "Generate synthetic and observed datasets");
  gen->add_option("--config", config, "Experiment config (JSON)")->required();
  gen->add_option("--out", out_path, "Output dataset directory")->required();
  gen->add_option("--seed", seed, "Override the config seed");

  auto* train = app.add_subcommand("train", "Run the five-step training protocol");
  train->add_option("--config", config, "Experiment config (JSON)")->required();
  train->add_option("--data", data, "Dataset directory written by gen")->required();
  train->add_option("--level", level, "Awareness level")->required()->check(CLI::IsMember({1, 2, 3}));
  train->add_option("--out", out_path, "Output bundle directory")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate bundles on every region's test split");
  eval->add_option("--config", config, "Experiment config (JSON)")->required();
  eval->add_option("--data", data, "Dataset directory written by gen")->required();
  eval->add_option("--bundle", bundles, "Bundle directory (repeatable)")->required();
  eval->add_option("--out", out_path, "Output metrics.json")->required();

  auto* report = app.add_subcommand("report", "Write plot-ready CSV and a markdown summary");
  report->add_option("--metrics", metrics, "metrics.json written by eval")->required();
  report->add_option("--out", out_path, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*gen) cmd_gen(config, out_path, seed, err);
    if (*train) cmd_train(config, data, level, out_path, err);
    if (*eval) {
      std::vector<std::filesystem::path> paths(bundles.begin(), bundles.end());
      cmd_eval(config, data, paths, out_path, err);
    }
    if (*report) cmd_report(metrics, out_path, err);
  } catch (const Error& e) {
    err << "sdsa: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "sdsa: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace sdsa::cli
