#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kbprobe/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"knowledge-boundary probing engine"};
  app.require_subcommand(1);

  std::string config_path;
  std::string topic;
  std::string model;
  std::string pipeline;
  std::string output_dir;
  std::uint64_t seed = 0;
  bool trace = false;

  auto* run = app.add_subcommand("run", "execute extraction runs");
  auto* run_config =
      run->add_option("--config", config_path, "config file (INI sections)");
  auto* run_topic = run->add_option("--topic", topic, "restrict to one topic");
  auto* run_model = run->add_option("--model", model, "restrict to one model");
  auto* run_pipeline =
      run->add_option("--pipeline", pipeline, "restrict to one preset");
  auto* run_seed = run->add_option("--seed", seed, "override the global seed");
  auto* run_output =
      run->add_option("--output", output_dir, "run-record directory");
  run->add_flag("--trace", trace, "write wire logs next to the records");

  std::vector<std::string> pareto_files;
  std::string baseline;
  std::string pareto_output;
  auto* pareto =
      app.add_subcommand("pareto", "emit cost-yield curves for run records");
  pareto->add_option("files", pareto_files, "run-record files");
  pareto->add_option("--baseline", baseline, "run id that normalizes yields")
      ->required();
  auto* pareto_out_opt =
      pareto->add_option("--output", pareto_output, "csv directory");

  std::vector<std::string> compare_files;
  std::string compare_config;
  std::string compare_output;
  auto* compare = app.add_subcommand(
      "compare", "build the cross-model union and recall/accuracy report");
  compare->add_option("files", compare_files, "run-record files");
  auto* compare_config_opt =
      compare->add_option("--config", compare_config, "config file");
  auto* compare_out_opt =
      compare->add_option("--output", compare_output, "csv directory");

  std::string replay_file;
  auto* replay = app.add_subcommand(
      "replay", "recompute a stored run from its decision log");
  replay->add_option("file", replay_file, "<run_id>.runrec.jsonl")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (run->parsed()) {
    kbprobe::cmd_options options;
    if (run_config->count()) options.config_path = config_path;
    if (run_topic->count()) options.topic = topic;
    if (run_model->count()) options.model = model;
    if (run_pipeline->count()) options.pipeline = pipeline;
    if (run_seed->count()) options.seed = seed;
    if (run_output->count()) options.output_dir = output_dir;
    options.trace = trace;
    return kbprobe::cmd_run(options, std::cout, std::cerr);
  }
  if (pareto->parsed()) {
    std::vector<std::filesystem::path> files(pareto_files.begin(),
                                             pareto_files.end());
    std::optional<std::filesystem::path> out_dir;
    if (pareto_out_opt->count()) out_dir = pareto_output;
    return kbprobe::cmd_pareto(files, baseline, out_dir, std::cout,
                               std::cerr);
  }
  if (compare->parsed()) {
    std::vector<std::filesystem::path> files(compare_files.begin(),
                                             compare_files.end());
    kbprobe::cmd_options options;
    if (compare_config_opt->count()) options.config_path = compare_config;
    if (compare_out_opt->count()) options.output_dir = compare_output;
    return kbprobe::cmd_compare(files, options, std::cout, std::cerr);
  }
  return kbprobe::cmd_replay(replay_file, std::cout, std::cerr);
}
