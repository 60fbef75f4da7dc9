#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "kbprobe/config.hpp"
#include "kbprobe/core.hpp"
#include "kbprobe/metrics.hpp"
#include "kbprobe/policies.hpp"
#include "kbprobe/sim_oracle.hpp"

namespace kbprobe {

// <preset>__<model-slug>__<topic-slug>__s<seed>
std::string make_run_id(const std::string& preset, const std::string& model_id,
                        const std::string& topic, std::uint64_t seed);

struct run_request {
  std::string preset;
  std::string model_id;
  std::string topic;
};

struct run_output {
  run_record record;
  pipeline_state state;
  std::filesystem::path record_path;
  std::filesystem::path decisions_path;
  std::filesystem::path transcripts_path;
};

// Owns the backends for one experiment; every run gets a fresh gateway so the
// cost ledger starts at zero.
class experiment {
 public:
  // api_key authenticates remote models; empty is fine while only "sim:"
  // models are used.
  explicit experiment(experiment_config config, std::string api_key = "");

  // Executes one run and persists record, decision log, and transcripts under
  // the output directory. Aborted runs are persisted too, flagged as such.
  run_output execute_run(const run_request& request, bool trace = false);

  // topics x models x pipelines, sequentially, in config order.
  std::vector<run_output> execute_sweep(bool trace = false);

  const experiment_config& config() const { return config_; }
  const prompt_registry& prompts() const { return prompts_; }
  sim_backend_factory& sim_factory() { return *sim_; }
  backend_resolver resolver();

 private:
  backend& resolve(const std::string& model_id);

  experiment_config config_;
  prompt_registry prompts_;
  std::unique_ptr<sim_backend_factory> sim_;
  std::unique_ptr<http_backend> http_;
  std::mutex http_mutex_;
  std::string api_key_;
};

// Recomputes the turn series from the decision log and cross-checks every
// atom's final status against its decisions; throws verification_error on the
// first divergence, naming the field.
void verify_run_against_decisions(const run_record& record,
                                  const pipeline_state& state);

struct cmd_options {
  std::optional<std::filesystem::path> config_path;
  std::optional<std::string> topic;
  std::optional<std::string> model;
  std::optional<std::string> pipeline;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> output_dir;
  bool trace = false;
};

// Command bodies shared by the CLI binary and the tests. Exit codes:
// 0 success, 1 usage/config, 2 runtime/transport, 3 replay mismatch.
int cmd_run(const cmd_options& options, std::ostream& out, std::ostream& err);
int cmd_pareto(const std::vector<std::filesystem::path>& run_files,
               const std::string& baseline_run_id,
               const std::optional<std::filesystem::path>& output_dir,
               std::ostream& out, std::ostream& err);
int cmd_compare(const std::vector<std::filesystem::path>& run_files,
                const cmd_options& options, std::ostream& out,
                std::ostream& err);
int cmd_replay(const std::filesystem::path& run_file, std::ostream& out,
               std::ostream& err);

}  // namespace kbprobe
