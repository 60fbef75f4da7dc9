#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "kbprobe/core.hpp"
#include "kbprobe/gateway.hpp"
#include "kbprobe/policies.hpp"
#include "kbprobe/processor.hpp"
#include "kbprobe/prompts.hpp"
#include "kbprobe/sim_oracle.hpp"

namespace kbprobe {

// Everything a sweep needs. Defaults run the three stock topics against the
// sim backend with all eight pipeline presets, so an empty config works.
struct experiment_config {
  std::vector<std::string> topics = {"Deep Learning",
                                     "Machine Learning Systems",
                                     "Probabilistic Methods"};
  std::vector<std::string> models = {"sim:demo"};
  std::vector<std::string> pipelines = {
      "P2_Sequential",     "P3_Reflection",      "P4_Taxonomy_L2W2",
      "P4_Taxonomy_L3W3",  "P4_Taxonomy_L5W5",   "P5_MultiProfile_N3",
      "P5_MultiProfile_N10", "P5_MultiProfile_N20"};
  std::uint64_t seed = 7;
  std::filesystem::path output_dir = "out";

  double extract_temperature = 0.7;
  double judge_temperature = 0.0;
  int max_output_tokens = 2048;

  int concurrency = 32;
  retry_policy retry;
  int embed_batch_limit = 128;
  std::string api_base = "https://api.openai.com";
  double http_timeout_seconds = 60.0;
  std::string embedding_model;  // empty: each run's own model embeds

  double strict_threshold = 0.92;
  double fuzzy_low = 0.70;
  std::string judge_model;  // empty: the run's model judges
  std::string audit_model;

  saturation_config saturation;
  sim_corpus_spec sim;

  // Template key -> file whose contents replace the built-in text.
  std::map<std::string, std::string> prompt_overrides;

  void validate() const;
  dedup_config make_dedup_config() const;
  gateway_options make_gateway_options() const;
};

// The eight stock pipeline presets.
const std::vector<std::string>& preset_names();

// Maps a preset name to its policy configuration, carrying the given
// saturation thresholds. Unknown names raise config_error listing the valid
// presets.
policy_config resolve_preset(const std::string& name,
                             const saturation_config& saturation);

// INI-style parsing: [section] headers, key = value lines, '#' comment
// lines, ';'-separated lists. Unknown sections or keys are errors.
experiment_config parse_config_text(const std::string& text);
experiment_config load_config_file(const std::filesystem::path& path);

// Built-in templates plus any file overrides from the config.
prompt_registry load_prompts(const experiment_config& config);

}  // namespace kbprobe
