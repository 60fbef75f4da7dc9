#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kbprobe/core.hpp"
#include "kbprobe/gateway.hpp"
#include "kbprobe/processor.hpp"
#include "kbprobe/prompts.hpp"

namespace kbprobe {

struct policy_config {
  std::string policy_id;  // sequential | reflective | taxonomy |
                          // multi_perspective
  std::optional<int> branching;      // W, taxonomy
  std::optional<int> max_depth;      // D_max, taxonomy
  std::optional<int> profile_count;  // N, multi_perspective
  saturation_config saturation;

  void validate() const;
};

struct taxonomy_node {
  std::string label;
  std::vector<taxonomy_node> children;
};

struct taxonomy_tree {
  std::string root;  // the probed topic
  std::vector<taxonomy_node> level1;

  // Depth-first leaf paths, level-1 label down to the leaf label.
  std::vector<std::vector<std::string>> leaf_paths() const;
  int leaf_count() const;
  // Shape invariants: every internal node has exactly w children, uniform
  // depth d_max, sibling labels unique and non-empty.
  void validate(int w, int d_max) const;
};

struct expert_profile {
  int index = 0;  // 1..N
  std::string description;
};

// Lines whose trimmed form starts with "-", "*", or U+2022, marker and
// leading whitespace stripped; everything else is discarded. Lines that are
// empty once stripped are dropped too.
std::vector<std::string> parse_bullets(const std::string& text);

// First matching reason in priority order max_turns > low_novel >
// low_efficiency > low_growth; growth is never evaluated at t=1 (or while the
// prior set is empty) and efficiency only when r_t > 0.
stop_reason check_saturation(const turn_record& turn,
                             std::span<const turn_record> history,
                             const saturation_config& config);

// Unique atoms rendered as "- text" lines, most recent `cap` entries, with a
// leading "...N earlier points omitted" header when truncated.
std::string build_points_str(std::span<const knowledge_atom> accepted,
                             std::size_t cap = 200);

// Shared run context. The gateway's cost ledger is snapshotted at turn
// boundaries, so a fresh gateway per run gives clean attribution.
struct run_env {
  gateway& gw;
  const prompt_registry& prompts;
  dedup_config dedup;
  std::string embedding_model_id;  // empty: the run model embeds too
  double extract_temperature = 0.7;
  double judge_temperature = 0.0;
  int max_output_tokens = 2048;
  std::uint64_t seed = 7;
  std::string run_id;
  // Simulated runs keep wall_clock at 0.0 so record files are byte-stable.
  bool measure_wall_clock = true;
};

taxonomy_tree build_taxonomy(const std::string& topic,
                             const std::string& model_id, int w, int d_max,
                             run_env& env);

std::vector<expert_profile> generate_profiles(const std::string& topic,
                                              const std::string& model_id,
                                              int n, run_env& env);

run_record run_sequential(const std::string& topic,
                          const std::string& model_id,
                          const policy_config& config, run_env& env,
                          pipeline_state* out_state = nullptr);
run_record run_reflective(const std::string& topic,
                          const std::string& model_id,
                          const policy_config& config, run_env& env,
                          pipeline_state* out_state = nullptr);
run_record run_taxonomy(const std::string& topic, const std::string& model_id,
                        const policy_config& config, run_env& env,
                        pipeline_state* out_state = nullptr);
// Mines an externally supplied tree; run_taxonomy builds one first.
run_record run_taxonomy_with_tree(const taxonomy_tree& tree,
                                  const std::string& topic,
                                  const std::string& model_id,
                                  const policy_config& config, run_env& env,
                                  pipeline_state* out_state = nullptr);
run_record run_multi_perspective(const std::string& topic,
                                 const std::string& model_id,
                                 const policy_config& config, run_env& env,
                                 pipeline_state* out_state = nullptr);

// Dispatch on config.policy_id.
run_record run_policy(const std::string& topic, const std::string& model_id,
                      const policy_config& config, run_env& env,
                      pipeline_state* out_state = nullptr);

}  // namespace kbprobe
