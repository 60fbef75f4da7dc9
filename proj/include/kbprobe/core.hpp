#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kbprobe/errors.hpp"

namespace kbprobe {

enum class atom_status {
  raw,
  unique,
  valid,
  rejected_duplicate,
  rejected_audit,
};

enum class atom_category {
  factual,
  conceptual,
  procedural,
  unclassified,
};

enum class stop_reason {
  none,
  low_growth,
  low_efficiency,
  low_novel,
  max_turns,
};

std::string_view to_string(atom_status s);
std::string_view to_string(atom_category c);
std::string_view to_string(stop_reason r);
atom_status atom_status_from_string(std::string_view s);
atom_category atom_category_from_string(std::string_view s);
stop_reason stop_reason_from_string(std::string_view s);

// Where an atom came from: which policy produced it, on which turn, and for
// the structured policies which leaf or persona asked the question.
struct atom_origin {
  std::string policy_id;
  int turn = 0;
  std::optional<std::string> leaf_path;
  std::optional<int> profile_index;
};

struct knowledge_atom {
  std::string atom_id;
  std::string text;
  std::string source_model_id;
  std::string topic_id;
  atom_origin origin;
  atom_category category = atom_category::unclassified;
  atom_status status = atom_status::raw;
  std::optional<std::vector<double>> embedding;
  std::optional<std::string> merged_into;
};

struct turn_record {
  int turn_index = 0;
  std::int64_t raw_count = 0;
  std::int64_t novel_count = 0;
  std::int64_t cumulative_unique = 0;
  std::optional<double> growth_rate;   // absent at t=1 or when prior set empty
  std::optional<double> efficiency;    // absent when raw_count = 0
  std::int64_t generation_tokens = 0;  // this turn's share
  std::int64_t embedding_tokens = 0;
  stop_reason stop = stop_reason::none;
};

struct saturation_config {
  double min_growth = 0.01;
  double min_efficiency = 0.10;
  std::int64_t min_novel = 3;
  int max_turns = 15;

  void validate() const;
};

struct policy_params {
  std::optional<int> branching;       // W
  std::optional<int> max_depth;       // D_max
  std::optional<int> profile_count;   // N
};

struct run_record {
  std::string run_id;
  std::string policy_id;
  policy_params params;
  std::string model_id;
  std::string topic_id;
  std::uint64_t seed = 0;
  saturation_config saturation;
  std::vector<turn_record> turns;
  std::vector<knowledge_atom> atoms;
  // Cumulative generation+embedding tokens at each turn boundary.
  std::vector<std::int64_t> total_cost_tokens;
  double wall_clock = 0.0;
  bool aborted = false;
  bool incomplete_audit = false;
  bool all_leaves_inactive = false;
};

// Scope data an atom id is derived from; ids are content-independent so a
// rerun that produces the same pool shape mints the same ids.
struct mint_scope {
  std::string run_id;
  std::string model_id;
  std::string topic_id;
  int ordinal = 0;  // position within the run's full mint sequence
};

// Strips one leading bullet marker, collapses internal whitespace, trims.
// Throws precondition_error when nothing is left.
std::string normalize_statement(std::string_view raw);

knowledge_atom mint_atom(std::string_view text, const atom_origin& origin,
                         const mint_scope& scope);

// Returns the atom advanced along a legal lifecycle edge. merged_into must be
// given exactly when the new status is rejected_duplicate.
knowledge_atom transition(knowledge_atom atom, atom_status next,
                          std::optional<std::string> merged_into = {});

// Structural checks: contiguous turn indices, final stop reason, nondecreasing
// cost, the sum identities linking turn counts to atom statuses. Throws
// precondition_error describing the first violation. Aborted runs are only
// checked up to what they recorded.
void validate_run_record(const run_record& run);

// Line-delimited serialization: one header object, one object per turn, one
// per atom.
std::string serialize_run_record(const run_record& run);
run_record parse_run_record(const std::string& text);
void write_run_record(const run_record& run, const std::filesystem::path& path);
run_record read_run_record(const std::filesystem::path& path);

}  // namespace kbprobe
