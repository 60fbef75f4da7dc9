#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kbprobe/core.hpp"
#include "kbprobe/gateway.hpp"
#include "kbprobe/prompts.hpp"

namespace kbprobe {

struct dedup_config {
  double strict_threshold = 0.92;
  double fuzzy_low = 0.70;
  std::string judge_model_id;  // empty: use the run's model
  std::string audit_model_id;  // empty: use the run's model

  void validate() const;
};

enum class dedup_outcome {
  accepted_novel,
  merged_strict,
  merged_by_judge,
  kept_after_judge,
};

std::string_view to_string(dedup_outcome o);
dedup_outcome dedup_outcome_from_string(std::string_view s);

struct dedup_decision {
  std::string candidate_atom_id;
  dedup_outcome outcome = dedup_outcome::accepted_novel;
  std::optional<std::string> matched_atom_id;  // nearest neighbor consulted
  std::optional<double> similarity;
  std::optional<std::string> judge_verdict;  // "YES" / "NO"
  std::optional<int> transcript_id;
  bool verdict_forced = false;  // judge reply unparseable twice, treated as NO
  int turn = 0;
};

struct audit_decision {
  std::string atom_id;
  bool valid = false;
  std::optional<int> transcript_id;
  bool verdict_forced = false;
  int turn = 0;
};

struct judge_transcript {
  int transcript_id = 0;
  std::string kind;  // "dedup" | "audit"
  std::string model_id;
  std::string prompt;
  std::string response;
};

// Everything a run accumulates while its pools flow through the processor.
struct pipeline_state {
  std::vector<knowledge_atom> accepted;   // dedup reference set, accept order
  std::vector<knowledge_atom> processed;  // every pool atom, final statuses
  std::vector<dedup_decision> dedup_decisions;
  std::vector<audit_decision> audit_decisions;
  std::vector<judge_transcript> transcripts;
  bool incomplete_audit = false;
};

struct turn_pool_result {
  std::int64_t raw_count = 0;
  std::int64_t novel_count = 0;
};

// Requires equal dimensions and unit norms within 1e-6.
double cosine(std::span<const double> a, std::span<const double> b);

/// Three-stage processor: strict vector merging above 0.92, judge adjudication
// in (0.70, 0.92], and the per-turn domain audit over novel atoms.
class pipeline {
 public:
  pipeline(gateway& gw, const prompt_registry& prompts, dedup_config config,
           std::string topic, std::string run_model_id,
           std::string embedding_model_id, double judge_temperature = 0.0,
           int judge_max_output_tokens = 8);

  // Routes one raw embedded candidate against the accepted set. Returns
  // nullopt only when final_attempt is false and the judge is unreachable
  // (the candidate is left untouched for a later retry); with final_attempt
  // an unreachable judge raises adjudication_error.
  std::optional<dedup_decision> dedup_insert(knowledge_atom& candidate,
                                             pipeline_state& state, int turn,
                                             bool final_attempt = true);

  // Judges one unique atom for domain validity and applies the transition.
  audit_decision audit(knowledge_atom& atom, pipeline_state& state, int turn);

  // One global turn: batch-embeds the pool, deduplicates serially in pool
  // order (judge-unreachable candidates deferred to the pool's end), then
  // audits this turn's novel atoms concurrently. novel_count is the unique
  // count before auditing. Audit transport failures leave atoms unique and
  // set state.incomplete_audit.
  turn_pool_result process_turn_pool(std::vector<knowledge_atom> pool,
                                     pipeline_state& state, int turn,
                                     bool run_audit = true);

  const dedup_config& config() const { return config_; }

 private:
  struct judge_reply {
    bool yes = false;
    bool forced = false;
    std::vector<judge_transcript> calls;  // transcript ids assigned on commit
  };
  judge_reply ask_judge(const std::string& model_id, const std::string& prompt,
                        const std::string& kind) const;
  int commit_transcripts(pipeline_state& state,
                         std::vector<judge_transcript> calls) const;

  gateway& gateway_;
  const prompt_registry& prompts_;
  dedup_config config_;
  std::string topic_;
  std::string run_model_id_;
  std::string embedding_model_id_;
  double judge_temperature_;
  int judge_max_output_tokens_;
};

struct model_valid_set {
  std::string model_id;
  std::vector<knowledge_atom> atoms;
};

struct union_result {
  std::vector<knowledge_atom> members;  // duplicate-class representatives
  // member atom_id -> sorted model ids whose sets reached that class
  std::map<std::string, std::vector<std::string>> membership;
  std::vector<std::string> model_ids;  // all models that participated
  pipeline_state state;
};

// Concatenates the valid sets in canonical order (ascending model_id, then
// atom_id), re-embeds, and runs the identical dedup pipeline.
union_result build_union(std::vector<model_valid_set> sets, pipeline& pipe);

// Fraction of union classes containing a member from this model.
double recall_from_union(const union_result& u, const std::string& model_id);

std::string serialize_decision_log(const pipeline_state& state);
void parse_decision_log(const std::string& text, pipeline_state& state);
void write_decision_log(const pipeline_state& state,
                        const std::filesystem::path& path);
pipeline_state read_decision_log(const std::filesystem::path& path);

std::string serialize_transcripts(const pipeline_state& state);
void write_transcripts(const pipeline_state& state,
                       const std::filesystem::path& path);

}  // namespace kbprobe
