#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kbprobe/core.hpp"
#include "kbprobe/gateway.hpp"
#include "kbprobe/util.hpp"

namespace kbprobe {

struct sim_corpus_spec {
  std::uint64_t seed = 7;
  int branching = 3;
  int depth = 2;
  int facts_per_leaf = 20;
  double zipf_s = 1.1;
  int paraphrases_per_fact = 2;

  void validate() const;
};

struct sim_fact {
  int fact_id = 0;
  int leaf_index = 0;
  double weight = 0.0;                     // 1 / global_rank^s
  std::vector<std::string> variants;       // paraphrases, same fact id
};

struct sim_leaf {
  std::string label;
  std::vector<std::string> path;  // level-1 label ... leaf label
  std::vector<int> fact_ids;
};

// Hidden ground truth behind the simulated model: a label tree, facts with
// popularity weights, paraphrase variants, and a fixed embedding geometry.
//
// Geometry (dimension 64): each fact has a canonical unit vector; all
// canonical pairs are kept at cosine <= 0.88 by rejection sampling, and every
// paraphrase stays within 2 degrees of its canonical. Hence variants of one
// fact always exceed the 0.92 strict-merge threshold while variants of two
// different facts never do (max cross-fact cosine is cos(arccos 0.88 - 4deg)
// ~= 0.911). Selected same-leaf fact pairs are correlated to land inside the
// (0.70, 0.92] judge zone so the adjudication path sees regular traffic.
class sim_corpus {
 public:
  static sim_corpus generate(const sim_corpus_spec& spec);

  const sim_corpus_spec& spec() const { return spec_; }
  int total_fact_count() const { return static_cast<int>(facts_.size()); }
  const std::vector<sim_fact>& facts() const { return facts_; }
  const sim_fact& fact(int id) const;
  const std::vector<sim_leaf>& leaves() const { return leaves_; }
  const std::vector<std::string>& level1_labels() const { return level1_; }
  // Children of an internal node label; empty when the label is unknown or a
  // leaf.
  std::vector<std::string> children_of(const std::string& label) const;
  bool is_leaf_label(const std::string& label) const;

  // Fact id + variant index for a normalized text, if it is a known variant.
  std::optional<std::pair<int, int>> lookup_text(std::string_view text) const;

  const std::vector<double>& variant_vector(int fact_id, int variant) const;
  // Known variants return their stored vector; unknown text hashes to a
  // stable pseudo-random unit vector. Dimension 64.
  std::vector<double> embed_text(std::string_view text) const;

  static constexpr int dimension = 64;

 private:
  sim_corpus_spec spec_;
  std::vector<std::string> level1_;
  std::map<std::string, std::vector<std::string>> children_;
  std::vector<sim_leaf> leaves_;
  std::vector<sim_fact> facts_;
  std::map<std::string, std::pair<int, int>, std::less<>> text_index_;
  std::vector<std::vector<std::vector<double>>> vectors_;  // [fact][variant]
};

void write_corpus_spec(const sim_corpus_spec& spec,
                       const std::filesystem::path& path);
sim_corpus_spec read_corpus_spec(const std::filesystem::path& path);

struct sim_response {
  std::string text;
  std::vector<int> emitted_fact_ids;
};

// One simulated model's knowledge slice: with coverage < 1 the model only
// "knows" a deterministic subset of facts.
struct sim_model_view {
  std::string name;
  double coverage = 1.0;

  bool knows(const sim_corpus& corpus, int fact_id) const;
};

// Parses "sim:<name>" or "sim:<name>@<coverage percent>".
sim_model_view parse_sim_model_id(const std::string& model_id);

// Mining answer: scope = leaves whose labels occur in the prompt (whole
// corpus when none match), 5..15 facts sampled without replacement by
// weight^exponent (0.3 when exactly one leaf matched, else 1.0), one random
// paraphrase per emission, "- " bullet lines.
sim_response sim_respond(const std::string& prompt, const sim_corpus& corpus,
                         rng& r, const sim_model_view& view);

// Fraction of the corpus's fact ids covered by the given valid atoms.
// Throws foreign_atom_error for texts the corpus never produced.
double true_recall(std::span<const knowledge_atom> atoms,
                   const sim_corpus& corpus);

// backend implementation: routes judge/taxonomy/profile prompts to exact
// oracle answers and everything else to sim_respond. Deterministic: the rng
// for each call is derived from (corpus seed, model name, prompt), so results
// are independent of thread scheduling.
class sim_backend : public backend {
 public:
  sim_backend(std::shared_ptr<const sim_corpus> corpus, sim_model_view view);

  wire_chat chat(const chat_request& request) override;
  wire_embeddings embed(const std::string& model_id,
                        const std::vector<std::string>& texts) override;

 private:
  std::string answer(const std::string& prompt) const;
  std::string answer_dedup_judge(const std::string& prompt) const;
  std::string answer_audit_judge(const std::string& prompt) const;
  std::string answer_level1(const std::string& prompt) const;
  std::string answer_level2(const std::string& prompt) const;
  std::string answer_profiles(const std::string& prompt) const;

  std::shared_ptr<const sim_corpus> corpus_;
  sim_model_view view_;
};

// Owns the corpus and hands out per-model backends for every "sim:" id.
class sim_backend_factory {
 public:
  explicit sim_backend_factory(const sim_corpus_spec& spec);

  backend& backend_for(const std::string& model_id);
  std::shared_ptr<const sim_corpus> corpus() const { return corpus_; }

 private:
  std::shared_ptr<const sim_corpus> corpus_;
  std::mutex mutex_;
  std::map<std::string, std::unique_ptr<sim_backend>> backends_;
};

}  // namespace kbprobe
