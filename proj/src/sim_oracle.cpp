#include "kbprobe/sim_oracle.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace kbprobe {

namespace {

constexpr double k_canonical_cap = 0.88;  // max allowed cosine between facts
constexpr double k_leaf_share = 0.55;     // squared weight on the leaf axis

const char* k_consonants = "bcdfghjklmnpqrstvwz";
const char* k_vowels = "aeiou";

std::string pseudoword(rng& r, int syllables) {
  std::string out;
  out.reserve(static_cast<std::size_t>(syllables) * 2);
  for (int i = 0; i < syllables; ++i) {
    out.push_back(k_consonants[r.below(19)]);
    out.push_back(k_vowels[r.below(5)]);
  }
  return out;
}

std::string unique_pseudoword(rng& r, int syllables,
                              std::set<std::string>& used) {
  while (true) {
    std::string w = pseudoword(r, syllables);
    if (used.insert(w).second) return w;
  }
}

std::vector<double> random_unit(rng& r) {
  std::vector<double> v(sim_corpus::dimension);
  double norm_sq = 0.0;
  do {
    norm_sq = 0.0;
    for (double& x : v) {
      x = r.normal();
      norm_sq += x * x;
    }
  } while (!(norm_sq > 1e-12));
  const double inv = 1.0 / std::sqrt(norm_sq);
  for (double& x : v) x *= inv;
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Component of v orthogonal to unit vector axis, renormalized.
std::vector<double> orthonormal_to(std::span<const double> v,
                                   std::span<const double> axis, rng& r) {
  std::vector<double> out(v.begin(), v.end());
  while (true) {
    const double proj = dot(out, axis);
    double norm_sq = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] -= proj * axis[i];
      norm_sq += out[i] * out[i];
    }
    if (norm_sq > 1e-12) {
      const double inv = 1.0 / std::sqrt(norm_sq);
      for (double& x : out) x *= inv;
      return out;
    }
    out = random_unit(r);  // v was (anti)parallel to axis; start over
  }
}

std::vector<double> rotate_towards(std::span<const double> base,
                                   std::span<const double> dir_unit,
                                   double radians) {
  std::vector<double> out(base.size());
  const double c = std::cos(radians), s = std::sin(radians);
  for (std::size_t i = 0; i < base.size(); ++i)
    out[i] = base[i] * c + dir_unit[i] * s;
  return out;
}

std::string fact_text(const std::string& noun1, const std::string& noun2,
                      int x, int y, int variant) {
  char buf[256];
  switch (variant % 4) {
    case 0:
      std::snprintf(buf, sizeof buf,
                    "The %s coefficient under %s load measures %d units "
                    "across %d cycles.",
                    noun1.c_str(), noun2.c_str(), x, y);
      break;
    case 1:
      std::snprintf(buf, sizeof buf,
                    "Across %d cycles, %s load yields a %s coefficient of %d "
                    "units.",
                    y, noun2.c_str(), noun1.c_str(), x);
      break;
    case 2:
      std::snprintf(buf, sizeof buf,
                    "A %s coefficient of %d units is observed over %d cycles "
                    "of %s load.",
                    noun1.c_str(), x, y, noun2.c_str());
      break;
    default:
      std::snprintf(buf, sizeof buf,
                    "Under %s load the %s coefficient stays at %d units for "
                    "%d cycles.",
                    noun2.c_str(), noun1.c_str(), x, y);
      break;
  }
  std::string text(buf);
  if (variant >= 4) text += " Restatement " + std::to_string(variant) + ".";
  return text;
}

}  // namespace

void sim_corpus_spec::validate() const {
  if (branching < 1) throw config_error("sim branching must be >= 1");
  if (depth < 1) throw config_error("sim depth must be >= 1");
  if (facts_per_leaf < 1) throw config_error("sim facts_per_leaf must be >= 1");
  if (!(zipf_s > 0.0)) throw config_error("sim zipf_s must be positive");
  if (paraphrases_per_fact < 1)
    throw config_error("sim paraphrases_per_fact must be >= 1");
}

sim_corpus sim_corpus::generate(const sim_corpus_spec& spec) {
  spec.validate();
  sim_corpus corpus;
  corpus.spec_ = spec;
  rng gen(mix_seed(spec.seed, fnv1a64("corpus")));
  std::set<std::string> used_words;

  // Label tree, breadth-first. All labels share one length so substring
  // matching can only hit exact label occurrences.
  std::vector<std::vector<std::string>> level_paths;  // paths at current level
  corpus.level1_.clear();
  std::vector<std::vector<std::string>> frontier;
  for (int i = 0; i < spec.branching; ++i) {
    std::string label = unique_pseudoword(gen, 6, used_words);
    corpus.level1_.push_back(label);
    frontier.push_back({label});
  }
  for (int level = 2; level <= spec.depth; ++level) {
    std::vector<std::vector<std::string>> next;
    for (const std::vector<std::string>& path : frontier) {
      std::vector<std::string> kids;
      for (int i = 0; i < spec.branching; ++i)
        kids.push_back(unique_pseudoword(gen, 6, used_words));
      corpus.children_[path.back()] = kids;
      for (const std::string& kid : kids) {
        std::vector<std::string> kid_path = path;
        kid_path.push_back(kid);
        next.push_back(std::move(kid_path));
      }
    }
    frontier = std::move(next);
  }
  for (const std::vector<std::string>& path : frontier) {
    sim_leaf leaf;
    leaf.label = path.back();
    leaf.path = path;
    corpus.leaves_.push_back(std::move(leaf));
  }

  // Facts and paraphrase texts.
  const int total_facts =
      static_cast<int>(corpus.leaves_.size()) * spec.facts_per_leaf;
  corpus.facts_.reserve(static_cast<std::size_t>(total_facts));
  for (std::size_t li = 0; li < corpus.leaves_.size(); ++li) {
    for (int fi = 0; fi < spec.facts_per_leaf; ++fi) {
      sim_fact fact;
      fact.fact_id = static_cast<int>(corpus.facts_.size());
      fact.leaf_index = static_cast<int>(li);
      const std::string noun1 = unique_pseudoword(gen, 4, used_words);
      const std::string noun2 = unique_pseudoword(gen, 4, used_words);
      const int x = 2 + static_cast<int>(gen.below(96));
      const int y = 3 + static_cast<int>(gen.below(39));
      for (int v = 0; v < spec.paraphrases_per_fact; ++v)
        fact.variants.push_back(fact_text(noun1, noun2, x, y, v));
      corpus.leaves_[li].fact_ids.push_back(fact.fact_id);
      corpus.facts_.push_back(std::move(fact));
    }
  }

  // Popularity: global Zipf over a shuffled rank order.
  std::vector<int> ranks(static_cast<std::size_t>(total_facts));
  for (int i = 0; i < total_facts; ++i) ranks[static_cast<std::size_t>(i)] = i;
  for (int i = total_facts - 1; i > 0; --i) {
    const std::size_t j = gen.below(static_cast<std::uint64_t>(i) + 1);
    std::swap(ranks[static_cast<std::size_t>(i)], ranks[j]);
  }
  for (int i = 0; i < total_facts; ++i) {
    const int rank = ranks[static_cast<std::size_t>(i)] + 1;
    corpus.facts_[static_cast<std::size_t>(i)].weight =
        1.0 / std::pow(static_cast<double>(rank), spec.zipf_s);
  }

  // Embedding geometry. fact directions are orthogonal to the leaf axis so
  // same-leaf cosines are exactly leaf_share + (1-leaf_share) * (g_i . g_j).
  const double a = std::sqrt(k_leaf_share);
  const double b = std::sqrt(1.0 - k_leaf_share);
  std::vector<std::vector<double>> leaf_dirs;
  leaf_dirs.reserve(corpus.leaves_.size());
  for (std::size_t li = 0; li < corpus.leaves_.size(); ++li)
    leaf_dirs.push_back(random_unit(gen));

  std::vector<std::vector<double>> canonicals(
      static_cast<std::size_t>(total_facts));
  std::vector<std::vector<double>> fact_dirs(
      static_cast<std::size_t>(total_facts));
  for (const sim_leaf& leaf : corpus.leaves_) {
    const std::vector<double>& axis =
        leaf_dirs[static_cast<std::size_t>(
            corpus.facts_[static_cast<std::size_t>(leaf.fact_ids[0])]
                .leaf_index)];
    for (std::size_t k = 0; k < leaf.fact_ids.size(); ++k) {
      const int fid = leaf.fact_ids[k];
      // Odd-positioned facts correlate with their predecessor, which puts
      // the pair's cosine near 0.775 — inside the judge's ambiguity zone.
      const bool paired = (k % 2 == 1);
      for (int attempt = 0;; ++attempt) {
        std::vector<double> g;
        if (paired && attempt < 50) {
          const std::vector<double>& prev =
              fact_dirs[static_cast<std::size_t>(leaf.fact_ids[k - 1])];
          std::vector<double> fresh =
              orthonormal_to(random_unit(gen), axis, gen);
          std::vector<double> blend(fresh.size());
          for (std::size_t i = 0; i < fresh.size(); ++i)
            blend[i] = 0.5 * prev[i] + 0.8660254037844386 * fresh[i];
          g = orthonormal_to(blend, axis, gen);
        } else {
          g = orthonormal_to(random_unit(gen), axis, gen);
        }
        std::vector<double> cand(sim_corpus::dimension);
        for (int i = 0; i < sim_corpus::dimension; ++i)
          cand[static_cast<std::size_t>(i)] =
              a * axis[static_cast<std::size_t>(i)] +
              b * g[static_cast<std::size_t>(i)];
        bool ok = true;
        for (int other = 0; other < fid && ok; ++other)
          if (dot(cand, canonicals[static_cast<std::size_t>(other)]) >
              k_canonical_cap)
            ok = false;
        if (ok) {
          fact_dirs[static_cast<std::size_t>(fid)] = std::move(g);
          canonicals[static_cast<std::size_t>(fid)] = std::move(cand);
          break;
        }
        if (attempt > 5000)
          throw error("sim corpus geometry failed to converge");
      }
    }
  }

  // Paraphrase vectors: each within 1..2 degrees of the canonical.
  constexpr double k_deg = 3.14159265358979323846 / 180.0;
  corpus.vectors_.resize(static_cast<std::size_t>(total_facts));
  for (int fid = 0; fid < total_facts; ++fid) {
    const std::vector<double>& canon = canonicals[static_cast<std::size_t>(fid)];
    auto& slots = corpus.vectors_[static_cast<std::size_t>(fid)];
    for (int v = 0; v < spec.paraphrases_per_fact; ++v) {
      const double angle = (1.0 + gen.real01()) * k_deg;
      const std::vector<double> dir =
          orthonormal_to(random_unit(gen), canon, gen);
      slots.push_back(rotate_towards(canon, dir, angle));
    }
  }

  for (const sim_fact& fact : corpus.facts_)
    for (std::size_t v = 0; v < fact.variants.size(); ++v)
      corpus.text_index_[fact.variants[v]] = {fact.fact_id,
                                              static_cast<int>(v)};
  return corpus;
}

const sim_fact& sim_corpus::fact(int id) const {
  if (id < 0 || id >= total_fact_count())
    throw precondition_error("fact id out of range");
  return facts_[static_cast<std::size_t>(id)];
}

std::vector<std::string> sim_corpus::children_of(
    const std::string& label) const {
  auto it = children_.find(label);
  if (it == children_.end()) return {};
  return it->second;
}

bool sim_corpus::is_leaf_label(const std::string& label) const {
  for (const sim_leaf& leaf : leaves_)
    if (leaf.label == label) return true;
  return false;
}

std::optional<std::pair<int, int>> sim_corpus::lookup_text(
    std::string_view text) const {
  auto it = text_index_.find(text);
  if (it == text_index_.end()) return std::nullopt;
  return it->second;
}

const std::vector<double>& sim_corpus::variant_vector(int fact_id,
                                                      int variant) const {
  const sim_fact& f = fact(fact_id);
  if (variant < 0 || variant >= static_cast<int>(f.variants.size()))
    throw precondition_error("variant index out of range");
  return vectors_[static_cast<std::size_t>(fact_id)]
                 [static_cast<std::size_t>(variant)];
}

std::vector<double> sim_corpus::embed_text(std::string_view text) const {
  const auto hit = lookup_text(text);
  if (hit) return variant_vector(hit->first, hit->second);
  rng r(mix_seed(fnv1a64(text), 0x517ecabull));
  return random_unit(r);
}

void write_corpus_spec(const sim_corpus_spec& spec,
                       const std::filesystem::path& path) {
  nlohmann::json j;
  j["seed"] = spec.seed;
  j["branching"] = spec.branching;
  j["depth"] = spec.depth;
  j["facts_per_leaf"] = spec.facts_per_leaf;
  j["zipf_s"] = spec.zipf_s;
  j["paraphrases_per_fact"] = spec.paraphrases_per_fact;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw error("cannot open for writing: " + path.string());
  out << j.dump() << '\n';
}

sim_corpus_spec read_corpus_spec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error("cannot open: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    sim_corpus_spec spec;
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.branching = j.at("branching").get<int>();
    spec.depth = j.at("depth").get<int>();
    spec.facts_per_leaf = j.at("facts_per_leaf").get<int>();
    spec.zipf_s = j.at("zipf_s").get<double>();
    spec.paraphrases_per_fact = j.at("paraphrases_per_fact").get<int>();
    spec.validate();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw precondition_error(std::string("corrupt corpus spec: ") + e.what());
  }
}

bool sim_model_view::knows(const sim_corpus& corpus, int fact_id) const {
  if (coverage >= 1.0) return true;
  const std::uint64_t h = splitmix64(
      mix_seed(mix_seed(corpus.spec().seed, fnv1a64(name)),
               static_cast<std::uint64_t>(fact_id)));
  return static_cast<double>(h >> 11) * 0x1.0p-53 < coverage;
}

sim_model_view parse_sim_model_id(const std::string& model_id) {
  if (!starts_with(model_id, "sim:"))
    throw config_error("not a simulated model id: " + model_id);
  std::string rest = model_id.substr(4);
  sim_model_view view;
  const std::size_t at = rest.find('@');
  if (at == std::string::npos) {
    view.name = rest;
  } else {
    view.name = rest.substr(0, at);
    const std::string pct = rest.substr(at + 1);
    try {
      view.coverage = std::stod(pct) / 100.0;
    } catch (const std::exception&) {
      throw config_error("bad coverage suffix in model id: " + model_id);
    }
    if (!(view.coverage > 0.0) || view.coverage > 1.0)
      throw config_error("coverage must be in (0, 100]: " + model_id);
  }
  if (view.name.empty())
    throw config_error("simulated model id needs a name: " + model_id);
  return view;
}

sim_response sim_respond(const std::string& prompt, const sim_corpus& corpus,
                         rng& r, const sim_model_view& view) {
  if (prompt.empty()) throw precondition_error("prompt must be non-empty");

  std::vector<std::size_t> matched_leaves;
  for (std::size_t li = 0; li < corpus.leaves().size(); ++li)
    if (contains(prompt, corpus.leaves()[li].label)) matched_leaves.push_back(li);

  std::vector<int> scope;
  double exponent = 1.0;
  if (matched_leaves.size() == 1) {
    scope = corpus.leaves()[matched_leaves[0]].fact_ids;
    exponent = 0.3;
  } else if (!matched_leaves.empty()) {
    for (std::size_t li : matched_leaves)
      for (int fid : corpus.leaves()[li].fact_ids) scope.push_back(fid);
  } else {
    for (const sim_fact& f : corpus.facts()) scope.push_back(f.fact_id);
  }

  std::vector<int> known;
  for (int fid : scope)
    if (view.knows(corpus, fid)) known.push_back(fid);

  sim_response out;
  if (known.empty()) {
    out.text = "No additional points available.";
    return out;
  }

  std::size_t k = 5 + static_cast<std::size_t>(r.below(11));
  k = std::min(k, known.size());
  std::vector<double> weights;
  weights.reserve(known.size());
  for (int fid : known)
    weights.push_back(std::pow(corpus.fact(fid).weight, exponent));
  const std::vector<std::size_t> picks =
      weighted_sample_without_replacement(weights, k, r);

  std::ostringstream text;
  for (std::size_t i = 0; i < picks.size(); ++i) {
    const sim_fact& f = corpus.fact(known[picks[i]]);
    const std::size_t variant = r.below(f.variants.size());
    if (i > 0) text << '\n';
    text << "- " << f.variants[variant];
    out.emitted_fact_ids.push_back(f.fact_id);
  }
  out.text = text.str();
  return out;
}

double true_recall(std::span<const knowledge_atom> atoms,
                   const sim_corpus& corpus) {
  std::set<int> covered;
  for (const knowledge_atom& atom : atoms) {
    const auto hit = corpus.lookup_text(atom.text);
    if (!hit)
      throw foreign_atom_error("atom text unknown to the corpus: " +
                               atom.text);
    covered.insert(hit->first);
  }
  return static_cast<double>(covered.size()) /
         static_cast<double>(corpus.total_fact_count());
}

namespace {

// Anchors unique to each oracle-answered prompt family. Mining histories
// never contain them: taxonomy/profile setup calls are not part of leaf or
// expert transcripts, and judge prompts never feed back into extraction.
constexpr std::string_view k_audit_marker =
    "Decision: Respond with ONLY 'YES' or 'NO'.";
constexpr std::string_view k_dedup_marker = "Respond ONLY with 'YES' or 'NO'.";
constexpr std::string_view k_level1_marker = "Break down the domain '";
constexpr std::string_view k_level2_marker = "' can be further divided.";
constexpr std::string_view k_profiles_marker = " distinct types of experts for '";

std::string line_after(const std::string& text, std::string_view marker) {
  const std::size_t pos = text.find(marker);
  if (pos == std::string::npos)
    throw malformed_response_error("prompt lacks expected field: " +
                                   std::string(marker));
  const std::size_t start = pos + marker.size();
  const std::size_t end = text.find('\n', start);
  return text.substr(start, end == std::string::npos ? std::string::npos
                                                     : end - start);
}

std::string between(const std::string& text, std::string_view open,
                    std::string_view close) {
  const std::size_t pos = text.find(open);
  if (pos == std::string::npos)
    throw malformed_response_error("prompt lacks expected field: " +
                                   std::string(open));
  const std::size_t start = pos + open.size();
  const std::size_t end = text.find(close, start);
  if (end == std::string::npos)
    throw malformed_response_error("prompt field not terminated: " +
                                   std::string(open));
  return text.substr(start, end - start);
}

int int_after(const std::string& text, std::string_view marker) {
  const std::string digits = line_after(text, marker);
  int value = 0;
  std::size_t i = 0;
  while (i < digits.size() &&
         std::isdigit(static_cast<unsigned char>(digits[i]))) {
    value = value * 10 + (digits[i] - '0');
    ++i;
  }
  if (i == 0) throw malformed_response_error("prompt count field not numeric");
  return value;
}

std::string synthetic_label(const sim_corpus& corpus, std::string_view kind,
                            std::string_view context, int index) {
  for (int salt = 0;; ++salt) {
    rng r(mix_seed(mix_seed(corpus.spec().seed, fnv1a64(kind)),
                   mix_seed(fnv1a64(context),
                            static_cast<std::uint64_t>(index * 977 + salt))));
    std::string label = pseudoword(r, 6);
    bool clash = false;
    for (const std::string& l1 : corpus.level1_labels())
      if (l1 == label) clash = true;
    for (const sim_leaf& leaf : corpus.leaves())
      for (const std::string& p : leaf.path)
        if (p == label) clash = true;
    if (!clash) return label;
  }
}

std::string bullets(const std::vector<std::string>& items) {
  std::ostringstream out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out << '\n';
    out << "- " << items[i];
  }
  return out.str();
}

}  // namespace

sim_backend::sim_backend(std::shared_ptr<const sim_corpus> corpus,
                         sim_model_view view)
    : corpus_(std::move(corpus)), view_(std::move(view)) {}

std::string sim_backend::answer_dedup_judge(const std::string& prompt) const {
  const std::string text1 = line_after(prompt, "Point A: ");
  const std::string text2 = line_after(prompt, "Point B: ");
  const auto a = corpus_->lookup_text(text1);
  const auto b = corpus_->lookup_text(text2);
  const bool same = a && b && a->first == b->first;
  return same ? "YES" : "NO";
}

std::string sim_backend::answer_audit_judge(const std::string& prompt) const {
  const std::string point =
      between(prompt, "Knowledge Point: \"", "\"\n\nDecision:");
  return corpus_->lookup_text(point) ? "YES" : "NO";
}

std::string sim_backend::answer_level1(const std::string& prompt) const {
  const int w = int_after(prompt, "into exactly ");
  const std::string query = between(prompt, k_level1_marker, "' into exactly");
  std::vector<std::string> labels = corpus_->level1_labels();
  if (static_cast<int>(labels.size()) > w)
    labels.resize(static_cast<std::size_t>(w));
  int pad = 0;
  while (static_cast<int>(labels.size()) < w)
    labels.push_back(synthetic_label(*corpus_, "level1", query, pad++));
  return bullets(labels);
}

std::string sim_backend::answer_level2(const std::string& prompt) const {
  const int w = int_after(prompt, "List exactly ");
  const std::string category =
      between(prompt, "the sub-topic '", k_level2_marker);
  std::vector<std::string> labels = corpus_->children_of(category);
  if (static_cast<int>(labels.size()) > w)
    labels.resize(static_cast<std::size_t>(w));
  int pad = 0;
  while (static_cast<int>(labels.size()) < w)
    labels.push_back(synthetic_label(*corpus_, "level2", category, pad++));
  return bullets(labels);
}

std::string sim_backend::answer_profiles(const std::string& prompt) const {
  const int n = int_after(prompt, "Identify ");
  const std::string query = between(prompt, k_profiles_marker, "'. 1 sentence");
  std::vector<std::string> personas;
  for (int i = 1; i <= n; ++i)
    personas.push_back("A specialist persona " + std::to_string(i) +
                       " concentrating on uncommon aspects of " + query + ".");
  return bullets(personas);
}

std::string sim_backend::answer(const std::string& prompt) const {
  if (contains(prompt, k_audit_marker)) return answer_audit_judge(prompt);
  if (contains(prompt, k_dedup_marker)) return answer_dedup_judge(prompt);
  if (contains(prompt, k_level1_marker)) return answer_level1(prompt);
  if (contains(prompt, k_level2_marker)) return answer_level2(prompt);
  if (contains(prompt, k_profiles_marker)) return answer_profiles(prompt);
  rng r(mix_seed(mix_seed(corpus_->spec().seed, fnv1a64(view_.name)),
                 fnv1a64(prompt)));
  return sim_respond(prompt, *corpus_, r, view_).text;
}

wire_chat sim_backend::chat(const chat_request& request) {
  std::string prompt;
  for (std::size_t i = 0; i < request.messages.size(); ++i) {
    if (i > 0) prompt += '\n';
    prompt += request.messages[i].content;
  }
  wire_chat out;
  out.text = answer(prompt);
  out.prompt_tokens = estimate_tokens(prompt);
  out.completion_tokens = estimate_tokens(out.text);
  return out;
}

wire_embeddings sim_backend::embed(const std::string& /*model_id*/,
                                   const std::vector<std::string>& texts) {
  wire_embeddings out;
  std::int64_t tokens = 0;
  out.vectors.reserve(texts.size());
  for (const std::string& t : texts) {
    out.vectors.push_back(corpus_->embed_text(t));
    tokens += estimate_tokens(t);
  }
  out.tokens = tokens;
  return out;
}

sim_backend_factory::sim_backend_factory(const sim_corpus_spec& spec)
    : corpus_(std::make_shared<const sim_corpus>(sim_corpus::generate(spec))) {}

backend& sim_backend_factory::backend_for(const std::string& model_id) {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = backends_.find(model_id);
  if (it == backends_.end()) {
    sim_model_view view = parse_sim_model_id(model_id);
    it = backends_
             .emplace(model_id,
                      std::make_unique<sim_backend>(corpus_, std::move(view)))
             .first;
  }
  return *it->second;
}

}  // namespace kbprobe
