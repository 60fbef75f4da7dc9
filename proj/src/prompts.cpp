#include "kbprobe/prompts.hpp"

#include <cctype>

#include "kbprobe/errors.hpp"

namespace kbprobe {

namespace {

constexpr std::string_view k_sequential_t1 =
    "List all atomic knowledge points about '{query}' in bullet points.";

constexpr std::string_view k_sequential_tn =
    "{history}\n"
    "User: What else? Please provide more specific and in-depth points that "
    "were not mentioned above.";

constexpr std::string_view k_reflective_tn =
    "You are a senior subject matter expert in '{query}'.\n"
    "We have already extracted the following {N} unique knowledge points:\n"
    "{points_str}\n"
    "\n"
    "### Step 1: Self-Criticism\n"
    "Analyze the coverage above. What advanced theories, subtle edge cases, "
    "or fundamental principles of '{query}' are missing, or described too "
    "superficially?\n"
    "\n"
    "### Step 2: New Extraction\n"
    "Based on your analysis, list ONLY the new, missing knowledge points in "
    "bullet points.\n"
    "\n"
    "### CONSTRAINTS\n"
    "- DO NOT repeat any points or concepts already mentioned above.\n"
    "- Focus on depth and obscurity.\n"
    "- Use the standard bullet point format (- Point).";

constexpr std::string_view k_taxonomy_level1 =
    "You are a subject matter expert in '{query}'.\n"
    "\n"
    "Task: Break down the domain '{query}' into exactly {W} major, distinct "
    "sub-categories.\n"
    "\n"
    "Output format: Output ONLY {W} lines, one category name per line, "
    "starting with \"- \". No descriptions, no explanations, no numbering.";

constexpr std::string_view k_taxonomy_level2 =
    "In the field of '{query}', the sub-topic '{category}' can be further "
    "divided.\n"
    "\n"
    "Task: List exactly {W} specific sub-fields or key components of "
    "'{category}'.\n"
    "\n"
    "Output format: Output ONLY {W} lines, one sub-field name per line, "
    "starting with \"- \". No descriptions, no explanations.";

constexpr std::string_view k_taxonomy_leaf_t1 =
    "You are an expert in '{query}', specifically in '{leaf}'.\n"
    "\n"
    "Task: List fundamental knowledge points about '{leaf}'. Each knowledge "
    "point must be:\n"
    "1. A complete, self-contained factual statement\n"
    "2. Technically precise and accurate\n"
    "3. Specific to '{leaf}' (not generic statements)\n"
    "\n"
    "Output format: Each line starts with \"- \" followed by a complete "
    "sentence. No headers, no explanations, no numbering.";

// Continuation turns inside a leaf reuse the generic what-else follow-up;
// the leaf scope is carried by the history block.
constexpr std::string_view k_taxonomy_leaf_tn =
    "{history}\n"
    "User: What else? Please provide more specific and in-depth points that "
    "were not mentioned above.";

constexpr std::string_view k_profiles_generate =
    "Identify {N} distinct types of experts for '{query}'. 1 sentence per "
    "expert. Bullet points.";

constexpr std::string_view k_profiles_extract =
    "You are expert: {profile}. Expertise: '{query}'. Collected:\n"
    "{points_str}\n"
    "Identify 5 new niche advanced knowledge points. Bullet points ONLY.";

constexpr std::string_view k_judge_dedup =
    "You are a knowledge engineering expert. Compare two knowledge points "
    "and determine if one is redundant given the other.\n"
    "\n"
    "Point A: {text1}\n"
    "Point B: {text2}\n"
    "\n"
    "Criteria for redundancy (YES):\n"
    "1. They refer to the exact same concept using different wording.\n"
    "2. One is a pure synonym of the other.\n"
    "\n"
    "Criteria for uniqueness (NO):\n"
    "1. One provides more specific details than the other.\n"
    "2. They are related but distinct concepts.\n"
    "3. They describe different aspects of the same topic.\n"
    "\n"
    "Respond ONLY with 'YES' or 'NO'.";

constexpr std::string_view k_judge_audit =
    "Role: Senior Research Scientist in {query}.\n"
    "Task: Evaluate if the given \"Knowledge Point\" constitutes a "
    "substantive piece of technical knowledge according to the following "
    "scientific rubric.\n"
    "\n"
    "A valid \"Knowledge Point\" must fall into one of these three "
    "categories:\n"
    "1. **Factual Knowledge**: Precise definitions, specific technical "
    "details, or discrete bits of information.\n"
    "2. **Conceptual Knowledge**: Principles, theories, models, or "
    "interrelationships between basic elements.\n"
    "3. **Procedural Knowledge**: Algorithms, techniques, methods, specific "
    "implementation steps, or mathematical formulas.\n"
    "\n"
    "Criteria for 'YES' (Must meet ALL):\n"
    "- Truth/Accuracy: The statement must be factually correct.\n"
    "- Substantive Content: It must provide actual information. Reject "
    "meta-statements.\n"
    "- Technical Precision: It should use domain-specific language "
    "correctly.\n"
    "- Completeness: It must be a full, coherent sentence or proposition.\n"
    "\n"
    "Criteria for 'NO' (Reject these):\n"
    "- Introductory Fluff: Generic statements like \"Data quality is "
    "important\".\n"
    "- Meta-Knowledge: Statements about field development.\n"
    "- Structural Fragments: Headers, titles, or list pointers.\n"
    "\n"
    "Knowledge Point: \"{knowledge_point}\"\n"
    "\n"
    "Decision: Respond with ONLY 'YES' or 'NO'.";

const std::vector<std::string> k_keys = {
    "sequential.t1",    "sequential.tn",    "reflective.tn",
    "taxonomy.level1",  "taxonomy.level2",  "taxonomy.leaf_t1",
    "taxonomy.leaf_tn", "profiles.generate", "profiles.extract",
    "judge.dedup",      "judge.audit",
};

bool placeholder_char(char c) {
  return std::islower(static_cast<unsigned char>(c)) ||
         std::isdigit(static_cast<unsigned char>(c)) || c == '_' || c == 'N' ||
         c == 'W';
}

}  // namespace

prompt_registry prompt_registry::defaults() {
  prompt_registry r;
  r.templates_["sequential.t1"] = std::string(k_sequential_t1);
  r.templates_["sequential.tn"] = std::string(k_sequential_tn);
  r.templates_["reflective.tn"] = std::string(k_reflective_tn);
  r.templates_["taxonomy.level1"] = std::string(k_taxonomy_level1);
  r.templates_["taxonomy.level2"] = std::string(k_taxonomy_level2);
  r.templates_["taxonomy.leaf_t1"] = std::string(k_taxonomy_leaf_t1);
  r.templates_["taxonomy.leaf_tn"] = std::string(k_taxonomy_leaf_tn);
  r.templates_["profiles.generate"] = std::string(k_profiles_generate);
  r.templates_["profiles.extract"] = std::string(k_profiles_extract);
  r.templates_["judge.dedup"] = std::string(k_judge_dedup);
  r.templates_["judge.audit"] = std::string(k_judge_audit);
  return r;
}

const std::vector<std::string>& prompt_registry::keys() { return k_keys; }

const std::string& prompt_registry::raw(std::string_view key) const {
  auto it = templates_.find(std::string(key));
  if (it == templates_.end())
    throw config_error("unknown prompt template key: " + std::string(key));
  return it->second;
}

void prompt_registry::set(std::string_view key, std::string text) {
  auto it = templates_.find(std::string(key));
  if (it == templates_.end())
    throw config_error("unknown prompt template key: " + std::string(key));
  it->second = std::move(text);
}

std::string prompt_registry::render(
    std::string_view key, const std::map<std::string, std::string>& subs) const {
  return render_template(raw(key), subs);
}

std::string render_template(std::string_view tmpl,
                            const std::map<std::string, std::string>& subs) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    const char c = tmpl[i];
    if (c != '{') {
      out.push_back(c);
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < tmpl.size() && placeholder_char(tmpl[j])) ++j;
    if (j >= tmpl.size() || tmpl[j] != '}' || j == i + 1) {
      out.push_back(c);  // literal brace, not a placeholder
      ++i;
      continue;
    }
    const std::string name(tmpl.substr(i + 1, j - i - 1));
    auto it = subs.find(name);
    if (it == subs.end())
      throw precondition_error("unbound placeholder: {" + name + "}");
    out += it->second;
    i = j + 1;
  }
  return out;
}

}  // namespace kbprobe
