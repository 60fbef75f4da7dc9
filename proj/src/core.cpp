#include "kbprobe/core.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "kbprobe/util.hpp"

namespace kbprobe {

using nlohmann::json;

std::string_view to_string(atom_status s) {
  switch (s) {
    case atom_status::raw: return "raw";
    case atom_status::unique: return "unique";
    case atom_status::valid: return "valid";
    case atom_status::rejected_duplicate: return "rejected_duplicate";
    case atom_status::rejected_audit: return "rejected_audit";
  }
  return "raw";
}

std::string_view to_string(atom_category c) {
  switch (c) {
    case atom_category::factual: return "factual";
    case atom_category::conceptual: return "conceptual";
    case atom_category::procedural: return "procedural";
    case atom_category::unclassified: return "unclassified";
  }
  return "unclassified";
}

std::string_view to_string(stop_reason r) {
  switch (r) {
    case stop_reason::none: return "none";
    case stop_reason::low_growth: return "low_growth";
    case stop_reason::low_efficiency: return "low_efficiency";
    case stop_reason::low_novel: return "low_novel";
    case stop_reason::max_turns: return "max_turns";
  }
  return "none";
}

atom_status atom_status_from_string(std::string_view s) {
  if (s == "raw") return atom_status::raw;
  if (s == "unique") return atom_status::unique;
  if (s == "valid") return atom_status::valid;
  if (s == "rejected_duplicate") return atom_status::rejected_duplicate;
  if (s == "rejected_audit") return atom_status::rejected_audit;
  throw precondition_error("unknown atom status: " + std::string(s));
}

atom_category atom_category_from_string(std::string_view s) {
  if (s == "factual") return atom_category::factual;
  if (s == "conceptual") return atom_category::conceptual;
  if (s == "procedural") return atom_category::procedural;
  if (s == "unclassified") return atom_category::unclassified;
  throw precondition_error("unknown atom category: " + std::string(s));
}

stop_reason stop_reason_from_string(std::string_view s) {
  if (s == "none") return stop_reason::none;
  if (s == "low_growth") return stop_reason::low_growth;
  if (s == "low_efficiency") return stop_reason::low_efficiency;
  if (s == "low_novel") return stop_reason::low_novel;
  if (s == "max_turns") return stop_reason::max_turns;
  throw precondition_error("unknown stop reason: " + std::string(s));
}

void saturation_config::validate() const {
  if (!(min_growth > 0.0)) throw config_error("min_growth must be positive");
  if (!(min_efficiency > 0.0))
    throw config_error("min_efficiency must be positive");
  if (min_novel <= 0) throw config_error("min_novel must be positive");
  if (max_turns < 1) throw config_error("max_turns must be at least 1");
}

namespace {

// Returns the byte length of a bullet marker at position i, or 0.
std::size_t marker_len(std::string_view s, std::size_t i) {
  if (s[i] == '-' || s[i] == '*') {
    // A dash glued to content ("-5 is prime") is content, not a marker.
    if (i + 1 < s.size() && s[i + 1] != ' ' && s[i + 1] != '\t' &&
        s[i + 1] != '-' && s[i + 1] != '*')
      return 0;
    return 1;
  }
  if (s.size() - i >= 3 && static_cast<unsigned char>(s[i]) == 0xe2 &&
      static_cast<unsigned char>(s[i + 1]) == 0x80 &&
      static_cast<unsigned char>(s[i + 2]) == 0xa2)
    return 3;  // U+2022
  return 0;
}

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\r' || c == '\n';
}

}  // namespace

std::string normalize_statement(std::string_view raw) {
  std::size_t i = 0;
  while (i < raw.size()) {
    if (is_space(raw[i])) {
      ++i;
      continue;
    }
    const std::size_t m = marker_len(raw, i);
    if (m == 0) break;
    i += m;
  }
  std::string out;
  out.reserve(raw.size() - i);
  bool pending_space = false;
  for (; i < raw.size(); ++i) {
    if (is_space(raw[i])) {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    out.push_back(raw[i]);
  }
  if (out.empty())
    throw precondition_error("statement is empty after normalization");
  return out;
}

knowledge_atom mint_atom(std::string_view text, const atom_origin& origin,
                         const mint_scope& scope) {
  knowledge_atom atom;
  atom.text = normalize_statement(text);
  char tag[64];
  std::snprintf(tag, sizeof tag, "|t%d|o%d", origin.turn, scope.ordinal);
  atom.atom_id = format_hex64(fnv1a64(tag, fnv1a64(scope.run_id)));
  atom.source_model_id = scope.model_id;
  atom.topic_id = scope.topic_id;
  atom.origin = origin;
  atom.status = atom_status::raw;
  return atom;
}

knowledge_atom transition(knowledge_atom atom, atom_status next,
                          std::optional<std::string> merged_into) {
  const atom_status cur = atom.status;
  const bool legal =
      (cur == atom_status::raw && next == atom_status::unique) ||
      (cur == atom_status::raw && next == atom_status::rejected_duplicate) ||
      (cur == atom_status::unique && next == atom_status::valid) ||
      (cur == atom_status::unique && next == atom_status::rejected_audit);
  if (!legal)
    throw illegal_transition_error("illegal atom transition: " +
                                   std::string(to_string(cur)) + " -> " +
                                   std::string(to_string(next)));
  if (next == atom_status::rejected_duplicate) {
    if (!merged_into || merged_into->empty())
      throw illegal_transition_error(
          "rejected_duplicate requires a merge target");
    atom.merged_into = std::move(merged_into);
  } else if (merged_into) {
    throw illegal_transition_error("merge target only valid for duplicates");
  }
  atom.status = next;
  return atom;
}

namespace {

void fail(const std::string& what) { throw precondition_error(what); }

}  // namespace

void validate_run_record(const run_record& run) {
  const std::size_t t_count = run.turns.size();
  if (run.total_cost_tokens.size() != t_count)
    fail("cost series length differs from turn count");
  std::int64_t prev_cost = 0;
  std::int64_t prev_cum = 0;
  for (std::size_t i = 0; i < t_count; ++i) {
    const turn_record& t = run.turns[i];
    if (t.turn_index != static_cast<int>(i) + 1)
      fail("turn indices must be contiguous from 1");
    if (t.raw_count < 0 || t.novel_count < 0 || t.novel_count > t.raw_count)
      fail("turn counts violate 0 <= n_t <= r_t");
    if (t.cumulative_unique != prev_cum + t.novel_count)
      fail("cumulative unique count mismatch");
    if (run.total_cost_tokens[i] < prev_cost) fail("cost series decreases");
    const bool growth_defined = t.turn_index > 1 && prev_cum > 0;
    if (growth_defined != t.growth_rate.has_value())
      fail("growth_rate presence inconsistent with definition");
    if (t.growth_rate) {
      const double expect =
          static_cast<double>(t.novel_count) / static_cast<double>(prev_cum);
      if (std::fabs(*t.growth_rate - expect) > 1e-12)
        fail("stored growth_rate does not recompute");
    }
    if ((t.raw_count > 0) != t.efficiency.has_value())
      fail("efficiency presence inconsistent with definition");
    if (t.efficiency) {
      const double expect = static_cast<double>(t.novel_count) /
                            static_cast<double>(t.raw_count);
      if (std::fabs(*t.efficiency - expect) > 1e-12)
        fail("stored efficiency does not recompute");
    }
    const bool last = i + 1 == t_count;
    if (!last && t.stop != stop_reason::none)
      fail("only the final turn may carry a stop reason");
    if (last && !run.aborted && t.stop == stop_reason::none)
      fail("final turn of a completed run must carry a stop reason");
    prev_cost = run.total_cost_tokens[i];
    prev_cum = t.cumulative_unique;
  }

  std::int64_t sum_raw = 0, sum_novel = 0;
  for (const turn_record& t : run.turns) {
    sum_raw += t.raw_count;
    sum_novel += t.novel_count;
  }
  std::int64_t atoms_total = 0, atoms_novel = 0;
  for (const knowledge_atom& a : run.atoms) {
    ++atoms_total;
    switch (a.status) {
      case atom_status::unique:
      case atom_status::valid:
      case atom_status::rejected_audit:
        ++atoms_novel;
        break;
      case atom_status::rejected_duplicate:
        if (!a.merged_into) fail("duplicate atom lacks merge target");
        break;
      case atom_status::raw:
        fail("run record contains an unprocessed raw atom");
    }
    if (a.status != atom_status::rejected_duplicate && a.merged_into)
      fail("merge target on non-duplicate atom");
  }
  if (sum_raw != atoms_total)
    fail("sum of raw counts differs from atom count");
  if (sum_novel != atoms_novel)
    fail("sum of novel counts differs from surviving atom count");
}

namespace {

json origin_to_json(const atom_origin& o) {
  json j;
  j["policy_id"] = o.policy_id;
  j["turn"] = o.turn;
  j["leaf_path"] = o.leaf_path ? json(*o.leaf_path) : json(nullptr);
  j["profile_index"] = o.profile_index ? json(*o.profile_index) : json(nullptr);
  return j;
}

atom_origin origin_from_json(const json& j) {
  atom_origin o;
  o.policy_id = j.at("policy_id").get<std::string>();
  o.turn = j.at("turn").get<int>();
  if (!j.at("leaf_path").is_null())
    o.leaf_path = j.at("leaf_path").get<std::string>();
  if (!j.at("profile_index").is_null())
    o.profile_index = j.at("profile_index").get<int>();
  return o;
}

json atom_to_json(const knowledge_atom& a) {
  json j;
  j["kind"] = "atom";
  j["atom_id"] = a.atom_id;
  j["text"] = a.text;
  j["source_model_id"] = a.source_model_id;
  j["topic_id"] = a.topic_id;
  j["origin"] = origin_to_json(a.origin);
  j["category"] = to_string(a.category);
  j["status"] = to_string(a.status);
  j["embedding"] = a.embedding ? json(*a.embedding) : json(nullptr);
  j["merged_into"] = a.merged_into ? json(*a.merged_into) : json(nullptr);
  return j;
}

knowledge_atom atom_from_json(const json& j) {
  knowledge_atom a;
  a.atom_id = j.at("atom_id").get<std::string>();
  a.text = j.at("text").get<std::string>();
  a.source_model_id = j.at("source_model_id").get<std::string>();
  a.topic_id = j.at("topic_id").get<std::string>();
  a.origin = origin_from_json(j.at("origin"));
  a.category = atom_category_from_string(j.at("category").get<std::string>());
  a.status = atom_status_from_string(j.at("status").get<std::string>());
  if (!j.at("embedding").is_null())
    a.embedding = j.at("embedding").get<std::vector<double>>();
  if (!j.at("merged_into").is_null())
    a.merged_into = j.at("merged_into").get<std::string>();
  return a;
}

json turn_to_json(const turn_record& t) {
  json j;
  j["kind"] = "turn";
  j["turn_index"] = t.turn_index;
  j["raw_count"] = t.raw_count;
  j["novel_count"] = t.novel_count;
  j["cumulative_unique"] = t.cumulative_unique;
  j["growth_rate"] = t.growth_rate ? json(*t.growth_rate) : json(nullptr);
  j["efficiency"] = t.efficiency ? json(*t.efficiency) : json(nullptr);
  j["generation_tokens"] = t.generation_tokens;
  j["embedding_tokens"] = t.embedding_tokens;
  j["stop_reason"] = to_string(t.stop);
  return j;
}

turn_record turn_from_json(const json& j) {
  turn_record t;
  t.turn_index = j.at("turn_index").get<int>();
  t.raw_count = j.at("raw_count").get<std::int64_t>();
  t.novel_count = j.at("novel_count").get<std::int64_t>();
  t.cumulative_unique = j.at("cumulative_unique").get<std::int64_t>();
  if (!j.at("growth_rate").is_null())
    t.growth_rate = j.at("growth_rate").get<double>();
  if (!j.at("efficiency").is_null())
    t.efficiency = j.at("efficiency").get<double>();
  t.generation_tokens = j.at("generation_tokens").get<std::int64_t>();
  t.embedding_tokens = j.at("embedding_tokens").get<std::int64_t>();
  t.stop = stop_reason_from_string(j.at("stop_reason").get<std::string>());
  return t;
}

json header_to_json(const run_record& r) {
  json j;
  j["kind"] = "header";
  j["run_id"] = r.run_id;
  j["policy_id"] = r.policy_id;
  json params;
  params["w"] = r.params.branching ? json(*r.params.branching) : json(nullptr);
  params["d_max"] = r.params.max_depth ? json(*r.params.max_depth) : json(nullptr);
  params["n"] =
      r.params.profile_count ? json(*r.params.profile_count) : json(nullptr);
  j["params"] = params;
  j["model_id"] = r.model_id;
  j["topic_id"] = r.topic_id;
  j["seed"] = r.seed;
  json sat;
  sat["min_growth"] = r.saturation.min_growth;
  sat["min_efficiency"] = r.saturation.min_efficiency;
  sat["min_novel"] = r.saturation.min_novel;
  sat["max_turns"] = r.saturation.max_turns;
  j["saturation_config"] = sat;
  j["total_cost_tokens"] = r.total_cost_tokens;
  j["wall_clock"] = r.wall_clock;
  j["aborted"] = r.aborted;
  j["incomplete_audit"] = r.incomplete_audit;
  j["all_leaves_inactive"] = r.all_leaves_inactive;
  return j;
}

void header_from_json(const json& j, run_record& r) {
  r.run_id = j.at("run_id").get<std::string>();
  r.policy_id = j.at("policy_id").get<std::string>();
  const json& params = j.at("params");
  if (!params.at("w").is_null()) r.params.branching = params.at("w").get<int>();
  if (!params.at("d_max").is_null())
    r.params.max_depth = params.at("d_max").get<int>();
  if (!params.at("n").is_null())
    r.params.profile_count = params.at("n").get<int>();
  r.model_id = j.at("model_id").get<std::string>();
  r.topic_id = j.at("topic_id").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  const json& sat = j.at("saturation_config");
  r.saturation.min_growth = sat.at("min_growth").get<double>();
  r.saturation.min_efficiency = sat.at("min_efficiency").get<double>();
  r.saturation.min_novel = sat.at("min_novel").get<std::int64_t>();
  r.saturation.max_turns = sat.at("max_turns").get<int>();
  r.total_cost_tokens =
      j.at("total_cost_tokens").get<std::vector<std::int64_t>>();
  r.wall_clock = j.at("wall_clock").get<double>();
  r.aborted = j.at("aborted").get<bool>();
  r.incomplete_audit = j.at("incomplete_audit").get<bool>();
  r.all_leaves_inactive = j.at("all_leaves_inactive").get<bool>();
}

}  // namespace

std::string serialize_run_record(const run_record& run) {
  std::ostringstream out;
  out << header_to_json(run).dump() << '\n';
  for (const turn_record& t : run.turns) out << turn_to_json(t).dump() << '\n';
  for (const knowledge_atom& a : run.atoms)
    out << atom_to_json(a).dump() << '\n';
  return out.str();
}

run_record parse_run_record(const std::string& text) {
  run_record run;
  bool saw_header = false;
  std::istringstream in(text);
  std::string line;
  try {
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      const json j = json::parse(line);
      const std::string kind = j.at("kind").get<std::string>();
      if (kind == "header") {
        if (saw_header) throw precondition_error("duplicate header line");
        header_from_json(j, run);
        saw_header = true;
      } else if (kind == "turn") {
        run.turns.push_back(turn_from_json(j));
      } else if (kind == "atom") {
        run.atoms.push_back(atom_from_json(j));
      } else {
        throw precondition_error("unknown record kind: " + kind);
      }
    }
  } catch (const json::exception& e) {
    throw precondition_error(std::string("corrupt run record: ") + e.what());
  }
  if (!saw_header) throw precondition_error("run record has no header line");
  return run;
}

void write_run_record(const run_record& run,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw error("cannot open for writing: " + path.string());
  out << serialize_run_record(run);
  if (!out) throw error("write failed: " + path.string());
}

run_record read_run_record(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error("cannot open: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_record(buf.str());
}

}  // namespace kbprobe
