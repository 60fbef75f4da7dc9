#include "kbprobe/processor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <set>
#include <sstream>

#include <json.hpp>

#include "kbprobe/util.hpp"

namespace kbprobe {

using nlohmann::json;

void dedup_config::validate() const {
  if (!(0.0 < fuzzy_low && fuzzy_low < strict_threshold &&
        strict_threshold < 1.0))
    throw config_error("need 0 < fuzzy_low < strict_threshold < 1");
}

std::string_view to_string(dedup_outcome o) {
  switch (o) {
    case dedup_outcome::accepted_novel: return "accepted_novel";
    case dedup_outcome::merged_strict: return "merged_strict";
    case dedup_outcome::merged_by_judge: return "merged_by_judge";
    case dedup_outcome::kept_after_judge: return "kept_after_judge";
  }
  return "accepted_novel";
}

dedup_outcome dedup_outcome_from_string(std::string_view s) {
  if (s == "accepted_novel") return dedup_outcome::accepted_novel;
  if (s == "merged_strict") return dedup_outcome::merged_strict;
  if (s == "merged_by_judge") return dedup_outcome::merged_by_judge;
  if (s == "kept_after_judge") return dedup_outcome::kept_after_judge;
  throw precondition_error("unknown dedup outcome: " + std::string(s));
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty())
    throw dimension_mismatch_error("cosine needs equal nonzero dimensions");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (std::fabs(na - 1.0) > 2e-6 || std::fabs(nb - 1.0) > 2e-6)
    throw precondition_error("cosine requires unit-norm inputs");
  return dot;
}

pipeline::pipeline(gateway& gw, const prompt_registry& prompts,
                   dedup_config config, std::string topic,
                   std::string run_model_id, std::string embedding_model_id,
                   double judge_temperature, int judge_max_output_tokens)
    : gateway_(gw),
      prompts_(prompts),
      config_(std::move(config)),
      topic_(std::move(topic)),
      run_model_id_(std::move(run_model_id)),
      embedding_model_id_(std::move(embedding_model_id)),
      judge_temperature_(judge_temperature),
      judge_max_output_tokens_(judge_max_output_tokens) {
  config_.validate();
  if (run_model_id_.empty()) throw config_error("pipeline needs a run model");
  if (embedding_model_id_.empty())
    embedding_model_id_ = run_model_id_;
  if (config_.judge_model_id.empty()) config_.judge_model_id = run_model_id_;
  if (config_.audit_model_id.empty()) config_.audit_model_id = run_model_id_;
}

namespace {

// YES / NO / unparseable (nullopt), tolerant of trailing punctuation.
std::optional<bool> parse_verdict(const std::string& text) {
  const std::string t = to_lower(trim(text));
  if (starts_with(t, "yes")) return true;
  if (starts_with(t, "no")) return false;
  return std::nullopt;
}

}  // namespace

pipeline::judge_reply pipeline::ask_judge(const std::string& model_id,
                                          const std::string& prompt,
                                          const std::string& kind) const {
  judge_reply reply;
  chat_request request;
  request.model_id = model_id;
  request.messages = {{"user", prompt}};
  request.temperature = judge_temperature_;
  request.max_output_tokens = judge_max_output_tokens_;
  for (int attempt = 0; attempt < 2; ++attempt) {
    const chat_response response = gateway_.chat(request);
    reply.calls.push_back({0, kind, model_id, prompt, response.text});
    const std::optional<bool> verdict = parse_verdict(response.text);
    if (verdict) {
      reply.yes = *verdict;
      return reply;
    }
  }
  reply.yes = false;  // two unparseable replies: treated as NO
  reply.forced = true;
  return reply;
}

int pipeline::commit_transcripts(pipeline_state& state,
                                 std::vector<judge_transcript> calls) const {
  int last_id = -1;
  for (judge_transcript& call : calls) {
    call.transcript_id = static_cast<int>(state.transcripts.size());
    last_id = call.transcript_id;
    state.transcripts.push_back(std::move(call));
  }
  return last_id;
}

std::optional<dedup_decision> pipeline::dedup_insert(knowledge_atom& candidate,
                                                     pipeline_state& state,
                                                     int turn,
                                                     bool final_attempt) {
  if (candidate.status != atom_status::raw)
    throw precondition_error("dedup candidate must be raw");
  if (!candidate.embedding)
    throw precondition_error("dedup candidate lacks an embedding");

  dedup_decision decision;
  decision.candidate_atom_id = candidate.atom_id;
  decision.turn = turn;

  const knowledge_atom* neighbor = nullptr;
  double best = -2.0;
  for (const knowledge_atom& accepted : state.accepted) {
    if (!accepted.embedding)
      throw precondition_error("accepted atom lacks an embedding");
    const double s = cosine(*candidate.embedding, *accepted.embedding);
    if (s > best) {
      best = s;
      neighbor = &accepted;
    }
  }

  if (neighbor == nullptr || best <= config_.fuzzy_low) {
    decision.outcome = dedup_outcome::accepted_novel;
    candidate = transition(std::move(candidate), atom_status::unique);
    state.accepted.push_back(candidate);
    state.dedup_decisions.push_back(decision);
    return decision;
  }

  decision.matched_atom_id = neighbor->atom_id;
  decision.similarity = best;

  if (best > config_.strict_threshold) {
    decision.outcome = dedup_outcome::merged_strict;
    candidate =
        transition(std::move(candidate), atom_status::rejected_duplicate,
                   neighbor->atom_id);
    state.dedup_decisions.push_back(decision);
    return decision;
  }

  // Ambiguity zone: ask the judge about the nearest neighbor only.
  const std::string prompt = prompts_.render(
      "judge.dedup", {{"text1", candidate.text}, {"text2", neighbor->text}});
  judge_reply reply;
  try {
    reply = ask_judge(config_.judge_model_id, prompt, "dedup");
  } catch (const transport_error&) {
    if (!final_attempt) return std::nullopt;
    throw adjudication_error("dedup judge unreachable for atom " +
                             candidate.atom_id);
  }
  decision.transcript_id = commit_transcripts(state, std::move(reply.calls));
  decision.verdict_forced = reply.forced;
  decision.judge_verdict = reply.yes ? "YES" : "NO";
  if (reply.yes) {
    decision.outcome = dedup_outcome::merged_by_judge;
    candidate =
        transition(std::move(candidate), atom_status::rejected_duplicate,
                   neighbor->atom_id);
  } else {
    decision.outcome = dedup_outcome::kept_after_judge;
    candidate = transition(std::move(candidate), atom_status::unique);
    state.accepted.push_back(candidate);
  }
  state.dedup_decisions.push_back(decision);
  return decision;
}

audit_decision pipeline::audit(knowledge_atom& atom, pipeline_state& state,
                               int turn) {
  if (atom.status != atom_status::unique)
    throw precondition_error("audit needs a unique atom");
  const std::string prompt = prompts_.render(
      "judge.audit", {{"query", topic_}, {"knowledge_point", atom.text}});
  judge_reply reply = ask_judge(config_.audit_model_id, prompt, "audit");

  audit_decision decision;
  decision.atom_id = atom.atom_id;
  decision.turn = turn;
  decision.valid = reply.yes;
  decision.verdict_forced = reply.forced;
  decision.transcript_id = commit_transcripts(state, std::move(reply.calls));
  atom = transition(std::move(atom), reply.yes ? atom_status::valid
                                               : atom_status::rejected_audit);
  state.audit_decisions.push_back(decision);
  return decision;
}

turn_pool_result pipeline::process_turn_pool(std::vector<knowledge_atom> pool,
                                             pipeline_state& state, int turn,
                                             bool run_audit) {
  turn_pool_result result;
  result.raw_count = static_cast<std::int64_t>(pool.size());
  if (pool.empty()) return result;

  std::vector<std::string> texts;
  texts.reserve(pool.size());
  for (const knowledge_atom& atom : pool) texts.push_back(atom.text);
  const embedding_batch batch = gateway_.embed(embedding_model_id_, texts);
  for (std::size_t i = 0; i < pool.size(); ++i)
    pool[i].embedding = batch.vectors[i];

  // Serial dedup in pool order; judge-unreachable candidates retried once
  // after the rest of the pool.
  std::vector<std::size_t> deferred;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (!dedup_insert(pool[i], state, turn, /*final_attempt=*/false))
      deferred.push_back(i);
  }
  for (std::size_t i : deferred) dedup_insert(pool[i], state, turn);

  std::vector<std::size_t> novel;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (pool[i].status == atom_status::unique) novel.push_back(i);
  result.novel_count = static_cast<std::int64_t>(novel.size());

  if (run_audit && !novel.empty()) {
    struct audit_probe {
      judge_reply reply;
      bool transport_failed = false;
    };
    // Windowed fan-out: the gateway already caps in-flight calls, this only
    // bounds the number of live threads on oversized pools.
    constexpr std::size_t window = 64;
    for (std::size_t base = 0; base < novel.size(); base += window) {
      const std::size_t count = std::min(window, novel.size() - base);
      std::vector<std::future<audit_probe>> futures;
      futures.reserve(count);
      for (std::size_t k = 0; k < count; ++k) {
        const std::string prompt = prompts_.render(
            "judge.audit",
            {{"query", topic_}, {"knowledge_point", pool[novel[base + k]].text}});
        futures.push_back(std::async(std::launch::async, [this, prompt] {
          audit_probe probe;
          try {
            probe.reply = ask_judge(config_.audit_model_id, prompt, "audit");
          } catch (const transport_error&) {
            probe.transport_failed = true;
          }
          return probe;
        }));
      }
      for (std::size_t k = 0; k < count; ++k) {
        audit_probe probe = futures[k].get();
        knowledge_atom& atom = pool[novel[base + k]];
        if (probe.transport_failed) {
          state.incomplete_audit = true;  // atom stays unique
          continue;
        }
        audit_decision decision;
        decision.atom_id = atom.atom_id;
        decision.turn = turn;
        decision.valid = probe.reply.yes;
        decision.verdict_forced = probe.reply.forced;
        decision.transcript_id =
            commit_transcripts(state, std::move(probe.reply.calls));
        atom = transition(std::move(atom), probe.reply.yes
                                               ? atom_status::valid
                                               : atom_status::rejected_audit);
        state.audit_decisions.push_back(decision);
      }
    }
  }

  for (knowledge_atom& atom : pool) state.processed.push_back(std::move(atom));
  return result;
}

union_result build_union(std::vector<model_valid_set> sets, pipeline& pipe) {
  if (sets.size() < 2)
    throw precondition_error("union needs at least two model sets");
  std::sort(sets.begin(), sets.end(),
            [](const model_valid_set& a, const model_valid_set& b) {
              return a.model_id < b.model_id;
            });
  for (std::size_t i = 1; i < sets.size(); ++i)
    if (sets[i].model_id == sets[i - 1].model_id)
      throw precondition_error("duplicate model in union: " +
                               sets[i].model_id);

  union_result result;
  std::vector<std::pair<std::string, knowledge_atom>> ordered;  // model, atom
  for (model_valid_set& set : sets) {
    result.model_ids.push_back(set.model_id);
    std::sort(set.atoms.begin(), set.atoms.end(),
              [](const knowledge_atom& a, const knowledge_atom& b) {
                return a.atom_id < b.atom_id;
              });
    for (knowledge_atom& atom : set.atoms) {
      knowledge_atom clone = std::move(atom);
      clone.status = atom_status::raw;
      clone.merged_into.reset();
      clone.embedding.reset();  // re-embedded below for a uniform space
      ordered.emplace_back(set.model_id, std::move(clone));
    }
  }
  if (ordered.empty()) throw precondition_error("union input is empty");

  std::vector<knowledge_atom> pool;
  pool.reserve(ordered.size());
  for (auto& [model, atom] : ordered) pool.push_back(std::move(atom));
  pipe.process_turn_pool(std::move(pool), result.state, /*turn=*/0,
                         /*run_audit=*/false);

  for (std::size_t i = 0; i < result.state.processed.size(); ++i) {
    const knowledge_atom& atom = result.state.processed[i];
    const std::string& model = ordered[i].first;
    const std::string& rep = atom.status == atom_status::rejected_duplicate
                                 ? *atom.merged_into
                                 : atom.atom_id;
    std::vector<std::string>& members = result.membership[rep];
    if (std::find(members.begin(), members.end(), model) == members.end())
      members.push_back(model);
  }
  for (auto& [rep, models] : result.membership)
    std::sort(models.begin(), models.end());
  result.members = result.state.accepted;
  return result;
}

double recall_from_union(const union_result& u, const std::string& model_id) {
  if (std::find(u.model_ids.begin(), u.model_ids.end(), model_id) ==
      u.model_ids.end())
    throw precondition_error("model not part of the union: " + model_id);
  if (u.members.empty()) throw precondition_error("union is empty");
  std::size_t covered = 0;
  for (const knowledge_atom& member : u.members) {
    auto it = u.membership.find(member.atom_id);
    if (it == u.membership.end()) continue;
    if (std::find(it->second.begin(), it->second.end(), model_id) !=
        it->second.end())
      ++covered;
  }
  return static_cast<double>(covered) / static_cast<double>(u.members.size());
}

namespace {

json dedup_decision_to_json(const dedup_decision& d) {
  json j;
  j["kind"] = "dedup";
  j["candidate_atom_id"] = d.candidate_atom_id;
  j["outcome"] = to_string(d.outcome);
  j["matched_atom_id"] =
      d.matched_atom_id ? json(*d.matched_atom_id) : json(nullptr);
  j["similarity"] = d.similarity ? json(*d.similarity) : json(nullptr);
  j["judge_verdict"] =
      d.judge_verdict ? json(*d.judge_verdict) : json(nullptr);
  j["transcript_id"] =
      d.transcript_id ? json(*d.transcript_id) : json(nullptr);
  j["verdict_forced"] = d.verdict_forced;
  j["turn"] = d.turn;
  return j;
}

dedup_decision dedup_decision_from_json(const json& j) {
  dedup_decision d;
  d.candidate_atom_id = j.at("candidate_atom_id").get<std::string>();
  d.outcome = dedup_outcome_from_string(j.at("outcome").get<std::string>());
  if (!j.at("matched_atom_id").is_null())
    d.matched_atom_id = j.at("matched_atom_id").get<std::string>();
  if (!j.at("similarity").is_null())
    d.similarity = j.at("similarity").get<double>();
  if (!j.at("judge_verdict").is_null())
    d.judge_verdict = j.at("judge_verdict").get<std::string>();
  if (!j.at("transcript_id").is_null())
    d.transcript_id = j.at("transcript_id").get<int>();
  d.verdict_forced = j.at("verdict_forced").get<bool>();
  d.turn = j.at("turn").get<int>();
  return d;
}

json audit_decision_to_json(const audit_decision& d) {
  json j;
  j["kind"] = "audit";
  j["atom_id"] = d.atom_id;
  j["valid"] = d.valid;
  j["transcript_id"] =
      d.transcript_id ? json(*d.transcript_id) : json(nullptr);
  j["verdict_forced"] = d.verdict_forced;
  j["turn"] = d.turn;
  return j;
}

audit_decision audit_decision_from_json(const json& j) {
  audit_decision d;
  d.atom_id = j.at("atom_id").get<std::string>();
  d.valid = j.at("valid").get<bool>();
  if (!j.at("transcript_id").is_null())
    d.transcript_id = j.at("transcript_id").get<int>();
  d.verdict_forced = j.at("verdict_forced").get<bool>();
  d.turn = j.at("turn").get<int>();
  return d;
}

}  // namespace

std::string serialize_decision_log(const pipeline_state& state) {
  std::ostringstream out;
  for (const dedup_decision& d : state.dedup_decisions)
    out << dedup_decision_to_json(d).dump() << '\n';
  for (const audit_decision& d : state.audit_decisions)
    out << audit_decision_to_json(d).dump() << '\n';
  return out.str();
}

void parse_decision_log(const std::string& text, pipeline_state& state) {
  std::istringstream in(text);
  std::string line;
  try {
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      const json j = json::parse(line);
      const std::string kind = j.at("kind").get<std::string>();
      if (kind == "dedup")
        state.dedup_decisions.push_back(dedup_decision_from_json(j));
      else if (kind == "audit")
        state.audit_decisions.push_back(audit_decision_from_json(j));
      else
        throw precondition_error("unknown decision kind: " + kind);
    }
  } catch (const json::exception& e) {
    throw precondition_error(std::string("corrupt decision log: ") + e.what());
  }
}

void write_decision_log(const pipeline_state& state,
                        const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw error("cannot open for writing: " + path.string());
  out << serialize_decision_log(state);
  if (!out) throw error("write failed: " + path.string());
}

pipeline_state read_decision_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error("cannot open: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  pipeline_state state;
  parse_decision_log(buf.str(), state);
  return state;
}

std::string serialize_transcripts(const pipeline_state& state) {
  std::ostringstream out;
  for (const judge_transcript& t : state.transcripts) {
    json j;
    j["transcript_id"] = t.transcript_id;
    j["kind"] = t.kind;
    j["model_id"] = t.model_id;
    j["prompt"] = t.prompt;
    j["response"] = t.response;
    out << j.dump() << '\n';
  }
  return out.str();
}

void write_transcripts(const pipeline_state& state,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw error("cannot open for writing: " + path.string());
  out << serialize_transcripts(state);
  if (!out) throw error("write failed: " + path.string());
}

}  // namespace kbprobe
