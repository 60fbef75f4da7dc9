#include "kbprobe/policies.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <future>
#include <utility>

#include "kbprobe/errors.hpp"
#include "kbprobe/util.hpp"

namespace kbprobe {

namespace {

struct state_marks {
  std::size_t accepted = 0;
  std::size_t processed = 0;
  std::size_t dedup = 0;
  std::size_t audit = 0;
  std::size_t transcripts = 0;
  bool incomplete_audit = false;
};

state_marks mark_state(const pipeline_state& s) {
  return {s.accepted.size(),       s.processed.size(),
          s.dedup_decisions.size(), s.audit_decisions.size(),
          s.transcripts.size(),    s.incomplete_audit};
}

// Discards everything a partially processed pool wrote, so an aborted turn
// leaves no trace in the accounting.
void rollback_state(pipeline_state& s, const state_marks& m) {
  s.accepted.resize(m.accepted);
  s.processed.resize(m.processed);
  s.dedup_decisions.resize(m.dedup);
  s.audit_decisions.resize(m.audit);
  s.transcripts.resize(m.transcripts);
  s.incomplete_audit = m.incomplete_audit;
}

chat_response ask_model(run_env& env, const std::string& model_id,
                        const std::string& prompt) {
  chat_request req;
  req.model_id = model_id;
  req.messages.push_back({"user", prompt});
  req.temperature = env.extract_temperature;
  req.max_output_tokens = env.max_output_tokens;
  return env.gw.chat(req);
}

std::vector<std::string> unique_labels(std::vector<std::string> lines) {
  std::vector<std::string> out;
  for (auto& l : lines) {
    if (std::find(out.begin(), out.end(), l) == out.end())
      out.push_back(std::move(l));
  }
  return out;
}

// Label elicitation with count repair: one full re-ask on a wrong count, then
// truncation of an overshoot or a shortfall-sized top-up ask. Three model
// calls at most; a count still off after that is an induction failure.
std::vector<std::string> request_labels(run_env& env,
                                        const std::string& model_id,
                                        const std::string& key,
                                        std::map<std::string, std::string> subs,
                                        const std::string& count_key, int want,
                                        bool taxonomy) {
  subs[count_key] = std::to_string(want);
  const std::string prompt = env.prompts.render(key, subs);
  auto labels = unique_labels(parse_bullets(ask_model(env, model_id, prompt).text));
  if (static_cast<int>(labels.size()) != want) {
    labels = unique_labels(parse_bullets(ask_model(env, model_id, prompt).text));
    if (static_cast<int>(labels.size()) > want) labels.resize(want);
    if (static_cast<int>(labels.size()) < want) {
      subs[count_key] = std::to_string(want - static_cast<int>(labels.size()));
      auto extra =
          parse_bullets(ask_model(env, model_id, env.prompts.render(key, subs)).text);
      for (auto& e : extra) {
        if (static_cast<int>(labels.size()) == want) break;
        if (std::find(labels.begin(), labels.end(), e) == labels.end())
          labels.push_back(std::move(e));
      }
    }
  }
  if (static_cast<int>(labels.size()) != want) {
    const std::string msg = "count repair failed for " + key + ": wanted " +
                            std::to_string(want) + " labels, have " +
                            std::to_string(labels.size()) + " after 3 attempts";
    if (taxonomy) throw taxonomy_induction_error(msg);
    throw profile_generation_error(msg);
  }
  return labels;
}

struct run_tracker {
  run_record rec;
  pipeline_state state;
  cost_snapshot start{};
  cost_snapshot prev{};
  int ordinal = 0;
  std::chrono::steady_clock::time_point t0;
};

run_tracker make_tracker(const std::string& topic, const std::string& model_id,
                         const policy_config& config, run_env& env) {
  config.validate();
  run_tracker tk;
  tk.rec.run_id = env.run_id;
  tk.rec.policy_id = config.policy_id;
  tk.rec.params.branching = config.branching;
  tk.rec.params.max_depth = config.max_depth;
  tk.rec.params.profile_count = config.profile_count;
  tk.rec.model_id = model_id;
  tk.rec.topic_id = topic;
  tk.rec.seed = env.seed;
  tk.rec.saturation = config.saturation;
  // Snapshot before any setup call so induction and profile-generation cost
  // is attributed to turn 1.
  tk.start = env.gw.cost_ledger();
  tk.prev = tk.start;
  tk.t0 = std::chrono::steady_clock::now();
  return tk;
}

stop_reason finish_turn(run_tracker& tk, run_env& env, int turn,
                        std::int64_t raw, std::int64_t novel,
                        const saturation_config& sat) {
  const cost_snapshot now = env.gw.cost_ledger();
  turn_record tr;
  tr.turn_index = turn;
  tr.raw_count = raw;
  tr.novel_count = novel;
  const std::int64_t prior =
      tk.rec.turns.empty() ? 0 : tk.rec.turns.back().cumulative_unique;
  tr.cumulative_unique = prior + novel;
  if (turn > 1 && prior > 0)
    tr.growth_rate = static_cast<double>(novel) / static_cast<double>(prior);
  if (raw > 0)
    tr.efficiency = static_cast<double>(novel) / static_cast<double>(raw);
  tr.generation_tokens = now.generation_tokens - tk.prev.generation_tokens;
  tr.embedding_tokens = now.embedding_tokens - tk.prev.embedding_tokens;
  tk.prev = now;
  const stop_reason stop = check_saturation(tr, tk.rec.turns, sat);
  tr.stop = stop;
  tk.rec.turns.push_back(tr);
  tk.rec.total_cost_tokens.push_back(now.total() - tk.start.total());
  return stop;
}

run_record seal(run_tracker&& tk, run_env& env, pipeline_state* out_state) {
  tk.rec.incomplete_audit = tk.state.incomplete_audit;
  tk.rec.atoms = tk.state.processed;
  tk.rec.wall_clock =
      env.measure_wall_clock
          ? std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          tk.t0)
                .count()
          : 0.0;
  if (!tk.rec.aborted) validate_run_record(tk.rec);
  if (out_state != nullptr) *out_state = std::move(tk.state);
  return std::move(tk.rec);
}

std::vector<knowledge_atom> mint_pool(const std::vector<std::string>& lines,
                                      const std::string& policy_id, int turn,
                                      std::optional<std::string> leaf_path,
                                      std::optional<int> profile_index,
                                      run_tracker& tk) {
  std::vector<knowledge_atom> pool;
  pool.reserve(lines.size());
  atom_origin origin;
  origin.policy_id = policy_id;
  origin.turn = turn;
  origin.leaf_path = std::move(leaf_path);
  origin.profile_index = profile_index;
  for (const auto& line : lines) {
    const mint_scope scope{tk.rec.run_id, tk.rec.model_id, tk.rec.topic_id,
                           tk.ordinal};
    try {
      pool.push_back(mint_atom(line, origin, scope));
    } catch (const precondition_error&) {
      continue;  // marker-only noise normalizes to nothing
    }
    ++tk.ordinal;
  }
  return pool;
}

// Runs the fan-out for one structured round. Returns false when a transport
// or malformed-reply failure means the round (and the run) must abort;
// responses arrive in prompt order.
bool gather_round(run_env& env, const std::string& model_id,
                  const std::vector<std::string>& prompts,
                  std::vector<chat_response>& out) {
  std::vector<std::future<chat_response>> futs;
  futs.reserve(prompts.size());
  for (std::size_t k = 0; k < prompts.size(); ++k) {
    futs.push_back(std::async(std::launch::async, [&env, &model_id, &prompts,
                                                   k] {
      return ask_model(env, model_id, prompts[k]);
    }));
  }
  out.assign(prompts.size(), chat_response{});
  bool abort = false;
  std::exception_ptr fatal;
  for (std::size_t k = 0; k < futs.size(); ++k) {
    try {
      out[k] = futs[k].get();
    } catch (const transport_error&) {
      abort = true;
    } catch (const malformed_response_error&) {
      abort = true;
    } catch (...) {
      if (!fatal) fatal = std::current_exception();
    }
  }
  if (fatal) std::rethrow_exception(fatal);
  return !abort;
}

pipeline make_pipeline(const std::string& topic, const std::string& model_id,
                       run_env& env) {
  return pipeline(env.gw, env.prompts, env.dedup, topic, model_id,
                  env.embedding_model_id, env.judge_temperature);
}

// Applies one turn's pool; false means the turn failed and the run aborted
// (state already rolled back).
bool apply_pool(pipeline& pipe, run_tracker& tk, std::vector<knowledge_atom> pool,
                int turn, turn_pool_result& out) {
  const state_marks marks = mark_state(tk.state);
  try {
    out = pipe.process_turn_pool(std::move(pool), tk.state, turn);
    return true;
  } catch (const transport_error&) {
  } catch (const adjudication_error&) {
  } catch (const malformed_response_error&) {
  }
  rollback_state(tk.state, marks);
  tk.rec.aborted = true;
  return false;
}

void check_tree_level(const std::vector<taxonomy_node>& siblings, int depth,
                      int w, int d_max, const std::string& where) {
  if (static_cast<int>(siblings.size()) != w)
    throw taxonomy_induction_error(
        "taxonomy node '" + where + "' has " +
        std::to_string(siblings.size()) + " children, expected " +
        std::to_string(w));
  std::vector<std::string> seen;
  for (const auto& node : siblings) {
    if (node.label.empty())
      throw taxonomy_induction_error("taxonomy node under '" + where +
                                     "' has an empty label");
    if (std::find(seen.begin(), seen.end(), node.label) != seen.end())
      throw taxonomy_induction_error("duplicate sibling label '" + node.label +
                                     "' under '" + where + "'");
    seen.push_back(node.label);
    if (depth == d_max) {
      if (!node.children.empty())
        throw taxonomy_induction_error("leaf '" + node.label +
                                       "' unexpectedly has children");
    } else {
      check_tree_level(node.children, depth + 1, w, d_max, node.label);
    }
  }
}

}  // namespace

void policy_config::validate() const {
  saturation.validate();
  const bool tax = policy_id == "taxonomy";
  const bool multi = policy_id == "multi_perspective";
  if (policy_id != "sequential" && policy_id != "reflective" && !tax && !multi)
    throw config_error("unknown policy_id '" + policy_id +
                       "' (expected sequential, reflective, taxonomy, or "
                       "multi_perspective)");
  if (tax) {
    if (!branching || !max_depth)
      throw config_error("taxonomy runs need both branching and max_depth");
    if (*branching < 2)
      throw config_error("branching must be >= 2, got " +
                         std::to_string(*branching));
    if (*max_depth < 1)
      throw config_error("max_depth must be >= 1, got " +
                         std::to_string(*max_depth));
  } else if (branching || max_depth) {
    throw config_error("branching/max_depth only apply to the taxonomy policy");
  }
  if (multi) {
    if (!profile_count)
      throw config_error("multi_perspective runs need profile_count");
    if (*profile_count < 1)
      throw config_error("profile_count must be >= 1, got " +
                         std::to_string(*profile_count));
  } else if (profile_count) {
    throw config_error(
        "profile_count only applies to the multi_perspective policy");
  }
}

std::vector<std::vector<std::string>> taxonomy_tree::leaf_paths() const {
  std::vector<std::vector<std::string>> out;
  std::vector<std::string> path;
  std::function<void(const taxonomy_node&)> walk =
      [&](const taxonomy_node& node) {
        path.push_back(node.label);
        if (node.children.empty()) {
          out.push_back(path);
        } else {
          for (const auto& child : node.children) walk(child);
        }
        path.pop_back();
      };
  for (const auto& node : level1) walk(node);
  return out;
}

int taxonomy_tree::leaf_count() const {
  return static_cast<int>(leaf_paths().size());
}

void taxonomy_tree::validate(int w, int d_max) const {
  if (root.empty()) throw taxonomy_induction_error("taxonomy root is empty");
  check_tree_level(level1, 1, w, d_max, root);
}

std::vector<std::string> parse_bullets(const std::string& text) {
  std::vector<std::string> out;
  for (const auto& line : split(text, '\n')) {
    const std::string t = trim(line);
    if (t.empty()) continue;
    std::size_t marker = 0;
    if (t[0] == '-' || t[0] == '*') {
      marker = 1;
    } else if (t.size() >= 3 && static_cast<unsigned char>(t[0]) == 0xE2 &&
               static_cast<unsigned char>(t[1]) == 0x80 &&
               static_cast<unsigned char>(t[2]) == 0xA2) {
      marker = 3;
    } else {
      continue;
    }
    std::string rest = trim(t.substr(marker));
    if (rest.empty()) continue;
    out.push_back(std::move(rest));
  }
  return out;
}

stop_reason check_saturation(const turn_record& turn,
                             std::span<const turn_record> history,
                             const saturation_config& config) {
  if (turn.turn_index >= config.max_turns) return stop_reason::max_turns;
  if (turn.novel_count < config.min_novel) return stop_reason::low_novel;
  if (turn.efficiency && *turn.efficiency < config.min_efficiency)
    return stop_reason::low_efficiency;
  bool growth_applies = turn.growth_rate.has_value() && turn.turn_index > 1;
  if (growth_applies && !history.empty())
    growth_applies = history.back().cumulative_unique > 0;
  if (growth_applies && *turn.growth_rate < config.min_growth)
    return stop_reason::low_growth;
  return stop_reason::none;
}

std::string build_points_str(std::span<const knowledge_atom> accepted,
                             std::size_t cap) {
  if (accepted.empty()) return "";
  const std::size_t total = accepted.size();
  const std::size_t shown = std::min(cap, total);
  std::string out;
  if (shown < total)
    out = "\xE2\x80\xA6"
          "and " +
          std::to_string(total - shown) + " earlier points omitted";
  for (std::size_t i = total - shown; i < total; ++i) {
    if (!out.empty()) out += '\n';
    out += "- " + accepted[i].text;
  }
  return out;
}

taxonomy_tree build_taxonomy(const std::string& topic,
                             const std::string& model_id, int w, int d_max,
                             run_env& env) {
  if (w < 2) throw config_error("taxonomy branching must be >= 2");
  if (d_max < 1) throw config_error("taxonomy depth must be >= 1");
  taxonomy_tree tree;
  tree.root = topic;
  auto top = request_labels(env, model_id, "taxonomy.level1",
                            {{"query", topic}}, "W", w, true);
  tree.level1.reserve(top.size());
  for (auto& label : top) tree.level1.push_back({std::move(label), {}});
  std::vector<taxonomy_node*> frontier;
  for (auto& node : tree.level1) frontier.push_back(&node);
  for (int depth = 2; depth <= d_max; ++depth) {
    std::vector<taxonomy_node*> next;
    for (taxonomy_node* node : frontier) {
      auto kids = request_labels(env, model_id, "taxonomy.level2",
                                 {{"query", topic}, {"category", node->label}},
                                 "W", w, true);
      node->children.reserve(kids.size());
      for (auto& label : kids) node->children.push_back({std::move(label), {}});
      for (auto& child : node->children) next.push_back(&child);
    }
    frontier = std::move(next);
  }
  tree.validate(w, d_max);
  return tree;
}

std::vector<expert_profile> generate_profiles(const std::string& topic,
                                              const std::string& model_id,
                                              int n, run_env& env) {
  if (n < 1) throw config_error("profile count must be >= 1");
  auto labels = request_labels(env, model_id, "profiles.generate",
                               {{"query", topic}}, "N", n, false);
  std::vector<expert_profile> out;
  out.reserve(labels.size());
  for (int i = 0; i < n; ++i) out.push_back({i + 1, std::move(labels[i])});
  return out;
}

run_record run_sequential(const std::string& topic, const std::string& model_id,
                          const policy_config& config, run_env& env,
                          pipeline_state* out_state) {
  run_tracker tk = make_tracker(topic, model_id, config, env);
  pipeline pipe = make_pipeline(topic, model_id, env);
  std::string history;
  for (int t = 1; t <= config.saturation.max_turns; ++t) {
    const std::string prompt =
        t == 1 ? env.prompts.render("sequential.t1", {{"query", topic}})
               : env.prompts.render("sequential.tn", {{"history", history}});
    chat_response resp;
    try {
      resp = ask_model(env, model_id, prompt);
    } catch (const transport_error&) {
      tk.rec.aborted = true;
      break;
    } catch (const malformed_response_error&) {
      tk.rec.aborted = true;
      break;
    }
    auto pool =
        mint_pool(parse_bullets(resp.text), config.policy_id, t, {}, {}, tk);
    turn_pool_result pr{};
    if (!apply_pool(pipe, tk, std::move(pool), t, pr)) break;
    history =
        (t == 1 ? "User: " + prompt : prompt) + "\nAssistant: " + resp.text;
    if (finish_turn(tk, env, t, pr.raw_count, pr.novel_count,
                    config.saturation) != stop_reason::none)
      break;
  }
  return seal(std::move(tk), env, out_state);
}

run_record run_reflective(const std::string& topic, const std::string& model_id,
                          const policy_config& config, run_env& env,
                          pipeline_state* out_state) {
  run_tracker tk = make_tracker(topic, model_id, config, env);
  pipeline pipe = make_pipeline(topic, model_id, env);
  for (int t = 1; t <= config.saturation.max_turns; ++t) {
    std::string prompt;
    if (t == 1) {
      prompt = env.prompts.render("sequential.t1", {{"query", topic}});
    } else {
      prompt = env.prompts.render(
          "reflective.tn",
          {{"query", topic},
           {"N", std::to_string(tk.state.accepted.size())},
           {"points_str", build_points_str(tk.state.accepted)}});
    }
    chat_response resp;
    try {
      resp = ask_model(env, model_id, prompt);
    } catch (const transport_error&) {
      tk.rec.aborted = true;
      break;
    } catch (const malformed_response_error&) {
      tk.rec.aborted = true;
      break;
    }
    auto pool =
        mint_pool(parse_bullets(resp.text), config.policy_id, t, {}, {}, tk);
    turn_pool_result pr{};
    if (!apply_pool(pipe, tk, std::move(pool), t, pr)) break;
    if (finish_turn(tk, env, t, pr.raw_count, pr.novel_count,
                    config.saturation) != stop_reason::none)
      break;
  }
  return seal(std::move(tk), env, out_state);
}

namespace {

struct leaf_ctx {
  std::string label;
  std::string path_str;
  std::string history;
  bool active = true;
  int zero_streak = 0;
};

run_record mine_taxonomy(const taxonomy_tree& tree, const std::string& topic,
                         const std::string& model_id,
                         const policy_config& config, run_env& env,
                         run_tracker tk, pipeline_state* out_state) {
  pipeline pipe = make_pipeline(topic, model_id, env);
  std::vector<leaf_ctx> leaves;
  for (const auto& path : tree.leaf_paths()) {
    leaf_ctx lc;
    lc.label = path.back();
    for (const auto& segment : path) {
      if (!lc.path_str.empty()) lc.path_str += " > ";
      lc.path_str += segment;
    }
    leaves.push_back(std::move(lc));
  }
  if (leaves.empty())
    throw precondition_error("taxonomy tree has no leaves to mine");

  for (int t = 1; t <= config.saturation.max_turns; ++t) {
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < leaves.size(); ++i)
      if (leaves[i].active) active.push_back(i);
    if (active.empty()) {
      tk.rec.all_leaves_inactive = true;
      break;
    }
    std::vector<std::string> prompts(active.size());
    for (std::size_t k = 0; k < active.size(); ++k) {
      const leaf_ctx& lc = leaves[active[k]];
      prompts[k] =
          lc.history.empty()
              ? env.prompts.render("taxonomy.leaf_t1",
                                   {{"query", topic}, {"leaf", lc.label}})
              : env.prompts.render("taxonomy.leaf_tn",
                                   {{"history", lc.history}});
    }
    std::vector<chat_response> resps;
    if (!gather_round(env, model_id, prompts, resps)) {
      tk.rec.aborted = true;
      break;
    }
    std::vector<knowledge_atom> pool;
    std::vector<std::pair<std::size_t, std::size_t>> spans(active.size());
    for (std::size_t k = 0; k < active.size(); ++k) {
      auto minted = mint_pool(parse_bullets(resps[k].text), config.policy_id,
                              t, leaves[active[k]].path_str, {}, tk);
      spans[k] = {pool.size(), pool.size() + minted.size()};
      for (auto& atom : minted) pool.push_back(std::move(atom));
    }
    const std::size_t base = tk.state.processed.size();
    turn_pool_result pr{};
    if (!apply_pool(pipe, tk, std::move(pool), t, pr)) break;
    for (std::size_t k = 0; k < active.size(); ++k) {
      std::int64_t leaf_novel = 0;
      for (std::size_t p = spans[k].first; p < spans[k].second; ++p) {
        const atom_status st = tk.state.processed[base + p].status;
        if (st == atom_status::unique || st == atom_status::valid ||
            st == atom_status::rejected_audit)
          ++leaf_novel;
      }
      leaf_ctx& lc = leaves[active[k]];
      lc.history = (lc.history.empty() ? "User: " + prompts[k] : prompts[k]) +
                   "\nAssistant: " + resps[k].text;
      if (leaf_novel == 0) {
        if (++lc.zero_streak >= 2) lc.active = false;
      } else {
        lc.zero_streak = 0;
      }
    }
    const bool any_active =
        std::any_of(leaves.begin(), leaves.end(),
                    [](const leaf_ctx& l) { return l.active; });
    stop_reason stop = finish_turn(tk, env, t, pr.raw_count, pr.novel_count,
                                   config.saturation);
    if (!any_active) {
      tk.rec.all_leaves_inactive = true;
      if (stop == stop_reason::none) {
        // Unreachable with min_novel >= 1 (full deactivation implies a
        // zero-novel turn) but the record must still end with a reason.
        tk.rec.turns.back().stop = stop_reason::low_novel;
        stop = stop_reason::low_novel;
      }
    }
    if (stop != stop_reason::none) break;
  }
  return seal(std::move(tk), env, out_state);
}

}  // namespace

run_record run_taxonomy(const std::string& topic, const std::string& model_id,
                        const policy_config& config, run_env& env,
                        pipeline_state* out_state) {
  run_tracker tk = make_tracker(topic, model_id, config, env);
  taxonomy_tree tree;
  try {
    tree = build_taxonomy(topic, model_id, *config.branching,
                          *config.max_depth, env);
  } catch (const transport_error&) {
    tk.rec.aborted = true;
    return seal(std::move(tk), env, out_state);
  } catch (const malformed_response_error&) {
    tk.rec.aborted = true;
    return seal(std::move(tk), env, out_state);
  }
  return mine_taxonomy(tree, topic, model_id, config, env, std::move(tk),
                       out_state);
}

run_record run_taxonomy_with_tree(const taxonomy_tree& tree,
                                  const std::string& topic,
                                  const std::string& model_id,
                                  const policy_config& config, run_env& env,
                                  pipeline_state* out_state) {
  run_tracker tk = make_tracker(topic, model_id, config, env);
  return mine_taxonomy(tree, topic, model_id, config, env, std::move(tk),
                       out_state);
}

run_record run_multi_perspective(const std::string& topic,
                                 const std::string& model_id,
                                 const policy_config& config, run_env& env,
                                 pipeline_state* out_state) {
  run_tracker tk = make_tracker(topic, model_id, config, env);
  std::vector<expert_profile> profiles;
  try {
    profiles =
        generate_profiles(topic, model_id, *config.profile_count, env);
  } catch (const transport_error&) {
    tk.rec.aborted = true;
    return seal(std::move(tk), env, out_state);
  } catch (const malformed_response_error&) {
    tk.rec.aborted = true;
    return seal(std::move(tk), env, out_state);
  }
  pipeline pipe = make_pipeline(topic, model_id, env);
  for (int t = 1; t <= config.saturation.max_turns; ++t) {
    // All personas see the same snapshot taken at the start of the turn.
    const std::string snapshot = build_points_str(tk.state.accepted);
    std::vector<std::string> prompts(profiles.size());
    for (std::size_t k = 0; k < profiles.size(); ++k) {
      prompts[k] = env.prompts.render("profiles.extract",
                                      {{"profile", profiles[k].description},
                                       {"query", topic},
                                       {"points_str", snapshot}});
    }
    std::vector<chat_response> resps;
    if (!gather_round(env, model_id, prompts, resps)) {
      tk.rec.aborted = true;
      break;
    }
    std::vector<knowledge_atom> pool;
    for (std::size_t k = 0; k < profiles.size(); ++k) {
      auto minted = mint_pool(parse_bullets(resps[k].text), config.policy_id,
                              t, {}, profiles[k].index, tk);
      for (auto& atom : minted) pool.push_back(std::move(atom));
    }
    turn_pool_result pr{};
    if (!apply_pool(pipe, tk, std::move(pool), t, pr)) break;
    if (finish_turn(tk, env, t, pr.raw_count, pr.novel_count,
                    config.saturation) != stop_reason::none)
      break;
  }
  return seal(std::move(tk), env, out_state);
}

run_record run_policy(const std::string& topic, const std::string& model_id,
                      const policy_config& config, run_env& env,
                      pipeline_state* out_state) {
  config.validate();
  if (config.policy_id == "sequential")
    return run_sequential(topic, model_id, config, env, out_state);
  if (config.policy_id == "reflective")
    return run_reflective(topic, model_id, config, env, out_state);
  if (config.policy_id == "taxonomy")
    return run_taxonomy(topic, model_id, config, env, out_state);
  return run_multi_perspective(topic, model_id, config, env, out_state);
}

}  // namespace kbprobe
