// Release gate: each check prints one PASS/FAIL line with its elapsed time
// and pinned budget, and the binary exits nonzero if any check fails or
// overruns its budget.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "kbprobe/experiment.hpp"
#include "support/golden.hpp"
#include "support/scripted_backend.hpp"

using namespace kbprobe;
namespace fs = std::filesystem;
namespace kt = kbprobe::testing;

namespace {

struct check_failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void expect(bool ok, const std::string& detail) {
  if (!ok) throw check_failure(detail);
}

fs::path scratch_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "kbprobe_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

knowledge_atom make_atom(const std::string& id, const std::string& text) {
  knowledge_atom a;
  a.atom_id = id;
  a.text = text;
  a.source_model_id = "sim:demo";
  a.topic_id = "Deep Learning";
  a.origin = atom_origin{"sequential", 1};
  return a;
}

// Unit vector (s, sqrt(1-s^2), 0, 0) with the second component ulp-walked
// until the squared norm is exactly 1.0, so renormalization is a no-op and
// the pipeline sees cosine == s bit-for-bit.
std::vector<double> boundary_vector(double s) {
  double v1 = std::sqrt(1.0 - s * s);
  while (s * s + v1 * v1 > 1.0) v1 = std::nextafter(v1, 0.0);
  while (s * s + v1 * v1 < 1.0) v1 = std::nextafter(v1, 2.0);
  expect(s * s + v1 * v1 == 1.0, "no exact unit vector for s");
  std::vector<double> v(4, 0.0);
  v[0] = s;
  v[1] = v1;
  return v;
}

std::string check_ratio_fixtures() {
  struct ratio_case {
    std::optional<double> value;
    const char* expected;
  };
  const filter_rates fr1 = filtering_rates(3179, 3056, 2454);
  const filter_rates fr2 = filtering_rates(5416, 5317, 4757);
  const ratio_case cases[] = {
      {accuracy_value(2674, 2997), "89.2"},
      {recall_value(2674, 8919), "30.0"},
      {accuracy_value(3405, 3917), "86.9"},
      {recall_value(3405, 8919), "38.2"},
      {fr1.dedup_rate, "3.9"},
      {fr1.audit_rate, "19.7"},
      {fr2.dedup_rate, "1.8"},
      {fr2.audit_rate, "10.5"},
  };
  for (const auto& c : cases) {
    expect(c.value.has_value(), std::string("missing value for ") +
                                    c.expected);
    const std::string got = format_pct1(*c.value);
    expect(got == c.expected,
           "expected " + std::string(c.expected) + ", got " + got);
  }
  return "8 one-decimal values";
}

std::string check_stop_reasons() {
  const saturation_config sat;  // stock thresholds

  auto turn = [](int t, std::int64_t raw, std::int64_t novel,
                 std::int64_t prior) {
    turn_record tr;
    tr.turn_index = t;
    tr.raw_count = raw;
    tr.novel_count = novel;
    tr.cumulative_unique = prior + novel;
    if (t > 1 && prior > 0)
      tr.growth_rate = static_cast<double>(novel) / static_cast<double>(prior);
    if (raw > 0)
      tr.efficiency = static_cast<double>(novel) / static_cast<double>(raw);
    return tr;
  };
  auto history_to = [&](std::int64_t prior) {
    // One synthetic prior turn carrying the cumulative count.
    return std::vector<turn_record>{turn(1, prior, prior, 0)};
  };

  struct scenario {
    const char* name;
    turn_record current;
    std::vector<turn_record> history;
    stop_reason expected;
  };
  const scenario scenarios[] = {
      {"turn cap wins every tie", turn(15, 30, 2, 50), history_to(50),
       stop_reason::max_turns},
      {"novel floor", turn(3, 30, 2, 50), history_to(50),
       stop_reason::low_novel},
      {"efficiency floor", turn(3, 40, 3, 60), history_to(60),
       stop_reason::low_efficiency},
      {"growth floor", turn(3, 20, 3, 400), history_to(400),
       stop_reason::low_growth},
      {"healthy turn keeps going", turn(2, 20, 5, 10), history_to(10),
       stop_reason::none},
      {"first turn skips the growth test", turn(1, 30, 3, 0), {},
       stop_reason::none},
      {"empty prior set skips the growth test", turn(2, 12, 3, 0),
       history_to(0), stop_reason::none},
      {"empty pool skips the efficiency test", turn(3, 0, 3, 50),
       history_to(50), stop_reason::none},
  };

  std::map<stop_reason, int> fired;
  for (const auto& s : scenarios) {
    const stop_reason got = check_saturation(s.current, s.history, sat);
    expect(got == s.expected,
           std::string(s.name) + ": got " + std::string(to_string(got)));
    ++fired[got];
  }
  for (const stop_reason r :
       {stop_reason::max_turns, stop_reason::low_novel,
        stop_reason::low_efficiency, stop_reason::low_growth})
    expect(fired[r] == 1, "each reason must fire exactly once");
  return "8 scenarios, 4 stop reasons";
}

std::string check_taxonomy_shapes() {
  int trees = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    sim_corpus_spec spec;
    spec.seed = seed;
    sim_backend_factory factory(spec);
    gateway gw(
        [&factory](const std::string& id) -> backend& {
          return factory.backend_for(id);
        },
        gateway_options{});
    const prompt_registry prompts = prompt_registry::defaults();
    for (const int w : {2, 3, 5}) {
      run_env env{gw, prompts};
      env.measure_wall_clock = false;
      env.seed = seed;
      const taxonomy_tree tree =
          build_taxonomy("Deep Learning", "sim:demo", w, 2, env);
      tree.validate(w, 2);
      expect(tree.leaf_count() == w * w,
             "seed " + std::to_string(seed) + " width " + std::to_string(w) +
                 ": " + std::to_string(tree.leaf_count()) + " leaves");
      ++trees;
    }
  }
  return std::to_string(trees) + " trees";
}

std::string check_dedup_oracle() {
  auto corpus = std::make_shared<const sim_corpus>(
      sim_corpus::generate(sim_corpus_spec{}));
  sim_backend sim(corpus, sim_model_view{"demo", 1.0});
  gateway gw(kt::resolver_for(sim), kt::fast_options(4));
  const prompt_registry prompts = prompt_registry::defaults();

  std::mt19937 gen(20260816);
  int judge_traffic = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int leaf_count = 1 + static_cast<int>(gen() % 3);
    std::vector<int> fact_scope;
    for (int l = 0; l < leaf_count; ++l) {
      const auto& leaf = corpus->leaves()[gen() % corpus->leaves().size()];
      fact_scope.insert(fact_scope.end(), leaf.fact_ids.begin(),
                        leaf.fact_ids.end());
    }
    const std::size_t pool_size = 1 + gen() % 50;
    std::vector<knowledge_atom> pool;
    std::vector<int> fact_of;
    for (std::size_t i = 0; i < pool_size; ++i) {
      const int fid = fact_scope[gen() % fact_scope.size()];
      const auto& fact = corpus->fact(fid);
      pool.push_back(
          make_atom("t" + std::to_string(trial) + "-a" + std::to_string(i),
                    fact.variants[gen() % fact.variants.size()]));
      fact_of.push_back(fid);
    }

    pipeline pipe(gw, prompts, dedup_config{}, "Deep Learning", "sim:demo",
                  "sim:demo");
    pipeline_state state;
    pipe.process_turn_pool(pool, state, 1, /*run_audit=*/false);

    // Brute-force oracle: one duplicate class per fact id, represented by
    // its first occurrence in pool order.
    std::map<int, std::string> rep;
    std::set<std::string> expected;
    for (std::size_t i = 0; i < pool_size; ++i)
      if (rep.emplace(fact_of[i], pool[i].atom_id).second)
        expected.insert(pool[i].atom_id);

    std::set<std::string> actual;
    for (const knowledge_atom& a : state.accepted) actual.insert(a.atom_id);
    expect(actual == expected,
           "trial " + std::to_string(trial) + ": accepted sets differ");
    for (std::size_t i = 0; i < pool_size; ++i) {
      const knowledge_atom& atom = state.processed[i];
      if (atom.status == atom_status::rejected_duplicate)
        expect(*atom.merged_into == rep[fact_of[i]],
               "trial " + std::to_string(trial) + ": wrong merge target");
      else
        expect(atom.atom_id == rep[fact_of[i]],
               "trial " + std::to_string(trial) + ": wrong representative");
    }
    for (const dedup_decision& d : state.dedup_decisions)
      if (d.judge_verdict) ++judge_traffic;
  }
  expect(judge_traffic > 50, "judge zone never exercised");
  return "200 pools, " + std::to_string(judge_traffic) + " judge calls";
}

std::string check_threshold_boundaries() {
  kt::scripted_backend backend;
  gateway gw(kt::resolver_for(backend), kt::fast_options(1));
  const prompt_registry prompts = prompt_registry::defaults();
  pipeline pipe(gw, prompts, dedup_config{}, "Deep Learning", "sim:demo",
                "sim:demo");

  const struct {
    double s;
    dedup_outcome outcome;
    const char* verdict;
  } cases[] = {
      {0.69, dedup_outcome::accepted_novel, nullptr},
      {0.70, dedup_outcome::accepted_novel, nullptr},
      {0.71, dedup_outcome::kept_after_judge, "NO"},
      {0.92, dedup_outcome::merged_by_judge, "YES"},
      {0.93, dedup_outcome::merged_strict, nullptr},
  };
  for (const auto& c : cases) {
    pipeline_state state;
    knowledge_atom base = make_atom("id-base", "anchor");
    base.embedding = std::vector<double>{1.0, 0.0, 0.0, 0.0};
    base = transition(std::move(base), atom_status::unique);
    state.accepted.push_back(base);

    knowledge_atom candidate = make_atom("id-cand", "candidate");
    candidate.embedding = boundary_vector(c.s);
    if (c.verdict) backend.push_text(c.verdict);

    const auto decision = pipe.dedup_insert(candidate, state, 2);
    expect(decision.has_value(), "dedup returned no decision");
    expect(decision->outcome == c.outcome,
           "s = " + format_full(c.s) + ": got " +
               std::string(to_string(decision->outcome)));
    if (c.outcome != dedup_outcome::accepted_novel) {
      expect(decision->similarity.has_value(), "similarity not recorded");
      expect(*decision->similarity == c.s, "similarity drifted");
    }
  }
  return "5 boundaries";
}

std::string check_budget_advantage() {
  int successes = 0;
  std::string failures;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    experiment_config cfg;
    cfg.topics = {"Deep Learning"};
    cfg.models = {"sim:demo"};
    cfg.pipelines = {"P2_Sequential", "P4_Taxonomy_L3W3",
                     "P5_MultiProfile_N3"};
    cfg.seed = seed;
    cfg.sim.seed = seed;
    cfg.output_dir = scratch_dir() / "budget" / ("s" + std::to_string(seed));
    experiment exp(std::move(cfg));
    const std::vector<run_output> outs = exp.execute_sweep();
    expect(outs.size() == 3, "sweep produced the wrong run count");

    std::map<std::string, const run_record*> by_policy;
    for (const run_output& o : outs)
      by_policy[o.record.policy_id] = &o.record;
    const run_record& seq = *by_policy.at("sequential");
    const run_record& tax = *by_policy.at("taxonomy");
    const run_record& multi = *by_policy.at("multi_perspective");

    // Every run gets the same cap and stops on its own saturation rules
    // within it; the cap is the largest spend any strategy asked for, so a
    // saturated baseline's count at the cap is its final count.
    std::int64_t budget = seq.total_cost_tokens.back();
    for (const run_record* r : {&tax, &multi})
      budget = std::max(budget, r->total_cost_tokens.back());
    const auto valid_within = [budget](const run_record& r) {
      const std::vector<std::int64_t> cum = cumulative_valid_by_turn(r);
      std::int64_t v = 0;
      for (std::size_t t = 0; t < cum.size(); ++t)
        if (r.total_cost_tokens[t] <= budget) v = cum[t];
      return v;
    };
    const std::int64_t v_seq = valid_within(seq);
    const std::int64_t v_tax = valid_within(tax);
    const std::int64_t v_multi = valid_within(multi);
    if (v_tax >= 2 * v_seq && 5 * v_tax >= 6 * v_multi) {
      ++successes;
    } else {
      failures += " seed " + std::to_string(seed) + ": tax " +
                  std::to_string(v_tax) + " seq " + std::to_string(v_seq) +
                  " multi " + std::to_string(v_multi) + " at budget " +
                  std::to_string(budget) + ";";
    }
  }
  expect(successes >= 9,
         "only " + std::to_string(successes) + "/10 seeds:" + failures);
  return std::to_string(successes) + "/10 seeds";
}

std::string check_sweep_determinism() {
  const auto sweep = [](const fs::path& dir) {
    experiment_config cfg;
    cfg.topics = {"Deep Learning"};
    cfg.models = {"sim:alpha@70", "sim:beta@85"};
    cfg.output_dir = dir;  // all eight stock pipelines
    experiment exp(cfg);
    const std::vector<run_output> outs = exp.execute_sweep();
    expect(outs.size() == 16, "sweep produced the wrong run count");

    // Report files derived from the records: a cross-model comparison of
    // the sequential runs and one cost-yield curve per model.
    std::map<std::string, const run_record*> seq_by_model;
    std::map<std::string, const run_record*> tax_by_model;
    for (const run_output& o : outs) {
      if (starts_with(o.record.run_id, "P2_Sequential__"))
        seq_by_model[o.record.model_id] = &o.record;
      if (starts_with(o.record.run_id, "P4_Taxonomy_L3W3__"))
        tax_by_model[o.record.model_id] = &o.record;
    }
    gateway gw(exp.resolver(), cfg.make_gateway_options());
    pipeline pipe(gw, exp.prompts(), cfg.make_dedup_config(), "Deep Learning",
                  "sim:demo", "sim:demo");
    std::vector<run_record> seq_records;
    for (const auto& [model, rec] : seq_by_model) seq_records.push_back(*rec);
    const comparison_report report =
        build_comparison(seq_records, pipe, "determinism-check");
    write_comparison_csv(report, dir);
    for (const auto& [model, rec] : tax_by_model)
      write_pareto_csv(yield_curve(*rec, *seq_by_model.at(model)), dir);
  };

  const fs::path dir_a = scratch_dir() / "sweep_a";
  const fs::path dir_b = scratch_dir() / "sweep_b";
  sweep(dir_a);
  sweep(dir_b);

  std::vector<fs::path> names;
  for (const auto& entry : fs::directory_iterator(dir_a))
    names.push_back(entry.path().filename());
  std::sort(names.begin(), names.end());
  expect(!names.empty(), "first sweep wrote no files");
  int compared = 0;
  for (const fs::path& name : names) {
    expect(fs::exists(dir_b / name), "missing in second sweep: " +
                                         name.string());
    expect(kt::read_file(dir_a / name) == kt::read_file(dir_b / name),
           "byte difference in " + name.string());
    ++compared;
  }
  std::size_t count_b = 0;
  for (const auto& entry : fs::directory_iterator(dir_b)) {
    (void)entry;
    ++count_b;
  }
  expect(count_b == names.size(), "sweeps wrote different file counts");
  return std::to_string(compared) + " files identical";
}

std::string check_prompt_goldens() {
  const prompt_registry registry = prompt_registry::defaults();
  const fs::path dir = KBPROBE_GOLDEN_DIR;
  const auto& keys = prompt_registry::keys();
  expect(keys.size() == 11, "template key count drifted");
  for (const auto& key : keys) {
    const std::string rendered =
        registry.render(key, kt::golden_substitutions().at(key));
    expect(rendered == kt::read_file(dir / (key + ".txt")),
           "rendering drifted for " + key);
  }
  return "11 templates";
}

std::string check_recall_oracle() {
  experiment_config cfg;
  cfg.topics = {"Deep Learning"};
  cfg.models = {"sim:alpha@70", "sim:beta@85", "sim:gamma@55"};
  cfg.pipelines = {"P2_Sequential"};
  cfg.output_dir = scratch_dir() / "recall";
  experiment exp(cfg);
  const std::vector<run_output> outs = exp.execute_sweep();
  expect(outs.size() == 3, "sweep produced the wrong run count");
  const std::shared_ptr<const sim_corpus> corpus = exp.sim_factory().corpus();

  std::map<std::string, std::set<int>> facts_by_model;
  std::set<int> union_facts;
  for (const run_output& o : outs) {
    for (const knowledge_atom& atom : o.record.atoms) {
      if (atom.status != atom_status::valid) continue;
      const auto hit = corpus->lookup_text(atom.text);
      expect(hit.has_value(), "valid atom unknown to the corpus: " + atom.text);
      facts_by_model[o.record.model_id].insert(hit->first);
      union_facts.insert(hit->first);
    }
  }
  expect(union_facts.size() >= 10, "corpus coverage too thin to compare");

  gateway gw(exp.resolver(), cfg.make_gateway_options());
  pipeline pipe(gw, exp.prompts(), cfg.make_dedup_config(), "Deep Learning",
                "sim:demo", "sim:demo");
  std::vector<run_record> records;
  for (const run_output& o : outs) records.push_back(o.record);
  const comparison_report report =
      build_comparison(records, pipe, "recall-check");
  expect(report.rows.size() == 3, "comparison dropped a model");

  for (const model_report_row& row : report.rows) {
    const double oracle =
        static_cast<double>(facts_by_model[row.model_id].size()) /
        static_cast<double>(union_facts.size());
    expect(row.recall.has_value(), row.model_id + ": recall absent");
    const double diff = std::fabs(*row.recall - oracle);
    expect(diff <= 0.01,
           row.model_id + ": recall " + format_full(*row.recall) +
               " vs oracle " + format_full(oracle));
  }
  return "3 models, union " + std::to_string(union_facts.size()) + " classes";
}

struct check {
  const char* name;
  double budget_seconds;
  std::function<std::string()> fn;
};

}  // namespace

int main() {
  const check checks[] = {
      {"one-decimal ratio arithmetic", 1.0, check_ratio_fixtures},
      {"stop reasons fire once each in priority order", 1.0,
       check_stop_reasons},
      {"taxonomy widths 2/3/5 give 4/9/25 leaves", 10.0,
       check_taxonomy_shapes},
      {"incremental dedup equals the brute-force oracle", 30.0,
       check_dedup_oracle},
      {"similarity boundaries route novel/judge/strict", 1.0,
       check_threshold_boundaries},
      {"taxonomy beats baselines at equal token budget", 120.0,
       check_budget_advantage},
      {"repeated sweeps are byte-identical", 180.0, check_sweep_determinism},
      {"rendered prompts byte-match the goldens", 1.0, check_prompt_goldens},
      {"cross-model recalls match the fact-id oracle", 60.0,
       check_recall_oracle},
  };

  const int total = static_cast<int>(std::size(checks));
  int failures = 0;
  for (int i = 0; i < total; ++i) {
    const check& c = checks[i];
    std::string note;
    std::string detail;
    bool ok = true;
    const auto start = std::chrono::steady_clock::now();
    try {
      note = c.fn();
    } catch (const std::exception& e) {
      ok = false;
      detail = e.what();
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    if (ok && elapsed > c.budget_seconds) {
      ok = false;
      detail = "exceeded the time budget";
    }
    std::printf("[%d/%d] %-48s %s  %6.2fs / %.0fs%s%s\n", i + 1, total, c.name,
                ok ? "PASS" : "FAIL", elapsed, c.budget_seconds,
                note.empty() ? "" : ("  (" + note + ")").c_str(),
                ok ? "" : ("\n      " + detail).c_str());
    if (!ok) ++failures;
  }
  if (failures > 0)
    std::printf("%d of %d checks failed\n", failures, total);
  else
    std::printf("all %d checks passed\n", total);
  return failures == 0 ? 0 : 1;
}
