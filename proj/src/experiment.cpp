#include "kbprobe/experiment.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>

#include "kbprobe/errors.hpp"
#include "kbprobe/gateway.hpp"
#include "kbprobe/util.hpp"

namespace kbprobe {

namespace {

bool is_sim_model(const std::string& model_id) {
  return starts_with(model_id, "sim:");
}

// Maps the pending exception onto the CLI exit-code contract.
int report_failure(std::ostream& err) {
  try {
    throw;
  } catch (const verification_error& e) {
    err << "verification failed: " << e.what() << "\n";
    return 3;
  } catch (const config_error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const precondition_error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const auth_error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

void require_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw config_error("no such file: " + path.string());
}

std::string stop_label(const run_record& rec) {
  if (rec.turns.empty()) return "none";
  return std::string(to_string(rec.turns.back().stop));
}

std::string percent_or_dash(const std::optional<double>& v) {
  return v ? format_pct1(*v) + "%" : std::string("-");
}

}  // namespace

std::string make_run_id(const std::string& preset, const std::string& model_id,
                        const std::string& topic, std::uint64_t seed) {
  return preset + "__" + slug(model_id) + "__" + slug(topic) + "__s" +
         std::to_string(seed);
}

experiment::experiment(experiment_config config, std::string api_key)
    : config_(std::move(config)), api_key_(std::move(api_key)) {
  config_.validate();
  prompts_ = load_prompts(config_);
  sim_ = std::make_unique<sim_backend_factory>(config_.sim);
}

backend& experiment::resolve(const std::string& model_id) {
  if (is_sim_model(model_id)) return sim_->backend_for(model_id);
  std::lock_guard<std::mutex> lock(http_mutex_);
  if (!http_) {
    if (api_key_.empty())
      throw auth_error("KBPROBE_API_KEY is not set; remote model '" +
                       model_id + "' needs credentials");
    http_ = std::make_unique<http_backend>(config_.api_base, api_key_,
                                           config_.http_timeout_seconds);
  }
  return *http_;
}

backend_resolver experiment::resolver() {
  return [this](const std::string& model_id) -> backend& {
    return resolve(model_id);
  };
}

run_output experiment::execute_run(const run_request& request, bool trace) {
  const policy_config pcfg =
      resolve_preset(request.preset, config_.saturation);
  const std::string run_id =
      make_run_id(request.preset, request.model_id, request.topic,
                  config_.seed);
  std::filesystem::create_directories(config_.output_dir);

  gateway gw(resolver(), config_.make_gateway_options());
  std::shared_ptr<std::ofstream> trace_file;
  if (trace) {
    trace_file = std::make_shared<std::ofstream>(
        config_.output_dir / (run_id + ".trace.jsonl"), std::ios::binary);
    if (!*trace_file)
      throw error("cannot open trace file for run " + run_id);
    auto mutex = std::make_shared<std::mutex>();
    gw.set_trace_sink([trace_file, mutex](const std::string& line) {
      std::lock_guard<std::mutex> lock(*mutex);
      *trace_file << line << '\n';
    });
  }

  run_env env{gw,
              prompts_,
              config_.make_dedup_config(),
              config_.embedding_model,
              config_.extract_temperature,
              config_.judge_temperature,
              config_.max_output_tokens,
              config_.seed,
              run_id,
              // Simulated runs keep wall_clock virtual so reruns are
              // byte-identical.
              !is_sim_model(request.model_id)};

  run_output out;
  out.record = run_policy(request.topic, request.model_id, pcfg, env,
                          &out.state);
  out.record_path = config_.output_dir / (run_id + ".runrec.jsonl");
  write_run_record(out.record, out.record_path);
  out.decisions_path = config_.output_dir / (run_id + ".decisions.jsonl");
  write_decision_log(out.state, out.decisions_path);
  out.transcripts_path = config_.output_dir / (run_id + ".transcripts.jsonl");
  write_transcripts(out.state, out.transcripts_path);
  return out;
}

std::vector<run_output> experiment::execute_sweep(bool trace) {
  std::vector<run_output> results;
  for (const auto& topic : config_.topics) {
    for (const auto& model : config_.models) {
      for (const auto& preset : config_.pipelines) {
        results.push_back(execute_run({preset, model, topic}, trace));
      }
    }
  }
  return results;
}

void verify_run_against_decisions(const run_record& record,
                                  const pipeline_state& state) {
  try {
    validate_run_record(record);
  } catch (const precondition_error& e) {
    throw verification_error(std::string("structural check failed: ") +
                             e.what());
  }
  const int turn_count = static_cast<int>(record.turns.size());
  std::vector<std::int64_t> raw(turn_count, 0);
  std::vector<std::int64_t> novel(turn_count, 0);
  std::map<std::string, const dedup_decision*> dedup_by_atom;
  for (const auto& d : state.dedup_decisions) {
    if (d.turn < 1 || d.turn > turn_count)
      throw verification_error("dedup decision for atom " +
                               d.candidate_atom_id + " cites turn " +
                               std::to_string(d.turn) +
                               " outside the recorded range");
    if (!dedup_by_atom.emplace(d.candidate_atom_id, &d).second)
      throw verification_error("atom " + d.candidate_atom_id +
                               " has two dedup decisions");
    ++raw[d.turn - 1];
    if (d.outcome == dedup_outcome::accepted_novel ||
        d.outcome == dedup_outcome::kept_after_judge)
      ++novel[d.turn - 1];
  }
  for (int t = 0; t < turn_count; ++t) {
    if (raw[t] != record.turns[t].raw_count)
      throw verification_error(
          "turn " + std::to_string(t + 1) + " raw_count: stored " +
          std::to_string(record.turns[t].raw_count) + ", decision log gives " +
          std::to_string(raw[t]));
    if (novel[t] != record.turns[t].novel_count)
      throw verification_error(
          "turn " + std::to_string(t + 1) + " novel_count: stored " +
          std::to_string(record.turns[t].novel_count) +
          ", decision log gives " + std::to_string(novel[t]));
  }

  std::map<std::string, const knowledge_atom*> atoms;
  for (const auto& atom : record.atoms) {
    if (!atoms.emplace(atom.atom_id, &atom).second)
      throw verification_error("atom id " + atom.atom_id +
                               " appears twice in the record");
  }
  if (atoms.size() != dedup_by_atom.size())
    throw verification_error(
        "record holds " + std::to_string(atoms.size()) +
        " atoms but the decision log holds " +
        std::to_string(dedup_by_atom.size()) + " dedup decisions");
  for (const auto& [atom_id, atom] : atoms) {
    auto it = dedup_by_atom.find(atom_id);
    if (it == dedup_by_atom.end())
      throw verification_error("atom " + atom_id + " has no dedup decision");
    const dedup_decision& d = *it->second;
    const bool merged = d.outcome == dedup_outcome::merged_strict ||
                        d.outcome == dedup_outcome::merged_by_judge;
    if (merged) {
      if (atom->status != atom_status::rejected_duplicate)
        throw verification_error("atom " + atom_id +
                                 " was merged by dedup but its status is " +
                                 std::string(to_string(atom->status)));
      if (!d.matched_atom_id || !atom->merged_into ||
          *d.matched_atom_id != *atom->merged_into)
        throw verification_error("atom " + atom_id +
                                 " merge target disagrees with its decision");
    } else if (atom->status == atom_status::rejected_duplicate) {
      throw verification_error("atom " + atom_id +
                               " is rejected_duplicate without a merging "
                               "decision");
    }
  }

  std::map<std::string, const audit_decision*> audit_by_atom;
  for (const auto& a : state.audit_decisions) {
    if (a.turn < 1 || a.turn > turn_count)
      throw verification_error("audit decision for atom " + a.atom_id +
                               " cites turn " + std::to_string(a.turn) +
                               " outside the recorded range");
    if (!audit_by_atom.emplace(a.atom_id, &a).second)
      throw verification_error("atom " + a.atom_id +
                               " has two audit decisions");
    auto it = atoms.find(a.atom_id);
    if (it == atoms.end())
      throw verification_error("audit decision cites unknown atom " +
                               a.atom_id);
    const atom_status expected =
        a.valid ? atom_status::valid : atom_status::rejected_audit;
    if (it->second->status != expected)
      throw verification_error(
          "atom " + a.atom_id + " status " +
          std::string(to_string(it->second->status)) +
          " disagrees with its audit verdict");
  }
  for (const auto& [atom_id, atom] : atoms) {
    const bool audited = audit_by_atom.count(atom_id) > 0;
    switch (atom->status) {
      case atom_status::valid:
      case atom_status::rejected_audit:
        if (!audited)
          throw verification_error("atom " + atom_id +
                                   " carries an audit status without an "
                                   "audit decision");
        break;
      case atom_status::unique:
        if (audited)
          throw verification_error("atom " + atom_id +
                                   " is still unique despite an audit "
                                   "decision");
        if (!record.incomplete_audit && !record.aborted)
          throw verification_error("atom " + atom_id +
                                   " left unaudited in a completed run");
        break;
      case atom_status::rejected_duplicate:
        if (audited)
          throw verification_error("duplicate atom " + atom_id +
                                   " should never reach the audit");
        break;
      case atom_status::raw:
        throw verification_error("atom " + atom_id +
                                 " is still raw in a persisted record");
    }
  }
}

int cmd_run(const cmd_options& options, std::ostream& out, std::ostream& err) {
  try {
    experiment_config cfg = options.config_path
                                ? load_config_file(*options.config_path)
                                : experiment_config{};
    if (options.topic) cfg.topics = {*options.topic};
    if (options.model) cfg.models = {*options.model};
    if (options.pipeline) cfg.pipelines = {*options.pipeline};
    if (options.seed) cfg.seed = *options.seed;
    if (options.output_dir) cfg.output_dir = *options.output_dir;
    const char* key = std::getenv("KBPROBE_API_KEY");
    experiment exp(std::move(cfg), key ? key : "");
    const auto results = exp.execute_sweep(options.trace);
    for (const auto& r : results) {
      const atom_counts c = count_atoms(r.record);
      out << r.record.run_id << ": " << r.record.turns.size()
          << " turns, raw/unique/valid " << c.raw << "/" << c.unique << "/"
          << c.valid << ", stop " << stop_label(r.record)
          << (r.record.aborted ? " (aborted)" : "") << ", tokens "
          << (r.record.total_cost_tokens.empty()
                  ? 0
                  : r.record.total_cost_tokens.back())
          << "\n";
    }
    return 0;
  } catch (...) {
    return report_failure(err);
  }
}

int cmd_pareto(const std::vector<std::filesystem::path>& run_files,
               const std::string& baseline_run_id,
               const std::optional<std::filesystem::path>& output_dir,
               std::ostream& out, std::ostream& err) {
  try {
    if (run_files.empty())
      throw config_error("pareto needs at least one run-record file");
    if (baseline_run_id.empty())
      throw config_error("pareto needs --baseline <run_id>");
    std::vector<run_record> records;
    records.reserve(run_files.size());
    for (const auto& path : run_files) {
      require_file(path);
      records.push_back(read_run_record(path));
    }
    const run_record* baseline = nullptr;
    for (const auto& rec : records)
      if (rec.run_id == baseline_run_id) baseline = &rec;
    if (baseline == nullptr) {
      std::string ids;
      for (const auto& rec : records) {
        if (!ids.empty()) ids += ", ";
        ids += rec.run_id;
      }
      throw config_error("baseline run '" + baseline_run_id +
                         "' is not among the inputs (have: " + ids + ")");
    }
    const std::filesystem::path dir = output_dir.value_or(".");
    std::filesystem::create_directories(dir);
    for (const auto& rec : records) {
      const yield_curve_data curve = yield_curve(rec, *baseline);
      const auto path = write_pareto_csv(curve, dir);
      out << "wrote " << path.string() << " (" << curve.points.size()
          << " points, final yield "
          << format_pct1(curve.points.empty() ? 0.0
                                              : curve.points.back().value)
          << "%)\n";
    }
    return 0;
  } catch (...) {
    return report_failure(err);
  }
}

int cmd_compare(const std::vector<std::filesystem::path>& run_files,
                const cmd_options& options, std::ostream& out,
                std::ostream& err) {
  try {
    if (run_files.size() < 2)
      throw config_error("compare needs at least two run-record files");
    std::vector<run_record> records;
    records.reserve(run_files.size());
    for (const auto& path : run_files) {
      require_file(path);
      records.push_back(read_run_record(path));
    }
    experiment_config cfg = options.config_path
                                ? load_config_file(*options.config_path)
                                : experiment_config{};
    const char* key = std::getenv("KBPROBE_API_KEY");
    experiment exp(std::move(cfg), key ? key : "");

    const std::string topic = records.front().topic_id;
    const std::string anchor_model = records.front().model_id;
    gateway gw(exp.resolver(), exp.config().make_gateway_options());
    pipeline pipe(gw, exp.prompts(), exp.config().make_dedup_config(), topic,
                  anchor_model, exp.config().embedding_model,
                  exp.config().judge_temperature);

    std::vector<std::string> model_slugs;
    for (const auto& rec : records) model_slugs.push_back(slug(rec.model_id));
    std::sort(model_slugs.begin(), model_slugs.end());
    std::string comparison_id = slug(topic);
    for (const auto& m : model_slugs) comparison_id += "__" + m;

    const comparison_report report =
        build_comparison(records, pipe, comparison_id);
    const std::filesystem::path dir = options.output_dir.value_or(".");
    std::filesystem::create_directories(dir);
    const auto path = write_comparison_csv(report, dir);
    out << "union size " << report.union_size << ", wrote " << path.string()
        << "\n";
    for (const auto& row : report.rows) {
      out << row.model_id << ": recall " << percent_or_dash(row.recall)
          << ", accuracy " << percent_or_dash(row.accuracy) << " ("
          << row.valid << "/" << row.unique << " valid, " << row.covered
          << " union classes)\n";
    }
    return 0;
  } catch (...) {
    return report_failure(err);
  }
}

int cmd_replay(const std::filesystem::path& run_file, std::ostream& out,
               std::ostream& err) {
  try {
    require_file(run_file);
    const std::string name = run_file.filename().string();
    const std::string suffix = ".runrec.jsonl";
    if (name.size() <= suffix.size() ||
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0)
      throw config_error(
          "replay expects a <run_id>.runrec.jsonl file, got: " + name);
    const std::filesystem::path decisions_path =
        run_file.parent_path() /
        (name.substr(0, name.size() - suffix.size()) + ".decisions.jsonl");
    require_file(decisions_path);

    const run_record record = read_run_record(run_file);
    const pipeline_state state = read_decision_log(decisions_path);
    verify_run_against_decisions(record, state);

    const atom_counts c = count_atoms(record);
    const accuracy_dynamics dyn = compute_accuracy_dynamics(record);
    out << "replay OK: " << record.run_id << ", " << record.turns.size()
        << " turns, raw/unique/valid " << c.raw << "/" << c.unique << "/"
        << c.valid << ", accuracy "
        << percent_or_dash(accuracy_value(c.valid, c.unique))
        << ", init accuracy " << percent_or_dash(dyn.init_accuracy) << "\n";
    return 0;
  } catch (...) {
    return report_failure(err);
  }
}

}  // namespace kbprobe
