#include "kbprobe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "kbprobe/errors.hpp"
#include "kbprobe/util.hpp"

namespace kbprobe {

namespace {

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += '"';
  return out;
}

std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string opt_field(const std::optional<double>& v) {
  return v ? format_full(*v) : std::string();
}

std::optional<double> parse_opt(const std::string& field) {
  if (field.empty()) return std::nullopt;
  return std::stod(field);
}

std::int64_t parse_i64(const std::string& field) {
  return std::stoll(field);
}

std::string join_series(const std::vector<std::optional<double>>& series) {
  std::string out;
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (i > 0) out += ';';
    out += opt_field(series[i]);
  }
  return out;
}

std::vector<std::optional<double>> parse_series(const std::string& field) {
  std::vector<std::optional<double>> out;
  if (field.empty()) return out;
  for (const auto& part : split(field, ';')) out.push_back(parse_opt(part));
  return out;
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw error("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw error("short write to " + path.string());
}

constexpr const char* k_pareto_header =
    "run_id,baseline_run_id,baseline_size,turn,cost_tokens,cumulative_valid,"
    "yield";
constexpr const char* k_compare_header =
    "comparison_id,topic,union_size,model_id,raw,unique,valid,covered,recall,"
    "accuracy,init_accuracy,decline_rate,accuracy_series";

}  // namespace

std::optional<double> accuracy_value(std::int64_t valid,
                                     std::int64_t unique_count) {
  if (unique_count <= 0) return std::nullopt;
  return static_cast<double>(valid) / static_cast<double>(unique_count);
}

std::optional<double> recall_value(std::int64_t covered,
                                   std::int64_t union_size) {
  if (union_size <= 0) return std::nullopt;
  return static_cast<double>(covered) / static_cast<double>(union_size);
}

filter_rates filtering_rates(std::int64_t raw, std::int64_t unique_count,
                             std::int64_t valid) {
  filter_rates out;
  if (raw > 0)
    out.dedup_rate =
        static_cast<double>(raw - unique_count) / static_cast<double>(raw);
  if (unique_count > 0)
    out.audit_rate = static_cast<double>(unique_count - valid) /
                     static_cast<double>(unique_count);
  return out;
}

atom_counts count_atoms(const run_record& run) {
  atom_counts c;
  c.raw = static_cast<std::int64_t>(run.atoms.size());
  for (const auto& atom : run.atoms) {
    switch (atom.status) {
      case atom_status::valid:
        ++c.valid;
        ++c.unique;
        break;
      case atom_status::unique:
      case atom_status::rejected_audit:
        ++c.unique;
        break;
      default:
        break;
    }
  }
  return c;
}

std::vector<std::int64_t> cumulative_valid_by_turn(const run_record& run) {
  std::vector<std::int64_t> out(run.turns.size(), 0);
  for (const auto& atom : run.atoms) {
    if (atom.status != atom_status::valid) continue;
    const int turn = atom.origin.turn;
    if (turn < 1 || turn > static_cast<int>(out.size()))
      throw precondition_error("atom " + atom.atom_id + " minted on turn " +
                               std::to_string(turn) +
                               " outside the run's recorded turns");
    ++out[turn - 1];
  }
  for (std::size_t i = 1; i < out.size(); ++i) out[i] += out[i - 1];
  return out;
}

yield_curve_data yield_curve(const run_record& run,
                             const run_record& baseline) {
  if (run.topic_id != baseline.topic_id)
    throw precondition_error("yield curve needs runs on one topic, got '" +
                             run.topic_id + "' vs '" + baseline.topic_id +
                             "'");
  if (run.total_cost_tokens.size() != run.turns.size())
    throw precondition_error("run '" + run.run_id +
                             "' has a malformed cost series");
  const std::int64_t base = count_atoms(baseline).valid;
  if (base == 0)
    throw precondition_error("baseline run '" + baseline.run_id +
                             "' has no valid atoms to normalize against");
  yield_curve_data curve;
  curve.run_id = run.run_id;
  curve.baseline_run_id = baseline.run_id;
  curve.baseline_size = base;
  const auto cumulative = cumulative_valid_by_turn(run);
  std::int64_t prev_cost = -1;
  for (std::size_t i = 0; i < run.turns.size(); ++i) {
    yield_point p;
    p.turn = static_cast<int>(i + 1);
    p.cost_tokens = run.total_cost_tokens[i];
    if (p.cost_tokens <= prev_cost)
      throw precondition_error("run '" + run.run_id +
                               "' cost series is not strictly increasing");
    prev_cost = p.cost_tokens;
    p.cumulative_valid = cumulative[i];
    p.value = static_cast<double>(p.cumulative_valid) /
              static_cast<double>(base);
    curve.points.push_back(p);
  }
  return curve;
}

accuracy_dynamics compute_accuracy_dynamics(const run_record& run) {
  accuracy_dynamics dyn;
  const auto cumulative = cumulative_valid_by_turn(run);
  for (std::size_t i = 0; i < run.turns.size(); ++i)
    dyn.per_turn.push_back(
        accuracy_value(cumulative[i], run.turns[i].cumulative_unique));
  if (!dyn.per_turn.empty()) dyn.init_accuracy = dyn.per_turn.front();
  const std::size_t t = dyn.per_turn.size();
  if (t > 1 && dyn.per_turn.front() && dyn.per_turn.back())
    dyn.decline_rate = (*dyn.per_turn.front() - *dyn.per_turn.back()) /
                       static_cast<double>(t - 1);
  return dyn;
}

comparison_report build_comparison(const std::vector<run_record>& runs,
                                   pipeline& pipe,
                                   const std::string& comparison_id) {
  if (runs.size() < 2)
    throw config_error("comparison needs at least two runs, got " +
                       std::to_string(runs.size()));
  for (const auto& run : runs) {
    if (run.topic_id != runs.front().topic_id)
      throw config_error("comparison runs must share one topic; found '" +
                         runs.front().topic_id + "' and '" + run.topic_id +
                         "'");
  }
  std::vector<model_valid_set> sets;
  sets.reserve(runs.size());
  for (const auto& run : runs) {
    model_valid_set set;
    set.model_id = run.model_id;
    for (const auto& atom : run.atoms)
      if (atom.status == atom_status::valid) set.atoms.push_back(atom);
    sets.push_back(std::move(set));
  }
  union_result u = build_union(std::move(sets), pipe);

  comparison_report report;
  report.comparison_id = comparison_id;
  report.topic_id = runs.front().topic_id;
  report.union_size = static_cast<std::int64_t>(u.members.size());

  std::map<std::string, std::int64_t> covered;
  for (const auto& [rep_id, models] : u.membership) {
    for (const auto& model : models) ++covered[model];
  }

  std::vector<std::size_t> order(runs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return runs[a].model_id < runs[b].model_id;
  });
  for (std::size_t idx : order) {
    const run_record& run = runs[idx];
    model_report_row row;
    row.model_id = run.model_id;
    const atom_counts counts = count_atoms(run);
    row.raw = counts.raw;
    row.unique = counts.unique;
    row.valid = counts.valid;
    auto it = covered.find(run.model_id);
    row.covered = it == covered.end() ? 0 : it->second;
    row.recall = recall_value(row.covered, report.union_size);
    row.accuracy = accuracy_value(row.valid, row.unique);
    const accuracy_dynamics dyn = compute_accuracy_dynamics(run);
    row.init_accuracy = dyn.init_accuracy;
    row.decline_rate = dyn.decline_rate;
    row.accuracy_series = dyn.per_turn;
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::vector<aggregate_row> aggregate_models(
    const std::vector<comparison_report>& reports) {
  std::map<std::string, std::vector<const model_report_row*>> by_model;
  for (const auto& report : reports)
    for (const auto& row : report.rows) by_model[row.model_id].push_back(&row);

  auto mean_std = [](const std::vector<double>& xs)
      -> std::pair<std::optional<double>, std::optional<double>> {
    if (xs.empty()) return {std::nullopt, std::nullopt};
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size());
    return {mean, std::sqrt(var)};
  };

  std::vector<aggregate_row> out;
  for (const auto& [model, rows] : by_model) {
    if (rows.size() < 2) continue;  // nothing to aggregate over
    aggregate_row agg;
    agg.model_id = model;
    agg.domains = static_cast<int>(rows.size());
    std::vector<double> recalls, accuracies;
    for (const model_report_row* row : rows) {
      if (row->recall) recalls.push_back(*row->recall);
      if (row->accuracy) accuracies.push_back(*row->accuracy);
    }
    std::tie(agg.recall_mean, agg.recall_std) = mean_std(recalls);
    std::tie(agg.accuracy_mean, agg.accuracy_std) = mean_std(accuracies);
    out.push_back(std::move(agg));
  }
  return out;
}

std::string render_pareto_csv(const yield_curve_data& curve) {
  std::string out = k_pareto_header;
  out += '\n';
  for (const auto& p : curve.points) {
    out += csv_escape(curve.run_id) + ',' + csv_escape(curve.baseline_run_id) +
           ',' + std::to_string(curve.baseline_size) + ',' +
           std::to_string(p.turn) + ',' + std::to_string(p.cost_tokens) + ',' +
           std::to_string(p.cumulative_valid) + ',' + format_full(p.value) +
           '\n';
  }
  return out;
}

yield_curve_data parse_pareto_csv(const std::string& text) {
  const auto lines = split(text, '\n');
  if (lines.empty() || trim(lines[0]) != k_pareto_header)
    throw precondition_error("not a pareto csv: bad header");
  yield_curve_data curve;
  bool first = true;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto fields = csv_split(lines[i]);
    if (fields.size() != 7)
      throw precondition_error("pareto csv row " + std::to_string(i) +
                               " has " + std::to_string(fields.size()) +
                               " fields, expected 7");
    if (first) {
      curve.run_id = fields[0];
      curve.baseline_run_id = fields[1];
      curve.baseline_size = parse_i64(fields[2]);
      first = false;
    }
    yield_point p;
    p.turn = static_cast<int>(parse_i64(fields[3]));
    p.cost_tokens = parse_i64(fields[4]);
    p.cumulative_valid = parse_i64(fields[5]);
    p.value = std::stod(fields[6]);
    curve.points.push_back(p);
  }
  return curve;
}

std::filesystem::path write_pareto_csv(const yield_curve_data& curve,
                                       const std::filesystem::path& dir) {
  const auto path = dir / ("pareto_" + curve.run_id + ".csv");
  write_text_file(path, render_pareto_csv(curve));
  return path;
}

std::string render_comparison_csv(const comparison_report& report) {
  std::string out = k_compare_header;
  out += '\n';
  for (const auto& row : report.rows) {
    out += csv_escape(report.comparison_id) + ',' +
           csv_escape(report.topic_id) + ',' +
           std::to_string(report.union_size) + ',' +
           csv_escape(row.model_id) + ',' + std::to_string(row.raw) + ',' +
           std::to_string(row.unique) + ',' + std::to_string(row.valid) + ',' +
           std::to_string(row.covered) + ',' + opt_field(row.recall) + ',' +
           opt_field(row.accuracy) + ',' + opt_field(row.init_accuracy) + ',' +
           opt_field(row.decline_rate) + ',' +
           csv_escape(join_series(row.accuracy_series)) + '\n';
  }
  return out;
}

comparison_report parse_comparison_csv(const std::string& text) {
  const auto lines = split(text, '\n');
  if (lines.empty() || trim(lines[0]) != k_compare_header)
    throw precondition_error("not a comparison csv: bad header");
  comparison_report report;
  bool first = true;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto fields = csv_split(lines[i]);
    if (fields.size() != 13)
      throw precondition_error("comparison csv row " + std::to_string(i) +
                               " has " + std::to_string(fields.size()) +
                               " fields, expected 13");
    if (first) {
      report.comparison_id = fields[0];
      report.topic_id = fields[1];
      report.union_size = parse_i64(fields[2]);
      first = false;
    }
    model_report_row row;
    row.model_id = fields[3];
    row.raw = parse_i64(fields[4]);
    row.unique = parse_i64(fields[5]);
    row.valid = parse_i64(fields[6]);
    row.covered = parse_i64(fields[7]);
    row.recall = parse_opt(fields[8]);
    row.accuracy = parse_opt(fields[9]);
    row.init_accuracy = parse_opt(fields[10]);
    row.decline_rate = parse_opt(fields[11]);
    row.accuracy_series = parse_series(fields[12]);
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::filesystem::path write_comparison_csv(const comparison_report& report,
                                           const std::filesystem::path& dir) {
  const auto path = dir / ("compare_" + report.comparison_id + ".csv");
  write_text_file(path, render_comparison_csv(report));
  return path;
}

std::string render_aggregate_csv(const std::vector<aggregate_row>& rows) {
  std::string out =
      "model_id,domains,recall_mean,recall_std,accuracy_mean,accuracy_std\n";
  for (const auto& row : rows) {
    out += csv_escape(row.model_id) + ',' + std::to_string(row.domains) + ',' +
           opt_field(row.recall_mean) + ',' + opt_field(row.recall_std) + ',' +
           opt_field(row.accuracy_mean) + ',' + opt_field(row.accuracy_std) +
           '\n';
  }
  return out;
}

}  // namespace kbprobe
