#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kbprobe/core.hpp"
#include "kbprobe/processor.hpp"

namespace kbprobe {

// Ratio helpers; absent (not zero) on a zero denominator.
std::optional<double> accuracy_value(std::int64_t valid,
                                     std::int64_t unique_count);
std::optional<double> recall_value(std::int64_t covered,
                                   std::int64_t union_size);

struct filter_rates {
  std::optional<double> dedup_rate;  // (raw - unique) / raw
  std::optional<double> audit_rate;  // (unique - valid) / unique
};
filter_rates filtering_rates(std::int64_t raw, std::int64_t unique_count,
                             std::int64_t valid);

// Status tallies of a finished run. unique counts everything that survived
// dedup, audited or not.
struct atom_counts {
  std::int64_t raw = 0;
  std::int64_t unique = 0;
  std::int64_t valid = 0;
};
atom_counts count_atoms(const run_record& run);

// Valid atoms accumulated through each turn, indexed by turn - 1.
std::vector<std::int64_t> cumulative_valid_by_turn(const run_record& run);

struct yield_point {
  int turn = 0;
  std::int64_t cost_tokens = 0;       // cumulative at the turn boundary
  std::int64_t cumulative_valid = 0;  // post-audit numerator
  double value = 0.0;                 // cumulative_valid / baseline_size
};

struct yield_curve_data {
  std::string run_id;
  std::string baseline_run_id;
  std::int64_t baseline_size = 0;  // the baseline run's final valid count
  std::vector<yield_point> points;
};

// Requires matching topics and a baseline with at least one valid atom; the
// cost series must be strictly increasing.
yield_curve_data yield_curve(const run_record& run, const run_record& baseline);

struct accuracy_dynamics {
  // Cumulative valid / cumulative unique after each turn; absent while the
  // unique count is still zero.
  std::vector<std::optional<double>> per_turn;
  std::optional<double> init_accuracy;  // turn-1 value
  // (acc_1 - acc_T) / (T - 1); absent for single-turn runs or when either
  // endpoint is absent.
  std::optional<double> decline_rate;
};
accuracy_dynamics compute_accuracy_dynamics(const run_record& run);

struct model_report_row {
  std::string model_id;
  std::int64_t raw = 0;
  std::int64_t unique = 0;
  std::int64_t valid = 0;
  std::int64_t covered = 0;  // union classes this model reached
  std::optional<double> recall;
  std::optional<double> accuracy;
  std::optional<double> init_accuracy;
  std::optional<double> decline_rate;
  std::vector<std::optional<double>> accuracy_series;
};

struct comparison_report {
  std::string comparison_id;
  std::string topic_id;
  std::int64_t union_size = 0;
  std::vector<model_report_row> rows;  // ascending model_id
};

// Builds the cross-model union from the runs' valid sets and derives one row
// per model. Requires >= 2 runs sharing one topic, one run per model.
comparison_report build_comparison(const std::vector<run_record>& runs,
                                   pipeline& pipe,
                                   const std::string& comparison_id);

// Mean and spread of recall/accuracy for models appearing in several
// comparison reports (one report per domain). Population standard deviation.
struct aggregate_row {
  std::string model_id;
  int domains = 0;
  std::optional<double> recall_mean;
  std::optional<double> recall_std;
  std::optional<double> accuracy_mean;
  std::optional<double> accuracy_std;
};
std::vector<aggregate_row> aggregate_models(
    const std::vector<comparison_report>& reports);

// CSV emission: full-precision values, header row first. Writers place
// pareto_<run_id>.csv / compare_<comparison_id>.csv inside the directory and
// return the path.
std::string render_pareto_csv(const yield_curve_data& curve);
yield_curve_data parse_pareto_csv(const std::string& text);
std::filesystem::path write_pareto_csv(const yield_curve_data& curve,
                                       const std::filesystem::path& dir);

std::string render_comparison_csv(const comparison_report& report);
comparison_report parse_comparison_csv(const std::string& text);
std::filesystem::path write_comparison_csv(const comparison_report& report,
                                           const std::filesystem::path& dir);

std::string render_aggregate_csv(const std::vector<aggregate_row>& rows);

}  // namespace kbprobe
