#pragma once

#include <optional>
#include <string>
#include <vector>

#include "opf3/diagnostics.hpp"
#include "opf3/feeder.hpp"
#include "opf3/solver.hpp"

namespace opf3 {

enum class ControlMode { None, Linear, Improved };

std::string to_string(ControlMode mode);
std::string to_string(ExecutionMode mode);

struct ScenarioSpec {
  std::string feeder_path;
  ControlMode mode = ControlMode::Improved;
  ExecutionMode execution = ExecutionMode::Centralized;
  std::optional<double> load_scale;
  std::optional<double> sigma_u, sigma_mu, epsilon, lambda_stop;
  std::optional<int> max_iters;
  std::optional<double> v_lower_pu, v_upper_pu;
  DualVoltageSource dual_source = DualVoltageSource::Measured;
  std::string out_dir = ".";
  bool diagnostics = false;
};

struct ScenarioResult {
  ControlMode mode = ControlMode::Improved;
  ExecutionMode execution = ExecutionMode::Centralized;
  bool failed = false;    // parse/validation/divergence fault
  bool converged = true;  // stopping threshold reached before the cap
  int iterations = 0;
  double min_v = 0.0;
  double max_v = 0.0;
  int violations = 0;
  double wall_ms = 0.0;   // solver loop only
  long messages = 0;      // total ledger scalars, hierarchical runs only
  std::string trace_path;
  std::string profile_path;
  std::string diagnostics_path;
  std::string summary;    // one-line summary, also printed by the CLI
};

// Resolve the effective solver configuration for a parsed feeder plus the
// spec's overrides (spec wins, then fixture defaults, then library defaults).
SolverConfig resolve_config(const ParsedFeeder& feeder, const ScenarioSpec& spec);

// Runs one scenario and writes its artifacts under out_dir. mode=None runs a
// single power flow and writes the profile only. Throws on parse/validation
// problems; power-flow divergence is reported in the result.
ScenarioResult run_scenario(const ScenarioSpec& spec);

struct CompareRow {
  std::string label;
  ScenarioResult result;
};

// Runs no-control, linear control, and improved control (the latter in both
// execution modes) sequentially, writing artifacts plus a comparison table.
std::vector<CompareRow> compare_controls(const std::string& feeder_path,
                                         const std::string& out_dir);

std::string comparison_table_text(const std::vector<CompareRow>& rows);
std::string comparison_table_csv(const std::vector<CompareRow>& rows);

// Clustering / network validation report used by the CLI `validate` command.
std::string validation_report(const std::string& feeder_path);

}  // namespace opf3
